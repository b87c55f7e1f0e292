#include "mfl/integrator.hpp"

#include <cmath>

#include "mfl/error.hpp"

namespace mfl {

std::size_t Trajectory::indexAt(double t) const
{
    if (times.empty())
        throw Error(ErrorCode::WindowMissing, "empty trajectory");
    double tol = 1e-9 * (dt > 0.0 ? dt : 1.0);
    std::size_t k = 0;
    while (k + 1 < times.size() && times[k + 1] <= t + tol)
        ++k;
    return k;
}

ParticleEnsemble verletStep(const ParticleEnsemble& ens, const std::vector<Vec3>& field, double dt,
                            const ForceKernel& kernel, std::vector<Vec3>& newField, double minSeparation)
{
    ParticleEnsemble next = ens;
    auto& x = next.positions();
    auto& v = next.velocities();
    const double h = 0.5 * dt;
    for (std::size_t i = 0; i < x.size(); ++i) {
        v[i] += h * field[i];
        x[i] += dt * v[i];
    }
    newField = fieldsExact(next, kernel, minSeparation);
    for (std::size_t i = 0; i < x.size(); ++i)
        v[i] += h * newField[i];
    return next;
}

ParticleEnsemble verletStep(const ParticleEnsemble& ens, double dt, const ForceKernel& kernel, double minSeparation)
{
    std::vector<Vec3> f0 = fieldsExact(ens, kernel, minSeparation), f1;
    return verletStep(ens, f0, dt, kernel, f1, minSeparation);
}

namespace {

bool allFinite(const ParticleEnsemble& e)
{
    for (std::size_t i = 0; i < e.size(); ++i)
        for (int a = 0; a < 3; ++a)
            if (!std::isfinite(e.positions()[i][a]) || !std::isfinite(e.velocities()[i][a]))
                return false;
    return true;
}

void record(Trajectory& tr, double t, const ParticleEnsemble& e, const std::vector<Vec3>& f, bool vecs)
{
    tr.times.push_back(t);
    tr.snapshots.push_back(e);
    std::vector<double> mags(f.size());
    for (std::size_t i = 0; i < f.size(); ++i)
        mags[i] = norm2(f[i]);
    tr.fieldMags.push_back(std::move(mags));
    if (vecs)
        tr.fieldVecs.push_back(f);
}

} // namespace

Trajectory run(const ParticleEnsemble& ens0, const ForceKernel& kernel, const RunOptions& opts)
{
    kernel.validate();
    if (!(opts.T > 0.0))
        throw Error(ErrorCode::InvalidArgument, "horizon T must be positive");
    if (opts.kappa < 2)
        throw Error(ErrorCode::InvalidArgument, "kappa must be at least 2");
    ens0.validate();

    Trajectory tr;
    tr.dim = ens0.dim();
    tr.eps = opts.eps > 0.0 ? opts.eps : epsilonScale(ens0.supportRadius(), ens0.size(), ens0.dim());
    // Uniform grid reaching T exactly, with dt <= eps / kappa.
    auto nsteps = static_cast<std::size_t>(std::ceil(opts.T * opts.kappa / tr.eps - 1e-9));
    if (nsteps == 0)
        nsteps = 1;
    tr.dt = opts.T / static_cast<double>(nsteps);
    const double minSep = opts.collisionFactor * tr.eps;

    std::vector<Vec3> field;
    try {
        field = fieldsExact(ens0, kernel, minSep);
    } catch (const CollisionError& c) {
        tr.status = RunStatus::Collision;
        tr.collision = CollisionInfo{0.0, c.i, c.j, c.distance};
        return tr;
    }
    record(tr, 0.0, ens0, field, opts.recordFieldVecs);

    ParticleEnsemble cur = ens0;
    std::vector<Vec3> next;
    for (std::size_t s = 1; s <= nsteps; ++s) {
        double t = s * tr.dt;
        try {
            cur = verletStep(cur, field, tr.dt, kernel, next, minSep);
        } catch (const CollisionError& c) {
            tr.status = RunStatus::Collision;
            tr.collision = CollisionInfo{t, c.i, c.j, c.distance};
            return tr;
        }
        if (!allFinite(cur)) {
            tr.status = RunStatus::NonFinite;
            return tr;
        }
        field.swap(next);
        record(tr, t, cur, field, opts.recordFieldVecs);
    }
    return tr;
}

} // namespace mfl
