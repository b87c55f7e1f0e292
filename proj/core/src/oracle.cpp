#include "mfl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mfl/diagnostics.hpp"
#include "mfl/error.hpp"

namespace mfl {

GridDensity::GridDensity(std::size_t nx, std::size_t nv, double Lx, double Lv)
    : nx_(nx), nv_(nv), Lx_(Lx), Lv_(Lv), f_(nx * nv, 0.0)
{
    if (nx < 4 || nv < 4 || !(Lx > 0.0) || !(Lv > 0.0))
        throw Error(ErrorCode::InvalidArgument, "grid needs at least 4 cells per axis and positive extents");
}

double GridDensity::mass() const
{
    double s = 0.0;
    for (double v : f_)
        s += v;
    return s * dx() * dv();
}

std::vector<double> GridDensity::density() const
{
    std::vector<double> rho(nx_, 0.0);
    for (std::size_t i = 0; i < nx_; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < nv_; ++j)
            s += at(i, j);
        rho[i] = s * dv();
    }
    return rho;
}

double GridDensity::bandMass(double band) const
{
    auto bx = static_cast<std::size_t>(std::ceil(band * nx_));
    auto bv = static_cast<std::size_t>(std::ceil(band * nv_));
    double s = 0.0;
    for (std::size_t i = 0; i < nx_; ++i)
        for (std::size_t j = 0; j < nv_; ++j) {
            bool edge = i < bx || i >= nx_ - bx || j < bv || j >= nv_ - bv;
            if (edge)
                s += std::fabs(at(i, j));
        }
    return s * dx() * dv();
}

GridDensity GridDensity::fromSpec(const InitialDensitySpec& spec, std::size_t nx, std::size_t nv, double Lx, double Lv)
{
    if (Lx < 1.1 * spec.R0x || Lv < 1.1 * spec.R0v)
        throw Error(ErrorCode::SupportOverflow, "grid must extend at least 10% beyond the initial support");
    auto axes = marginals(spec, 1);
    GridDensity g(nx, nv, Lx, Lv);
    std::vector<double> mx(nx), mv(nv);
    for (std::size_t i = 0; i < nx; ++i)
        mx[i] = axes[0].cdf(g.x(i) + 0.5 * g.dx()) - axes[0].cdf(g.x(i) - 0.5 * g.dx());
    for (std::size_t j = 0; j < nv; ++j)
        mv[j] = axes[1].cdf(g.v(j) + 0.5 * g.dv()) - axes[1].cdf(g.v(j) - 0.5 * g.dv());
    const double cell = g.dx() * g.dv();
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < nv; ++j)
            g.at(i, j) = mx[i] * mv[j] / cell;
    return g;
}

void GridDensity::save(const std::string& binPath, const std::string& headerPath) const
{
    std::ofstream bin(binPath, std::ios::binary);
    if (!bin)
        throw Error(ErrorCode::InvalidArgument, "cannot write " + binPath);
    bin.write(reinterpret_cast<const char*>(f_.data()), static_cast<std::streamsize>(f_.size() * sizeof(double)));
    nlohmann::json h;
    h["format"] = "float64-le row-major f[ix][iv]";
    h["nx"] = nx_;
    h["nv"] = nv_;
    h["Lx"] = Lx_;
    h["Lv"] = Lv_;
    h["dx"] = dx();
    h["dv"] = dv();
    h["x0"] = x(0);
    h["v0"] = v(0);
    h["mass"] = mass();
    std::ofstream(headerPath) << h.dump(2) << "\n";
}

GridDensity GridDensity::load(const std::string& binPath, const std::string& headerPath)
{
    std::ifstream hs(headerPath);
    if (!hs)
        throw Error(ErrorCode::InvalidArgument, "cannot read " + headerPath);
    nlohmann::json h = nlohmann::json::parse(hs);
    GridDensity g(h.at("nx").get<std::size_t>(), h.at("nv").get<std::size_t>(), h.at("Lx").get<double>(),
                  h.at("Lv").get<double>());
    std::ifstream bin(binPath, std::ios::binary);
    bin.read(reinterpret_cast<char*>(g.f_.data()), static_cast<std::streamsize>(g.f_.size() * sizeof(double)));
    if (!bin)
        throw Error(ErrorCode::InvalidArgument, "short read from " + binPath);
    return g;
}

std::vector<double> fieldFromDensity(const std::vector<double>& rho, double dx, const ForceKernel& kernel)
{
    if (!(kernel.alpha < 1.0))
        throw Error(ErrorCode::NonintegrableKernel, "the 1D kernel needs alpha < 1");
    kernel.validate();
    const std::size_t n = rho.size();
    std::vector<double> out(n, 0.0);
    if (kernel.sign == 0)
        return out;
    const double a1 = 1.0 - kernel.alpha;
    auto G = [&](double u) { return std::pow(std::fabs(u), a1) / a1; };
    // W[k] = int over the cell at offset k of the kernel; W[0] = 0 by oddness.
    std::vector<double> W(n, 0.0);
    for (std::size_t k = 1; k < n; ++k)
        W[k] = kernel.sign * (G((k + 0.5) * dx) - G((k - 0.5) * dx));
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i)
                continue;
            s += (i > j ? W[i - j] : -W[j - i]) * rho[j];
        }
        out[i] = s;
    }
    return out;
}

namespace {

// Solves the cyclic system (c[i-1] + 4 c[i] + c[i+1]) / 6 = f[i].
void cyclicSplineCoefficients(const double* f, double* c, std::size_t n, std::vector<double>& work)
{
    // Sherman-Morrison on the tridiagonal part with corner terms a = b = 1/6.
    const double a = 1.0 / 6.0, diag = 4.0 / 6.0;
    const double gamma = -diag;
    work.assign(3 * n, 0.0);
    double* bb = work.data();
    double* u = bb + n;
    double* z = u + n;
    for (std::size_t i = 0; i < n; ++i)
        bb[i] = diag;
    bb[0] = diag - gamma;
    bb[n - 1] = diag - a * a / gamma;

    auto thomas = [&](const double* rhs, double* x) {
        std::vector<double> cp(n), dp(n);
        cp[0] = a / bb[0];
        dp[0] = rhs[0] / bb[0];
        for (std::size_t i = 1; i < n; ++i) {
            double m = bb[i] - a * cp[i - 1];
            cp[i] = a / m;
            dp[i] = (rhs[i] - a * dp[i - 1]) / m;
        }
        x[n - 1] = dp[n - 1];
        for (std::size_t i = n - 1; i-- > 0;)
            x[i] = dp[i] - cp[i] * x[i + 1];
    };
    thomas(f, c);
    for (std::size_t i = 0; i < n; ++i)
        u[i] = 0.0;
    u[0] = gamma;
    u[n - 1] = a;
    thomas(u, z);
    double fact = (c[0] + a * c[n - 1] / gamma) / (1.0 + z[0] + a * z[n - 1] / gamma);
    for (std::size_t i = 0; i < n; ++i)
        c[i] -= fact * z[i];
}

} // namespace

void shiftLine(const double* in, double* out, std::size_t n, double s, std::vector<double>& work)
{
    std::vector<double> c(n);
    cyclicSplineCoefficients(in, c.data(), n, work);
    double p = -s;
    double k0 = std::floor(p);
    double t = p - k0;
    double w[4] = {(1 - t) * (1 - t) * (1 - t) / 6.0, (3 * t * t * t - 6 * t * t + 4) / 6.0,
                   (-3 * t * t * t + 3 * t * t + 3 * t + 1) / 6.0, t * t * t / 6.0};
    auto nn = static_cast<long long>(n);
    long long base = static_cast<long long>(k0);
    for (long long i = 0; i < nn; ++i) {
        double v = 0.0;
        for (int m = -1; m <= 2; ++m) {
            long long idx = ((i + base + m) % nn + nn) % nn;
            v += w[m + 1] * c[static_cast<std::size_t>(idx)];
        }
        out[i] = v;
    }
}

namespace {

void advectX(GridDensity& g, double tau)
{
    const std::size_t nx = g.nx(), nv = g.nv();
    std::vector<double> line(nx), out(nx), work;
    for (std::size_t j = 0; j < nv; ++j) {
        for (std::size_t i = 0; i < nx; ++i)
            line[i] = g.at(i, j);
        shiftLine(line.data(), out.data(), nx, g.v(j) * tau / g.dx(), work);
        for (std::size_t i = 0; i < nx; ++i)
            g.at(i, j) = out[i];
    }
}

void advectV(GridDensity& g, const std::vector<double>& F, double tau)
{
    const std::size_t nx = g.nx(), nv = g.nv();
    std::vector<double> out(nv), work;
    for (std::size_t i = 0; i < nx; ++i) {
        double* row = &g.values()[i * nv];
        shiftLine(row, out.data(), nv, F[i] * tau / g.dv(), work);
        std::copy(out.begin(), out.end(), row);
    }
}

} // namespace

OracleRun solveVlasov(const GridDensity& f0, const ForceKernel& kernel, const OracleOptions& opts)
{
    if (!(opts.dt > 0.0) || !(opts.T > 0.0))
        throw Error(ErrorCode::InvalidArgument, "oracle needs positive T and dt");
    if (!(kernel.alpha < 1.0))
        throw Error(ErrorCode::NonintegrableKernel, "the 1D kernel needs alpha < 1");
    OracleRun run;
    run.Lx = f0.Lx();
    run.nx = f0.nx();
    GridDensity f = f0;
    double m0 = f.mass();
    for (double& v : f.values())
        v /= m0;

    auto steps = static_cast<std::size_t>(std::ceil(opts.T / opts.dt - 1e-9));
    const double dt = opts.T / static_cast<double>(steps);
    std::vector<double> cps = opts.checkpoints;
    std::sort(cps.begin(), cps.end());
    auto keep = [&](double t) {
        for (double c : cps)
            if (std::fabs(c - t) <= 1e-9 * (1.0 + opts.T)) {
                run.snapshotTimes.push_back(t);
                run.snapshots.push_back(f);
                return;
            }
    };

    run.times.push_back(0.0);
    run.fields.push_back(fieldFromDensity(f.density(), f.dx(), kernel));
    keep(0.0);
    const double cell = f.dx() * f.dv();
    for (std::size_t s = 1; s <= steps; ++s) {
        advectX(f, 0.5 * dt);
        auto F = fieldFromDensity(f.density(), f.dx(), kernel);
        advectV(f, F, dt);
        advectX(f, 0.5 * dt);
        double neg = 0.0;
        for (double& v : f.values())
            if (v < 0.0) {
                neg -= v;
                v = 0.0;
            }
        double m = f.mass();
        run.clipMass.push_back(neg * cell);
        run.massDrift.push_back(std::fabs(m - 1.0));
        for (double& v : f.values())
            v /= m;
        if (f.bandMass(0.1) > opts.overflowTolerance)
            throw Error(ErrorCode::SupportOverflow, "density reached the outer 10% of the grid at t = " +
                                                        std::to_string(s * dt));
        double t = s * dt;
        run.times.push_back(t);
        run.fields.push_back(fieldFromDensity(f.density(), f.dx(), kernel));
        keep(t);
    }
    return run;
}

double OracleRun::fieldAt(double t, double x) const
{
    if (times.size() < 2 || t < -1e-12 || t > times.back() * (1.0 + 1e-12) + 1e-12)
        throw Error(ErrorCode::MisalignedTimes, "time outside the oracle run");
    double dt = times[1] - times[0];
    double p = std::clamp(t / dt, 0.0, static_cast<double>(times.size() - 1));
    auto k = std::min(static_cast<std::size_t>(p), times.size() - 2);
    double wt = p - static_cast<double>(k);
    double dx = 2.0 * Lx / static_cast<double>(nx);
    double q = (x + Lx) / dx - 0.5;
    if (q < 0.0 || q > static_cast<double>(nx - 1))
        return 0.0;
    auto i = std::min(static_cast<std::size_t>(q), nx - 2);
    double wx = q - static_cast<double>(i);
    auto lerp = [&](const std::vector<double>& F) { return (1 - wx) * F[i] + wx * F[i + 1]; };
    return (1 - wt) * lerp(fields[k]) + wt * lerp(fields[k + 1]);
}

const GridDensity& OracleRun::snapshotAt(double t) const
{
    for (std::size_t k = 0; k < snapshotTimes.size(); ++k)
        if (std::fabs(snapshotTimes[k] - t) <= 1e-9 * (1.0 + t))
            return snapshots[k];
    throw Error(ErrorCode::MisalignedTimes, "no oracle snapshot at the requested time");
}

double weakDistance(const ParticleEnsemble& ens, const GridDensity& f, const WeakDistanceOptions& opts)
{
    if (ens.dim() != 1)
        throw Error(ErrorCode::UnsupportedDimension, "weak distance against the grid oracle is 1D-1V only");
    const std::size_t nc = opts.centersPerAxis;
    double H = opts.halfExtent;
    if (H <= 0.0) {
        for (std::size_t p = 0; p < ens.size(); ++p)
            H = std::max({H, std::fabs(ens.positions()[p][0]), std::fabs(ens.velocities()[p][0])});
    }
    std::vector<double> centres(nc);
    for (std::size_t a = 0; a < nc; ++a)
        centres[a] = nc == 1 ? 0.0 : -H + 2.0 * H * static_cast<double>(a) / static_cast<double>(nc - 1);

    const std::size_t nx = f.nx(), nv = f.nv(), N = ens.size();
    double best = 0.0;
    for (double w : opts.widths) {
        const double amp = w * std::exp(0.5);
        auto g = [w](double s) { return std::exp(-0.5 * s * s / (w * w)); };
        std::vector<double> gx(nc * nx), gv(nc * nv);
        for (std::size_t a = 0; a < nc; ++a) {
            for (std::size_t i = 0; i < nx; ++i)
                gx[a * nx + i] = g(f.x(i) - centres[a]);
            for (std::size_t j = 0; j < nv; ++j)
                gv[a * nv + j] = g(f.v(j) - centres[a]);
        }
        // T[i][b] = sum_j f_ij gv_b(v_j)
        std::vector<double> T(nx * nc, 0.0);
        for (std::size_t i = 0; i < nx; ++i)
            for (std::size_t b = 0; b < nc; ++b) {
                double s = 0.0;
                for (std::size_t j = 0; j < nv; ++j)
                    s += f.at(i, j) * gv[b * nv + j];
                T[i * nc + b] = s;
            }
        std::vector<double> grid(nc * nc, 0.0), part(nc * nc, 0.0);
        const double cell = f.dx() * f.dv();
        for (std::size_t a = 0; a < nc; ++a)
            for (std::size_t b = 0; b < nc; ++b) {
                double s = 0.0;
                for (std::size_t i = 0; i < nx; ++i)
                    s += gx[a * nx + i] * T[i * nc + b];
                grid[a * nc + b] = s * cell;
            }
        std::vector<double> ex(nc), ev(nc);
        for (std::size_t p = 0; p < N; ++p) {
            for (std::size_t a = 0; a < nc; ++a) {
                ex[a] = g(ens.positions()[p][0] - centres[a]);
                ev[a] = g(ens.velocities()[p][0] - centres[a]);
            }
            for (std::size_t a = 0; a < nc; ++a)
                for (std::size_t b = 0; b < nc; ++b)
                    part[a * nc + b] += ex[a] * ev[b];
        }
        for (std::size_t k = 0; k < nc * nc; ++k)
            best = std::max(best, amp * std::fabs(part[k] / static_cast<double>(N) - grid[k]));
    }
    return best;
}

std::vector<double> forceConvergenceStat(const Trajectory& traj, const OracleRun& oracle, double eps)
{
    if (traj.dim != 1)
        throw Error(ErrorCode::UnsupportedDimension, "force convergence against the grid oracle is 1D only");
    if (!traj.hasFieldVecs())
        throw Error(ErrorCode::InvalidArgument, "trajectory was recorded without field vectors");
    if (oracle.times.empty() || traj.horizon() > oracle.times.back() * (1.0 + 1e-9) + 1e-12)
        throw Error(ErrorCode::MisalignedTimes, "oracle run does not cover the trajectory");
    const std::size_t nt = traj.times.size(), N = traj.snapshots[0].size();
    WindowedSup ws(nt, traj.dt, eps);
    std::vector<double> g(nt);
    for (std::size_t p = 0; p < N; ++p) {
        for (std::size_t k = 0; k < nt; ++k) {
            double x = traj.snapshots[k].positions()[p][0];
            g[k] = std::fabs(traj.fieldVecs[k][p][0] - oracle.fieldAt(traj.times[k], x));
        }
        ws.add(g);
    }
    return ws.values();
}

} // namespace mfl
