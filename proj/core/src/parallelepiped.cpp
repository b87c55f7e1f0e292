#include "mfl/parallelepiped.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "mfl/diagnostics.hpp"
#include "mfl/error.hpp"

namespace mfl {

namespace {

using MatX = Eigen::MatrixXd;

MatX toEigen(const Mat3& m, int d)
{
    MatX e(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            e(i, j) = m[i][j];
    return e;
}

MatX fullMatrix(const PhaseParallelepiped& S)
{
    const int d = S.d;
    MatX M(2 * d, 2 * d);
    M.block(0, 0, d, d) = toEigen(S.A, d);
    M.block(0, d, d, d) = toEigen(S.B, d);
    M.block(d, 0, d, d) = toEigen(S.C, d);
    M.block(d, d, d, d) = toEigen(S.D, d);
    return M;
}

double gaussian(std::mt19937_64& rng)
{
    // Box-Muller on raw 53-bit uniforms for reproducibility across standard libraries.
    auto u = [&rng]() { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
    return std::sqrt(-2.0 * std::log(u())) * std::cos(2.0 * M_PI * u());
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace

PhaseParallelepiped PhaseParallelepiped::box(int d, const Vec3& X0, const Vec3& V0, double eta)
{
    PhaseParallelepiped S;
    S.d = d;
    S.X0 = X0;
    S.V0 = V0;
    S.A = identityMat(d);
    S.D = identityMat(d);
    S.eta = eta;
    return S;
}

double PhaseParallelepiped::normOf(const Vec3& dx, const Vec3& dv) const
{
    return std::max(norm2(A * dx + B * dv), norm2(C * dx + D * dv));
}

double PhaseParallelepiped::det() const { return fullMatrix(*this).determinant(); }

bool contains(const PhaseParallelepiped& S, const Vec3& x, const Vec3& v) { return S.normOf(x - S.X0, v - S.V0) <= S.eta; }

std::size_t countIn(const ParticleEnsemble& ens, const PhaseParallelepiped& S)
{
    std::size_t c = 0;
    for (std::size_t i = 0; i < ens.size(); ++i)
        c += contains(S, ens.positions()[i], ens.velocities()[i]) ? 1 : 0;
    return c;
}

double opNorm2(const Mat3& m, int d)
{
    Eigen::JacobiSVD<MatX> svd(toEigen(m, d));
    return svd.singularValues()(0);
}

NormConditions normConditions(const PhaseParallelepiped& S)
{
    const int d = S.d;
    NormConditions nc;
    Mat3 I = identityMat(d);
    double a = opNorm2(S.A - I, d), dd = opNorm2(S.D - I, d);
    double b = opNorm2(S.B, d), c = opNorm2(S.C, d);
    nc.diag = std::max(a, dd);
    nc.offDiag = std::max(b, c);
    nc.diagMargin = 0.5 - nc.diag;
    nc.offDiagMargin = 0.5 - nc.offDiag;
    if (a > 0.5)
        nc.failed = "|A - I| > 1/2";
    else if (dd > 0.5)
        nc.failed = "|D - I| > 1/2";
    else if (b > 0.5)
        nc.failed = "|B| > 1/2";
    else if (c > 0.5)
        nc.failed = "|C| > 1/2";
    nc.pass = nc.failed.empty();
    return nc;
}

ContainmentExtent containmentExtent(const PhaseParallelepiped& S)
{
    const int d = S.d;
    ContainmentExtent ext;
    ext.eta = S.eta;
    MatX M = fullMatrix(S);
    Eigen::JacobiSVD<MatX> svd(M, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv(2 * d - 1) <= 1e-13 * sv(0)) {
        ext.bounded = false;
        ext.maxDistance = std::numeric_limits<double>::infinity();
        ext.ratio = std::numeric_limits<double>::infinity();
        // Witness along the null direction.
        Eigen::VectorXd nullDir = svd.matrixV().col(2 * d - 1);
        double s = nullDir.cwiseAbs().maxCoeff();
        for (int r = 0; r < 2 * d; ++r)
            ext.witness[r] = 1e6 * S.eta * nullDir(r) / s;
        return ext;
    }
    MatX Minv = M.inverse();
    // Sup of |e_r . M^{-1} y| over |y_x| <= eta, |y_v| <= eta is eta (|w_x| + |w_v|).
    for (int r = 0; r < 2 * d; ++r) {
        Eigen::VectorXd wx = Minv.row(r).segment(0, d).transpose();
        Eigen::VectorXd wv = Minv.row(r).segment(d, d).transpose();
        double e = S.eta * (wx.norm() + wv.norm());
        if (e > ext.maxDistance) {
            ext.maxDistance = e;
            Eigen::VectorXd y(2 * d);
            y.segment(0, d) = wx.norm() > 0 ? Eigen::VectorXd(S.eta * wx / wx.norm()) : Eigen::VectorXd::Zero(d);
            y.segment(d, d) = wv.norm() > 0 ? Eigen::VectorXd(S.eta * wv / wv.norm()) : Eigen::VectorXd::Zero(d);
            Eigen::VectorXd p = Minv * y;
            for (int k = 0; k < 2 * d; ++k)
                ext.witness[k] = p(k);
        }
    }
    ext.ratio = ext.maxDistance / (2.0 * S.eta);
    return ext;
}

ContainmentExtent containmentCheck(const PhaseParallelepiped& S)
{
    auto nc = normConditions(S);
    if (!nc.pass)
        throw Error(ErrorCode::NormConditionsViolated, nc.failed);
    return containmentExtent(S);
}

std::vector<std::array<double, 6>> samplePoints(const PhaseParallelepiped& S, std::size_t count, std::uint64_t seed,
                                                bool onBoundary, double radius)
{
    const int d = S.d;
    if (radius < 0.0)
        radius = S.eta;
    MatX Minv = fullMatrix(S).inverse();
    std::mt19937_64 rng(seed);
    std::vector<std::array<double, 6>> out;
    out.reserve(count);
    auto ballPoint = [&](bool surface) {
        Eigen::VectorXd g(d);
        for (int a = 0; a < d; ++a)
            g(a) = gaussian(rng);
        double n = g.norm();
        double r = surface ? radius : radius * std::pow(uniform01(rng), 1.0 / d);
        return Eigen::VectorXd(g * (r / n));
    };
    for (std::size_t s = 0; s < count; ++s) {
        Eigen::VectorXd y(2 * d);
        bool xOnSurface = onBoundary && (rng() & 1u);
        bool vOnSurface = onBoundary && !xOnSurface;
        y.segment(0, d) = ballPoint(xOnSurface);
        y.segment(d, d) = ballPoint(vOnSurface);
        Eigen::VectorXd p = Minv * y;
        std::array<double, 6> pt{};
        for (int a = 0; a < d; ++a) {
            pt[a] = S.X0[a] + p(a);
            pt[a + d] = S.V0[a] + p(a + d);
        }
        out.push_back(pt);
    }
    return out;
}

BackwardStep backwardStep(const PhaseParallelepiped& S, const Trajectory& traj, std::size_t from, std::size_t to,
                          const ForceKernel& kernel, const BackwardStepOptions& opts)
{
    if (from >= traj.snapshots.size() || to >= from)
        throw Error(ErrorCode::WindowMissing, "backward window not covered by the trajectory");
    if (!(opts.eps > 0.0))
        throw Error(ErrorCode::InvalidArgument, "eps must be positive");
    auto nc = normConditions(S);
    if (!nc.pass)
        throw Error(ErrorCode::NormConditionsViolated, nc.failed);

    const int d = S.d;
    BackwardStep out;
    out.h = traj.times[from] - traj.times[to];
    const double dt = traj.dt;

    // Trapezoid in time of E_eps(s, X0) and its gradient at the fixed centre.
    KahanVec eInt;
    Mat3 gInt{};
    for (std::size_t k = to; k <= from; ++k) {
        double w = (k == to || k == from) ? 0.5 * dt : dt;
        eInt.add(w * fieldRegularized(traj.snapshots[k], S.X0, opts.eps, kernel));
        gInt = gInt + w * gradFieldRegularized(traj.snapshots[k], S.X0, opts.eps, kernel);
    }
    const double h = out.h;
    out.gradAvg = (1.0 / h) * gInt;
    const Mat3& G = out.gradAvg;

    PhaseParallelepiped& N = out.next;
    N.d = d;
    N.A = S.A + h * (S.B * G);
    N.B = S.B + h * S.A;
    N.C = S.C + h * (S.D * G);
    N.D = S.D + h * S.C;
    N.X0 = S.X0 - h * S.V0;
    N.V0 = S.V0 - eInt.sum;
    N.eta = S.eta + opts.growth * h * (std::pow(S.eta, opts.beta) + opts.eps);

    out.blockDrift = std::max({opNorm2(N.A - S.A, d), opNorm2(N.B - S.B, d), opNorm2(N.C - S.C, d),
                               opNorm2(N.D - S.D, d)});
    out.detBefore = S.det();
    out.detAfter = N.det();
    double g = opNorm2(G, d);
    double cDrift = opts.driftConst > 0.0 ? opts.driftConst : 1.5 * std::max(1.0, g);
    double cDet = opts.detConst > 0.0 ? opts.detConst
                                      : 1.01 * std::fabs(out.detBefore) * d * g * std::pow(1.0 + h * h * g, d - 1);
    out.driftOk = out.blockDrift <= cDrift * h * (1.0 + 1e-12) + 1e-15;
    out.detOk = std::fabs(out.detAfter - out.detBefore) <= cDet * h * h + 1e-12 * std::fabs(out.detBefore);
    return out;
}

bool TrackingReport::monotone() const
{
    return std::all_of(steps.begin(), steps.end(), [](const TrackStepRecord& r) { return r.monotone; });
}

std::string TrackingReport::toJsonLines(std::size_t boxId) const
{
    std::ostringstream os;
    os.precision(17);
    for (std::size_t n = 0; n < steps.size(); ++n) {
        const auto& r = steps[n];
        os << "{\"box\":" << boxId << ",\"step\":" << n << ",\"t\":" << r.time << ",\"count\":" << r.count
           << ",\"radius\":" << r.radius << ",\"block_drift\":" << r.blockDrift << ",\"det\":" << r.det
           << ",\"diag_margin\":" << r.diagMargin << ",\"offdiag_margin\":" << r.offDiagMargin
           << ",\"monotone\":" << (r.monotone ? "true" : "false")
           << ",\"radius_bound_ok\":" << (r.radiusBoundOk ? "true" : "false") << ",\"drift_ok\":"
           << (r.driftOk ? "true" : "false") << ",\"det_ok\":" << (r.detOk ? "true" : "false");
        if (n + 1 == steps.size())
            os << ",\"end\":\"" << (end == TrackEnd::ReachedZero ? "reached-zero" : "norm-conditions") << "\""
               << ",\"failed\":\"" << failedCondition << "\"";
        os << "}\n";
    }
    return os.str();
}

TrackingReport trackBack(const PhaseParallelepiped& S0, const Trajectory& traj, std::size_t startIndex,
                         std::size_t stride, const ForceKernel& kernel, const BackwardStepOptions& opts)
{
    if (stride == 0)
        throw Error(ErrorCode::InvalidArgument, "stride must be positive");
    if (startIndex >= traj.snapshots.size())
        throw Error(ErrorCode::WindowMissing, "start outside the trajectory");
    TrackingReport rep;
    rep.startIndex = startIndex;
    PhaseParallelepiped S = S0;
    const double eta = S0.eta;
    const double C = opts.growth;
    const double beta = opts.beta;
    const double cPrime = beta * std::pow(2.0, beta - 1.0);
    const double etaB = std::pow(eta, beta);

    auto margins = [](TrackStepRecord& r, const PhaseParallelepiped& P) {
        auto nc = normConditions(P);
        r.diagMargin = nc.diagMargin;
        r.offDiagMargin = nc.offDiagMargin;
        r.det = P.det();
    };
    TrackStepRecord first;
    first.time = traj.times[startIndex];
    first.count = countIn(traj.snapshots[startIndex], S);
    first.radius = S.eta;
    margins(first, S);
    rep.steps.push_back(first);

    std::size_t idx = startIndex;
    double H = 0.0, alphaBar = 0.0;
    while (idx > 0) {
        auto nc = normConditions(S);
        if (!nc.pass) {
            rep.end = TrackEnd::NormConditions;
            rep.failedCondition = nc.failed;
            break;
        }
        std::size_t to = idx >= stride ? idx - stride : 0;
        BackwardStep bs = backwardStep(S, traj, idx, to, kernel, opts);
        const double h = bs.h;
        // alpha recursion: r_n = eta + C H_n (eps + eta^beta) + alpha_n, valid while the excess stays below eta.
        double excess = S.eta - eta;
        if (excess <= eta)
            alphaBar = alphaBar + C * h * cPrime * std::pow(eta, beta - 1.0) * (C * H * (opts.eps + etaB) + alphaBar);
        H += h;
        S = bs.next;

        TrackStepRecord r;
        r.time = traj.times[to];
        r.count = countIn(traj.snapshots[to], S);
        r.radius = S.eta;
        r.blockDrift = bs.blockDrift;
        r.driftOk = bs.driftOk;
        r.detOk = bs.detOk;
        r.monotone = rep.steps.back().count <= r.count;
        double alpha = S.eta - eta - C * H * (opts.eps + etaB);
        r.radiusBoundOk = excess > eta || alpha <= alphaBar + 1e-12 * (1.0 + S.eta);
        margins(r, S);
        rep.steps.push_back(r);
        idx = to;
    }
    rep.final = S;
    return rep;
}

double pilotGrowthConstant(const std::vector<PhaseParallelepiped>& boxes, const Trajectory& traj,
                           std::size_t startIndex, std::size_t stride, const ForceKernel& kernel,
                           const BackwardStepOptions& opts)
{
    BackwardStepOptions o = opts;
    o.growth = 0.0;
    double best = 0.0;
    for (const auto& box : boxes) {
        PhaseParallelepiped S = box;
        std::size_t idx = startIndex;
        while (idx > 0 && normConditions(S).pass) {
            std::size_t to = idx >= stride ? idx - stride : 0;
            BackwardStep bs = backwardStep(S, traj, idx, to, kernel, o);
            const auto& now = traj.snapshots[idx];
            const auto& before = traj.snapshots[to];
            double needed = S.eta;
            for (std::size_t j = 0; j < now.size(); ++j) {
                if (!contains(S, now.positions()[j], now.velocities()[j]))
                    continue;
                double r = bs.next.normOf(before.positions()[j] - bs.next.X0, before.velocities()[j] - bs.next.V0);
                needed = std::max(needed, r);
            }
            double scale = bs.h * (std::pow(S.eta, o.beta) + o.eps);
            best = std::max(best, (needed - S.eta) / scale);
            S = bs.next;
            S.eta = needed;
            idx = to;
        }
    }
    return best;
}

double unitBlockBallVolume(int d)
{
    double w = d == 1 ? 2.0 : d == 2 ? M_PI : 4.0 * M_PI / 3.0;
    return w * w;
}

LatticeCover latticeCover(const PhaseParallelepiped& S, double eps, double maxDetExcess)
{
    const int d = S.d;
    auto nc = normConditions(S);
    if (!nc.pass)
        throw Error(ErrorCode::ConditionViolated, "norm conditions fail: " + nc.failed);
    double detM = S.det();
    if (detM > 1.0 + maxDetExcess * eps)
        throw Error(ErrorCode::ConditionViolated, "det(M) exceeds 1 + C eps");
    PhaseParallelepiped plus = S;
    plus.eta = S.eta + 2.0 * eps;
    ContainmentExtent ext = containmentExtent(plus);
    if (!ext.bounded)
        throw Error(ErrorCode::ConditionViolated, "degenerate parallelepiped");

    MatX Minv = fullMatrix(S).inverse();
    std::array<long long, 6> lo{}, hi{};
    lo.fill(0);
    hi.fill(0);
    for (int r = 0; r < 2 * d; ++r) {
        double e = plus.eta * (Minv.row(r).segment(0, d).norm() + Minv.row(r).segment(d, d).norm());
        double c = r < d ? S.X0[r] : S.V0[r - d];
        lo[r] = static_cast<long long>(std::ceil((c - e) / eps - 1e-9));
        hi[r] = static_cast<long long>(std::floor((c + e) / eps + 1e-9));
    }
    LatticeCover cov;
    std::array<long long, 6> idx = lo;
    const int n2 = 2 * d;
    while (true) {
        Vec3 x{}, v{};
        for (int a = 0; a < d; ++a) {
            x[a] = eps * static_cast<double>(idx[a]);
            v[a] = eps * static_cast<double>(idx[a + d]);
        }
        if (plus.normOf(x - S.X0, v - S.V0) <= plus.eta)
            cov.points.push_back(idx);
        int a = 0;
        while (a < n2 && idx[a] == hi[a]) {
            idx[a] = lo[a];
            ++a;
        }
        if (a == n2)
            break;
        ++idx[a];
    }
    std::sort(cov.points.begin(), cov.points.end());
    double P = static_cast<double>(cov.points.size());
    cov.lhs = P * std::pow(2.0 * eps, n2);
    cov.rhs = detM * std::pow(S.eta + 4.0 * eps, n2);
    cov.cardinalityHolds = cov.lhs <= cov.rhs;
    cov.cellVolumeLhs = P * std::pow(eps, n2);
    cov.cellVolumeRhs = unitBlockBallVolume(d) * std::pow(S.eta + 4.0 * eps, n2) / std::fabs(detM);
    cov.cellVolumeHolds = cov.cellVolumeLhs <= cov.cellVolumeRhs;
    cov.fittedCPrime = (P * std::pow(eps, n2) / std::pow(S.eta, n2 - 1) - S.eta) / eps;
    return cov;
}

bool coveredBy(const LatticeCover& cover, double eps, int d, const std::array<double, 6>& point)
{
    const int n2 = 2 * d;
    std::array<long long, 6> base{};
    base.fill(0);
    for (int a = 0; a < n2; ++a)
        base[a] = static_cast<long long>(std::llround(point[a] / eps));
    std::size_t combos = 1;
    for (int a = 0; a < n2; ++a)
        combos *= 3;
    for (std::size_t c = 0; c < combos; ++c) {
        std::array<long long, 6> k = base;
        std::size_t r = c;
        for (int a = 0; a < n2; ++a) {
            k[a] += static_cast<long long>(r % 3) - 1;
            r /= 3;
        }
        bool close = true;
        for (int a = 0; a < n2 && close; ++a)
            close = std::fabs(eps * static_cast<double>(k[a]) - point[a]) <= eps * (1.0 + 1e-12);
        if (close && std::binary_search(cover.points.begin(), cover.points.end(), k))
            return true;
    }
    return false;
}

std::vector<std::size_t> preservationAnchors(std::size_t N, const PreservationOptions& opts)
{
    std::mt19937_64 rng(opts.seed);
    std::vector<std::size_t> anchors;
    for (std::size_t b = 0; b < std::min(opts.boxes, N); ++b)
        anchors.push_back(rng() % N);
    return anchors;
}

PreservationReport linfPreservationReport(const Trajectory& traj, std::size_t tIndex, double eta, double eps,
                                          const ForceKernel& kernel, const BackwardStepOptions& stepOpts,
                                          const PreservationOptions& opts)
{
    if (tIndex >= traj.snapshots.size())
        throw Error(ErrorCode::WindowMissing, "time index outside the trajectory");
    const auto& snapT = traj.snapshots[tIndex];
    const auto& snap0 = traj.snapshots[0];
    const int d = snapT.dim();
    const std::size_t N = snapT.size();

    PreservationReport rep;
    rep.t = traj.times[tIndex];
    rep.eta = eta;
    rep.eps = eps;
    rep.beta = stepOpts.beta;
    rep.growth = stepOpts.growth;
    auto l0 = discreteLinf(snap0, eps);
    rep.linfEps0Lower = l0.lower;
    rep.linfEps0Upper = l0.upper;
    auto lt = discreteLinf(snapT, eta, opts.refine);
    rep.linfEtaLower = lt.lower;
    rep.linfEtaUpper = lt.upper;
    double shape = std::pow(eta, stepOpts.beta) + eps / eta;
    rep.requiredSlack = std::max(0.0, rep.linfEtaUpper - rep.linfEps0Lower);
    rep.fittedC = rep.requiredSlack / shape;

    std::size_t stride = opts.stride;
    if (stride == 0)
        stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(eps / traj.dt)));

    double worstChain = 0.0;
    for (std::size_t a : preservationAnchors(N, opts)) {
        auto box = PhaseParallelepiped::box(d, snapT.positions()[a], snapT.velocities()[a], eta);
        TrackingReport tr = trackBack(box, traj, tIndex, stride, kernel, stepOpts);
        PreservationBox pb;
        pb.anchor = a;
        pb.countT = tr.steps.front().count;
        pb.monotone = tr.monotone();
        pb.tracked = tr.end == TrackEnd::ReachedZero;
        if (pb.tracked) {
            pb.countZero = countIn(snap0, tr.final);
            try {
                auto cov = latticeCover(tr.final, eps, std::numeric_limits<double>::infinity());
                pb.coverSize = cov.points.size();
                pb.chainBound = rep.linfEps0Upper * std::pow(2.0 * eps, 2 * d) * static_cast<double>(pb.coverSize) *
                                static_cast<double>(N);
                worstChain = std::max(worstChain, pb.chainBound);
            } catch (const Error&) {
                pb.coverSize = 0;
            }
        }
        rep.boxes.push_back(pb);
        rep.tracks.push_back(std::move(tr));
    }
    rep.chainDensity = worstChain / (static_cast<double>(N) * std::pow(2.0 * eta, 2 * d));
    rep.chainFittedC = std::max(0.0, rep.chainDensity - rep.linfEps0Upper) / shape;
    return rep;
}

} // namespace mfl
