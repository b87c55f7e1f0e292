#include "mfl/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "mfl/error.hpp"

namespace mfl {

std::vector<SupportRadii> supportRadiiSeries(const Trajectory& traj)
{
    std::vector<SupportRadii> out;
    SupportRadii cur;
    for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
        const auto& e = traj.snapshots[k];
        for (std::size_t i = 0; i < e.size(); ++i) {
            cur.R = std::max(cur.R, norm2(e.positions()[i]));
            cur.K = std::max(cur.K, norm2(e.velocities()[i]));
            cur.Rinf = std::max(cur.Rinf, normInf(e.positions()[i]));
            cur.Kinf = std::max(cur.Kinf, normInf(e.velocities()[i]));
        }
        if (k == 0)
            cur.R0 = cur.R;
        double slack = 1e-12 * (1.0 + cur.R);
        cur.transportBoundHolds = cur.R <= cur.R0 + traj.times[k] * cur.K + slack;
        out.push_back(cur);
    }
    return out;
}

SupportRadii supportRadii(const Trajectory& traj, double upTo)
{
    if (traj.times.empty() || upTo < -1e-12 || upTo > traj.horizon() + 1e-9 * (1.0 + traj.horizon()))
        throw Error(ErrorCode::WindowMissing, "requested time outside the trajectory");
    std::size_t k = traj.indexAt(upTo);
    Trajectory prefix;
    prefix.times.assign(traj.times.begin(), traj.times.begin() + k + 1);
    prefix.snapshots.assign(traj.snapshots.begin(), traj.snapshots.begin() + k + 1);
    return supportRadiiSeries(prefix).back();
}

MinSeparation minPhaseSeparation(const ParticleEnsemble& ens, double eps)
{
    const std::size_t n = ens.size();
    if (n < 2)
        throw Error(ErrorCode::InvalidArgument, "need at least two particles");
    if (n > kExactSeparationLimit)
        throw Error(ErrorCode::TooLarge, "exact minimum separation limited to N <= 32768; subsample explicitly");
    const auto& x = ens.positions();
    const auto& v = ens.velocities();
    MinSeparation r;
    r.minDistance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double dx = norm2(x[i] - x[j]);
            if (dx >= r.minDistance)
                continue;
            double d = dx + norm2(v[i] - v[j]);
            if (d < r.minDistance) {
                r.minDistance = d;
                r.i = i;
                r.j = j;
            }
        }
    if (r.minDistance == 0.0) {
        r.collision = true;
        r.m = std::numeric_limits<double>::infinity();
    } else {
        r.m = eps / r.minDistance;
    }
    return r;
}

namespace {

struct WindowShape {
    std::size_t full = 0; // whole cells in a window
    double rem = 0.0;     // length of the trailing partial cell
};

WindowShape windowShape(double dt, double L)
{
    WindowShape w;
    double ratio = L / dt;
    w.full = static_cast<std::size_t>(std::floor(ratio + 1e-9));
    w.rem = L - static_cast<double>(w.full) * dt;
    if (w.rem < 1e-9 * dt)
        w.rem = 0.0;
    return w;
}

std::vector<double> prefixTrapezoid(const std::vector<double>& g, double dt)
{
    std::vector<double> p(g.size(), 0.0);
    for (std::size_t k = 1; k < g.size(); ++k)
        p[k] = p[k - 1] + 0.5 * dt * (g[k - 1] + g[k]);
    return p;
}

double partialCell(const std::vector<double>& g, std::size_t k, double dt, double rem)
{
    if (rem == 0.0)
        return 0.0;
    double gEnd = g[k] + (rem / dt) * (g[k + 1] - g[k]);
    return 0.5 * rem * (g[k] + gEnd);
}

} // namespace

double windowIntegral(const std::vector<double>& g, std::size_t start, double dt, double L)
{
    WindowShape w = windowShape(dt, L);
    std::size_t last = start + w.full + (w.rem > 0.0 ? 1 : 0);
    if (last >= g.size())
        throw Error(ErrorCode::WindowMissing, "window runs past the end of the series");
    double s = 0.0;
    for (std::size_t k = start; k < start + w.full; ++k)
        s += 0.5 * dt * (g[k] + g[k + 1]);
    return s + partialCell(g, start + w.full, dt, w.rem);
}

WindowedSup::WindowedSup(std::size_t nTimes, double dt, double eps) : n_(nTimes), dt_(dt), eps_(eps), best_(nTimes, 0.0)
{
    if (!(eps >= 2.0 * dt * (1.0 - 1e-12)))
        throw Error(ErrorCode::WindowTooCoarse, "eps must be at least two time steps");
}

void WindowedSup::add(const std::vector<double>& g)
{
    if (g.size() != n_)
        throw Error(ErrorCode::MisalignedTimes, "series length does not match the time grid");
    std::vector<double> p = prefixTrapezoid(g, dt_);
    WindowShape w = windowShape(dt_, eps_);
    std::size_t span = w.full + (w.rem > 0.0 ? 1 : 0); // window ends inside cell (s+full, s+span]
    std::vector<double> cand(n_, 0.0);
    for (std::size_t s = 0; s + span < n_; ++s) {
        double integral = p[s + w.full] - p[s] + partialCell(g, s + w.full, dt_, w.rem);
        std::size_t kEnd = s + span; // first sample at or after the window end
        cand[kEnd] = std::max(cand[kEnd], integral / eps_);
    }
    double run = 0.0;
    for (std::size_t k = 0; k < n_; ++k) {
        double tk = static_cast<double>(k) * dt_;
        double v;
        if (tk < eps_ * (1.0 - 1e-9)) {
            v = p[k] / eps_;
        } else {
            run = std::max(run, cand[k]);
            v = run;
        }
        best_[k] = std::max(best_[k], v);
    }
}

std::vector<double> windowedForceAvgSeries(const Trajectory& traj, double eps)
{
    WindowedSup ws(traj.times.size(), traj.dt, eps);
    const std::size_t n = traj.snapshots.empty() ? 0 : traj.snapshots[0].size();
    std::vector<double> g(traj.times.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < g.size(); ++k)
            g[k] = traj.fieldMags[k][i];
        ws.add(g);
    }
    return ws.values();
}

double windowedForceAvg(const Trajectory& traj, double eps) { return windowedForceAvgSeries(traj, eps).back(); }

double defaultBeta(int d, double alpha, bool shortTimeOnly)
{
    if (d == 1) {
        if (!shortTimeOnly)
            throw Error(ErrorCode::UnsupportedDimension,
                        "no admissible beta > 1 in d = 1; enable the short-time-only flag to use beta = 1");
        return 1.0;
    }
    double hi = std::min(d - alpha, 2.0 * d - 3.0 * alpha);
    if (!(hi > 1.0))
        throw Error(ErrorCode::InvalidBeta, "admissible beta interval is empty for this alpha");
    return 0.5 * (1.0 + hi);
}

void validateBeta(double beta, int d, double alpha, bool shortTimeOnly)
{
    if (d == 1) {
        if (shortTimeOnly && beta == 1.0)
            return;
        throw Error(ErrorCode::UnsupportedDimension, "in d = 1 only beta = 1 with the short-time-only flag is accepted");
    }
    double hi = std::min(d - alpha, 2.0 * d - 3.0 * alpha);
    if (!(beta > 1.0 && beta < hi))
        throw Error(ErrorCode::InvalidBeta, "beta must lie in (1, min(d - alpha, 2d - 3 alpha))");
}

DiffAvgResult windowedForceDiffAvg(const Trajectory& traj, double eps, double alpha, const DiffAvgOptions& opts)
{
    if (!traj.hasFieldVecs())
        throw Error(ErrorCode::InvalidArgument, "trajectory was recorded without field vectors");
    const int d = traj.dim;
    double beta = opts.beta > 0.0 ? opts.beta : defaultBeta(d, alpha, opts.shortTimeOnly);
    validateBeta(beta, d, alpha, opts.shortTimeOnly);
    const double epsBeta = std::pow(eps, beta);

    const std::size_t n = traj.snapshots[0].size();
    const std::size_t nt = traj.times.size();
    const std::size_t total = n * (n - 1) / 2;

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    DiffAvgResult res;
    if (total <= opts.pairBudget) {
        pairs.reserve(total);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                pairs.emplace_back(i, j);
    } else {
        res.lowerBound = true;
        for (std::size_t k : {std::size_t{0}, nt - 1}) {
            auto ms = minPhaseSeparation(traj.snapshots[k], eps);
            pairs.emplace_back(ms.i, ms.j);
        }
        std::mt19937_64 rng(opts.seed);
        while (pairs.size() < opts.pairBudget + 2) {
            std::size_t i = rng() % n, j = rng() % n;
            if (i == j)
                continue;
            pairs.emplace_back(std::min(i, j), std::max(i, j));
        }
    }

    WindowedSup ws(nt, traj.dt, eps);
    std::vector<double> g(nt);
    for (auto [i, j] : pairs) {
        for (std::size_t k = 0; k < nt; ++k) {
            const auto& x = traj.snapshots[k].positions();
            const auto& f = traj.fieldVecs[k];
            g[k] = norm2(f[i] - f[j]) / (epsBeta + norm2(x[i] - x[j]));
        }
        ws.add(g);
    }
    res.series = ws.values();
    res.value = res.series.back();
    res.pairs = pairs.size();
    return res;
}

namespace {

// Densest window of q+1 consecutive cells per axis, cells of side w. Dense separable
// box filter when the grid is small, sparse accumulation otherwise.
std::size_t maxWindowCount(const std::vector<std::array<long long, 6>>& keys, int n, int q)
{
    std::array<long long, 6> lo{}, hi{};
    lo.fill(0);
    hi.fill(0);
    for (int a = 0; a < n; ++a) {
        lo[a] = hi[a] = keys[0][a];
        for (const auto& k : keys) {
            lo[a] = std::min(lo[a], k[a]);
            hi[a] = std::max(hi[a], k[a]);
        }
        lo[a] -= q; // windows start up to q cells below the lowest key
    }
    double total = 1.0;
    std::array<std::size_t, 6> ext{}, stride{};
    for (int a = 0; a < n; ++a) {
        ext[a] = static_cast<std::size_t>(hi[a] - lo[a] + 1);
        total *= static_cast<double>(ext[a]);
    }
    if (total <= static_cast<double>(1u << 24)) {
        std::size_t size = 1;
        for (int a = n - 1; a >= 0; --a) {
            stride[a] = size;
            size *= ext[a];
        }
        std::vector<std::uint32_t> grid(size, 0), tmp(size, 0);
        for (const auto& k : keys) {
            std::size_t off = 0;
            for (int a = 0; a < n; ++a)
                off += static_cast<std::size_t>(k[a] - lo[a]) * stride[a];
            ++grid[off];
        }
        // Along each axis, value at L becomes the sum over L..L+q.
        for (int a = 0; a < n; ++a) {
            for (std::size_t off = 0; off < size; ++off) {
                std::size_t pos = (off / stride[a]) % ext[a];
                std::uint32_t s = 0;
                for (int t = 0; t <= q && pos + t < ext[a]; ++t)
                    s += grid[off + t * stride[a]];
                tmp[off] = s;
            }
            grid.swap(tmp);
        }
        return *std::max_element(grid.begin(), grid.end());
    }
    std::map<std::array<long long, 6>, std::size_t> windows;
    std::size_t best = 0;
    std::size_t combos = 1;
    for (int a = 0; a < n; ++a)
        combos *= static_cast<std::size_t>(q + 1);
    for (const auto& k : keys)
        for (std::size_t c = 0; c < combos; ++c) {
            std::array<long long, 6> L{};
            L.fill(0);
            std::size_t r = c;
            for (int a = 0; a < n; ++a) {
                L[a] = k[a] - static_cast<long long>(r % (q + 1));
                r /= (q + 1);
            }
            best = std::max(best, ++windows[L]);
        }
    return best;
}

} // namespace

LinfBracket discreteLinf(const ParticleEnsemble& ens, double scale, int refine)
{
    if (!(scale > 0.0))
        throw Error(ErrorCode::InvalidArgument, "scale must be positive");
    if (refine < 1)
        throw Error(ErrorCode::InvalidArgument, "refine must be at least 1");
    const int d = ens.dim();
    const int n2 = 2 * d;
    const std::size_t n = ens.size();

    std::vector<std::array<double, 6>> pts(n);
    for (std::size_t i = 0; i < n; ++i) {
        pts[i].fill(0.0);
        for (int a = 0; a < d; ++a) {
            pts[i][a] = ens.positions()[i][a];
            pts[i][a + d] = ens.velocities()[i][a];
        }
    }
    std::sort(pts.begin(), pts.end());

    LinfBracket b;
    // Explicit boxes: centred at each particle, and with the particle at each of the 2^{2d} corners.
    const double side = 2.0 * scale;
    const std::size_t corners = std::size_t{1} << n2;
    std::vector<std::size_t> cnt(corners + 1);
    std::size_t jlo = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(cnt.begin(), cnt.end(), 0);
        while (pts[jlo][0] < pts[i][0] - side)
            ++jlo;
        for (std::size_t j = jlo; j < n && pts[j][0] <= pts[i][0] + side; ++j) {
            std::array<double, 6> diff{};
            bool near = true;
            for (int a = 0; a < n2 && near; ++a) {
                diff[a] = pts[j][a] - pts[i][a];
                near = std::fabs(diff[a]) <= side;
            }
            if (!near)
                continue;
            bool centred = true;
            for (int a = 0; a < n2; ++a)
                centred = centred && std::fabs(diff[a]) <= scale;
            if (centred)
                ++cnt[corners];
            for (std::size_t c = 0; c < corners; ++c) {
                bool in = true;
                for (int a = 0; a < n2 && in; ++a)
                    in = ((c >> a) & 1u) ? diff[a] >= 0.0 : diff[a] <= 0.0;
                if (in)
                    ++cnt[c];
            }
        }
        b.maxBoxCount = std::max(b.maxBoxCount, *std::max_element(cnt.begin(), cnt.end()));
    }

    // Half-open cells of side 2 scale; a closed box of radius scale meets at most 2 per axis.
    auto keysFor = [&](double w) {
        std::vector<std::array<long long, 6>> keys(n);
        for (std::size_t i = 0; i < n; ++i) {
            keys[i].fill(0);
            for (int a = 0; a < n2; ++a)
                keys[i][a] = static_cast<long long>(std::floor(pts[i][a] / w));
        }
        return keys;
    };
    auto keys = keysFor(side);
    std::sort(keys.begin(), keys.end());
    std::size_t run = 0;
    for (std::size_t i = 0; i < n; ++i) {
        run = (i > 0 && keys[i] == keys[i - 1]) ? run + 1 : 1;
        b.maxCellCount = std::max(b.maxCellCount, run);
    }
    // Each cell lies inside the closed box of radius scale about its centre.
    b.maxBoxCount = std::max(b.maxBoxCount, b.maxCellCount);

    const double vol = std::pow(side, n2);
    const double w = ens.weight();
    b.lower = w * static_cast<double>(b.maxBoxCount) / vol;
    if (refine == 1) {
        b.upper = std::pow(2.0, n2) * w * static_cast<double>(b.maxCellCount) / vol;
    } else {
        b.maxWindowCount = maxWindowCount(keysFor(side / refine), n2, refine);
        b.upper = w * static_cast<double>(b.maxWindowCount) / vol;
    }
    return b;
}

MlinfReport checkMlinf(double m, double linfUpper, int d)
{
    MlinfReport r;
    r.lhs = linfUpper;
    r.rhs = std::pow(4.0 * m, 2 * d);
    r.ratio = std::isinf(r.rhs) ? 0.0 : r.lhs / r.rhs;
    r.holds = r.lhs <= r.rhs;
    return r;
}

} // namespace mfl
