#include "mfl/shells.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mfl/error.hpp"

namespace mfl {

std::size_t ShellPartition::memberCount() const
{
    std::size_t c = remainder.size();
    for (const auto& s : shells)
        c += s.members.size();
    return c;
}

int dyadicIndex(double dist, double base, int kMax)
{
    if (dist <= base)
        return 0;
    int k = static_cast<int>(std::ceil(std::log2(dist / base)));
    k = std::max(k, 1);
    while (k > 1 && base * std::ldexp(1.0, k - 1) >= dist)
        --k;
    while (base * std::ldexp(1.0, k) < dist)
        ++k;
    return std::min(k, kMax);
}

namespace {

int capFromLog(double ratio)
{
    if (!(ratio > 0.0) || !std::isfinite(ratio))
        return 1;
    return std::max(1, static_cast<int>(std::ceil(std::log(ratio) / std::log(2.0))));
}

double maxPositionNorm(const ParticleEnsemble& ens)
{
    double r = 0.0;
    for (const auto& x : ens.positions())
        r = std::max(r, norm2(x));
    return r;
}

ShellPartition partitionBy(const ParticleEnsemble& ens, std::size_t anchor, const std::vector<std::size_t>& scope,
                           ShellKind kind, double base, int kMax)
{
    ShellPartition p;
    p.anchor = anchor;
    p.kind = kind;
    p.base = base;
    p.kMax = kMax;
    p.shells.resize(static_cast<std::size_t>(kMax));
    for (int k = 1; k <= kMax; ++k) {
        p.shells[k - 1].k = k;
        p.shells[k - 1].outer = base * std::ldexp(1.0, k);
    }
    const auto& pts = kind == ShellKind::Position ? ens.positions() : ens.velocities();
    for (std::size_t j : scope) {
        if (j == anchor)
            continue;
        double dist = norm2(pts[j] - pts[anchor]);
        int k = base > 0.0 ? dyadicIndex(dist, base, kMax) : (dist == 0.0 ? 0 : kMax);
        if (k == 0)
            p.remainder.push_back(j);
        else {
            p.shells[k - 1].members.push_back(j);
            p.shells[k - 1].outer = std::max(p.shells[k - 1].outer, dist);
        }
    }
    return p;
}

std::vector<std::size_t> allIndices(std::size_t n)
{
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = i;
    return v;
}

} // namespace

ShellPartition positionShells(const ParticleEnsemble& ens, std::size_t anchor, double eps, double K, double R)
{
    if (!(K > 0.0))
        throw Error(ErrorCode::InvalidArgument, "K must be positive");
    if (anchor >= ens.size())
        throw Error(ErrorCode::InvalidArgument, "anchor out of range");
    if (R <= 0.0)
        R = maxPositionNorm(ens);
    int kMax = capFromLog(R / (4.0 * eps * K));
    ShellPartition p = partitionBy(ens, anchor, allIndices(ens.size()), ShellKind::Position, 3.0 * eps * K, kMax);
    p.eps = eps;
    p.scaleParam = K;
    return p;
}

ShellPartition velocityShells(const ParticleEnsemble& ens, std::size_t anchor, const std::vector<std::size_t>& subset,
                              double eps, double Ebar, double K)
{
    if (anchor >= ens.size())
        throw Error(ErrorCode::InvalidArgument, "anchor out of range");
    if (Ebar <= 0.0) {
        ShellPartition p;
        p.anchor = anchor;
        p.kind = ShellKind::Velocity;
        p.eps = eps;
        for (std::size_t j : subset)
            if (j != anchor)
                p.remainder.push_back(j);
        return p;
    }
    int lMax = capFromLog(K / (eps * Ebar));
    ShellPartition p = partitionBy(ens, anchor, subset, ShellKind::Velocity, 3.0 * eps * Ebar, lMax);
    p.eps = eps;
    p.scaleParam = Ebar;
    return p;
}

Q0Split q0Split(const std::vector<std::size_t>& subset, const ParticleEnsemble& ens, std::size_t anchor, double eps,
                double K, double dEbar)
{
    if (dEbar < 0.0)
        throw Error(ErrorCode::InvalidArgument, "dEbar must be non-negative");
    Q0Split s;
    s.threshold = 6.0 * eps * eps * K * dEbar;
    const auto& v = ens.velocities();
    for (std::size_t j : subset) {
        if (j == anchor)
            continue;
        double dv = norm2(v[j] - v[anchor]);
        if (dv >= s.threshold && dv > 0.0) // coincident velocities always go to the second set
            s.prime.push_back(j);
        else
            s.second.push_back(j);
    }
    return s;
}

StabilityReport shellStabilityCheck(const Trajectory& traj, const ShellPartition& part, std::size_t anchorIndex,
                                    std::size_t otherIndex)
{
    if (anchorIndex >= traj.snapshots.size() || otherIndex >= traj.snapshots.size())
        throw Error(ErrorCode::WindowMissing, "window outside the trajectory");
    std::size_t lo = std::min(anchorIndex, otherIndex), hi = std::max(anchorIndex, otherIndex);
    if (traj.times[hi] - traj.times[lo] > part.eps * (1.0 + 1e-9))
        throw Error(ErrorCode::InvalidWindow, "stability window longer than eps");

    StabilityReport rep;
    const double eps = part.eps, s = part.scaleParam;
    for (std::size_t t = lo; t <= hi; ++t) {
        const auto& e = traj.snapshots[t];
        const auto& pts = part.kind == ShellKind::Position ? e.positions() : e.velocities();
        const Vec3 a = pts[part.anchor];
        for (const auto& sh : part.shells) {
            double bound = eps * s * std::ldexp(1.0, sh.k - 1);
            for (std::size_t j : sh.members) {
                double dist = norm2(pts[j] - a);
                ++rep.checked;
                bool fine = part.kind == ShellKind::Position ? dist >= bound : dist > bound;
                if (!fine)
                    rep.violations.push_back({j, sh.k, traj.times[t], dist, bound});
            }
        }
        if (part.kind == ShellKind::Position) {
            double bound = 5.0 * eps * s;
            for (std::size_t j : part.remainder) {
                double dist = norm2(pts[j] - a);
                ++rep.checked;
                if (dist > bound)
                    rep.violations.push_back({j, 0, traj.times[t], dist, bound});
            }
        }
    }
    return rep;
}

bool ShellCountReport::ok() const
{
    return std::all_of(entries.begin(), entries.end(),
                       [](const ShellCount& e) { return !e.applicable || e.ratio <= 1.0; });
}

double volumetricBound(double rhoX, double rhoV, double linfUpper, double scale, std::size_t N, int d)
{
    double boxes = std::pow(std::ceil(rhoX / scale - 1e-12), d) * std::pow(std::ceil(rhoV / scale - 1e-12), d);
    boxes = std::max(boxes, 1.0);
    return linfUpper * std::pow(2.0 * scale, 2 * d) * boxes * static_cast<double>(N);
}

ShellCountReport shellCountBoundCheck(const ShellPartition& part, double linfUpper, double scale, std::size_t N, int d,
                                      double otherRadius)
{
    ShellCountReport rep;
    auto entry = [&](int k, std::size_t count, double outer) {
        ShellCount c;
        c.k = k;
        c.count = count;
        double rx = part.kind == ShellKind::Position ? outer : otherRadius;
        double rv = part.kind == ShellKind::Position ? otherRadius : outer;
        c.bound = volumetricBound(rx, rv, linfUpper, scale, N, d);
        c.applicable = count > 0 && part.base > 0.0; // base 0: Ebar = 0 puts all of C0 in Q0
        c.ratio = c.applicable ? static_cast<double>(count) / c.bound : 0.0;
        rep.entries.push_back(c);
    };
    entry(0, part.remainder.size(), part.base);
    for (const auto& sh : part.shells) {
        entry(sh.k, sh.members.size(), sh.outer);
    }
    return rep;
}

TwoScalePartition twoScaleShells(const ParticleEnsemble& ens, std::size_t anchor, double eps, double eta, double K,
                                 double R)
{
    if (!(eta > eps))
        throw Error(ErrorCode::ScaleOrder, "eta must exceed eps");
    if (!(K > 0.0))
        throw Error(ErrorCode::InvalidArgument, "K must be positive");
    if (R <= 0.0)
        R = maxPositionNorm(ens);
    TwoScalePartition t;
    int outerCap = capFromLog(R / (4.0 * eta * K));
    t.outer = partitionBy(ens, anchor, allIndices(ens.size()), ShellKind::Position, 3.0 * eta * K, outerCap);
    t.outer.eps = eta;
    t.outer.scaleParam = K;
    t.innerCap = std::max(1, static_cast<int>(std::ceil(std::log2(eta / eps) - 1e-12)));
    t.inner = partitionBy(ens, anchor, t.outer.remainder, ShellKind::Position, 3.0 * eps * K, t.innerCap);
    t.inner.eps = eps;
    t.inner.scaleParam = K;
    return t;
}

std::string shellReportJson(const ShellPartition& part, const ShellCountReport& report)
{
    std::ostringstream os;
    os.precision(17);
    os << "{\"anchor\":" << part.anchor << ",\"kind\":\"" << (part.kind == ShellKind::Position ? "position" : "velocity")
       << "\",\"base\":" << part.base << ",\"shells\":[";
    for (std::size_t i = 0; i < report.entries.size(); ++i) {
        const auto& e = report.entries[i];
        if (i)
            os << ",";
        os << "{\"k\":" << e.k << ",\"count\":" << e.count << ",\"bound\":" << e.bound << ",\"ratio\":";
        if (e.applicable)
            os << e.ratio;
        else
            os << "\"n/a\"";
        os << "}";
    }
    os << "]}";
    return os.str();
}

} // namespace mfl
