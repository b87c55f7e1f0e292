#include "mfl/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mfl/error.hpp"

namespace mfl {

ParticleEnsemble::ParticleEnsemble(int dim, std::vector<Vec3> positions, std::vector<Vec3> velocities,
                                   double supportRadius)
    : dim_(dim), x_(std::move(positions)), v_(std::move(velocities)), supportRadius_(supportRadius)
{
    if (dim_ < 1 || dim_ > 3)
        throw Error(ErrorCode::InvalidDimension, "d must be 1, 2 or 3");
    validate();
}

double ParticleEnsemble::supportRadius() const
{
    if (supportRadius_ > 0.0)
        return supportRadius_;
    double r = 0.0;
    for (std::size_t i = 0; i < x_.size(); ++i)
        r = std::max({r, normInf(x_[i]), normInf(v_[i])});
    return r;
}

void ParticleEnsemble::validate() const
{
    if (x_.size() != v_.size())
        throw Error(ErrorCode::InvalidArgument, "positions and velocities differ in length");
    if (x_.size() < 2)
        throw Error(ErrorCode::InvalidArgument, "an ensemble needs at least two particles");
    for (std::size_t i = 0; i < x_.size(); ++i)
        for (int a = 0; a < 3; ++a) {
            if (!std::isfinite(x_[i][a]) || !std::isfinite(v_[i][a]))
                throw Error(ErrorCode::NonfiniteState, "non-finite coordinate at particle " + std::to_string(i));
            if (a >= dim_ && (x_[i][a] != 0.0 || v_[i][a] != 0.0))
                throw Error(ErrorCode::InvalidArgument, "component beyond dimension is non-zero");
        }
}

double epsilonScale(double R0, std::size_t N, int d)
{
    if (d < 1 || d > 3)
        throw Error(ErrorCode::InvalidDimension, "d must be 1, 2 or 3");
    if (!(R0 > 0.0))
        throw Error(ErrorCode::InvalidArgument, "R0 must be positive");
    if (N < 2)
        throw Error(ErrorCode::InvalidArgument, "N must be at least 2");
    return R0 / std::pow(static_cast<double>(N), 1.0 / (2.0 * d));
}

DensityKind parseDensityKind(const std::string& name)
{
    if (name == "uniform-box")
        return DensityKind::UniformBox;
    if (name == "product-gaussian-truncated")
        return DensityKind::ProductGaussianTruncated;
    if (name == "two-stream")
        return DensityKind::TwoStream;
    throw Error(ErrorCode::UnsupportedDensity, "unknown density kind '" + name + "'");
}

std::string densityKindName(DensityKind kind)
{
    switch (kind) {
    case DensityKind::UniformBox: return "uniform-box";
    case DensityKind::ProductGaussianTruncated: return "product-gaussian-truncated";
    case DensityKind::TwoStream: return "two-stream";
    }
    throw Error(ErrorCode::UnsupportedDensity, "unknown density kind");
}

namespace {
double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
} // namespace

Marginal::Marginal(Shape shape, double radius, double width, double center)
    : shape_(shape), radius_(radius), width_(width), center_(center)
{
    if (!(radius > 0.0))
        throw Error(ErrorCode::InvalidArgument, "marginal radius must be positive");
    if (shape == Shape::TruncatedGaussian) {
        if (!(width > 0.0))
            throw Error(ErrorCode::InvalidArgument, "gaussian width must be positive");
        gaussNorm_ = phi(radius / width) - phi(-radius / width);
    }
    if (shape == Shape::TwoBump) {
        if (!(width > 0.0) || center - width < 0.0 || center + width > radius)
            throw Error(ErrorCode::InvalidArgument, "two-stream bumps must be disjoint and inside the support");
    }
}

double Marginal::pdf(double s) const
{
    if (std::fabs(s) > radius_)
        return 0.0;
    switch (shape_) {
    case Shape::Uniform: return 0.5 / radius_;
    case Shape::TruncatedGaussian:
        return std::exp(-0.5 * s * s / (width_ * width_)) / (width_ * std::sqrt(2.0 * M_PI) * gaussNorm_);
    case Shape::TwoBump:
        return (std::fabs(std::fabs(s) - center_) <= width_) ? 0.25 / width_ : 0.0;
    }
    return 0.0;
}

double Marginal::cdf(double s) const
{
    if (s <= -radius_)
        return 0.0;
    if (s >= radius_)
        return 1.0;
    switch (shape_) {
    case Shape::Uniform: return (s + radius_) / (2.0 * radius_);
    case Shape::TruncatedGaussian: return (phi(s / width_) - phi(-radius_ / width_)) / gaussNorm_;
    case Shape::TwoBump: {
        auto bump = [&](double c) { return std::clamp((s - (c - width_)) / (2.0 * width_), 0.0, 1.0); };
        return 0.5 * bump(-center_) + 0.5 * bump(center_);
    }
    }
    return 0.0;
}

double Marginal::quantile(double q) const
{
    q = std::clamp(q, 0.0, 1.0);
    switch (shape_) {
    case Shape::Uniform: return -radius_ + 2.0 * radius_ * q;
    case Shape::TwoBump:
        if (q <= 0.5)
            return -center_ - width_ + 4.0 * width_ * q;
        return center_ - width_ + 4.0 * width_ * (q - 0.5);
    case Shape::TruncatedGaussian: {
        double lo = -radius_, hi = radius_;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * radius_; ++it) {
            double mid = 0.5 * (lo + hi);
            if (cdf(mid) >= q)
                hi = mid;
            else
                lo = mid;
        }
        return hi;
    }
    }
    return 0.0;
}

std::vector<Marginal> marginals(const InitialDensitySpec& spec, int d)
{
    if (d < 1 || d > 3)
        throw Error(ErrorCode::InvalidDimension, "d must be 1, 2 or 3");
    std::vector<Marginal> out;
    for (int a = 0; a < 2 * d; ++a) {
        bool isX = a < d;
        double R = isX ? spec.R0x : spec.R0v;
        switch (spec.kind) {
        case DensityKind::UniformBox: out.emplace_back(Marginal::Shape::Uniform, R); break;
        case DensityKind::ProductGaussianTruncated:
            out.emplace_back(Marginal::Shape::TruncatedGaussian, R, isX ? spec.sigmaX : spec.sigmaV);
            break;
        case DensityKind::TwoStream:
            if (a == d)
                out.emplace_back(Marginal::Shape::TwoBump, R, spec.streamHalfWidth, spec.streamCenter);
            else
                out.emplace_back(Marginal::Shape::Uniform, R);
            break;
        }
    }
    return out;
}

std::size_t latticeSide(std::size_t N, int d)
{
    std::size_t k = 1;
    auto power = [d](std::size_t b) {
        std::size_t p = 1;
        for (int a = 0; a < 2 * d; ++a)
            p *= b;
        return p;
    };
    while (power(k + 1) <= N)
        ++k;
    return k;
}

QuietStart quietStartInit(const InitialDensitySpec& spec, std::size_t N, int d, std::uint64_t seed)
{
    if (spec.jitter < 0.0 || spec.jitter > 0.1)
        throw Error(ErrorCode::InvalidArgument, "jitter must lie in [0, 0.1]");
    auto axes = marginals(spec, d);
    std::size_t k = latticeSide(N, d);
    std::size_t n = 1;
    for (int a = 0; a < 2 * d; ++a)
        n *= k;
    if (n < 2)
        throw Error(ErrorCode::InvalidArgument, "N too small for a lattice with two particles");

    // Velocity axes use k equal-mass strata. Position axes use k^2 strata, the particle in
    // velocity stratum j of that axis taking the j-th sub-stratum, so no two particles share
    // a position stratum and the initial positions are pairwise distinct.
    std::vector<std::vector<double>> lo(2 * d), hi(2 * d), mid(2 * d);
    for (int a = 0; a < 2 * d; ++a) {
        std::size_t strata = a < d ? k * k : k;
        double ss = static_cast<double>(strata);
        for (std::size_t i = 0; i < strata; ++i) {
            lo[a].push_back(axes[a].quantile(i / ss));
            hi[a].push_back(axes[a].quantile((i + 1) / ss));
            mid[a].push_back(axes[a].quantile((i + 0.5) / ss));
        }
    }

    std::mt19937_64 rng(seed);
    auto uniformPm1 = [&rng]() { return 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0; };

    std::vector<Vec3> xs(n), vs(n);
    std::vector<std::size_t> idx(2 * d, 0);
    for (std::size_t p = 0; p < n; ++p) {
        std::size_t rem = p;
        for (int a = 2 * d - 1; a >= 0; --a) {
            idx[a] = rem % k;
            rem /= k;
        }
        for (int a = 0; a < 2 * d; ++a) {
            std::size_t i = a < d ? idx[a] * k + idx[a + d] : idx[a];
            // Jitter in mass coordinates keeps the point inside its stratum and the support.
            double u = uniformPm1();
            double q = (static_cast<double>(i) + 0.5 + spec.jitter * u) / static_cast<double>(lo[a].size());
            double s = spec.jitter > 0.0 ? axes[a].quantile(q) : mid[a][i];
            s = std::clamp(s, lo[a][i], hi[a][i]);
            if (a < d)
                xs[p][a] = s;
            else
                vs[p][a - d] = s;
        }
    }
    QuietStart out;
    out.ensemble = ParticleEnsemble(d, std::move(xs), std::move(vs), std::max(spec.R0x, spec.R0v));
    out.requestedN = N;
    out.k = k;
    return out;
}

} // namespace mfl
