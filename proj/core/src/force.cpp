#include "mfl/force.hpp"

#include <cmath>
#include <string>

#include "mfl/error.hpp"

namespace mfl {

void ForceKernel::validate() const
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw Error(ErrorCode::InvalidArgument,
                    "alpha must lie strictly between 0 and 1 (singular kernels weaker than 1/|x|)");
    if (!(delta >= 0.0))
        throw Error(ErrorCode::InvalidArgument, "regularization must be non-negative");
    if (sign != 1 && sign != -1 && sign != 0)
        throw Error(ErrorCode::InvalidArgument, "sign must be +1, -1 or 0");
}

namespace {

// s^{-(1+alpha)}, with a fast path for alpha = 1/2.
inline double invPow(double s, double alpha)
{
    if (alpha == 0.5)
        return 1.0 / (s * std::sqrt(s));
    return std::pow(s, -(1.0 + alpha));
}

} // namespace

Vec3 pairForce(const Vec3& r, const ForceKernel& kernel)
{
    if (kernel.sign == 0)
        return Vec3{};
    double n = norm2(r);
    if (n == 0.0) {
        if (kernel.delta == 0.0)
            throw Error(ErrorCode::SingularInput, "zero displacement with unregularized kernel");
        return Vec3{};
    }
    return (kernel.sign * invPow(n + kernel.delta, kernel.alpha)) * r;
}

Mat3 pairForceJacobian(const Vec3& r, const ForceKernel& kernel, int d)
{
    Mat3 J{};
    if (kernel.sign == 0)
        return J;
    double n = norm2(r);
    double s = n + kernel.delta;
    if (s == 0.0)
        throw Error(ErrorCode::SingularInput, "zero displacement with unregularized kernel");
    double p = invPow(s, kernel.alpha);
    double q = n > 0.0 ? (1.0 + kernel.alpha) * p / (s * n) : 0.0;
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            J[a][b] = kernel.sign * ((a == b ? p : 0.0) - q * r[a] * r[b]);
    return J;
}

Vec3 fieldExact(const ParticleEnsemble& ens, std::size_t i, const ForceKernel& kernel, double minSeparation)
{
    const auto& x = ens.positions();
    KahanVec acc;
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (j == i)
            continue;
        Vec3 r = x[i] - x[j];
        double n = norm2(r);
        if (n < minSeparation || (n == 0.0 && kernel.delta == 0.0))
            throw CollisionError(std::min(i, j), std::max(i, j), n);
        acc.add(pairForce(r, kernel));
    }
    return ens.weight() * acc.sum;
}

std::vector<Vec3> fieldsExact(const ParticleEnsemble& ens, const ForceKernel& kernel, double minSeparation)
{
    const auto& x = ens.positions();
    const std::size_t n = x.size();
    std::vector<KahanVec> acc(n);
    const double alpha = kernel.alpha;
    const double delta = kernel.delta;
    const double sign = kernel.sign;
    if (kernel.sign != 0) {
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 xi = x[i];
            for (std::size_t j = i + 1; j < n; ++j) {
                Vec3 r = xi - x[j];
                double d = norm2(r);
                if (d < minSeparation || (d == 0.0 && delta == 0.0))
                    throw CollisionError(i, j, d);
                if (d == 0.0)
                    continue;
                Vec3 f = (sign * invPow(d + delta, alpha)) * r;
                acc[i].add(f);
                acc[j].add(-f);
            }
        }
    } else if (minSeparation > 0.0) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                double d = norm2(x[i] - x[j]);
                if (d < minSeparation)
                    throw CollisionError(i, j, d);
            }
    }
    std::vector<Vec3> out(n);
    const double w = ens.weight();
    for (std::size_t i = 0; i < n; ++i)
        out[i] = w * acc[i].sum;
    return out;
}

Vec3 fieldAt(const ParticleEnsemble& ens, const Vec3& x, const ForceKernel& kernel)
{
    KahanVec acc;
    for (const auto& xj : ens.positions())
        acc.add(pairForce(x - xj, kernel));
    return ens.weight() * acc.sum;
}

Vec3 fieldRegularized(const ParticleEnsemble& ens, const Vec3& x, double eps, const ForceKernel& kernel)
{
    if (!(eps > 0.0))
        throw Error(ErrorCode::InvalidArgument, "eps must be positive");
    return fieldAt(ens, x, kernel.regularized(eps));
}

Mat3 gradFieldRegularized(const ParticleEnsemble& ens, const Vec3& x, double eps, const ForceKernel& kernel)
{
    if (!(eps > 0.0))
        throw Error(ErrorCode::InvalidArgument, "eps must be positive");
    ForceKernel k = kernel.regularized(eps);
    Mat3 J{};
    for (const auto& xj : ens.positions())
        J = J + pairForceJacobian(x - xj, k, ens.dim());
    return ens.weight() * J;
}

} // namespace mfl
