#pragma once

#include <cstddef>
#include <vector>

#include "mfl/ensemble.hpp"
#include "mfl/vec.hpp"

namespace mfl {

// sign * r / (|r| + delta)^{1+alpha}. sign 0 switches the interaction off (free transport).
struct ForceKernel {
    double alpha = 0.5;
    int sign = +1;
    double delta = 0.0;

    void validate() const;
    ForceKernel regularized(double eps) const
    {
        ForceKernel k = *this;
        k.delta = eps;
        return k;
    }
};

Vec3 pairForce(const Vec3& r, const ForceKernel& kernel);

// Jacobian of pairForce with respect to r; requires delta > 0 or r != 0.
Mat3 pairForceJacobian(const Vec3& r, const ForceKernel& kernel, int d);

// E(X_i) = (1/N) sum_{j != i} F(X_i - X_j). Pairs closer than minSeparation raise CollisionError.
Vec3 fieldExact(const ParticleEnsemble& ens, std::size_t i, const ForceKernel& kernel,
                double minSeparation = 0.0);

// All N fields at once, each pair evaluated once.
std::vector<Vec3> fieldsExact(const ParticleEnsemble& ens, const ForceKernel& kernel,
                              double minSeparation = 0.0);

// F_N(x) = (1/N) sum_j F(x - X_j).
Vec3 fieldAt(const ParticleEnsemble& ens, const Vec3& x, const ForceKernel& kernel);

// E_eps(x) = (1/N) sum_j F_eps(x - X_j) with delta = eps.
Vec3 fieldRegularized(const ParticleEnsemble& ens, const Vec3& x, double eps, const ForceKernel& kernel);

Mat3 gradFieldRegularized(const ParticleEnsemble& ens, const Vec3& x, double eps, const ForceKernel& kernel);

// Compensated accumulator for vector sums.
struct KahanVec {
    Vec3 sum{}, c{};
    void add(const Vec3& y)
    {
        for (int a = 0; a < 3; ++a) {
            double t = y[a] - c[a];
            double s = sum[a] + t;
            c[a] = (s - sum[a]) - t;
            sum[a] = s;
        }
    }
};

} // namespace mfl
