#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mfl/vec.hpp"

namespace mfl {

// N identical particles of weight 1/N in d-dimensional phase space.
class ParticleEnsemble {
public:
    ParticleEnsemble() = default;
    ParticleEnsemble(int dim, std::vector<Vec3> positions, std::vector<Vec3> velocities,
                     double supportRadius = 0.0);

    int dim() const { return dim_; }
    std::size_t size() const { return x_.size(); }
    double weight() const { return 1.0 / static_cast<double>(x_.size()); }

    const std::vector<Vec3>& positions() const { return x_; }
    const std::vector<Vec3>& velocities() const { return v_; }
    std::vector<Vec3>& positions() { return x_; }
    std::vector<Vec3>& velocities() { return v_; }

    // Radius R0 entering the discrete scale. Taken from the initial density when known,
    // otherwise the largest sup-norm phase coordinate.
    double supportRadius() const;

    // Throws if any coordinate is non-finite or the sizes disagree.
    void validate() const;

private:
    int dim_ = 1;
    std::vector<Vec3> x_, v_;
    double supportRadius_ = 0.0;
};

double epsilonScale(double R0, std::size_t N, int d);

enum class DensityKind { UniformBox, ProductGaussianTruncated, TwoStream };

DensityKind parseDensityKind(const std::string& name);
std::string densityKindName(DensityKind kind);

struct InitialDensitySpec {
    DensityKind kind = DensityKind::UniformBox;
    double R0x = 1.0;
    double R0v = 1.0;
    double sigmaX = 0.5;       // gaussian width, product-gaussian-truncated
    double sigmaV = 0.5;
    double streamCenter = 0.5; // two-stream: bumps at +/- center on the first velocity axis
    double streamHalfWidth = 0.25;
    double jitter = 0.05;      // within-stratum jitter as a fraction of the stratum mass, <= 0.1
};

// One-dimensional marginal of a product density. Used for stratified placement and
// for building the continuum initial condition of the grid solver.
class Marginal {
public:
    enum class Shape { Uniform, TruncatedGaussian, TwoBump };
    Marginal(Shape shape, double radius, double width = 0.0, double center = 0.0);

    double pdf(double s) const;
    double cdf(double s) const;
    double quantile(double q) const; // left-continuous generalised inverse
    double mean() const { return 0.0; }
    double radius() const { return radius_; }

private:
    Shape shape_;
    double radius_, width_, center_;
    double gaussNorm_ = 1.0;
};

// The 2d axis marginals: x_1..x_d then v_1..v_d.
std::vector<Marginal> marginals(const InitialDensitySpec& spec, int d);

struct QuietStart {
    ParticleEnsemble ensemble;
    std::size_t requestedN = 0;
    std::size_t k = 0; // lattice points per axis
};

// Largest k with k^{2d} <= N.
std::size_t latticeSide(std::size_t N, int d);

QuietStart quietStartInit(const InitialDensitySpec& spec, std::size_t N, int d, std::uint64_t seed);

} // namespace mfl
