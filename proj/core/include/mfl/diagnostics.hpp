#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mfl/ensemble.hpp"
#include "mfl/integrator.hpp"

namespace mfl {

struct SupportRadii {
    double R = 0.0, K = 0.0;       // Euclidean running sups
    double Rinf = 0.0, Kinf = 0.0; // sup-norm running sups
    double R0 = 0.0;
    bool transportBoundHolds = true; // R <= R(0) + T K
};

SupportRadii supportRadii(const Trajectory& traj, double upTo);
// Running sups at every sample index.
std::vector<SupportRadii> supportRadiiSeries(const Trajectory& traj);

struct MinSeparation {
    double m = 0.0;
    double minDistance = 0.0; // min |dX| + |dV|
    std::size_t i = 0, j = 0;
    bool collision = false;   // coincident pair, m = +inf
};

constexpr std::size_t kExactSeparationLimit = 32768;

MinSeparation minPhaseSeparation(const ParticleEnsemble& ens, double eps);

// Integral of a sampled series over [start*dt, start*dt + L], trapezoid on the grid and a
// linearly interpolated partial last cell.
double windowIntegral(const std::vector<double>& g, std::size_t start, double dt, double L);

// Time averages over windows of length eps with starts on the step grid. values()[k] is the
// sup over all added series and all windows inside [0, t_k]; for t_k < eps the average of
// the whole prefix divided by eps is used instead.
class WindowedSup {
public:
    WindowedSup(std::size_t nTimes, double dt, double eps);
    void add(const std::vector<double>& series);
    const std::vector<double>& values() const { return best_; }

private:
    std::size_t n_;
    double dt_, eps_;
    std::vector<double> best_;
};

// Ebar at every sample time.
std::vector<double> windowedForceAvgSeries(const Trajectory& traj, double eps);
double windowedForceAvg(const Trajectory& traj, double eps);

double defaultBeta(int d, double alpha, bool shortTimeOnly = false);
void validateBeta(double beta, int d, double alpha, bool shortTimeOnly = false);

struct DiffAvgOptions {
    double beta = 0.0;
    std::size_t pairBudget = 100000;
    std::uint64_t seed = 1;
    bool shortTimeOnly = false; // admits beta = 1 in d = 1
};

struct DiffAvgResult {
    std::vector<double> series; // dEbar at every sample time
    double value = 0.0;
    bool lowerBound = false;    // pairs were sampled
    std::size_t pairs = 0;
};

DiffAvgResult windowedForceDiffAvg(const Trajectory& traj, double eps, double alpha, const DiffAvgOptions& opts);

struct LinfBracket {
    double lower = 0.0, upper = 0.0;
    std::size_t maxBoxCount = 0;    // best explicit box of radius scale
    std::size_t maxCellCount = 0;   // half-open lattice cell of side 2 scale
    std::size_t maxWindowCount = 0; // refined upper: (q+1)^{2d} fine cells of side 2 scale / q
};

// Two-sided bracket of the sup over boxes of radius `scale` of mass / (2 scale)^{2d}.
// lower: boxes centred at particles, boxes with a particle at a corner, and lattice cells.
// upper: refine = 1 gives 2^{2d} times the densest cell of side 2 scale; refine = q > 1
// gives the densest block of q+1 consecutive fine cells of side 2 scale / q per axis.
LinfBracket discreteLinf(const ParticleEnsemble& ens, double scale, int refine = 1);

struct MlinfReport {
    bool holds = true;
    double lhs = 0.0, rhs = 0.0, ratio = 0.0;
};

MlinfReport checkMlinf(double m, double linfUpper, int d);

} // namespace mfl
