#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mfl/ensemble.hpp"
#include "mfl/integrator.hpp"

namespace mfl {

enum class ShellKind { Position, Velocity };

struct Shell {
    int k = 0;
    std::vector<std::size_t> members;
    double outer = 0.0; // base 2^k, or the farthest member for the merged last shell
};

// Dyadic decomposition about an anchor particle. Shell k >= 1 holds distances in
// (base 2^{k-1}, base 2^k]; the remainder holds distances <= base. Distances beyond the
// cap are merged into the last shell.
struct ShellPartition {
    std::size_t anchor = 0;
    ShellKind kind = ShellKind::Position;
    double base = 0.0;
    double eps = 0.0;
    double scaleParam = 0.0; // K for position shells, Ebar for velocity shells
    int kMax = 0;
    std::vector<Shell> shells; // shells[k-1] has index k
    std::vector<std::size_t> remainder;

    std::size_t memberCount() const;
};

// Assigns dist > base to k with base 2^{k-1} < dist <= base 2^k, capped at kMax.
int dyadicIndex(double dist, double base, int kMax);

// R <= 0 takes R as the current maximal |X_i|.
ShellPartition positionShells(const ParticleEnsemble& ens, std::size_t anchor, double eps, double K, double R = 0.0);

ShellPartition velocityShells(const ParticleEnsemble& ens, std::size_t anchor, const std::vector<std::size_t>& subset,
                              double eps, double Ebar, double K);

struct Q0Split {
    std::vector<std::size_t> prime;  // |dV| >= 6 eps^2 K dEbar
    std::vector<std::size_t> second;
    double threshold = 0.0;
};

Q0Split q0Split(const std::vector<std::size_t>& subset, const ParticleEnsemble& ens, std::size_t anchor, double eps,
                double K, double dEbar);

struct StabilityViolation {
    std::size_t j = 0;
    int k = 0;
    double time = 0.0;
    double value = 0.0;
    double bound = 0.0;
};

struct StabilityReport {
    std::size_t checked = 0;
    std::vector<StabilityViolation> violations;
    bool ok() const { return violations.empty(); }
};

// Checks the partition built at sample anchorIndex over all samples between anchorIndex
// and otherIndex (either order). The window must not exceed eps.
StabilityReport shellStabilityCheck(const Trajectory& traj, const ShellPartition& part, std::size_t anchorIndex,
                                    std::size_t otherIndex);

struct ShellCount {
    int k = 0;
    std::size_t count = 0;
    double bound = 0.0;
    double ratio = 0.0;
    bool applicable = false; // false for empty shells (reported as n/a)
};

struct ShellCountReport {
    std::vector<ShellCount> entries;
    bool ok() const;
};

// Volumetric cardinality bound: a shell lies in the phase cube of x-radius rhoX and
// v-radius rhoV, covered by ceil(rhoX/scale)^d ceil(rhoV/scale)^d boxes of side 2 scale,
// each of mass at most linfUpper (2 scale)^{2d}.
// vRadius is the velocity half-extent for position shells (K); xRadius the position
// half-extent for velocity shells (the remainder radius of the position decomposition).
ShellCountReport shellCountBoundCheck(const ShellPartition& part, double linfUpper, double scale, std::size_t N, int d,
                                      double otherRadius);

double volumetricBound(double rhoX, double rhoV, double linfUpper, double scale, std::size_t N, int d);

struct TwoScalePartition {
    ShellPartition outer; // eta scale
    ShellPartition inner; // eps scale, built from the outer remainder
    int innerCap = 0;
};

TwoScalePartition twoScaleShells(const ParticleEnsemble& ens, std::size_t anchor, double eps, double eta, double K,
                                 double R = 0.0);

std::string shellReportJson(const ShellPartition& part, const ShellCountReport& report);

} // namespace mfl
