#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mfl/ensemble.hpp"
#include "mfl/force.hpp"
#include "mfl/integrator.hpp"
#include "mfl/vec.hpp"

namespace mfl {

// S = { (x, v) : max(|A dx + B dv|, |C dx + D dv|) <= eta }, dx = x - X0, dv = v - V0.
struct PhaseParallelepiped {
    int d = 1;
    Vec3 X0{}, V0{};
    Mat3 A{}, B{}, C{}, D{};
    double eta = 0.0;

    static PhaseParallelepiped box(int d, const Vec3& X0, const Vec3& V0, double eta);
    double normOf(const Vec3& dx, const Vec3& dv) const; // max(|A dx + B dv|, |C dx + D dv|)
    double det() const;
};

bool contains(const PhaseParallelepiped& S, const Vec3& x, const Vec3& v);
std::size_t countIn(const ParticleEnsemble& ens, const PhaseParallelepiped& S);

// Induced Euclidean operator norm of the leading d x d block, via singular values.
double opNorm2(const Mat3& m, int d);

struct NormConditions {
    bool pass = false;
    double diag = 0.0;    // max(|A - I|, |D - I|)
    double offDiag = 0.0; // max(|B|, |C|)
    double diagMargin = 0.0, offDiagMargin = 0.0;
    std::string failed;   // which condition failed, empty on pass
};

NormConditions normConditions(const PhaseParallelepiped& S);

// Largest sup-norm distance from the centre over all points of S, exact through the
// support function of the unit ball. The witness is a boundary point attaining it.
struct ContainmentExtent {
    bool bounded = true;
    double eta = 0.0;
    double maxDistance = 0.0;
    double ratio = 0.0; // maxDistance / (2 eta)
    std::array<double, 6> witness{}; // (x - X0, v - V0) flattened
    bool within() const { return bounded && maxDistance <= 2.0 * eta * (1.0 + 1e-12); }
};

ContainmentExtent containmentExtent(const PhaseParallelepiped& S);
// Requires the norm conditions; throws norm-conditions-violated otherwise.
ContainmentExtent containmentCheck(const PhaseParallelepiped& S);

// Points of S sampled as X0 + M^{-1} y with |y| <= radius in the block max norm;
// onBoundary forces |y| = radius.
std::vector<std::array<double, 6>> samplePoints(const PhaseParallelepiped& S, std::size_t count, std::uint64_t seed,
                                                bool onBoundary, double radius = -1.0);

struct BackwardStepOptions {
    double eps = 0.0;     // regularisation of the field and the scale in the radius growth
    double beta = 1.0;
    double growth = 0.0;  // C in eta' = eta + C h (eta^beta + eps)
    double driftConst = 0.0; // 0: a-priori constant 1.5 max(1, |grad E|)
    double detConst = 0.0;   // 0: a-priori constant 1.01 |det M| d |grad E| (1 + h^2 |grad E|)^{d-1}
};

struct BackwardStep {
    PhaseParallelepiped next;
    double h = 0.0;
    Mat3 gradAvg{};
    double blockDrift = 0.0;
    double detBefore = 0.0, detAfter = 0.0;
    bool driftOk = true, detOk = true;
};

// One step from sample index `from` back to sample index `to` (< from).
BackwardStep backwardStep(const PhaseParallelepiped& S, const Trajectory& traj, std::size_t from, std::size_t to,
                          const ForceKernel& kernel, const BackwardStepOptions& opts);

enum class TrackEnd { ReachedZero, NormConditions };

struct TrackStepRecord {
    double time = 0.0;
    std::size_t count = 0;
    double radius = 0.0;
    double blockDrift = 0.0;
    double det = 0.0;
    double diagMargin = 0.0, offDiagMargin = 0.0;
    bool monotone = true;      // count >= count one step later
    bool radiusBoundOk = true; // r_n against the alpha_n recursion
    bool driftOk = true, detOk = true;
};

struct TrackingReport {
    std::size_t startIndex = 0;
    std::vector<TrackStepRecord> steps; // steps[0] is the starting box
    TrackEnd end = TrackEnd::ReachedZero;
    std::string failedCondition;
    PhaseParallelepiped final;
    bool monotone() const;
    std::string toJsonLines(std::size_t boxId) const;
};

// Iterates backward steps of `stride` samples (the last one possibly shorter) to t = 0.
TrackingReport trackBack(const PhaseParallelepiped& S, const Trajectory& traj, std::size_t startIndex,
                         std::size_t stride, const ForceKernel& kernel, const BackwardStepOptions& opts);

// Largest single-step radius defect ratio over the boxes, used to fix the growth constant:
// for particle j of S_t, (|M'(z_j(t-h) - c')| - eta) / (h (eta^beta + eps)).
double pilotGrowthConstant(const std::vector<PhaseParallelepiped>& boxes, const Trajectory& traj,
                           std::size_t startIndex, std::size_t stride, const ForceKernel& kernel,
                           const BackwardStepOptions& opts);

struct LatticeCover {
    std::vector<std::array<long long, 6>> points; // lattice indices, point = eps * index
    double lhs = 0.0; // |P| (2 eps)^{2d}
    double rhs = 0.0; // det(M) (eta + 4 eps)^{2d}
    bool cardinalityHolds = false;
    // Volume comparison with disjoint cells of side eps:
    // |P| eps^{2d} <= vol(unit block ball) (eta + 4 eps)^{2d} / |det M|.
    double cellVolumeLhs = 0.0, cellVolumeRhs = 0.0;
    bool cellVolumeHolds = false;
    // Smallest C' with |P| <= eps^{-2d} eta^{2d-1} (eta + C' eps).
    double fittedCPrime = 0.0;
};

// P = eps Z^{2d} intersected with the enlargement of radius eta + 2 eps.
// maxDetExcess: precondition det(M) <= 1 + maxDetExcess * eps.
LatticeCover latticeCover(const PhaseParallelepiped& S, double eps, double maxDetExcess = 1.0);

// Every point must have a member of P within eps in the sup norm.
bool coveredBy(const LatticeCover& cover, double eps, int d, const std::array<double, 6>& point);

double unitBlockBallVolume(int d);

struct PreservationBox {
    std::size_t anchor = 0;
    std::size_t countT = 0;      // particles in S_t
    std::size_t countZero = 0;   // particles in the tracked S_0 at time 0
    std::size_t coverSize = 0;   // |P| for S_0
    double chainBound = 0.0;     // |mu(0)|_{inf,eps} (2 eps)^{2d} |P| N
    bool tracked = false;        // reached t = 0
    bool monotone = true;
};

struct PreservationReport {
    double t = 0.0, eta = 0.0, eps = 0.0, beta = 0.0, growth = 0.0;
    double linfEps0Lower = 0.0, linfEps0Upper = 0.0;
    double linfEtaLower = 0.0, linfEtaUpper = 0.0; // at time t, refined upper bound
    double requiredSlack = 0.0; // max(0, linfEtaUpper - linfEps0Lower)
    double fittedC = 0.0;       // requiredSlack / (eta^beta + eps / eta)
    double chainDensity = 0.0;  // max chain bound / (N (2 eta)^{2d})
    double chainFittedC = 0.0;
    std::vector<PreservationBox> boxes;
    std::vector<TrackingReport> tracks;
};

struct PreservationOptions {
    std::size_t boxes = 32;
    std::uint64_t seed = 7;
    std::size_t stride = 0; // samples per backward step; 0 = eps / dt rounded
    int refine = 8;         // fine-lattice refinement for the eta-scale upper bound
};

// Anchor particles of the tracked boxes, drawn from opts.seed.
std::vector<std::size_t> preservationAnchors(std::size_t N, const PreservationOptions& opts);

PreservationReport linfPreservationReport(const Trajectory& traj, std::size_t tIndex, double eta, double eps,
                                          const ForceKernel& kernel, const BackwardStepOptions& stepOpts,
                                          const PreservationOptions& opts);

} // namespace mfl
