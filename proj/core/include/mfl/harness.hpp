#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mfl/config.hpp"
#include "mfl/integrator.hpp"
#include "mfl/parallelepiped.hpp"

namespace mfl {

std::string versionString();

// One row of diagnostics.csv.
struct SampleRecord {
    std::size_t index = 0;
    double t = 0.0;
    double R = 0.0, K = 0.0;
    double m = 0.0;        // running sup
    double mNow = 0.0;     // this snapshot only
    double Ebar = 0.0, dEbar = 0.0;
    double linfEpsLo = 0.0, linfEpsHi = 0.0;
    double linfEtaLo = 0.0, linfEtaHi = 0.0;
    bool mlinfHolds = true;
};

struct GateViolation {
    double time = 0.0;
    std::string inequality;
    double lhs = 0.0, rhs = 0.0;
};

// Gate inequalities of the long-time argument at one sample. Returns the first failing one.
std::optional<GateViolation> checkGates(const SampleRecord& s, double eps, int d, double alpha, double beta);

struct StageReport {
    int stage = 0;
    double tStart = 0.0, tEnd = 0.0;
    double eta = 0.0;
    double pilotGrowth = 0.0;
    PreservationReport report;
    bool normStopInsideStage = false; // a box lost the norm conditions before reaching tStart
};

struct RunResult {
    std::size_t requestedN = 0, N = 0;
    double eps = 0.0;
    Trajectory traj;
    std::vector<SampleRecord> samples;
    double Tobs = 0.0;
    bool boundsHoldToHorizon = false;
    double lemma4FittedC = 0.0;
    std::size_t mlinfViolations = 0;
    bool transportBoundHolds = true;
    std::optional<GateViolation> gate;
    std::vector<StageReport> stages;
    std::string shellsJson;
    std::string trackingJsonl;
    std::vector<std::string> invariantViolations;
};

// Simulates one particle count and evaluates every diagnostic of the bundle.
RunResult simulateOne(const ExperimentConfig& cfg, std::size_t N);

struct ExperimentResult {
    std::vector<RunResult> runs;
    std::string summaryJson;
    bool collision = false;
    std::vector<std::string> invariantViolations;
};

// Writes <output>/summary.json and, per N, <output>/N<n>/{diagnostics.csv, shells.json,
// tracking.jsonl} when write is set.
ExperimentResult runExperiment(const ExperimentConfig& cfg, bool write = true);

std::string diagnosticsCsv(const std::vector<SampleRecord>& samples);

struct ConvergenceRow {
    std::size_t N = 0;
    double t = 0.0;
    double weak = 0.0;
    double weakControl = -1.0; // free transport, -1 when not run
    double fconv = -1.0;       // only at the final checkpoint
};

struct ConvergenceResult {
    std::vector<ConvergenceRow> rows;
    std::vector<double> checkpoints;
    std::vector<double> weakExponent;   // per checkpoint, fitted decay in log2 N
    std::vector<double> fconvByN;
    double fconvExponent = 0.0;
    std::vector<double> nearField;      // near-pair contribution within r at T, per N
    std::vector<double> farFieldError;  // far-field particle vs continuum difference at T, per N
    std::vector<double> weakResidual;   // weak-form residual against a fixed test function, per N
    double oracleMaxMassDrift = 0.0;
    double oracleMaxClip = 0.0;
    std::string summaryJson;
};

// Requires d = 1. Writes <output>/convergence.csv and <output>/summary.json when write is set.
ConvergenceResult convergenceStudy(const ExperimentConfig& cfg, bool write = true);

// Least-squares slope of -log2(y) against log2(N).
double fittedDecayExponent(const std::vector<std::size_t>& N, const std::vector<double>& y);

struct VerifyReport {
    std::size_t checked = 0;
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// Re-checks the invariants recorded in a bundle directory without re-simulating.
VerifyReport verifyBundle(const std::string& dir);

} // namespace mfl
