#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mfl/ensemble.hpp"
#include "mfl/force.hpp"

namespace mfl {

// Flat "key = value" text with one level of [section] headers. Keys are stored as
// "section.key"; '#' starts a comment.
std::map<std::string, std::string> parseKeyValueText(const std::string& text);

struct OracleConfig {
    std::size_t nx = 256, nv = 256;
    double Lx = 0.0, Lv = 0.0; // 0: twice the support radius along the axis
    double dt = 0.0;           // 0: eps of the largest N divided by kappa
    std::vector<double> checkpoints; // empty: {0, T/2, T}
    bool control = true;       // free-transport control column
};

struct ExperimentConfig {
    InitialDensitySpec density;
    std::vector<std::size_t> N{256};
    int d = 1;
    double alpha = 0.5;
    int sign = +1;
    double T = 0.25;
    int kappa = 8;
    double beta = 0.0;          // 0: default for (d, alpha)
    bool shortTimeOnly = false; // admits beta = 1 in d = 1
    std::size_t pairBudget = 100000;
    std::uint64_t seed = 1;
    double collisionFactor = 1e-3; // d = 1 runs cross generically; 0 keeps only exact coincidence
    int M = 4;                  // stages of the eta schedule
    std::size_t trackBoxes = 8;
    int linfRefine = 8;
    bool allowLarge = false;    // lifts the N <= 4096 ceiling
    std::string output = "bundle";
    OracleConfig oracle;

    ForceKernel kernel() const { return ForceKernel{alpha, sign, 0.0}; }
    double resolvedBeta() const;

    // Throws config-invalid listing every offending field.
    void validate() const;
    std::string toJson() const;
};

constexpr std::size_t kDeskCeilingN = 4096;

ExperimentConfig configFromText(const std::string& text);
ExperimentConfig configFromFile(const std::string& path);

// Keys, types, defaults and meaning of every config entry.
std::string configSchema();

struct EtaSchedule {
    int M = 4;
    double eta0 = 0.0, etaM = 0.0, r = 0.0;
    std::vector<double> etas; // eta_0 .. eta_M
};

// eta_i = eps^{1/2} r^i with r = eps^{-1/(4M)}, so eta_M = eps^{1/4}.
EtaSchedule etaSchedule(double eps, int M);

} // namespace mfl
