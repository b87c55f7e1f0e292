#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "mfl/ensemble.hpp"
#include "mfl/force.hpp"

namespace mfl {

enum class RunStatus { Complete, Collision, NonFinite };

struct CollisionInfo {
    double time = 0.0;
    std::size_t i = 0, j = 0;
    double distance = 0.0;
};

struct Trajectory {
    int dim = 1;
    double dt = 0.0;
    double eps = 0.0;
    std::vector<double> times;
    std::vector<ParticleEnsemble> snapshots;
    std::vector<std::vector<double>> fieldMags;   // [time][particle] |E(X_i)|
    std::vector<std::vector<Vec3>> fieldVecs;     // [time][particle] E(X_i), optional
    RunStatus status = RunStatus::Complete;
    std::optional<CollisionInfo> collision;

    std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
    double horizon() const { return times.empty() ? 0.0 : times.back(); }
    bool hasFieldVecs() const { return !fieldVecs.empty(); }
    // Index of the last sample with time <= t (within a small tolerance).
    std::size_t indexAt(double t) const;
};

struct RunOptions {
    double T = 1.0;
    int kappa = 8;             // steps per eps window
    bool recordFieldVecs = false;
    double collisionFactor = 1e-3; // collision when |X_i - X_j| < factor * eps
    double eps = 0.0;          // 0: eps from the ensemble's support radius
};

// Velocity Verlet with the field at the current positions supplied and refreshed.
ParticleEnsemble verletStep(const ParticleEnsemble& ens, double dt, const ForceKernel& kernel,
                            double minSeparation = 0.0);
ParticleEnsemble verletStep(const ParticleEnsemble& ens, const std::vector<Vec3>& field, double dt,
                            const ForceKernel& kernel, std::vector<Vec3>& newField, double minSeparation);

Trajectory run(const ParticleEnsemble& ens0, const ForceKernel& kernel, const RunOptions& opts);

} // namespace mfl
