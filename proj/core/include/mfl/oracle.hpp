#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mfl/ensemble.hpp"
#include "mfl/force.hpp"
#include "mfl/integrator.hpp"

namespace mfl {

// f(x, v) on a uniform cell-centred grid over [-Lx, Lx] x [-Lv, Lv] (1D-1V).
class GridDensity {
public:
    GridDensity() = default;
    GridDensity(std::size_t nx, std::size_t nv, double Lx, double Lv);

    std::size_t nx() const { return nx_; }
    std::size_t nv() const { return nv_; }
    double Lx() const { return Lx_; }
    double Lv() const { return Lv_; }
    double dx() const { return 2.0 * Lx_ / static_cast<double>(nx_); }
    double dv() const { return 2.0 * Lv_ / static_cast<double>(nv_); }
    double x(std::size_t i) const { return -Lx_ + (static_cast<double>(i) + 0.5) * dx(); }
    double v(std::size_t j) const { return -Lv_ + (static_cast<double>(j) + 0.5) * dv(); }

    double& at(std::size_t i, std::size_t j) { return f_[i * nv_ + j]; }
    double at(std::size_t i, std::size_t j) const { return f_[i * nv_ + j]; }
    std::vector<double>& values() { return f_; }
    const std::vector<double>& values() const { return f_; }

    double mass() const;
    std::vector<double> density() const; // rho(x_i) = int f dv
    // Mass in the outer band of relative width `band` along each axis.
    double bandMass(double band) const;

    // Cell averages of the product density described by spec.
    static GridDensity fromSpec(const InitialDensitySpec& spec, std::size_t nx, std::size_t nv, double Lx, double Lv);

    // Flat little-endian doubles plus a JSON header describing the grid.
    void save(const std::string& binPath, const std::string& headerPath) const;
    static GridDensity load(const std::string& binPath, const std::string& headerPath);

private:
    std::size_t nx_ = 0, nv_ = 0;
    double Lx_ = 1.0, Lv_ = 1.0;
    std::vector<double> f_;
};

// F(x_i) = sum_j rho_j int_{cell j} K(x_i - y) dy with closed-form cell integrals of the
// singular kernel (the self cell included).
std::vector<double> fieldFromDensity(const std::vector<double>& rho, double dx, const ForceKernel& kernel);

struct OracleOptions {
    double T = 0.5;
    double dt = 0.01;
    std::vector<double> checkpoints; // times at which full snapshots are kept
    double overflowTolerance = 1e-8;  // mass allowed in the outer 10% band
};

struct OracleRun {
    std::vector<double> times;                 // every step
    std::vector<std::vector<double>> fields;   // F_infinity on the x grid, every step
    std::vector<double> snapshotTimes;
    std::vector<GridDensity> snapshots;
    std::vector<double> massDrift;             // |mass before renormalisation - 1| per step
    std::vector<double> clipMass;              // mass added by clipping per step
    double Lx = 0.0;
    std::size_t nx = 0;

    double fieldAt(double t, double x) const;  // linear in t and x, zero outside the grid
    const GridDensity& snapshotAt(double t) const;
};

// Strang splitting: half x-advection, field, full v-advection, half x-advection, with
// periodic cubic-spline interpolation on the buffered grid, clipping and renormalisation.
OracleRun solveVlasov(const GridDensity& f0, const ForceKernel& kernel, const OracleOptions& opts);

// Shift a periodic line by s grid cells (value at i becomes the interpolant at i - s).
void shiftLine(const double* in, double* out, std::size_t n, double s, std::vector<double>& work);

struct WeakDistanceOptions {
    std::vector<double> widths{0.1, 0.2, 0.4};
    std::size_t centersPerAxis = 17;
    double halfExtent = 0.0; // centre lattice half-width; 0 = taken from the data
};

// Max over tensor Gaussians of Lipschitz constant 1 of |<mu_N, phi> - <f, phi>|.
double weakDistance(const ParticleEnsemble& ens, const GridDensity& f, const WeakDistanceOptions& opts = {});

// (1/eps) int |F_N(X_i(s)) - F_inf(s, X_i(s))| ds, sup over particles and windows, at every sample.
std::vector<double> forceConvergenceStat(const Trajectory& traj, const OracleRun& oracle, double eps);

} // namespace mfl
