#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mfl/diagnostics.hpp"
#include "mfl/error.hpp"
#include "mfl/parallelepiped.hpp"

using namespace mfl;

namespace {

Mat3 scalar(double s, int d) { return s * identityMat(d); }

PhaseParallelepiped shear1(double a, double b, double c, double dd, double eta)
{
    auto S = PhaseParallelepiped::box(1, {}, {}, eta);
    S.A[0][0] = a;
    S.B[0][0] = b;
    S.C[0][0] = c;
    S.D[0][0] = dd;
    return S;
}

// Random d x d matrix with operator norm exactly `target`.
Mat3 randomWithNorm(std::mt19937_64& rng, int d, double target)
{
    std::normal_distribution<double> G(0.0, 1.0);
    Mat3 m{};
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            m[i][j] = G(rng);
    double n = opNorm2(m, d);
    return (target / n) * m;
}

double powerIterationNorm(const Mat3& m, int d)
{
    Mat3 t{};
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            t[i][j] = m[j][i];
    Mat3 mtm = t * m;
    Vec3 x{1.0, 0.7, 0.3};
    for (int a = d; a < 3; ++a)
        x[a] = 0.0;
    double lambda = 0.0;
    for (int it = 0; it < 2000; ++it) {
        Vec3 y = mtm * x;
        double n = norm2(y);
        if (n == 0.0)
            return 0.0;
        lambda = n / norm2(x);
        x = (1.0 / n) * y;
    }
    return std::sqrt(lambda);
}

Trajectory freeRun(std::size_t N, int d, double T)
{
    InitialDensitySpec spec;
    auto ens = quietStartInit(spec, N, d, 3).ensemble;
    RunOptions o;
    o.T = T;
    o.kappa = 4;
    o.collisionFactor = 0.0; // one-dimensional particles cross
    return run(ens, ForceKernel{0.5, 0, 0.0}, o);
}

Trajectory interactingRun(std::size_t N, int d, double T, int kappa = 8)
{
    InitialDensitySpec spec;
    spec.kind = DensityKind::ProductGaussianTruncated;
    spec.sigmaX = 0.3;
    spec.sigmaV = 0.3;
    auto ens = quietStartInit(spec, N, d, 5).ensemble;
    RunOptions o;
    o.T = T;
    o.kappa = kappa;
    o.collisionFactor = 0.0;
    return run(ens, ForceKernel{0.5, 1, 0.0}, o);
}

} // namespace

TEST_SUITE("parallelepiped")
{
    TEST_CASE("unit box passes the norm conditions with full margins")
    {
        for (int d = 1; d <= 3; ++d) {
            auto S = PhaseParallelepiped::box(d, {}, {}, 0.1);
            auto nc = normConditions(S);
            CHECK(nc.pass);
            CHECK(nc.failed.empty());
            CHECK(nc.diagMargin == doctest::Approx(0.5));
            CHECK(nc.offDiagMargin == doctest::Approx(0.5));
            CHECK(S.det() == doctest::Approx(1.0));
        }
    }

    TEST_CASE("stretched diagonal block fails the first condition")
    {
        auto S = PhaseParallelepiped::box(2, {}, {}, 0.1);
        S.A = scalar(1.6, 2);
        auto nc = normConditions(S);
        CHECK_FALSE(nc.pass);
        CHECK(nc.failed == "|A - I| > 1/2");
        CHECK(nc.diagMargin == doctest::Approx(-0.1));
        S.A = identityMat(2);
        S.C = scalar(0.6, 2);
        CHECK(normConditions(S).failed == "|C| > 1/2");
    }

    TEST_CASE("operator norm agrees with power iteration")
    {
        std::mt19937_64 rng(11);
        std::normal_distribution<double> G(0.0, 1.0);
        for (int trial = 0; trial < 200; ++trial) {
            int d = 1 + trial % 3;
            Mat3 m{};
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    m[i][j] = G(rng);
            double ref = powerIterationNorm(m, d);
            CHECK(std::fabs(opNorm2(m, d) - ref) <= 1e-10 * std::max(1.0, ref));
        }
    }

    TEST_CASE("boundary of the norm conditions is inclusive")
    {
        auto S = shear1(1.5, 0.5, -0.5, 0.5, 1.0);
        CHECK(normConditions(S).pass);
        S.B[0][0] = 0.5 + 1e-9;
        CHECK(normConditions(S).failed == "|B| > 1/2");
    }

    TEST_CASE("sheared one-dimensional set against a raster")
    {
        // Area of {max(|x + 0.3 v|, |0.2 x + 0.9 v|) <= eta} is 4 eta^2 / |det M|.
        const double eta = 0.2;
        auto S = shear1(1.0, 0.3, 0.2, 0.9, eta);
        CHECK(S.det() == doctest::Approx(0.84));
        const int n = 600;
        const double L = 3.0 * eta, h = 2.0 * L / n;
        std::size_t inside = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double x = -L + (i + 0.5) * h, v = -L + (j + 0.5) * h;
                bool direct = std::max(std::fabs(x + 0.3 * v), std::fabs(0.2 * x + 0.9 * v)) <= eta;
                bool viaS = contains(S, {x, 0, 0}, {v, 0, 0});
                CHECK(direct == viaS);
                inside += viaS ? 1 : 0;
            }
        double area = static_cast<double>(inside) * h * h;
        CHECK(area == doctest::Approx(4.0 * eta * eta / 0.84).epsilon(0.01));
    }

    TEST_CASE("count is invariant under joint translation")
    {
        std::mt19937_64 rng(2);
        std::uniform_real_distribution<double> U(-1.0, 1.0);
        for (int trial = 0; trial < 20; ++trial) {
            int d = 1 + trial % 3;
            std::vector<Vec3> x(300), v(300);
            for (std::size_t i = 0; i < x.size(); ++i)
                for (int a = 0; a < d; ++a) {
                    x[i][a] = U(rng);
                    v[i][a] = U(rng);
                }
            ParticleEnsemble e(d, x, v);
            auto S = PhaseParallelepiped::box(d, x[0], v[0], 0.4);
            S.B = randomWithNorm(rng, d, 0.3);
            std::size_t before = countIn(e, S);
            Vec3 sx{}, sv{};
            for (int a = 0; a < d; ++a) {
                sx[a] = 0.25 * (a + 1);
                sv[a] = -0.5;
            }
            for (std::size_t i = 0; i < x.size(); ++i) {
                x[i] += sx;
                v[i] += sv;
            }
            ParticleEnsemble moved(d, x, v);
            S.X0 += sx;
            S.V0 += sv;
            CHECK(countIn(moved, S) == before);
            CHECK(before >= 1);
        }
    }

    TEST_CASE("containment extent of the unit box")
    {
        auto S = PhaseParallelepiped::box(2, {}, {}, 0.3);
        auto ext = containmentCheck(S);
        CHECK(ext.bounded);
        CHECK(ext.maxDistance == doctest::Approx(0.3));
        CHECK(ext.ratio == doctest::Approx(0.5));
        CHECK(ext.within());
    }

    TEST_CASE("maximal shear reaches one and a half radii")
    {
        auto S = shear1(1.0, 0.5, 0.0, 1.0, 1.0);
        auto ext = containmentCheck(S);
        CHECK(ext.maxDistance == doctest::Approx(1.5));
        CHECK(S.normOf({ext.witness[0], 0, 0}, {ext.witness[1], 0, 0}) == doctest::Approx(1.0));
        CHECK(std::max(std::fabs(ext.witness[0]), std::fabs(ext.witness[1])) == doctest::Approx(1.5));
    }

    TEST_CASE("outside the norm conditions the extent is not controlled")
    {
        auto S = shear1(1.0, 0.9, 0.9, 1.0, 1.0);
        CHECK_THROWS_AS(containmentCheck(S), Error);
        auto ext = containmentExtent(S);
        CHECK(ext.maxDistance == doctest::Approx(1.9 / 0.19));
        CHECK_FALSE(ext.within());
    }

    TEST_CASE("singular matrices admitted by the norm conditions are reported unbounded")
    {
        auto S = shear1(0.5, 0.5, 0.5, 0.5, 1.0);
        CHECK(normConditions(S).pass);
        auto ext = containmentCheck(S);
        CHECK_FALSE(ext.bounded);
        CHECK_FALSE(ext.within());
        CHECK(S.normOf({ext.witness[0], 0, 0}, {ext.witness[1], 0, 0}) <= 1e-6);
    }

    TEST_CASE("sampled boundary points never exceed the exact extent")
    {
        std::mt19937_64 rng(9);
        for (int trial = 0; trial < 60; ++trial) {
            int d = 1 + trial % 3;
            auto S = PhaseParallelepiped::box(d, {0.1, 0.2, 0.3}, {-0.1, 0.0, 0.4}, 0.05);
            S.A = identityMat(d) + randomWithNorm(rng, d, 0.3);
            S.D = identityMat(d) + randomWithNorm(rng, d, 0.3);
            S.B = randomWithNorm(rng, d, 0.4);
            S.C = randomWithNorm(rng, d, 0.2);
            auto ext = containmentCheck(S);
            REQUIRE(ext.bounded);
            double seen = 0.0;
            for (const auto& p : samplePoints(S, 400, trial, true)) {
                Vec3 dx{}, dv{};
                for (int a = 0; a < d; ++a) {
                    dx[a] = p[a] - S.X0[a];
                    dv[a] = p[a + d] - S.V0[a];
                }
                CHECK(S.normOf(dx, dv) == doctest::Approx(S.eta).epsilon(1e-9));
                seen = std::max({seen, normInf(dx), normInf(dv)});
            }
            CHECK(seen <= ext.maxDistance * (1.0 + 1e-9));
        }
    }

    TEST_CASE("interior samples lie inside")
    {
        auto S = shear1(1.2, 0.3, -0.2, 0.8, 0.1);
        for (const auto& p : samplePoints(S, 500, 4, false))
            CHECK(S.normOf({p[0] - S.X0[0], 0, 0}, {p[1] - S.V0[0], 0, 0}) <= S.eta * (1.0 + 1e-12));
    }

    TEST_CASE("backward step under free transport is an exact shear")
    {
        auto traj = freeRun(256, 1, 0.5);
        REQUIRE(traj.status == RunStatus::Complete);
        const std::size_t from = traj.times.size() - 1, to = from - 4;
        const auto& snap = traj.snapshots[from];
        auto S = PhaseParallelepiped::box(1, snap.positions()[10], snap.velocities()[10], 0.2);
        BackwardStepOptions o;
        o.eps = traj.eps;
        auto bs = backwardStep(S, traj, from, to, ForceKernel{0.5, 0, 0.0}, o);
        const double h = traj.times[from] - traj.times[to];
        CHECK(bs.h == doctest::Approx(h));
        CHECK(bs.next.A[0][0] == doctest::Approx(1.0));
        CHECK(bs.next.B[0][0] == doctest::Approx(h));
        CHECK(bs.next.C[0][0] == doctest::Approx(0.0));
        CHECK(bs.next.D[0][0] == doctest::Approx(1.0));
        CHECK(bs.detAfter == doctest::Approx(1.0));
        CHECK(bs.next.X0[0] == doctest::Approx(S.X0[0] - h * S.V0[0]));
        CHECK(bs.next.V0[0] == doctest::Approx(S.V0[0]));
        CHECK(bs.driftOk);
        CHECK(bs.detOk);
        CHECK(countIn(traj.snapshots[to], bs.next) == countIn(snap, S));
    }

    TEST_CASE("determinant drift is second order in the step")
    {
        auto traj = interactingRun(256, 1, 0.3, 16);
        REQUIRE(traj.status == RunStatus::Complete);
        const std::size_t from = traj.times.size() - 1;
        const auto& snap = traj.snapshots[from];
        auto S = PhaseParallelepiped::box(1, snap.positions()[100], snap.velocities()[100], 0.2);
        BackwardStepOptions o;
        o.eps = traj.eps;
        const ForceKernel k{0.5, 1, 0.0};
        auto a = backwardStep(S, traj, from, from - 2, k, o);
        auto b = backwardStep(S, traj, from, from - 4, k, o);
        double da = std::fabs(a.detAfter - a.detBefore), db = std::fabs(b.detAfter - b.detBefore);
        REQUIRE(da > 0.0);
        CHECK(std::log2(db / da) == doctest::Approx(2.0).epsilon(0.1));
        CHECK(a.detOk);
        CHECK(b.detOk);
        CHECK(a.driftOk);
    }

    TEST_CASE("backward step preconditions")
    {
        auto traj = freeRun(16, 1, 0.2);
        auto S = PhaseParallelepiped::box(1, {}, {}, 0.1);
        BackwardStepOptions o;
        o.eps = traj.eps;
        const ForceKernel k{0.5, 0, 0.0};
        CHECK_THROWS_AS(backwardStep(S, traj, 2, 2, k, o), Error);
        CHECK_THROWS_AS(backwardStep(S, traj, traj.times.size(), 0, k, o), Error);
        o.eps = 0.0;
        CHECK_THROWS_AS(backwardStep(S, traj, 2, 0, k, o), Error);
        o.eps = traj.eps;
        S.A = scalar(2.0, 1);
        try {
            backwardStep(S, traj, 2, 0, k, o);
            FAIL("expected norm-conditions error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NormConditionsViolated);
        }
    }

    TEST_CASE("tracking under free transport conserves counts")
    {
        auto traj = freeRun(256, 1, 0.3);
        const std::size_t last = traj.times.size() - 1;
        const auto& snap = traj.snapshots[last];
        auto S = PhaseParallelepiped::box(1, snap.positions()[37], snap.velocities()[37], 0.25);
        BackwardStepOptions o;
        o.eps = traj.eps;
        auto rep = trackBack(S, traj, last, 2, ForceKernel{0.5, 0, 0.0}, o);
        CHECK(rep.end == TrackEnd::ReachedZero);
        CHECK(rep.steps.back().time == 0.0);
        CHECK(rep.monotone());
        for (const auto& r : rep.steps)
            CHECK(r.count == rep.steps.front().count);
        CHECK(rep.final.B[0][0] == doctest::Approx(traj.times[last]));
    }

    TEST_CASE("tracking stops when the shear leaves the norm conditions")
    {
        auto traj = freeRun(16, 1, 1.0);
        auto S = PhaseParallelepiped::box(1, {}, {}, 0.1);
        S.B[0][0] = 0.2;
        BackwardStepOptions o;
        o.eps = traj.eps;
        auto rep = trackBack(S, traj, traj.times.size() - 1, 1, ForceKernel{0.5, 0, 0.0}, o);
        CHECK(rep.end == TrackEnd::NormConditions);
        CHECK(rep.failedCondition == "|B| > 1/2");
        CHECK(rep.final.B[0][0] > 0.5);
        CHECK(rep.final.B[0][0] <= 0.5 + 2.0 * traj.dt);
        std::istringstream lines(rep.toJsonLines(3));
        std::string line, last;
        std::size_t n = 0;
        while (std::getline(lines, line)) {
            ++n;
            last = line;
        }
        CHECK(n == rep.steps.size());
        CHECK(last.find("\"end\":\"norm-conditions\"") != std::string::npos);
    }

    TEST_CASE("tracking with the fitted growth is monotone")
    {
        auto traj = interactingRun(256, 1, 0.2);
        REQUIRE(traj.status == RunStatus::Complete);
        const std::size_t last = traj.times.size() - 1;
        const std::size_t stride = std::max<std::size_t>(1, std::llround(traj.eps / traj.dt));
        const auto& snap = traj.snapshots[last];
        const ForceKernel k{0.5, 1, 0.0};
        BackwardStepOptions o;
        o.eps = traj.eps;
        o.beta = 1.0;
        const double eta = 2.0 * traj.eps;
        std::vector<PhaseParallelepiped> boxes;
        for (std::size_t i = 0; i < snap.size(); i += 16)
            boxes.push_back(PhaseParallelepiped::box(1, snap.positions()[i], snap.velocities()[i], eta));
        o.growth = 2.0 * pilotGrowthConstant(boxes, traj, last, stride, k, o);
        CHECK(o.growth >= 0.0);
        // Early stops come only from the norm conditions, never from a count increase.
        std::size_t reached = 0;
        for (const auto& b : boxes) {
            auto rep = trackBack(b, traj, last, stride, k, o);
            reached += rep.end == TrackEnd::ReachedZero ? 1 : 0;
            if (rep.end == TrackEnd::NormConditions)
                CHECK_FALSE(rep.failedCondition.empty());
            CHECK(rep.monotone());
            for (const auto& r : rep.steps)
                CHECK(r.radiusBoundOk);
        }
        CHECK(reached > 0);
    }

    TEST_CASE("lattice cover of a box four cells wide")
    {
        const double eps = 0.01;
        auto S = PhaseParallelepiped::box(1, {}, {}, 4.0 * eps);
        auto cov = latticeCover(S, eps);
        // |k| <= 6 on both axes.
        CHECK(cov.points.size() == 169);
        CHECK(cov.lhs == doctest::Approx(169.0 * 4.0 * eps * eps));
        CHECK(cov.rhs == doctest::Approx(64.0 * eps * eps));
        CHECK_FALSE(cov.cardinalityHolds);
        CHECK(cov.cellVolumeLhs == doctest::Approx(169.0 * eps * eps));
        CHECK(cov.cellVolumeRhs == doctest::Approx(256.0 * eps * eps));
        CHECK(cov.cellVolumeHolds);
        // 169 <= 4 (4 + C').
        CHECK(cov.fittedCPrime == doctest::Approx(38.25));
    }

    TEST_CASE("lattice cover of a point-like set")
    {
        const double eps = 0.1;
        CHECK(latticeCover(PhaseParallelepiped::box(1, {}, {}, 1e-9), eps).points.size() == 25);
        auto off = PhaseParallelepiped::box(1, {0.05, 0, 0}, {0.05, 0, 0}, 1e-9);
        CHECK(latticeCover(off, eps).points.size() == 16);
    }

    TEST_CASE("lattice cover covers every point of the set")
    {
        std::mt19937_64 rng(21);
        for (int trial = 0; trial < 12; ++trial) {
            int d = 1 + trial % 2;
            const double eps = 0.02;
            auto S = PhaseParallelepiped::box(d, {0.013, -0.004, 0}, {0.007, 0.019, 0}, 3.0 * eps);
            S.B = randomWithNorm(rng, d, 0.3);
            auto cov = latticeCover(S, eps, 100.0);
            for (const auto& p : samplePoints(S, 300, trial, trial % 2 == 0))
                CHECK(coveredBy(cov, eps, d, p));
            // Points of the eps enlargement keep a rounded neighbour inside the 2 eps enlargement.
            for (const auto& p : samplePoints(S, 100, trial + 100, true, S.eta + eps))
                CHECK(coveredBy(cov, eps, d, p));
        }
    }

    TEST_CASE("lattice cover preconditions")
    {
        const double eps = 0.01;
        auto S = PhaseParallelepiped::box(1, {}, {}, 0.05);
        S.A = scalar(1.2, 1);
        CHECK_THROWS_AS(latticeCover(S, eps), Error);
        CHECK_NOTHROW(latticeCover(S, eps, 100.0));
        S.A = scalar(1.7, 1);
        CHECK_THROWS_AS(latticeCover(S, eps, 100.0), Error);
    }

    TEST_CASE("unit block ball volumes")
    {
        CHECK(unitBlockBallVolume(1) == doctest::Approx(4.0));
        CHECK(unitBlockBallVolume(2) == doctest::Approx(M_PI * M_PI));
        CHECK(unitBlockBallVolume(3) == doctest::Approx(16.0 * M_PI * M_PI / 9.0));
    }

    TEST_CASE("preservation report at the initial time")
    {
        auto traj = freeRun(256, 1, 0.2);
        BackwardStepOptions o;
        o.eps = traj.eps;
        PreservationOptions p;
        p.boxes = 10;
        auto rep = linfPreservationReport(traj, 0, 2.0 * traj.eps, traj.eps, ForceKernel{0.5, 0, 0.0}, o, p);
        CHECK(rep.boxes.size() == 10);
        for (const auto& b : rep.boxes) {
            CHECK(b.tracked);
            CHECK(b.countZero == b.countT);
            CHECK(static_cast<double>(b.countZero) <= b.chainBound * (1.0 + 1e-12));
        }
        CHECK(rep.linfEps0Lower <= rep.linfEps0Upper);
        CHECK(rep.linfEtaLower <= rep.linfEtaUpper);
    }

    TEST_CASE("preservation report under free transport")
    {
        auto traj = freeRun(1296, 2, 0.3);
        REQUIRE(traj.status == RunStatus::Complete);
        BackwardStepOptions o;
        o.eps = traj.eps;
        PreservationOptions p;
        p.boxes = 8;
        const double eta = 2.0 * traj.eps;
        auto rep = linfPreservationReport(traj, traj.times.size() - 1, eta, traj.eps, ForceKernel{0.5, 0, 0.0}, o, p);
        for (const auto& b : rep.boxes) {
            CHECK(b.monotone);
            CHECK(b.countZero == b.countT);
            if (b.tracked) {
                CHECK(b.coverSize > 0);
                CHECK(static_cast<double>(b.countZero) <= b.chainBound * (1.0 + 1e-12));
            }
        }
        CHECK(rep.requiredSlack >= 0.0);
        CHECK(rep.fittedC == doctest::Approx(rep.requiredSlack / (std::pow(eta, o.beta) + traj.eps / eta)));
        CHECK_THROWS_AS(linfPreservationReport(traj, traj.times.size(), eta, traj.eps, ForceKernel{}, o, p), Error);
    }
}
