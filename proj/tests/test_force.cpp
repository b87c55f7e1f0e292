#include <doctest.h>

#include <cmath>
#include <random>

#include "mfl/error.hpp"
#include "mfl/force.hpp"

using namespace mfl;

namespace {

ParticleEnsemble line(std::vector<double> xs)
{
    std::vector<Vec3> x, v;
    for (double s : xs) {
        x.push_back({s, 0, 0});
        v.push_back({0, 0, 0});
    }
    return ParticleEnsemble(1, x, v);
}

ParticleEnsemble randomCloud(std::mt19937_64& rng, std::size_t n, int d)
{
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<Vec3> x(n), v(n);
    for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a) {
            x[i][a] = U(rng);
            v[i][a] = U(rng);
        }
    return ParticleEnsemble(d, x, v);
}

} // namespace

TEST_SUITE("force")
{
    TEST_CASE("pair force examples")
    {
        ForceKernel k;
        auto f = pairForce({1, 0, 0}, k);
        CHECK(f[0] == doctest::Approx(1.0));
        CHECK(f[1] == 0.0);
        CHECK(pairForce({-1, 0, 0}, k)[0] == doctest::Approx(-1.0));
        CHECK(pairForce({4, 0, 0}, k)[0] == doctest::Approx(0.5).epsilon(1e-15));
        try {
            pairForce({0, 0, 0}, k);
            FAIL("expected singular-input");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::SingularInput);
        }
        ForceKernel off{0.5, 0, 0.0};
        CHECK(pairForce({0.3, 0, 0}, off)[0] == 0.0);
        CHECK_THROWS_AS((ForceKernel{1.0, 1, 0.0}).validate(), Error);
        CHECK_THROWS_AS((ForceKernel{0.5, 1, -1.0}).validate(), Error);
    }

    TEST_CASE("pair force is odd and bounded by |r|^-alpha")
    {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> U(-3.0, 3.0), A(0.05, 0.95);
        for (int t = 0; t < 2000; ++t) {
            ForceKernel k{A(rng), (rng() & 1) ? 1 : -1, 0.0};
            Vec3 r{U(rng), U(rng), U(rng)};
            Vec3 f = pairForce(r, k), g = pairForce(-1.0 * r, k);
            for (int a = 0; a < 3; ++a)
                CHECK(f[a] == doctest::Approx(-g[a]));
            double n = norm2(r);
            CHECK(norm2(f) <= std::pow(n, -k.alpha) * (1 + 1e-12));
            Mat3 J = pairForceJacobian(r, k, 3);
            double fro = 0.0;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b)
                    fro += J[a][b] * J[a][b];
            CHECK(std::sqrt(fro) <= (2.0 + k.alpha) / std::pow(n, 1.0 + k.alpha) * (1 + 1e-12));
        }
    }

    TEST_CASE("two-body field")
    {
        auto ens = line({0.0, 1.0});
        ForceKernel k;
        CHECK(fieldExact(ens, 0, k)[0] == doctest::Approx(-0.5));
        CHECK(fieldExact(ens, 1, k)[0] == doctest::Approx(0.5));
    }

    TEST_CASE("equilateral triangle")
    {
        double s = std::sqrt(3.0) / 2.0;
        ParticleEnsemble ens(2, {{0, 0, 0}, {1, 0, 0}, {0.5, s, 0}}, {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}});
        ForceKernel k;
        auto E = fieldsExact(ens, k);
        Vec3 sum{};
        for (const auto& e : E)
            sum = sum + e;
        CHECK(norm2(E[0]) == doctest::Approx(norm2(E[1])));
        CHECK(norm2(E[1]) == doctest::Approx(norm2(E[2])));
        CHECK(norm2(sum) < 1e-14);
    }

    TEST_CASE("four particles on a line against a scalar hand sum")
    {
        auto ens = line({0.0, 0.25, 0.5, 1.0});
        ForceKernel k;
        // (1/4)(-(0.25)^-0.5 - (0.5)^-0.5 - 1) = -(2 + sqrt(2) + 1) / 4
        double expected = -(2.0 + std::sqrt(2.0) + 1.0) / 4.0;
        CHECK(fieldExact(ens, 0, k)[0] == doctest::Approx(expected).epsilon(1e-14));
        CHECK(expected == doctest::Approx(-1.1035533905932737).epsilon(1e-15));
        auto all = fieldsExact(ens, k);
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(all[i][0] == doctest::Approx(fieldExact(ens, i, k)[0]).epsilon(1e-14));
    }

    TEST_CASE("collision carries the offending pair")
    {
        auto ens = line({0.0, 0.5, 0.5 + 1e-9});
        try {
            fieldsExact(ens, ForceKernel{}, 1e-6);
            FAIL("expected collision");
        } catch (const CollisionError& e) {
            CHECK(e.code() == ErrorCode::CollisionDetected);
            CHECK(e.i == 1);
            CHECK(e.j == 2);
            CHECK(e.distance == doctest::Approx(1e-9).epsilon(1e-3));
        }
    }

    TEST_CASE("field at arbitrary points")
    {
        std::mt19937_64 rng(3);
        auto ens = randomCloud(rng, 8, 2);
        ForceKernel k;
        Vec3 far{40, -30, 0};
        CHECK(norm2(fieldAt(ens, far, k)) <= std::pow(50.0 - 2.0, -k.alpha));
        std::uniform_real_distribution<double> U(-1.5, 1.5);
        for (int t = 0; t < 50; ++t) {
            Vec3 x{U(rng), U(rng), 0};
            Vec3 ref{};
            for (std::size_t j = ens.size(); j-- > 0;)
                ref = ref + pairForce(x - ens.positions()[j], k);
            ref = (1.0 / 8.0) * ref;
            Vec3 got = fieldAt(ens, x, k);
            CHECK(norm2(got - ref) <= 1e-12 * std::max(1.0, norm2(ref)));
        }
        // A regularized field at a particle has a zero self term.
        Vec3 self = fieldRegularized(ens, ens.positions()[2], 0.1, k);
        Vec3 others{};
        for (std::size_t j = 0; j < 8; ++j)
            if (j != 2)
                others = others + pairForce(ens.positions()[2] - ens.positions()[j], k.regularized(0.1));
        CHECK(norm2(self - (1.0 / 8.0) * others) < 1e-14);
    }

    TEST_CASE("regularized field examples")
    {
        auto ens = line({0.0, 1.0});
        ForceKernel k;
        CHECK(fieldRegularized(ens, {1, 0, 0}, 1.0, k)[0] == doctest::Approx(0.5 / std::pow(2.0, 1.5)));
        CHECK(fieldRegularized(ens, {1, 0, 0}, 1.0, k)[0] == doctest::Approx(0.17677669529663687).epsilon(1e-14));

        // Monotone approach to the exact field and first-order slope in eps.
        auto cloud = line({-0.7, -0.2, 0.4, 0.9});
        Vec3 x{0.15, 0, 0};
        double exact = fieldAt(cloud, x, k)[0];
        double prev = 1e300;
        std::vector<double> logE, logErr;
        for (int j = 4; j <= 14; ++j) {
            double eps = std::ldexp(1.0, -j);
            double err = std::fabs(fieldRegularized(cloud, x, eps, k)[0] - exact);
            CHECK(err < prev);
            prev = err;
            logE.push_back(std::log(eps));
            logErr.push_back(std::log(err));
        }
        double n = static_cast<double>(logE.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < logE.size(); ++i) {
            sx += logE[i];
            sy += logErr[i];
            sxx += logE[i] * logE[i];
            sxy += logE[i] * logErr[i];
        }
        double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        CHECK(slope == doctest::Approx(1.0).epsilon(0.05));
    }

    TEST_CASE("gradient against the closed form on an axis")
    {
        ParticleEnsemble ens(2, {{0, 0, 0}, {0, 0, 0}}, {{0, 0, 0}, {0, 0, 0}});
        ForceKernel k;
        const double eps = 0.2, r = 0.7, a = 0.5;
        Mat3 J = gradFieldRegularized(ens, {r, 0, 0}, eps, k);
        double s = r + eps;
        CHECK(J[0][0] == doctest::Approx(std::pow(s, -1 - a) - (1 + a) * r * std::pow(s, -2 - a)).epsilon(1e-13));
        CHECK(J[1][1] == doctest::Approx(std::pow(s, -1 - a)).epsilon(1e-13));
        CHECK(std::fabs(J[0][1]) < 1e-15);
    }

    TEST_CASE("gradient matches central differences")
    {
        std::mt19937_64 rng(19);
        std::uniform_real_distribution<double> U(-1.2, 1.2);
        const double h = 1e-5;
        for (int trial = 0; trial < 40; ++trial) {
            int d = 1 + trial % 3;
            auto ens = randomCloud(rng, 16, d);
            ForceKernel k{0.2 + 0.6 * (trial % 5) / 4.0, trial % 2 ? 1 : -1, 0.0};
            double eps = 0.05 + 0.05 * (trial % 4);
            Vec3 x{};
            for (int a = 0; a < d; ++a)
                x[a] = U(rng);
            Mat3 J = gradFieldRegularized(ens, x, eps, k);
            for (int b = 0; b < d; ++b) {
                Vec3 xp = x, xm = x;
                xp[b] += h;
                xm[b] -= h;
                Vec3 fd = (1.0 / (2 * h)) * (fieldRegularized(ens, xp, eps, k) - fieldRegularized(ens, xm, eps, k));
                for (int a = 0; a < d; ++a)
                    CHECK(std::fabs(J[a][b] - fd[a]) <= 1e-6 * (1.0 + std::fabs(J[a][b])));
            }
        }
    }

    TEST_CASE("gradient parity between symmetric particles")
    {
        auto ens = line({-0.5, 0.5});
        ForceKernel k;
        for (double s : {0.05, 0.2, 0.35}) {
            double jp = gradFieldRegularized(ens, {s, 0, 0}, 0.1, k)[0][0];
            double jm = gradFieldRegularized(ens, {-s, 0, 0}, 0.1, k)[0][0];
            CHECK(jp == doctest::Approx(jm).epsilon(1e-13));
        }
    }

    TEST_CASE("momentum identity")
    {
        std::mt19937_64 rng(23);
        for (int d = 1; d <= 3; ++d) {
            auto ens = randomCloud(rng, 300, d);
            auto E = fieldsExact(ens, ForceKernel{});
            Vec3 sum{};
            for (const auto& e : E)
                sum = sum + e;
            CHECK(normInf(sum) <= 1e-12 * 300);
        }
    }
}
