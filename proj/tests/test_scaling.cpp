#include "kbc/scaling.hpp"
#include "kbc/kac_kernel.hpp"
#include "kbc/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace kbc;

TEST(Scaling, RegimeExponents)
{
    auto s4 = derive_scaling(RegimeKind::Phi4, 0.1);
    EXPECT_EQ(s4.N, 100);
    EXPECT_DOUBLE_EQ(s4.alpha, 0.01);
    EXPECT_DOUBLE_EQ(s4.delta, 0.1);
    EXPECT_DOUBLE_EQ(s4.eps, 2.0 / 201.0);
    auto s6 = derive_scaling(RegimeKind::Phi6, 0.2);
    EXPECT_EQ(s6.N, 125);
    EXPECT_NEAR(s6.alpha, 0.0016, 1e-15);
    EXPECT_EQ(derive_scaling(RegimeKind::Phi6, 0.3).N, 37);
    EXPECT_THROW(derive_scaling(RegimeKind::Phi4, 0.5), std::invalid_argument);
    EXPECT_THROW(derive_scaling(RegimeKind::Phi4, 0.0), std::invalid_argument);
}

TEST(Scaling, EpsilonRatioCloseToOne)
{
    for (auto r : {RegimeKind::Phi4, RegimeKind::Phi6})
        for (double g : {0.3, 0.2, 0.1, 0.05, 0.02, 0.01}) {
            auto s = derive_scaling(r, g);
            EXPECT_LE(std::abs(s.c_gamma2 - 1.0), 2.0 * g * g) << to_string(r) << " gamma " << g;
        }
}

TEST(MeanField, TricriticalPoint)
{
    auto m = mean_field_coefficients(0.25, 3.0);
    EXPECT_NEAR(m.A, 0.0, 1e-12);
    EXPECT_NEAR(m.B, 0.0, 1e-12);
    EXPECT_NEAR(m.C, -9.0 / 20.0, 1e-12);
    EXPECT_DOUBLE_EQ(critical_beta(0.25), 3.0);
    EXPECT_DOUBLE_EQ(critical_beta(1.0), 1.5);
    EXPECT_NEAR(mean_field_coefficients(1.0, 1.5).A, 0.0, 1e-15);
}

TEST(MeanField, KacIsingLimit)
{
    auto m = mean_field_coefficients(1e6, 1.0);
    EXPECT_LE(std::abs(m.A), 1e-5);
    EXPECT_LE(std::abs(m.B + 1.0 / 3.0), 1e-5);
    EXPECT_NEAR(critical_beta(1e9), 1.0, 1e-8);
}

TEST(MeanField, CriticalCurveAndSigns)
{
    Rng rng(11, 0);
    for (int i = 0; i < 1000; ++i) {
        double a = std::exp(std::log(0.01) + rng.uniform() * std::log(1e4));
        double bc = critical_beta(a);
        EXPECT_LE(std::abs(mean_field_coefficients(a, bc).A), 1e-14);
        EXPECT_NEAR(critical_a(bc), a, 1e-9 * a);
        double beta = 0.1 + 5.0 * rng.uniform();
        double B = mean_field_coefficients(a, beta).B;
        if (a > 0.25) {
            EXPECT_LT(B, 0.0);
        } else if (a < 0.25) {
            EXPECT_GT(B, 0.0);
        }
    }
}

TEST(MeanField, Phi4LeadingCoefficient)
{
    EXPECT_NEAR(phi4_cubic_coefficient(1.0), -3.0 / 8.0, 1e-12);
    EXPECT_EQ(phi4_cubic_coefficient(0.25), 0.0);
    EXPECT_DOUBLE_EQ(phi6_quintic_coefficient, -0.45);
}

TEST(Renormalization, ZeroKernelGivesZero)
{
    Torus T(12);
    RArray f(T.size(), 0.0);
    f[0] = 1.0;
    auto r = renormalization_constant(f, T, 0.1, RegimeKind::Phi4, 1.5);
    EXPECT_EQ(r.c_gamma, 0.0);
}

TEST(Renormalization, RejectsNonPositiveGap)
{
    Torus T(12);
    RArray f(T.size(), 0.0);
    f[0] = 1.0;
    f[T.index(1, 0)] = 1.0;
    EXPECT_THROW(renormalization_constant(f, T, 0.1, RegimeKind::Phi4, 1.5), std::runtime_error);
}

TEST(Renormalization, LogarithmicGrowthAndBoundedDifference)
{
    const auto mother = build_mother_kernel();
    std::vector<double> ratio, diff;
    for (double g : {0.2, 0.1, 0.05}) {
        auto s = derive_scaling(RegimeKind::Phi4, g);
        auto k = build_kac_kernel(g, s.torus(), mother);
        auto r = renormalization_constant(k, RegimeKind::Phi4, 1.5);
        EXPECT_GT(r.c_gamma, 0.0);
        ratio.push_back(r.c_gamma / std::log(1.0 / g));
        diff.push_back(r.difference);
    }
    double mean = (ratio[0] + ratio[1] + ratio[2]) / 3.0;
    for (double x : ratio) EXPECT_LE(std::abs(x / mean - 1.0), 0.3) << x;
    double dmax = std::max({std::abs(diff[0]), std::abs(diff[1]), std::abs(diff[2])});
    EXPECT_LE(std::abs(diff[2]), 2.0 * std::max(std::abs(diff[0]), std::abs(diff[1])));
    EXPECT_LT(dmax, 1.0);
}

TEST(Tuning, Phi4ResidualAndLimit)
{
    for (double g : {0.2, 0.1, 0.05}) {
        auto p = tune_phi4(g, 1.0, 0.3, 0.2);
        EXPECT_LE(std::abs(phi4_tuning_residual(p)), 1e-12);
        EXPECT_EQ(p.a, 1.0);
        EXPECT_EQ(p.theta, std::log(p.a));
    }
    EXPECT_NEAR(tune_phi4(1e-8, 1.0, 0.3, 0.2).beta, 1.5, 1e-12);
    // 4 a_c - 1 = 0 removes the c_gamma dependence.
    EXPECT_DOUBLE_EQ(tune_phi4(0.1, 0.25, 0.3, 0.2).beta, tune_phi4(0.1, 0.25, 0.3, 7.0).beta);
}

TEST(Tuning, Phi6NewtonMatchesSeries)
{
    const double a1 = 0.3, a3 = 0.2, c = 0.1;
    std::vector<double> lg, le;
    for (double g : {0.1, 0.05, 0.025}) {
        auto p = tune_phi6(g, a1, a3, c);
        auto r = phi6_residuals(p.a, p.beta, g, a1, a3, c);
        EXPECT_LE(std::hypot(r[0], r[1]), 1e-12);
        EXPECT_EQ(p.theta, std::log(p.a));
        EXPECT_LT(p.a, 0.25);
        auto s = tricritical_series(g, a1, a3, c);
        lg.push_back(std::log(g));
        le.push_back(std::log(std::max(std::abs(p.a - s[0]), std::abs(p.beta - s[1]))));
    }
    double slope = (le[2] - le[0]) / (lg[2] - lg[0]);
    EXPECT_GE(slope, 4.5);
    auto p0 = tune_phi6(0.0, a1, a3, c);
    EXPECT_DOUBLE_EQ(p0.a, 0.25);
    EXPECT_DOUBLE_EQ(p0.beta, 3.0);
}
