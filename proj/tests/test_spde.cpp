#include "kbc/spde.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_odeiv2.h>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace kbc;

namespace {

SpdeConfig small_config(int cutoff)
{
    SpdeConfig c;
    c.n = 2;
    c.beta_c = 1.5;
    c.mode_cutoff = cutoff;
    c.dt = 1e-3;
    c.T = 0.1;
    return c;
}

FieldSnapshot random_field(int N, Rng& rng, double scale)
{
    FieldSnapshot s;
    s.N = N;
    s.eps = 2.0 / (2.0 * N + 1.0);
    s.fourier.assign(static_cast<std::size_t>(2 * N + 1) * (2 * N + 1), cplx(0.0));
    for (int a = -N; a <= N; ++a)
        for (int b = 0; b <= N; ++b) {
            if (b == 0 && a < 0) continue;
            cplx v(scale * rng.normal(), (a == 0 && b == 0) ? 0.0 : scale * rng.normal());
            s.at(a, b) = v;
            s.at(-a, -b) = std::conj(v);
        }
    return s;
}

int cubic_rhs(double, const double y[], double f[], void* p)
{
    auto* a = static_cast<double*>(p);
    f[0] = a[0] * y[0] + a[1] * y[0] * y[0] * y[0];
    return GSL_SUCCESS;
}

} // namespace

TEST(Schedule, SmallCutoffValue)
{
    auto s = RenormalizationSchedule::make(3.0, 2, {0.0, 0.0});
    EXPECT_NEAR(s.c_eps, 1.0 / (2.0 * std::numbers::pi * std::numbers::pi), 1e-15);
    EXPECT_NEAR(s.c_eps, 0.0506606, 1e-7);
    EXPECT_THROW(RenormalizationSchedule::make(3.0, 1, {0.0}), std::invalid_argument);
}

TEST(Schedule, LargeTimeAndMonotonicity)
{
    auto s = RenormalizationSchedule::make(1.5, 64, {0.0, -0.375});
    EXPECT_LE(std::abs(s.c_eps_of_t(10.0) - 10.0 / (2.0 * 1.5) - s.c_eps), 1e-8);
    double prev = -1.0;
    for (double t = 0.0; t <= 2.0; t += 0.01) {
        double v = s.c_eps_of_t(t) - t / (2.0 * 1.5);
        // Once the partial sums saturate, v is flat up to rounding of t / (2 beta).
        EXPECT_GE(v, prev - 4e-16);
        prev = v;
    }
    EXPECT_EQ(s.c_eps_of_t(0.0), 0.0);
}

TEST(Schedule, BarCDivergesLogarithmically)
{
    const double beta = 1.5;
    auto s = RenormalizationSchedule::make(beta, 32, {0.0, -0.375});
    const std::vector<double> ts{1e-2, 1e-3, 1e-4};
    for (double t : ts) EXPECT_LE(s.bar_c_tail(t), 1e-12);
    // bar_c(t) = -log(1/t) / (4 pi beta) + O(1): the slope per decade is fixed.
    const double slope = -std::log(10.0) / (4.0 * std::numbers::pi * beta);
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        double d = s.bar_c(ts[i + 1]) - s.bar_c(ts[i]);
        EXPECT_LE(std::abs(d / slope - 1.0), 0.01) << ts[i];
    }
    // The ratio to log(1/t) moves monotonically toward the slope constant.
    double r1 = s.bar_c(1e-4) / std::log(1e4), r2 = s.bar_c(1e-8) / std::log(1e8);
    const double lim = -1.0 / (4.0 * std::numbers::pi * beta);
    EXPECT_LT(std::abs(r2 - lim), std::abs(r1 - lim));
}

TEST(Schedule, FiniteDifferenceApproachesLimit)
{
    auto s = RenormalizationSchedule::make(1.5, 256, {0.0, -0.375});
    for (double t : {0.01, 0.1, 0.5}) EXPECT_NEAR(s.difference(t, ScheduleMode::finite), s.bar_c(t), 2e-3);
}

TEST(Schedule, Phi6Identities)
{
    const double a1 = 0.3, a3 = -0.2;
    auto s = RenormalizationSchedule::make(3.0, 16, {a1, a3, phi6_quintic_coefficient});
    for (double t : {1e-3, 0.05, 0.5}) {
        double d = s.bar_c(t);
        auto a = s.a_of_t(t);
        EXPECT_NEAR(a[1] - a3, -4.5 * d, 1e-13);
        EXPECT_NEAR(a[0] - a1, 3.0 * a3 * d - 6.75 * d * d, 1e-13);
        EXPECT_DOUBLE_EQ(a[2], phi6_quintic_coefficient);
    }
    auto z = rebase_odd_hermite({a1, a3, phi6_quintic_coefficient}, 0.0);
    EXPECT_DOUBLE_EQ(z[0], a1);
    EXPECT_DOUBLE_EQ(z[1], a3);
    auto small = rebase_odd_hermite({a1, a3, phi6_quintic_coefficient}, 1e-9);
    EXPECT_NEAR(small[0], a1, 1e-9);
    EXPECT_NEAR(small[1], a3, 1e-8);
}

TEST(Schedule, Phi4Identity)
{
    auto a = rebase_odd_hermite({0.4, -0.375}, 0.2);
    EXPECT_NEAR(a[0] - 0.4, 3.0 * -0.375 * 0.2, 1e-15);
}

TEST(Schedule, PolynomialIdentityRandomTuples)
{
    Rng rng(21, 0);
    for (int i = 0; i < 20; ++i) {
        int n = 2 + static_cast<int>(rng.below(2));
        std::vector<double> a(n);
        for (auto& x : a) x = 2.0 * rng.uniform() - 1.0;
        double ce = 2.0 * rng.uniform(), cet = 2.0 * rng.uniform();
        auto at = rebase_odd_hermite(a, cet - ce);
        auto p = odd_hermite_polynomial(a, ce);
        auto q = odd_hermite_polynomial(at, cet);
        ASSERT_EQ(p.size(), q.size());
        for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(p[k], q[k], 1e-10) << i << " " << k;
    }
}

TEST(Spde, ConfigValidation)
{
    auto c = small_config(8);
    EXPECT_NO_THROW(c.validate());
    c.n = 4;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = small_config(8);
    c.beta_c = 1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = small_config(1);
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = small_config(8);
    c.output_times = {0.5};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = small_config(8);
    EXPECT_NEAR(c.leading_coefficient(), -0.375, 1e-12);
    c.n = 3;
    c.beta_c = 3.0;
    EXPECT_EQ(c.leading_coefficient(), -0.45);
}

TEST(Spde, NoiselessHeatDecay)
{
    Rng rng(3, 0);
    auto c = small_config(8);
    c.beta_c = 3.0; // leading coefficient 0
    c.a1 = 0.0;
    c.noise_scale = 0.0;
    c.has_X0 = true;
    c.X0 = random_field(7, rng, 1.0);
    c.output_times = {0.05, 0.1};
    SpdeSolver s(c, 1, 0);
    auto recs = s.solve();
    ASSERT_EQ(recs.size(), 2u);
    for (const auto& r : recs) {
        const double pi2 = std::numbers::pi * std::numbers::pi;
        for (int a = -7; a <= 7; ++a)
            for (int b = -7; b <= 7; ++b) {
                if (a * a + b * b >= 64) {
                    EXPECT_EQ(r.X.at(a, b), cplx(0.0));
                    continue;
                }
                cplx e = std::exp(-pi2 * (a * a + b * b) * r.t) * c.X0.at(a, b);
                EXPECT_LE(std::abs(r.X.at(a, b) - e), 1e-12);
            }
        EXPECT_EQ(r.v_sup, 0.0);
        EXPECT_LE(r.max_imag, 1e-10);
    }
}

TEST(Spde, OuZeroModeIncrementVariance)
{
    auto c = small_config(2);
    c.beta_c = 3.0;
    const int S = 20000;
    const double dt = 0.01;
    double s2 = 0.0;
    for (int i = 0; i < S; ++i) {
        SpdeSolver s(c, 100, i);
        s.ou_step(dt);
        s2 += std::norm(s.Z()[0]);
    }
    double var = s2 / S;
    double target = 4.0 * 2.0 / 3.0 * dt;
    EXPECT_LE(std::abs(var - target), 3.0 * target * std::sqrt(2.0 / S));
}

TEST(Spde, OuStationaryVarianceMatchesFormula)
{
    auto c = small_config(8);
    c.beta_c = 3.0;
    const int S = 2000;
    std::vector<double> z0(S);
    for (int i = 0; i < S; ++i) {
        SpdeSolver s(c, 200, i);
        for (int k = 0; k < 5; ++k) s.ou_step(0.1);
        z0[i] = s.z_tilde_grid()[0];
    }
    double m2 = 0.0, m4 = 0.0;
    for (double z : z0) {
        m2 += z * z;
        m4 += z * z * z * z;
    }
    m2 /= S;
    m4 /= S;
    double se = std::sqrt((m4 - m2 * m2) / S);
    auto sched = RenormalizationSchedule::make(3.0, 8, {0.0});
    EXPECT_LE(std::abs(m2 - sched.c_eps_of_t(0.5)), 3.0 * se);
}

TEST(Spde, ZeroCoefficientsKeepRemainderZero)
{
    auto c = small_config(8);
    c.beta_c = 3.0;
    c.a1 = 0.0;
    SpdeSolver s(c, 5, 0);
    auto recs = s.solve();
    EXPECT_EQ(recs.back().v_sup, 0.0);
    EXPECT_LE(recs.back().max_imag, 1e-10);
}

TEST(Spde, ConstantOdeReduction)
{
    const double x0 = 1.0, a1 = 0.5;
    auto c = small_config(4);
    c.a1 = a1;
    c.dt = 1e-4;
    c.T = 1.0;
    c.noise_scale = 0.0;
    c.has_X0 = true;
    Rng rng(1, 0);
    c.X0 = random_field(3, rng, 0.0);
    c.X0.at(0, 0) = 4.0 * x0;
    const double a3 = c.leading_coefficient();

    double p[2] = {a1, a3};
    gsl_odeiv2_system sys{cubic_rhs, nullptr, 1, p};
    auto* d = gsl_odeiv2_driver_alloc_y_new(&sys, gsl_odeiv2_step_rk8pd, 1e-6, 1e-14, 1e-14);
    double t = 0.0, y[1] = {x0};
    ASSERT_EQ(gsl_odeiv2_driver_apply(d, &t, 1.0, y), GSL_SUCCESS);
    gsl_odeiv2_driver_free(d);
    // Bernoulli closed form as a second reference.
    double yb = (1.0 / (x0 * x0) + a3 / a1) * std::exp(-2.0 * a1) - a3 / a1;
    EXPECT_NEAR(y[0], 1.0 / std::sqrt(yb), 1e-12);

    SpdeSolver s(c, 1, 0);
    auto r = s.solve().back();
    double got = r.X.at(0, 0).real() / 4.0;
    EXPECT_LE(std::abs(got - y[0]) / y[0], 1e-6);
    for (int a = -3; a <= 3; ++a)
        for (int b = -3; b <= 3; ++b)
            if (a || b) {
                EXPECT_LE(std::abs(r.X.at(a, b)), 1e-12);
            }
}

TEST(Spde, FrozenNoiseAcrossSubsteps)
{
    auto c = small_config(6);
    c.T = 0.02;
    c.dt = 0.004;
    c.noise_substeps = 4;
    SpdeSolver coarse(c, 9, 0);
    c.dt = 0.001;
    c.noise_substeps = 1;
    SpdeSolver fine(c, 9, 0);
    coarse.solve();
    fine.solve();
    for (std::size_t i = 0; i < coarse.Z().size(); ++i) EXPECT_EQ(coarse.Z()[i], fine.Z()[i]);
}

TEST(Spde, BinomialWickRecombination)
{
    Rng rng(12, 0);
    auto c = small_config(6);
    c.has_X0 = true;
    c.X0 = random_field(5, rng, 0.3);
    c.T = 0.05;
    SpdeSolver s(c, 4, 0);
    s.solve();
    RArray zt = s.z_tilde_grid();
    const double ct = s.schedule().c_eps_of_t(s.time());
    for (int m = 1; m <= 5; ++m) {
        RArray w = s.z_tilde_wick_grid(m);
        for (std::size_t i = 0; i < w.size(); ++i)
            EXPECT_NEAR(w[i], hermite(m, zt[i], ct), 1e-10 * std::max(1.0, std::abs(w[i])));
    }
}

TEST(Spde, BlowUpDetected)
{
    auto c = small_config(4);
    c.a1 = 2000.0;
    c.blowup_bound = 10.0;
    c.T = 0.2;
    c.has_X0 = true;
    Rng rng(2, 0);
    c.X0 = random_field(3, rng, 0.0);
    c.X0.at(0, 0) = 4.0;
    SpdeSolver s(c, 1, 0);
    EXPECT_THROW(s.solve(), std::runtime_error);
}

TEST(Spde, RecordsScheduleAndRealness)
{
    auto c = small_config(16);
    c.output_times = {0.0, 0.05, 0.1};
    SpdeSolver s(c, 6, 0);
    auto recs = s.solve();
    ASSERT_EQ(recs.size(), 3u);
    EXPECT_EQ(recs[0].t, 0.0);
    for (const auto& r : recs) {
        EXPECT_LE(r.max_imag, 1e-10);
        EXPECT_LE(conjugate_symmetry_defect(r.X), 1e-10);
        EXPECT_EQ(r.a_of_t.size(), 2u);
        EXPECT_GE(r.v_half_norm, 0.0);
    }
    EXPECT_NEAR(recs[2].c_of_t, s.schedule().c_eps_of_t(0.1), 1e-15);
}
