#include "kbc/rates.hpp"
#include "kbc/rng.hpp"
#include "kbc/scaling.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

using namespace kbc;

TEST(Rates, Examples)
{
    auto r = jump_rates(0.0, 1.0, 0.0);
    EXPECT_NEAR(r.p_minus, 1.0 / 3.0, 1e-16);
    EXPECT_NEAR(r.p_zero, 1.0 / 3.0, 1e-16);
    auto q = jump_rates(0.0, 1.0, std::log(0.25));
    EXPECT_NEAR(q.p_minus, 1.0 / 6.0, 1e-15);
    EXPECT_NEAR(q.p_zero, 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(q.p_plus, 1.0 / 6.0, 1e-15);
    EXPECT_NEAR(q.normalizer, 1.5, 1e-15);
}

TEST(Rates, SumSymmetryDetailedBalance)
{
    Rng rng(3, 0);
    double worst_sum = 0.0, worst_db = 0.0;
    for (int i = 0; i < 1000000; ++i) {
        double h = 2.0 * rng.uniform() - 1.0;
        double beta = 10.0 * rng.uniform();
        double theta = 20.0 * rng.uniform() - 10.0;
        auto r = jump_rates(h, beta, theta);
        auto m = jump_rates(-h, beta, theta);
        worst_sum = std::max(worst_sum, std::abs(r.p_minus + r.p_zero + r.p_plus - 1.0));
        ASSERT_EQ(r.p_minus, m.p_plus);
        ASSERT_EQ(r.p_plus, m.p_minus);
        ASSERT_EQ(r.p_zero, m.p_zero);
        ASSERT_GT(r.p_zero, 0.0);
        ASSERT_LT(r.p_zero, 1.0);
        if (i % 10 == 0) {
            worst_db = std::max({worst_db, detailed_balance_check(h, beta, theta, -1, 0),
                                 detailed_balance_check(h, beta, theta, 0, 1),
                                 detailed_balance_check(h, beta, theta, -1, 1)});
        }
    }
    // Three-term floating-point sum: at most two roundings of 2^-53.
    EXPECT_LE(worst_sum, 2.0 * std::numeric_limits<double>::epsilon());
    EXPECT_LE(worst_db, 1e-12);
    EXPECT_EQ(detailed_balance_check(0.0, 0.0, 0.0, -1, 1), 0.0);
    EXPECT_THROW(detailed_balance_check(0.1, 1.0, 0.0, 1, 1), std::invalid_argument);
}

TEST(Rates, TaylorCoefficientExamples)
{
    EXPECT_NEAR(taylor_coefficient(0.0, 1, 1), 1.0 / 3.0, 1e-16);
    EXPECT_NEAR(taylor_coefficient(std::log(0.25), 1, 3), 0.0, 1e-16);
    EXPECT_THROW(taylor_coefficient(0.0, 1, 2), std::invalid_argument);
    EXPECT_THROW(taylor_coefficient(0.0, 1, 7), std::invalid_argument);
    for (double th : {-1.0, 0.0, 0.7}) {
        double a = std::exp(th);
        double s = taylor_coefficient(th, 1, 1) - taylor_coefficient(th, -1, 1);
        EXPECT_NEAR(s, 2.0 * a / (1.0 + 2.0 * a), 1e-15);
    }
}

// n-th Taylor coefficient at 0 of x -> p(s; x), x = beta h, from the
// interpolating polynomial through 17 equispaced samples.
double interpolated_coefficient(double theta, int s, int n)
{
    const double h = 0.05;
    const int M = 8;
    std::vector<double> xs, c;
    for (int k = -M; k <= M; ++k) {
        xs.push_back(k * h);
        c.push_back(jump_rates(k * h, 1.0, theta)[s]);
    }
    const int P = static_cast<int>(xs.size());
    for (int j = 1; j < P; ++j)
        for (int i = P - 1; i >= j; --i) c[i] = (c[i] - c[i - 1]) / (xs[i] - xs[i - j]);
    std::vector<double> poly(P, 0.0);
    for (int i = P - 1; i >= 0; --i) {
        for (int k = P - 1; k >= 1; --k) poly[k] = poly[k - 1] - xs[i] * poly[k];
        poly[0] = c[i] - xs[i] * poly[0];
    }
    return poly[n];
}

TEST(Rates, TaylorCoefficientsMatchFiniteDifferences)
{
    for (double th : {-1.3, std::log(0.25), 0.0, 0.8})
        for (int s : {-1, 0, 1})
            for (int n : {1, 3, 5}) {
                double c = taylor_coefficient(th, s, n);
                double d = interpolated_coefficient(th, s, n);
                EXPECT_LE(std::abs(d - c), 1e-6 * std::max(std::abs(c), 1e-3)) << th << " " << s << " " << n;
            }
}

TEST(Rates, DriftExpansionOrder)
{
    const double a = 0.7, beta = 1.9, theta = std::log(a);
    auto m = mean_field_coefficients(a, beta);
    std::vector<double> lx, le;
    for (double x : {0.3, 0.2, 0.1, 0.05}) {
        double h = x / beta;
        double series = (m.A + 1.0) * h + m.B * h * h * h + m.C * std::pow(h, 5);
        double err = std::abs(drift_mean(h, beta, theta) - series);
        lx.push_back(std::log(x));
        le.push_back(std::log(err));
    }
    double slope = (le.back() - le.front()) / (lx.back() - lx.front());
    EXPECT_GE(slope, 6.5);
}

TEST(Rates, AverageRateFunction)
{
    const double th = std::log(0.25);
    EXPECT_NEAR(average_rate_function(0, th), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(average_rate_function(1, th), 4.0 / 3.0, 1e-15);
    EXPECT_NEAR(average_rate_function(-1, th), 4.0 / 3.0, 1e-15);
    EXPECT_NEAR(average_rate_mean(th), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(average_rate_function(1, 40.0), 2.0, 1e-12);
    EXPECT_NEAR(average_rate_function(0, 40.0), 1.0, 1e-12); // 2a/(1+2a) -> 1
    EXPECT_NEAR(average_rate_mean(40.0), 2.0, 1e-12);
    Rng rng(5, 0);
    for (int i = 0; i < 100; ++i) {
        double tc = 6.0 * rng.uniform() - 3.0;
        auto r = reference_rates(tc);
        double mean = r.p_minus * average_rate_function(-1, tc) + r.p_zero * average_rate_function(0, tc) +
                      r.p_plus * average_rate_function(1, tc);
        EXPECT_NEAR(mean, average_rate_mean(tc), 1e-14);
        EXPECT_NEAR(mean, 2.0 / critical_beta(std::exp(tc)), 1e-14);
    }
}
