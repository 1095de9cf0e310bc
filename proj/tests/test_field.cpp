#include "kbc/field.hpp"
#include "kbc/kac_kernel.hpp"
#include "kbc/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace kbc;

namespace {

RArray random_grid(const Torus& T, Rng& rng)
{
    RArray g(T.size());
    for (auto& v : g) v = rng.normal();
    return g;
}

FieldSnapshot single_mode(int N, int a, int b, double amp)
{
    FieldSnapshot s;
    s.N = N;
    s.eps = 2.0 / (2.0 * N + 1.0);
    s.fourier.assign(static_cast<std::size_t>(2 * N + 1) * (2 * N + 1), cplx(0.0));
    // cos(pi w.x) has coefficients 2 amp at +-w under the 1/4 convention.
    s.at(a, b) += 2.0 * amp;
    s.at(-a, -b) += 2.0 * amp;
    return s;
}

} // namespace

TEST(Field, RoundTripAndParseval)
{
    Rng rng(1, 0);
    for (int N : {3, 10, 31}) {
        Torus T(N);
        RArray g = random_grid(T, rng);
        auto s = grid_to_snapshot(g, N);
        RArray back = snapshot_to_grid(s);
        double err = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) err = std::max(err, std::abs(back[i] - g[i]));
        EXPECT_LE(err, 1e-10);
        EXPECT_LE(conjugate_symmetry_defect(s), 1e-12);
        EXPECT_NEAR(grid_l2(g, T.eps), fourier_l2(s), 1e-10 * grid_l2(g, T.eps));
    }
}

TEST(Field, ExtensionInterpolatesGridAndModes)
{
    Rng rng(2, 0);
    const int N = 6;
    Torus T(N);
    RArray g = random_grid(T, rng);
    auto s = grid_to_snapshot(g, N);
    for (int i = 0; i < T.side; ++i)
        for (int j = 0; j < T.side; ++j) {
            double x1 = T.eps * T.centered(i), x2 = T.eps * T.centered(j);
            EXPECT_NEAR(extend_to_torus(s, x1, x2), g[T.index(i, j)], 1e-10);
        }
    RArray c(T.size(), 2.5);
    auto cs = grid_to_snapshot(c, N);
    EXPECT_NEAR(extend_to_torus(cs, 0.123, -0.77), 2.5, 1e-12);
    for (auto [a, b] : {std::pair{1, 2}, std::pair{N, -3}, std::pair{-N, N}}) {
        RArray m(T.size());
        for (int i = 0; i < T.side; ++i)
            for (int j = 0; j < T.side; ++j)
                m[T.index(i, j)] =
                    std::cos(std::numbers::pi * (a * T.eps * T.centered(i) + b * T.eps * T.centered(j)));
        auto ms = grid_to_snapshot(m, N);
        for (double x1 : {0.0137, -0.51, 0.93})
            for (double x2 : {0.29, -0.999})
                EXPECT_NEAR(extend_to_torus(ms, x1, x2), std::cos(std::numbers::pi * (a * x1 + b * x2)), 1e-10);
    }
}

TEST(Field, RescaleConstantAndSingleSpin)
{
    const int N = 5;
    Torus T(N);
    const double delta = 0.3;
    RArray ones(T.size(), 1.0);
    auto s = rescale_field(ones, T, delta, 0.7);
    EXPECT_DOUBLE_EQ(s.macro_time, 0.7);
    EXPECT_NEAR(s.at(0, 0).real(), 4.0 / delta, 1e-12);
    for (std::size_t i = 1; i < s.fourier.size(); ++i) EXPECT_LE(std::abs(s.fourier[i]), 1e-12);
    auto z = rescale_field(RArray(T.size(), 0.0), T, delta, 0.0);
    for (const auto& v : z.fourier) EXPECT_EQ(v, cplx(0.0));

    Rng rng(4, 0);
    RArray kv(T.size(), 0.0);
    double mass = 0.0;
    for (int a = -N; a <= N; ++a)
        for (int b = -N; b <= N; ++b)
            if (a != 0 || b != 0) {
                double u = rng.uniform();
                kv[T.index(a, b)] += u;
                kv[T.index(-a, -b)] += u;
                mass += 2.0 * u;
            }
    for (auto& v : kv) v /= mass;
    auto k = kernel_from_values(T, kv);
    RArray h(T.size(), 0.0);
    for (int a = -N; a <= N; ++a)
        for (int b = -N; b <= N; ++b) h[T.index(a, b)] = k.value(a, b);
    auto x = rescale_field(h, T, delta, 0.0);
    for (int w1 = -N; w1 <= N; ++w1)
        for (int w2 = -N; w2 <= N; ++w2) {
            cplx direct = 0.0;
            for (int a = -N; a <= N; ++a)
                for (int b = -N; b <= N; ++b)
                    direct += k.value(a, b) * std::polar(1.0, -std::numbers::pi * T.eps * (w1 * a + w2 * b));
            direct *= T.eps * T.eps / delta;
            EXPECT_LE(std::abs(x.at(w1, w2) - direct), 1e-12);
        }
}

TEST(Besov, ZeroAndSingleModeScaling)
{
    const int N = 80;
    FieldSnapshot zero = single_mode(N, 0, 0, 0.0);
    EXPECT_EQ(besov_norm(zero, 0.3).value, 0.0);
    EXPECT_THROW(besov_norm(zero, 0.0), std::invalid_argument);
    const double nu = 0.3;
    for (int k = 2; k <= 6; ++k) {
        int w = 1 << k;
        auto s = single_mode(N, w, 0, 1.0);
        double v = besov_norm(s, nu).value;
        double target = std::pow(2.0, -nu * k);
        EXPECT_LE(v, 2.0 * target) << k;
        EXPECT_GE(v, 0.5 * target) << k;
    }
}

TEST(Besov, QuasiTriangleInequality)
{
    Rng rng(6, 0);
    const int N = 24;
    Torus T(N);
    for (int r = 0; r < 5; ++r) {
        auto f = grid_to_snapshot(random_grid(T, rng), N);
        auto g = grid_to_snapshot(random_grid(T, rng), N);
        FieldSnapshot fg = f;
        for (std::size_t i = 0; i < fg.fourier.size(); ++i) fg.fourier[i] += g.fourier[i];
        auto ef = besov_norm(f, 0.2), eg = besov_norm(g, 0.2), efg = besov_norm(fg, 0.2);
        // Block sups are exact sups of trigonometric polynomials up to the sampling error of the 4x grid.
        EXPECT_LE(efg.value, (ef.value + eg.value) * 1.05);
        EXPECT_EQ(efg.overlap_constant, 3.0);
    }
}

TEST(Besov, RefinementStability)
{
    Rng rng(7, 0);
    const int K = 16;
    FieldSnapshot s = single_mode(K, 0, 0, 0.0);
    for (int a = -K; a <= K; ++a)
        for (int b = 0; b <= K; ++b) {
            if (b == 0 && a < 0) continue;
            cplx v(rng.normal(), (a == 0 && b == 0) ? 0.0 : rng.normal());
            s.at(a, b) = v;
            s.at(-a, -b) = std::conj(v);
        }
    FieldSnapshot big = single_mode(2 * K, 0, 0, 0.0);
    for (int a = -K; a <= K; ++a)
        for (int b = -K; b <= K; ++b) big.at(a, b) = s.at(a, b);
    double v1 = besov_norm(s, 0.25).value, v2 = besov_norm(big, 0.25).value;
    EXPECT_GT(v1, 0.0);
    EXPECT_LE(std::abs(v2 / v1 - 1.0), 0.2);
}

TEST(Field, HighLowSplit)
{
    const int N = 100;
    auto s2 = single_mode(N, 2, 0, 1.0);
    auto [low, high] = split_high_low(s2);
    EXPECT_LE(std::abs(low.at(2, 0) - s2.at(2, 0)), 1e-15);
    EXPECT_EQ(high.at(2, 0), cplx(0.0));
    auto sN = single_mode(N, N, 0, 1.0);
    auto [lowN, highN] = split_high_low(sN);
    EXPECT_EQ(lowN.at(N, 0), cplx(0.0));
    EXPECT_EQ(highN.at(N, 0), sN.at(N, 0));
    Rng rng(8, 0);
    auto r = grid_to_snapshot(random_grid(Torus(N), rng), N);
    auto [l, h] = split_high_low(r);
    // high is formed as s - low, so the sum reproduces s up to one rounding.
    for (std::size_t i = 0; i < r.fourier.size(); ++i)
        EXPECT_LE(std::abs(l.fourier[i] + h.fourier[i] - r.fourier[i]), 2.3e-16 * std::abs(r.fourier[i]));
}

TEST(Hermite, ValuesAndRecursion)
{
    EXPECT_DOUBLE_EQ(hermite(3, 2.0, 1.0), 2.0);
    EXPECT_DOUBLE_EQ(hermite(5, 1.0, 1.0), 6.0);
    EXPECT_THROW(hermite(-1, 0.0, 1.0), std::invalid_argument);
    // Explicit polynomials through degree 6.
    auto explicit_h = [](int n, double x, double c) {
        switch (n) {
        case 0: return 1.0;
        case 1: return x;
        case 2: return x * x - c;
        case 3: return x * x * x - 3 * c * x;
        case 4: return std::pow(x, 4) - 6 * c * x * x + 3 * c * c;
        case 5: return std::pow(x, 5) - 10 * c * std::pow(x, 3) + 15 * c * c * x;
        default: return std::pow(x, 6) - 15 * c * std::pow(x, 4) + 45 * c * c * x * x - 15 * c * c * c;
        }
    };
    for (int n = 0; n <= 6; ++n)
        for (double x : {-1.7, 0.0, 0.4, 2.2})
            for (double c : {0.0, 0.3, 1.5}) {
                EXPECT_NEAR(hermite(n, x, c), explicit_h(n, x, c), 1e-12);
                auto co = hermite_coefficients(n, c);
                double v = 0.0;
                for (int i = static_cast<int>(co.size()) - 1; i >= 0; --i) v = v * x + co[i];
                EXPECT_NEAR(v, explicit_h(n, x, c), 1e-12);
                if (n >= 1) {
                    // H_n = x H_{n-1} - c d/dx H_{n-1}, with d/dx H_{n-1} = (n-1) H_{n-2}.
                    double d = n >= 2 ? (n - 1) * hermite(n - 2, x, c) : 0.0;
                    EXPECT_NEAR(hermite(n, x, c), x * hermite(n - 1, x, c) - c * d, 1e-12);
                }
                if (c == 0.0) {
                    EXPECT_NEAR(hermite(n, x, c), std::pow(x, n), 1e-12);
                }
            }
}

TEST(Hermite, GaussianOrthogonality)
{
    Rng rng(9, 0);
    const double c = 0.7;
    const int S = 1000000;
    double m[5][5] = {}, m2[5][5] = {};
    for (int s = 0; s < S; ++s) {
        double x = std::sqrt(c) * rng.normal();
        double h[5];
        for (int n = 0; n <= 4; ++n) h[n] = hermite(n, x, c);
        for (int i = 0; i <= 4; ++i)
            for (int j = 0; j <= 4; ++j) {
                m[i][j] += h[i] * h[j];
                m2[i][j] += h[i] * h[i] * h[j] * h[j];
            }
    }
    for (int i = 0; i <= 4; ++i)
        for (int j = 0; j <= 4; ++j) {
            double mean = m[i][j] / S;
            double se = std::sqrt((m2[i][j] / S - mean * mean) / S);
            double target = i == j ? std::tgamma(i + 1.0) * std::pow(c, i) : 0.0;
            EXPECT_LE(std::abs(mean - target), 3.0 * se + 1e-14) << i << " " << j;
        }
}

TEST(Wick, ZeroBracketGivesPlainPowers)
{
    Rng rng(10, 0);
    const int N = 4;
    auto Z = grid_to_snapshot(random_grid(Torus(N), rng), N);
    auto w = wick_powers(Z, 0.0, 3);
    const int G = wick_grid_size(N, 3);
    RArray z = sample_on_grid(Z, G);
    for (int m = 1; m <= 3; ++m) {
        EXPECT_GE(w.truncation_energy[m], 0.0);
        // Untruncated powers: evaluate on the fine grid directly.
        RArray p(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::pow(z[i], m);
        auto [full, lost] = truncate_from_grid(p, G, m * N);
        RArray back = sample_on_grid(full, G);
        double err = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) err = std::max(err, std::abs(back[i] - p[i]));
        EXPECT_LE(err, 1e-10) << m;
        EXPECT_LE(lost, 1e-20);
        for (int a = -N; a <= N; ++a)
            for (int b = -N; b <= N; ++b) EXPECT_LE(std::abs(full.at(a, b) - w.powers[m].at(a, b)), 1e-10);
    }
    EXPECT_THROW(wick_powers(Z, 0.0, 6), std::invalid_argument);
}

TEST(IteratedIntegral, HandComputedPaths)
{
    IteratedIntegral r;
    r.jump(1.0);
    EXPECT_EQ(r.value(), 1.0);
    EXPECT_EQ(r.y[2], 0.0);
    r.jump(2.0);
    EXPECT_EQ(r.value(), 3.0);
    EXPECT_EQ(r.y[2], 4.0); // 2 J1 J2
    EXPECT_EQ(r.y[3], 0.0);
    EXPECT_EQ(r.square_bracket, 5.0);
    EXPECT_EQ(r.hermite_gap(2), 0.0);
    EXPECT_EQ(r.hermite_gap(3), -18.0); // H3(3, 5) = 27 - 45

    IteratedIntegral d;
    d.drift(0.5);
    EXPECT_DOUBLE_EQ(d.y[2], 0.25);
    EXPECT_DOUBLE_EQ(d.y[5], std::pow(0.5, 5));
    d.drift(-1.25);
    for (int m = 1; m <= 5; ++m) EXPECT_NEAR(d.y[m], std::pow(-0.75, m), 1e-15);
    for (int m = 1; m <= 5; ++m) EXPECT_NEAR(d.hermite_gap(m), 0.0, 1e-15);
}
