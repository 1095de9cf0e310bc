#pragma once

#include "kbc/fft.hpp"
#include "kbc/kac_kernel.hpp"
#include "kbc/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace kbc {

// Fourier coefficients F(w) = sum_x eps^2 Y(x) e^{-i pi w.x} of a grid field,
// for w in {-N..N}^2 stored at index (w mod side). The field extends to the
// continuous torus [-1,1)^2 as Y(x) = (1/4) sum_w F(w) e^{i pi w.x}.
struct FieldSnapshot {
    int N = 0;
    CArray fourier;
    double macro_time = 0.0;
    double gamma = 0.0;
    std::string regime;
    double delta = 1.0;
    double eps = 0.0;

    int side() const { return 2 * N + 1; }
    Torus torus() const { return Torus(N); }
    cplx at(int w1, int w2) const { return fourier[torus().index(w1, w2)]; }
    cplx& at(int w1, int w2) { return fourier[Torus(N).index(w1, w2)]; }
};

inline FieldSnapshot snapshot_like(const FieldSnapshot& s)
{
    FieldSnapshot o = s;
    std::fill(o.fourier.begin(), o.fourier.end(), cplx(0.0));
    return o;
}

// Grid values -> Fourier coefficients.
inline FieldSnapshot grid_to_snapshot(const RArray& grid, int N)
{
    Torus T(N);
    if (grid.size() != T.size()) throw std::invalid_argument("grid_to_snapshot: size mismatch");
    FieldSnapshot s;
    s.N = N;
    s.eps = T.eps;
    s.fourier = to_complex(grid);
    fft2(s.fourier, T.side, -1);
    const double e2 = T.eps * T.eps;
    for (auto& v : s.fourier) v *= e2;
    return s;
}

// Fourier coefficients -> complex grid values (real for conjugate-symmetric input).
inline CArray snapshot_to_grid_complex(const FieldSnapshot& s)
{
    CArray g = s.fourier;
    fft2(g, s.side(), +1);
    for (auto& v : g) v *= 0.25;
    return g;
}

inline RArray snapshot_to_grid(const FieldSnapshot& s) { return real_part(snapshot_to_grid_complex(s)); }

// X = delta^-1 h on the macroscopic grid.
inline FieldSnapshot rescale_field(const RArray& local_field, const Torus& T, double delta, double macro_time)
{
    RArray x(local_field.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = local_field[i] / delta;
    FieldSnapshot s = grid_to_snapshot(x, T.N);
    s.delta = delta;
    s.macro_time = macro_time;
    return s;
}

inline double extend_to_torus(const FieldSnapshot& s, double x1, double x2)
{
    const Torus T(s.N);
    const double pi = std::numbers::pi;
    std::vector<cplx> e1(T.side), e2(T.side);
    for (int i = 0; i < T.side; ++i) {
        double w = T.centered(i);
        e1[i] = std::polar(1.0, pi * w * x1);
        e2[i] = std::polar(1.0, pi * w * x2);
    }
    cplx acc = 0.0;
    for (int i = 0; i < T.side; ++i) {
        cplx row = 0.0;
        for (int j = 0; j < T.side; ++j) row += s.fourier[static_cast<std::size_t>(i) * T.side + j] * e2[j];
        acc += row * e1[i];
    }
    return 0.25 * acc.real();
}

// Largest |F(w) - conj F(-w)|.
inline double conjugate_symmetry_defect(const FieldSnapshot& s)
{
    const Torus T(s.N);
    double d = 0.0;
    for (int a = -T.N; a <= T.N; ++a)
        for (int b = -T.N; b <= T.N; ++b) d = std::max(d, std::abs(s.at(a, b) - std::conj(s.at(-a, -b))));
    return d;
}

// Sum over the grid of eps^2 |Y|^2 and (1/4) sum over modes of |F|^2.
inline double grid_l2(const RArray& g, double eps)
{
    double s = 0.0;
    for (double v : g) s += v * v;
    return s * eps * eps;
}

inline double fourier_l2(const FieldSnapshot& s)
{
    double a = 0.0;
    for (const auto& v : s.fourier) a += std::norm(v);
    return 0.25 * a;
}

// Smooth step: 1 for s <= 1, 0 for s >= 2.
inline double lp_step(double s)
{
    if (s <= 1.0) return 1.0;
    if (s >= 2.0) return 0.0;
    auto psi = [](double u) { return u > 0.0 ? std::exp(-1.0 / u) : 0.0; };
    double a = psi(2.0 - s), b = psi(s - 1.0);
    return a / (a + b);
}

// Dyadic block weight: block 0 is lp_step(|w|), block k >= 1 is
// lp_step(|w| / 2^k) - lp_step(|w| / 2^(k-1)), supported in [2^(k-1), 2^(k+1)].
inline double lp_block_weight(int k, double r)
{
    if (k == 0) return lp_step(r);
    return lp_step(r / std::ldexp(1.0, k)) - lp_step(r / std::ldexp(1.0, k - 1));
}

// Number of dyadic blocks needed to cover all modes of a degree-N polynomial.
inline int lp_block_count(int N)
{
    const double rmax = std::sqrt(2.0) * N;
    int K = 0;
    while (std::ldexp(1.0, K) < rmax) ++K;
    return K + 1;
}

struct BesovEstimate {
    double nu = 0.0;
    std::vector<std::pair<int, double>> block_norms; // (k, 2^{-nu k} sup |delta_k f|)
    double value = 0.0;
    int oversample = 4;
    double overlap_constant = 3.0; // each block overlaps at most its two neighbours
};

// sup over an oversampled grid of the trigonometric polynomial with
// coefficients weight(w) F(w), restricted to |w|_inf <= W.
template <class Weight>
double block_sup(const FieldSnapshot& s, int W, int oversample, Weight weight)
{
    const Torus T(s.N);
    W = std::min(W, s.N);
    const int G = good_fft_size(oversample * (2 * W + 1));
    CArray g(static_cast<std::size_t>(G) * G, cplx(0.0));
    bool any = false;
    for (int a = -W; a <= W; ++a)
        for (int b = -W; b <= W; ++b) {
            double wt = weight(std::hypot(static_cast<double>(a), static_cast<double>(b)));
            if (wt == 0.0) continue;
            cplx v = s.at(a, b) * wt;
            if (v == cplx(0.0)) continue;
            int i = a < 0 ? a + G : a, j = b < 0 ? b + G : b;
            g[static_cast<std::size_t>(i) * G + j] = v;
            any = true;
        }
    if (!any) return 0.0;
    fft2(g, G, +1);
    double m = 0.0;
    for (const auto& v : g) m = std::max(m, std::abs(v.real()));
    return 0.25 * m;
}

inline BesovEstimate besov_norm(const FieldSnapshot& s, double nu, int oversample = 4)
{
    if (!(nu > 0.0)) throw std::invalid_argument("besov_norm: nu > 0 required");
    if (oversample < 1) throw std::invalid_argument("besov_norm: oversample >= 1 required");
    BesovEstimate e;
    e.nu = nu;
    e.oversample = oversample;
    const int K = lp_block_count(s.N);
    for (int k = 0; k < K; ++k) {
        int W = static_cast<int>(std::ceil(std::ldexp(1.0, k + 1)));
        double sup = block_sup(s, W, oversample, [k](double r) { return lp_block_weight(k, r); });
        double v = std::pow(2.0, -nu * k) * sup;
        e.block_norms.emplace_back(k, v);
        e.value = std::max(e.value, v);
    }
    return e;
}

// Low part: blocks with 2^k < threshold (default N/20); high = s - low.
inline std::pair<FieldSnapshot, FieldSnapshot> split_high_low(const FieldSnapshot& s, double threshold = -1.0)
{
    if (threshold < 0.0) threshold = s.N / 20.0;
    int klast = -1;
    while (std::ldexp(1.0, klast + 1) < threshold) ++klast;
    FieldSnapshot low = snapshot_like(s), high = snapshot_like(s);
    const Torus T(s.N);
    for (int a = -T.N; a <= T.N; ++a)
        for (int b = -T.N; b <= T.N; ++b) {
            std::size_t i = T.index(a, b);
            double r = std::hypot(static_cast<double>(a), static_cast<double>(b));
            double w = klast < 0 ? 0.0 : lp_step(r / std::ldexp(1.0, klast));
            low.fourier[i] = s.fourier[i] * w;
            high.fourier[i] = s.fourier[i] - low.fourier[i];
        }
    return {low, high};
}

// Hermite polynomial with variance parameter c: H_0 = 1, H_1 = x,
// H_{n+1} = x H_n - n c H_{n-1}.
inline double hermite(int n, double x, double c)
{
    if (n < 0) throw std::invalid_argument("hermite: n >= 0 required");
    double h0 = 1.0, h1 = x;
    if (n == 0) return h0;
    for (int k = 1; k < n; ++k) {
        double h2 = x * h1 - k * c * h0;
        h0 = h1;
        h1 = h2;
    }
    return h1;
}

// Coefficients of H_n(., c) in the monomial basis, lowest degree first.
inline std::vector<double> hermite_coefficients(int n, double c)
{
    std::vector<double> h0{1.0}, h1{0.0, 1.0};
    if (n == 0) return h0;
    for (int k = 1; k < n; ++k) {
        std::vector<double> h2(k + 2, 0.0);
        for (std::size_t i = 0; i < h1.size(); ++i) h2[i + 1] += h1[i];
        for (std::size_t i = 0; i < h0.size(); ++i) h2[i] -= k * c * h0[i];
        h0 = std::move(h1);
        h1 = std::move(h2);
    }
    return h1;
}

// Zero-pads s to a degree-N polynomial sampled on a G x G grid (G odd or even),
// returning grid values.
inline RArray sample_on_grid(const FieldSnapshot& s, int G)
{
    if (G < s.side()) throw std::invalid_argument("sample_on_grid: grid smaller than the mode set");
    CArray g(static_cast<std::size_t>(G) * G, cplx(0.0));
    for (int a = -s.N; a <= s.N; ++a)
        for (int b = -s.N; b <= s.N; ++b) {
            int i = a < 0 ? a + G : a, j = b < 0 ? b + G : b;
            g[static_cast<std::size_t>(i) * G + j] = s.at(a, b);
        }
    fft2(g, G, +1);
    RArray r(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) r[i] = 0.25 * g[i].real();
    return r;
}

// Fourier coefficients (same convention) of grid values on a G x G grid of
// [-1,1)^2, truncated to |w|_inf <= N. Returns the discarded energy too.
inline std::pair<FieldSnapshot, double> truncate_from_grid(const RArray& grid, int G, int N)
{
    CArray g = to_complex(grid);
    fft2(g, G, -1);
    const double h2 = 4.0 / (static_cast<double>(G) * G);
    FieldSnapshot s;
    s.N = N;
    s.eps = 2.0 / (2.0 * N + 1.0);
    s.fourier.assign(static_cast<std::size_t>(2 * N + 1) * (2 * N + 1), cplx(0.0));
    Torus T(N);
    double total = 0.0, kept = 0.0;
    for (int i = 0; i < G; ++i)
        for (int j = 0; j < G; ++j) {
            cplx v = g[static_cast<std::size_t>(i) * G + j] * h2;
            total += std::norm(v);
            int a = i > G / 2 ? i - G : i, b = j > G / 2 ? j - G : j;
            if (std::abs(a) <= N && std::abs(b) <= N) {
                s.fourier[T.index(a, b)] = v;
                kept += std::norm(v);
            }
        }
    return {s, 0.25 * (total - kept)};
}

struct WickPowerSet {
    FieldSnapshot Z;
    std::map<int, FieldSnapshot> powers;
    std::map<int, double> truncation_energy;
};

// powers[m] = H_m(Z(x), c(x)) evaluated on a grid fine enough to hold the
// full degree m N product, then truncated back to the modes of Z.
inline WickPowerSet wick_powers(const FieldSnapshot& Z, const RArray& bracket_on_fine_grid, int G, int m_max)
{
    if (m_max > 5 || m_max < 1) throw std::invalid_argument("wick_powers: 1 <= m_max <= 5 required");
    if (bracket_on_fine_grid.size() != static_cast<std::size_t>(G) * G)
        throw std::invalid_argument("wick_powers: bracket grid size mismatch");
    RArray z = sample_on_grid(Z, G);
    WickPowerSet w;
    w.Z = Z;
    for (int m = 1; m <= m_max; ++m) {
        RArray p(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) p[i] = hermite(m, z[i], bracket_on_fine_grid[i]);
        auto [snap, lost] = truncate_from_grid(p, G, Z.N);
        snap.macro_time = Z.macro_time;
        snap.gamma = Z.gamma;
        snap.regime = Z.regime;
        snap.delta = Z.delta;
        w.powers.emplace(m, std::move(snap));
        w.truncation_energy[m] = lost;
    }
    return w;
}

inline int wick_grid_size(int N, int m_max) { return good_fft_size(m_max * 2 * N + 1); }

inline WickPowerSet wick_powers(const FieldSnapshot& Z, double bracket, int m_max)
{
    int G = wick_grid_size(Z.N, m_max);
    return wick_powers(Z, RArray(static_cast<std::size_t>(G) * G, bracket), G, m_max);
}

inline WickPowerSet wick_powers(const FieldSnapshot& Z, const FieldSnapshot& bracket, int m_max)
{
    int G = wick_grid_size(std::max(Z.N, bracket.N), m_max);
    return wick_powers(Z, sample_on_grid(bracket, G), G, m_max);
}

// Iterated integrals R^{:m:}, m <= 5, of a scalar path built from
// continuous increments and jumps.
struct IteratedIntegral {
    static constexpr int max_order = 5;
    double y[max_order + 1] = {1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    double square_bracket = 0.0;

    double value() const { return y[1]; }

    // Continuous finite-variation increment u (the path moves linearly).
    void drift(double u)
    {
        double b[max_order + 1];
        double p[max_order + 1];
        p[0] = 1.0;
        for (int k = 1; k <= max_order; ++k) p[k] = p[k - 1] * u;
        for (int m = 0; m <= max_order; ++m) {
            double s = 0.0, c = 1.0;
            for (int k = m; k >= 0; --k) {
                s += c * y[k] * p[m - k];
                c = c * k / (m - k + 1);
            }
            b[m] = s;
        }
        for (int m = 0; m <= max_order; ++m) y[m] = b[m];
    }

    void jump(double J)
    {
        for (int m = max_order; m >= 1; --m) y[m] += m * y[m - 1] * J;
        square_bracket += J * J;
    }

    // H_n(R, [R]) - R^{:n:}.
    double hermite_gap(int n) const { return hermite(n, y[1], square_bracket) - y[n]; }
};

// Spatially constant bracket of the linearized field:
// (c^2 / (2 beta_c)) [t + sum_{w != 0} K_hat^2 (1 - e^{2 lambda t}) / (-2 lambda)].
inline double linearized_bracket(const RArray& fourier, const RArray& rate, double c_gamma2, double beta_c, double t)
{
    double s = t;
    for (std::size_t i = 1; i < fourier.size(); ++i) {
        double l = rate[i];
        if (l == 0.0) {
            s += fourier[i] * fourier[i] * t;
            continue;
        }
        s += fourier[i] * fourier[i] * (-std::expm1(2.0 * l * t)) / (-2.0 * l);
    }
    return c_gamma2 * c_gamma2 / (2.0 * beta_c) * s;
}

// E|Z_hat(w)|^2 of the discrete linearized field at one mode.
inline double linearized_mode_variance(double khat, double lambda, double c_gamma2, double beta_c, double t)
{
    double f = lambda == 0.0 ? t : -std::expm1(2.0 * lambda * t) / (-2.0 * lambda);
    return 4.0 * c_gamma2 * c_gamma2 * (2.0 / beta_c) * khat * khat * f;
}

// E|Z_hat(w)|^2 of the continuum OU field started at 0:
// 4 (2/beta) (1 - e^{-2 pi^2 |w|^2 t}) / (2 pi^2 |w|^2), with the w = 0 limit 4 (2/beta) t.
inline double ou_mode_variance(double w2, double beta_c, double t)
{
    if (w2 == 0.0) return 4.0 * 2.0 / beta_c * t;
    const double k = 2.0 * std::numbers::pi * std::numbers::pi * w2;
    return 4.0 * 2.0 / beta_c * (-std::expm1(-k * t)) / k;
}

} // namespace kbc
