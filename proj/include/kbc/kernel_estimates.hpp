#pragma once

#include "kbc/kac_kernel.hpp"
#include "kbc/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace kbc {

// Fourier multiplier exp(t gamma^-b (K_hat(w) - 1)) with b = b_time.
struct SemigroupKernel {
    int b_exponent = 2;
    double gamma = 0.0;
    Torus torus;
    RArray rate; // gamma^-b (K_hat - 1), index w mod side

    double fourier_factor(double t, std::size_t i) const { return std::exp(t * rate[i]); }
    double fourier_factor(double t, int w1, int w2) const { return fourier_factor(t, torus.index(w1, w2)); }
};

inline SemigroupKernel make_semigroup(const KacKernel& k, int b_exponent)
{
    SemigroupKernel s;
    s.b_exponent = b_exponent;
    s.gamma = k.gamma;
    s.torus = k.torus;
    const double scale = std::pow(k.gamma, -b_exponent);
    s.rate.resize(k.fourier.size());
    for (std::size_t i = 0; i < k.fourier.size(); ++i) s.rate[i] = scale * (k.fourier[i] - 1.0);
    return s;
}

inline SemigroupKernel make_semigroup(const KacKernel& k, RegimeKind r) { return make_semigroup(k, b_time(r)); }

inline CArray semigroup_apply(const CArray& field, double t, const SemigroupKernel& semi)
{
    if (!(t >= 0.0)) throw std::invalid_argument("semigroup_apply: t >= 0 required, got " + std::to_string(t));
    if (field.size() != semi.rate.size()) throw std::invalid_argument("semigroup_apply: size mismatch");
    CArray out(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) out[i] = field[i] * semi.fourier_factor(t, i);
    return out;
}

// Derivatives of w -> K_hat(w) evaluated on the integer frequency grid.
struct KernelDerivatives {
    RArray d1, d2;   // d/dw_j for j = 1, 2
    RArray dd1, dd2; // d^2/dw_j^2
};

inline KernelDerivatives kernel_derivatives(const KacKernel& k)
{
    const Torus& T = k.torus;
    const int L = T.side;
    const double pe = std::numbers::pi * T.eps;
    CArray a(T.size()), b(T.size()), c(T.size()), d(T.size());
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j) {
            std::size_t idx = static_cast<std::size_t>(i) * L + j;
            double v = k.values[idx];
            double x1 = pe * T.centered(i), x2 = pe * T.centered(j);
            a[idx] = v * x1;
            b[idx] = v * x2;
            c[idx] = v * x1 * x1;
            d[idx] = v * x2 * x2;
        }
    for (CArray* p : {&a, &b, &c, &d}) fft2(*p, L, -1);
    KernelDerivatives r;
    r.d1.resize(T.size());
    r.d2.resize(T.size());
    r.dd1.resize(T.size());
    r.dd2.resize(T.size());
    for (std::size_t i = 0; i < T.size(); ++i) {
        r.d1[i] = a[i].imag();
        r.d2[i] = b[i].imag();
        r.dd1[i] = -c[i].real();
        r.dd2[i] = -d[i].real();
    }
    return r;
}

struct KernelEstimateReport {
    double gamma = 0.0;
    int N = 0;
    int b = 1;
    double raw_sum = 0.0;
    double max_imag = 0.0;
    std::size_t nonzero = 0;
    // sup over 0 < |w| <= gamma^-b of the normalized deviations
    double k24 = 0.0;
    double k23 = 0.0;
    double k22 = 0.0;
    // first-regime-of-frequencies estimates, over all w
    double k1_abs = 0.0;  // max |K_hat|
    double k1_d = 0.0;    // max |dK| / (gamma^b (|gamma^b w| ^ 1))
    double k1_dd = 0.0;   // max |d^2 K| / gamma^2b
    // |w| >= gamma^-b
    double k3b_0 = 0.0;
    double k3b_1 = 0.0;
    double k3b_2 = 0.0;
    // min over w != 0 of (1 - K_hat) / (|gamma^b w|^2 ^ 1)
    double k2_min = 0.0;
};

inline KernelEstimateReport verify_kernel_estimates(const KacKernel& k, int b)
{
    const Torus& T = k.torus;
    const int L = T.side;
    const double g = k.gamma;
    const double gb = std::pow(g, b), g2b = gb * gb;
    const double pi2 = std::numbers::pi * std::numbers::pi;
    const double cut = 1.0 / gb;
    KernelDerivatives D = kernel_derivatives(k);
    KernelEstimateReport r;
    r.gamma = g;
    r.N = T.N;
    r.b = b;
    r.raw_sum = k.raw_sum;
    r.max_imag = k.max_imag;
    r.nonzero = k.nonzero;
    r.k2_min = std::numeric_limits<double>::infinity();
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j) {
            std::size_t idx = static_cast<std::size_t>(i) * L + j;
            const double w1 = T.centered(i), w2 = T.centered(j);
            const double n2 = w1 * w1 + w2 * w2;
            const double n = std::sqrt(n2);
            const double kh = k.fourier[idx];
            const double dk[2] = {D.d1[idx], D.d2[idx]};
            const double ddk[2] = {D.dd1[idx], D.dd2[idx]};
            const double w[2] = {w1, w2};
            r.k1_abs = std::max(r.k1_abs, std::abs(kh));
            const double gw = gb * n;
            for (int c = 0; c < 2; ++c) {
                if (n > 0.0) r.k1_d = std::max(r.k1_d, std::abs(dk[c]) / (gb * std::min(gw, 1.0)));
                r.k1_dd = std::max(r.k1_dd, std::abs(ddk[c]) / g2b);
            }
            if (n == 0.0) continue;
            r.k2_min = std::min(r.k2_min, (1.0 - kh) / std::min(gw * gw, 1.0));
            if (n <= cut) {
                r.k24 = std::max(r.k24, std::abs((1.0 - kh) / g2b - pi2 * n2) / (gb * n2 * n));
                for (int c = 0; c < 2; ++c) {
                    r.k23 = std::max(r.k23, std::abs(-dk[c] / g2b - 2.0 * pi2 * w[c]) / (gb * n2));
                    r.k22 = std::max(r.k22, std::abs(-ddk[c] / g2b - 2.0 * pi2) / (gb * n));
                }
            }
            if (n >= cut) {
                r.k3b_0 = std::max(r.k3b_0, gw * gw * std::abs(kh));
                for (int c = 0; c < 2; ++c) {
                    r.k3b_1 = std::max(r.k3b_1, gw * gw * std::abs(dk[c]) / gb);
                    r.k3b_2 = std::max(r.k3b_2, gw * gw * std::abs(ddk[c]) / g2b);
                }
            }
        }
    return r;
}

// sup_x |P_t * K(x)| on the grid, divided by min(t^-1 log(1/g)^2, g^-2b log(1/g)).
struct HeatKernelBound {
    double t = 0.0;
    double sup = 0.0;
    double bound = 0.0;
    double ratio = 0.0;
};

inline HeatKernelBound heat_kernel_bound(const KacKernel& k, const SemigroupKernel& semi, int b_freq_exp, double t)
{
    if (!(t >= 0.0)) throw std::invalid_argument("heat_kernel_bound: t >= 0 required");
    const int L = k.torus.side;
    CArray f(k.torus.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = k.fourier[i] * semi.fourier_factor(t, i);
    fft2(f, L, +1);
    double sup = 0.0;
    for (const auto& v : f) sup = std::max(sup, std::abs(v.real()) * 0.25);
    const double lg = std::log(1.0 / k.gamma);
    double bound = std::pow(k.gamma, -2.0 * b_freq_exp) * lg;
    if (t > 0.0) bound = std::min(bound, lg * lg / t);
    return {t, sup, bound, sup / bound};
}

} // namespace kbc
