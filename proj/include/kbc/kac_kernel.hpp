#pragma once

#include "kbc/fft.hpp"
#include "kbc/mother_kernel.hpp"
#include "kbc/torus.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kbc {

// A contiguous run of nonzero kernel values along one lattice row:
// offsets (d1, d2 .. d2 + count - 1), values at stencil_values[start ..].
struct StencilRun {
    int d1 = 0;
    int d2 = 0;
    int count = 0;
    std::size_t start = 0;
};

struct KacKernel {
    double gamma = 0.0;
    Torus torus;
    MotherKernel mother;
    RArray values;       // kappa_gamma(k) at index k mod side
    RArray fourier;      // real part of K_hat(w) at index w mod side
    double max_imag = 0; // largest |Im K_hat|
    double raw_sum = 0;  // sum over k != 0 of gamma^2 K(gamma k) before normalization
    std::size_t nonzero = 0;
    std::vector<StencilRun> runs;
    RArray stencil_values;

    double value(int k1, int k2) const { return values[torus.index(k1, k2)]; }
    double fourier_at(int w1, int w2) const { return fourier[torus.index(w1, w2)]; }
};

// Fills the stencil runs and the Fourier transform from k.values, scanning
// offsets up to reach in each direction.
inline void finalize_kernel(KacKernel& k, int reach)
{
    const Torus& torus = k.torus;
    const int R = std::min(reach, torus.N);
    k.runs.clear();
    k.stencil_values.clear();
    for (int a = -R; a <= R; ++a) {
        int b = -R;
        while (b <= R) {
            while (b <= R && k.values[torus.index(a, b)] == 0.0) ++b;
            if (b > R) break;
            StencilRun run;
            run.d1 = a;
            run.d2 = b;
            run.start = k.stencil_values.size();
            while (b <= R && k.values[torus.index(a, b)] != 0.0) {
                k.stencil_values.push_back(k.values[torus.index(a, b)]);
                ++b;
            }
            run.count = static_cast<int>(k.stencil_values.size() - run.start);
            k.runs.push_back(run);
        }
    }
    k.nonzero = k.stencil_values.size();

    CArray f = to_complex(k.values);
    fft2(f, torus.side, -1);
    k.fourier.resize(f.size());
    k.max_imag = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        k.fourier[i] = f[i].real();
        k.max_imag = std::max(k.max_imag, std::abs(f[i].imag()));
    }
}

// Kernel with arbitrary values on a torus of any size (no support check).
// Used for oracles on tori too small for a Kac kernel.
inline KacKernel kernel_from_values(const Torus& torus, RArray values, double gamma = 0.0)
{
    if (values.size() != torus.size()) throw std::invalid_argument("kernel_from_values: size mismatch");
    KacKernel k;
    k.gamma = gamma;
    k.torus = torus;
    k.values = std::move(values);
    k.raw_sum = 0.0;
    for (double v : k.values) k.raw_sum += v;
    finalize_kernel(k, torus.N);
    return k;
}

inline KacKernel build_kac_kernel(double gamma, const Torus& torus, const MotherKernel& mother)
{
    if (!(gamma > 0.0) || gamma >= 1.0 / 3.0)
        throw std::invalid_argument("kac kernel: 0 < gamma < 1/3 required, got " + std::to_string(gamma));
    if (3.0 / gamma > torus.N)
        throw std::invalid_argument("kac kernel: support 3/gamma = " + std::to_string(3.0 / gamma) +
                                    " exceeds N = " + std::to_string(torus.N));
    KacKernel k;
    k.gamma = gamma;
    k.torus = torus;
    k.mother = mother;
    const int N = torus.N;
    k.values.assign(torus.size(), 0.0);
    const int reach = static_cast<int>(std::ceil(mother.support_radius() / gamma));
    const int R = std::min(reach, N);

    double sum = 0.0;
    for (int a = -R; a <= R; ++a)
        for (int b = -R; b <= R; ++b) {
            if (a == 0 && b == 0) continue;
            double v = gamma * gamma * mother(gamma * a, gamma * b);
            if (v != 0.0) {
                k.values[torus.index(a, b)] = v;
                sum += v;
            }
        }
    k.raw_sum = sum;
    for (double& v : k.values) v /= sum;
    finalize_kernel(k, R);
    return k;
}

// Cyclic convolution (kappa * f)(k) = sum_j kappa(k - j) f(j) via FFT.
inline RArray convolve(const RArray& field, const KacKernel& kernel)
{
    if (field.size() != kernel.torus.size())
        throw std::invalid_argument("convolve: field size " + std::to_string(field.size()) +
                                    " does not match torus size " + std::to_string(kernel.torus.size()));
    const int L = kernel.torus.side;
    CArray f = to_complex(field);
    fft2(f, L, -1);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] *= kernel.fourier[i];
    fft2(f, L, +1);
    const double s = 1.0 / static_cast<double>(kernel.torus.size());
    RArray out(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i].real() * s;
    return out;
}

template <class Spin>
RArray convolve_spins(const std::vector<Spin>& spins, const KacKernel& kernel)
{
    RArray f(spins.begin(), spins.end());
    return convolve(f, kernel);
}

// field[k] += scale * kappa(k - j) over the stencil.
inline void add_stencil(RArray& field, const KacKernel& kernel, int j1, int j2, double scale)
{
    const int L = kernel.torus.side;
    const double* sv = kernel.stencil_values.data();
    double* h = field.data();
    for (const auto& run : kernel.runs) {
        int row = j1 + run.d1;
        row = row >= L ? row - L : (row < 0 ? row + L : row);
        double* base = h + static_cast<std::size_t>(row) * L;
        int c0 = j2 + run.d2;
        c0 = c0 >= L ? c0 - L : (c0 < 0 ? c0 + L : c0);
        const double* v = sv + run.start;
        int first = std::min(run.count, L - c0);
        double* p = base + c0;
        for (int t = 0; t < first; ++t) p[t] += scale * v[t];
        for (int t = first; t < run.count; ++t) base[t - first] += scale * v[t];
    }
}

} // namespace kbc
