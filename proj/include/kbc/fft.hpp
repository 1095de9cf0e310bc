#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <stdexcept>
#include <utility>
#include <vector>

namespace kbc {

using cplx = std::complex<double>;
using CArray = std::vector<cplx>;
using RArray = std::vector<double>;

namespace detail {

class PlanCache {
public:
    static PlanCache& instance()
    {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(int n, int sign)
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto key = std::make_pair(n, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n * n));
        fftw_plan p = fftw_plan_dft_2d(n, n, buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(buf);
        if (!p) throw std::runtime_error("fftw: plan creation failed");
        plans_.emplace(key, p);
        return p;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

private:
    PlanCache() = default;
    ~PlanCache()
    {
        for (auto& kv : plans_) fftw_destroy_plan(kv.second);
    }
    std::mutex mu_;
    std::map<std::pair<int, int>, fftw_plan> plans_;
};

} // namespace detail

// In-place unnormalized 2D DFT of an n x n row-major array.
// sign = -1: F(w) = sum_k f(k) exp(-2 pi i w.k / n); sign = +1 the inverse kernel.
inline void fft2(CArray& a, int n, int sign)
{
    if (a.size() != static_cast<std::size_t>(n) * n)
        throw std::invalid_argument("fft2: array size does not match n*n");
    fftw_plan p = detail::PlanCache::instance().get(n, sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD);
    auto* d = reinterpret_cast<fftw_complex*>(a.data());
    fftw_execute_dft(p, d, d);
}

inline CArray to_complex(const RArray& r)
{
    CArray c(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) c[i] = r[i];
    return c;
}

inline RArray real_part(const CArray& c)
{
    RArray r(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) r[i] = c[i].real();
    return r;
}

// Smallest m >= n whose only prime factors are 2, 3, 5, 7.
inline int good_fft_size(int n)
{
    for (int m = n;; ++m) {
        int r = m;
        for (int p : {2, 3, 5, 7})
            while (r % p == 0) r /= p;
        if (r == 1) return m;
    }
}

} // namespace kbc
