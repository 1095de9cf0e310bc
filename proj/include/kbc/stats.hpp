#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace kbc {

struct Estimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;

    double lo95() const { return mean - 1.96 * se; }
    double hi95() const { return mean + 1.96 * se; }
};

inline double mean_of(const std::vector<double>& x)
{
    if (x.empty()) throw std::invalid_argument("mean of an empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance_of(const std::vector<double>& x)
{
    if (x.size() < 2) return 0.0;
    const double m = mean_of(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

inline Estimate mean_estimate(const std::vector<double>& x)
{
    return {mean_of(x), std::sqrt(variance_of(x) / static_cast<double>(x.size())), x.size()};
}

// Batch means: contiguous batches whose sizes differ by at most one.
inline Estimate batch_means(const std::vector<double>& x, std::size_t batches)
{
    const std::size_t n = x.size();
    if (n == 0) throw std::invalid_argument("batch means of an empty sample");
    batches = std::clamp<std::size_t>(batches, 1, n);
    if (batches < 2) return {mean_of(x), 0.0, n};
    std::vector<double> means(batches);
    std::size_t pos = 0;
    for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t len = n / batches + (b < n % batches ? 1 : 0);
        double s = 0.0;
        for (std::size_t i = 0; i < len; ++i) s += x[pos + i];
        means[b] = s / static_cast<double>(len);
        pos += len;
    }
    return {mean_of(x), std::sqrt(variance_of(means) / static_cast<double>(batches)), n};
}

inline double combined_se(const Estimate& a, const Estimate& b) { return std::hypot(a.se, b.se); }

// Overlapping 95% intervals.
inline bool ci_overlap(const Estimate& a, const Estimate& b)
{
    return std::abs(a.mean - b.mean) <= 1.96 * (a.se + b.se);
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double slope_se = 0.0;
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("linear fit needs >= 2 paired points");
    const double n = static_cast<double>(x.size());
    const double mx = mean_of(x), my = mean_of(y);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("linear fit with constant abscissa");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        sse += r * r;
    }
    f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    f.slope_se = x.size() > 2 ? std::sqrt(sse / (n - 2.0) / sxx) : 0.0;
    return f;
}

// y ~ C x^p, fitted on logs; returns p in slope.
inline LinearFit power_law_fit(const std::vector<double>& x, const std::vector<double>& y)
{
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("power-law fit needs positive data");
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    return linear_fit(lx, ly);
}

struct KsResult {
    double D = 0.0;
    double p = 1.0;
};

// Asymptotic Kolmogorov tail Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda)
{
    if (lambda < 0.2) return 1.0;
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double t = std::exp(-2.0 * k * k * lambda * lambda);
        s += (k % 2 ? 2.0 : -2.0) * t;
        if (t < 1e-16) break;
    }
    return std::clamp(s, 0.0, 1.0);
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b)
{
    if (a.empty() || b.empty()) throw std::invalid_argument("KS test needs non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double D = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        D = std::max(D, std::abs(i / na - j / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return {D, kolmogorov_q((ne + 0.12 + 0.11 / ne) * D)};
}

} // namespace kbc
