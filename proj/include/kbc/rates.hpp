#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kbc {

// Heat-bath jump probabilities for the new spin value at a ringing site.
struct JumpRates {
    double p_minus = 0.0;
    double p_zero = 0.0;
    double p_plus = 0.0;
    double normalizer = 0.0; // N(h) = e^{-bh+theta} + 1 + e^{bh+theta}
    double log_shift = 0.0;  // exponents were shifted by this before exponentiating

    double operator[](int s) const { return s < 0 ? p_minus : (s == 0 ? p_zero : p_plus); }
};

inline JumpRates jump_rates(double h, double beta, double theta)
{
    const double bh = beta * h;
    const double em = -bh + theta, ep = bh + theta;
    const double shift = std::max({em, 0.0, ep});
    const double wm = std::exp(em - shift), w0 = std::exp(-shift), wp = std::exp(ep - shift);
    const double s = w0 + (wm + wp);
    JumpRates r;
    r.p_minus = wm / s;
    r.p_zero = w0 / s;
    r.p_plus = wp / s;
    r.log_shift = shift;
    r.normalizer = s * std::exp(shift);
    return r;
}

// Rates of the reference process: jump_rates at h = 0 and theta = theta_c.
inline JumpRates reference_rates(double theta_c) { return jump_rates(0.0, 0.0, theta_c); }

// Mean and second moment of the new spin: m = p+ - p-, q = p+ + p-.
inline double rate_mean(const JumpRates& r) { return r.p_plus - r.p_minus; }
inline double rate_second_moment(const JumpRates& r) { return r.p_plus + r.p_minus; }

// sum over s' of (s' - s)^2 p(s').
inline double jump_variance(const JumpRates& r, int s)
{
    const double sd = s;
    return sd * sd - 2.0 * sd * rate_mean(r) + rate_second_moment(r);
}

// Closed-form coefficient of (beta h)^n in the expansion of the rate to s_bar.
inline double taylor_coefficient(double theta, int s_bar, int n)
{
    if (s_bar < -1 || s_bar > 1) throw std::invalid_argument("taylor_coefficient: spin must be -1, 0 or 1");
    if (n != 1 && n != 3 && n != 5)
        throw std::invalid_argument("taylor_coefficient: n must be 1, 3 or 5, got " + std::to_string(n));
    const double s = s_bar, s2 = s * s;
    const double a = std::exp(theta);
    const double d = 1.0 + 2.0 * a;
    const double pre = s * std::exp(s2 * theta);
    if (n == 1) return pre / d;
    if (n == 3) return pre * (s2 + 2.0 * (s2 - 3.0) * a) / (6.0 * d * d);
    const double u = s2 - 5.0;
    return pre * (4.0 * u * u * a * a - 2.0 * (8.0 * s2 + 5.0) * a + s2) / (120.0 * d * d * d);
}

// A(sigma) = sum over s' of (s' - sigma)^2 P_ref(s').
inline double average_rate_function(int sigma, double theta_c)
{
    if (sigma < -1 || sigma > 1) throw std::invalid_argument("average_rate_function: spin must be -1, 0 or 1");
    const double a = std::exp(theta_c);
    const double n = 1.0 + 2.0 * a;
    return sigma == 0 ? 2.0 * a / n : (4.0 * a + 1.0) / n;
}

// Expectation of A under the reference law.
inline double average_rate_mean(double theta_c)
{
    const double a = std::exp(theta_c);
    return 4.0 * a / (1.0 + 2.0 * a);
}

// |c(s') w(s) - c(s) w(s')| with Gibbs weights w(s) = exp(s b h + s^2 theta),
// both weights rescaled by the largest exponent so the residual is relative.
inline double detailed_balance_check(double h, double beta, double theta, int s, int s_prime)
{
    if (s == s_prime) throw std::invalid_argument("detailed_balance_check: s and s' must differ");
    if (s < -1 || s > 1 || s_prime < -1 || s_prime > 1)
        throw std::invalid_argument("detailed_balance_check: spins must be -1, 0 or 1");
    const JumpRates r = jump_rates(h, beta, theta);
    auto weight = [&](int x) { return std::exp(x * beta * h + x * x * theta - r.log_shift); };
    return std::abs(r[s_prime] * weight(s) - r[s] * weight(s_prime));
}

// Sum over s' of s' p(s'), the single-site drift that the mean-field
// coefficients expand.
inline double drift_mean(double h, double beta, double theta) { return rate_mean(jump_rates(h, beta, theta)); }

} // namespace kbc
