#pragma once

#include "kbc/kac_kernel.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace kbc {

enum class RegimeKind { Phi4, Phi6 };

inline std::string to_string(RegimeKind r) { return r == RegimeKind::Phi4 ? "phi4" : "phi6"; }

inline RegimeKind regime_from_string(const std::string& s)
{
    if (s == "phi4" || s == "Phi4") return RegimeKind::Phi4;
    if (s == "phi6" || s == "Phi6") return RegimeKind::Phi6;
    throw std::invalid_argument("unknown regime '" + s + "' (expected phi4 or phi6)");
}

// b_time: exponent in the semigroup exp(t gamma^-b (K_hat - 1)).
// b_freq: frequency scale |w| <= gamma^-b of the kernel estimates.
inline int b_time(RegimeKind r) { return r == RegimeKind::Phi4 ? 2 : 4; }
inline int b_freq(RegimeKind r) { return r == RegimeKind::Phi4 ? 1 : 2; }

struct ScalingParameters {
    RegimeKind regime = RegimeKind::Phi4;
    double gamma = 0.0;
    int N = 0;
    double eps = 0.0;
    double alpha = 0.0;
    double delta = 0.0;
    double c_gamma2 = 0.0; // eps / gamma^2 (Phi4) or eps / gamma^3 (Phi6)

    Torus torus() const { return Torus(N); }
};

inline int regime_N(RegimeKind r, double gamma)
{
    double p = r == RegimeKind::Phi4 ? 2.0 : 3.0;
    return static_cast<int>(std::floor(std::pow(gamma, -p) * (1.0 + 1e-12)));
}

inline ScalingParameters derive_scaling(RegimeKind r, double gamma)
{
    if (!(gamma > 0.0) || gamma >= 1.0 / 3.0)
        throw std::invalid_argument("gamma < 1/3 required (and positive), got " + std::to_string(gamma));
    ScalingParameters s;
    s.regime = r;
    s.gamma = gamma;
    s.N = regime_N(r, gamma);
    s.eps = 2.0 / (2.0 * s.N + 1.0);
    s.alpha = std::pow(gamma, b_time(r));
    s.delta = gamma;
    s.c_gamma2 = s.eps / std::pow(gamma, r == RegimeKind::Phi4 ? 2.0 : 3.0);
    return s;
}

struct MeanFieldCoefficients {
    double A = 0.0;
    double B = 0.0;
    double C = 0.0;
};

inline MeanFieldCoefficients mean_field_coefficients(double a, double beta)
{
    if (!(a > 0.0) || !(beta > 0.0)) throw std::invalid_argument("mean_field_coefficients: a, beta > 0 required");
    const double t = 2.0 * a + 1.0;
    MeanFieldCoefficients m;
    m.A = 2.0 * a * beta / t - 1.0;
    m.B = -a * (4.0 * a - 1.0) * beta * beta * beta / (3.0 * t * t);
    m.C = a * (64.0 * a * a - 26.0 * a + 1.0) * std::pow(beta, 5) / (60.0 * t * t * t);
    return m;
}

inline double critical_beta(double a)
{
    if (!(a > 0.0)) throw std::invalid_argument("critical_beta: a > 0 required");
    return (2.0 * a + 1.0) / (2.0 * a);
}

// Inverse of critical_beta.
inline double critical_a(double beta_c)
{
    if (!(beta_c > 1.0)) throw std::invalid_argument("critical_a: beta_c > 1 required");
    return 1.0 / (2.0 * (beta_c - 1.0));
}

// Cubic coefficient of the limiting Phi^4 equation at a point (a_c, beta_c) of the critical curve.
inline double phi4_cubic_coefficient(double a_c)
{
    const double bc = critical_beta(a_c);
    const double t = 2.0 * a_c + 1.0;
    return -a_c * (4.0 * a_c - 1.0) * bc * bc * bc / (3.0 * t * t);
}

inline constexpr double phi6_quintic_coefficient = -9.0 / 20.0;
inline constexpr double tricritical_a = 0.25;
inline constexpr double tricritical_beta = 3.0;

struct RenormalizationReport {
    double c_gamma = 0.0;
    double comparison = 0.0; // sum over 0 < |w| < 1/gamma of 1/(4 pi^2 |w|^2)
    double difference = 0.0; // beta_c c_gamma - comparison
};

inline RenormalizationReport renormalization_constant(const RArray& fourier, const Torus& torus, double gamma,
                                                      RegimeKind regime, double beta_c)
{
    const int L = torus.side;
    const double scale = std::pow(gamma, -b_time(regime));
    double sum = 0.0;
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j) {
            if (i == 0 && j == 0) continue;
            double kh = fourier[static_cast<std::size_t>(i) * L + j];
            double gap = 1.0 - kh;
            if (!(gap > 0.0))
                throw std::runtime_error("renormalization_constant: 1 - K_hat <= 0 at w = (" +
                                         std::to_string(torus.centered(i)) + "," +
                                         std::to_string(torus.centered(j)) + ")");
            sum += kh * kh / (scale * gap);
        }
    RenormalizationReport r;
    r.c_gamma = sum / (4.0 * beta_c);
    const double cut = 1.0 / gamma;
    const int W = static_cast<int>(std::ceil(cut));
    double cmp = 0.0;
    for (int a = -W; a <= W; ++a)
        for (int b = -W; b <= W; ++b) {
            double w2 = static_cast<double>(a) * a + static_cast<double>(b) * b;
            if (w2 > 0.0 && w2 < cut * cut) cmp += 1.0 / (4.0 * std::numbers::pi * std::numbers::pi * w2);
        }
    r.comparison = cmp;
    r.difference = beta_c * r.c_gamma - cmp;
    return r;
}

inline RenormalizationReport renormalization_constant(const KacKernel& k, RegimeKind regime, double beta_c)
{
    return renormalization_constant(k.fourier, k.torus, k.gamma, regime, beta_c);
}

struct ModelParams {
    RegimeKind regime = RegimeKind::Phi4;
    double gamma = 0.0;
    double a = 0.0;
    double beta = 0.0;
    double theta = 0.0;
    double a_c = 0.0;
    double beta_c = 0.0;
    double theta_c = 0.0;
    double frak_a1 = 0.0;
    double frak_a3 = 0.0;
    double c_gamma = 0.0;
    std::array<double, 2> residuals{0.0, 0.0};
    int iterations = 0;
};

inline double phi4_tuning_residual(const ModelParams& p)
{
    const double t = 2.0 * p.a_c + 1.0;
    double rhs = p.gamma * p.gamma *
                 (p.a_c * (4.0 * p.a_c - 1.0) * std::pow(p.beta_c, 3) * p.c_gamma / (t * t) + p.frak_a1);
    return 2.0 * p.a * p.beta / (2.0 * p.a + 1.0) - 1.0 - rhs;
}

inline ModelParams tune_phi4(double gamma, double a_c, double frak_a1, double c_gamma)
{
    if (!(a_c > 0.0)) throw std::invalid_argument("tune_phi4: a_c > 0 required");
    ModelParams p;
    p.regime = RegimeKind::Phi4;
    p.gamma = gamma;
    p.a_c = a_c;
    p.beta_c = critical_beta(a_c);
    p.theta_c = std::log(a_c);
    p.frak_a1 = frak_a1;
    p.c_gamma = c_gamma;
    p.a = a_c;
    p.theta = std::log(p.a);
    const double t = 2.0 * a_c + 1.0;
    double rhs = gamma * gamma * (a_c * (4.0 * a_c - 1.0) * std::pow(p.beta_c, 3) * c_gamma / (t * t) + frak_a1);
    p.beta = (1.0 + rhs) * (2.0 * p.a + 1.0) / (2.0 * p.a);
    p.residuals[0] = phi4_tuning_residual(p);
    return p;
}

inline std::array<double, 2> phi6_residuals(double a, double beta, double gamma, double a1, double a3, double c)
{
    const double t = 2.0 * a + 1.0;
    double f1 = -a * (4.0 * a - 1.0) * beta * beta * beta / (3.0 * t * t) - gamma * gamma * (4.5 * c + a3);
    double f2 = 2.0 * a * beta / t - 1.0 - std::pow(gamma, 4) * (-3.0 * c * a3 - 6.75 * c * c + a1);
    return {f1, f2};
}

// Truncated power series for the tricritical tuning, through O(gamma^4).
inline std::array<double, 2> tricritical_series(double gamma, double a1, double a3, double c)
{
    const double g2 = gamma * gamma, g4 = g2 * g2;
    double a = 0.25 - g2 * (9.0 * c / 8.0 + a3 / 4.0) + (5.0 / 48.0) * g4 * (81.0 * c * c + 36.0 * c * a3 + 4.0 * a3 * a3);
    double b = 3.0 + g2 * (9.0 * c + 2.0 * a3) + g4 * (-189.0 * c * c / 4.0 + 3.0 * a1 - 21.0 * c * a3 - 4.0 * a3 * a3 / 3.0);
    return {a, b};
}

inline ModelParams tune_phi6(double gamma, double frak_a1, double frak_a3, double c_gamma)
{
    ModelParams p;
    p.regime = RegimeKind::Phi6;
    p.gamma = gamma;
    p.a_c = tricritical_a;
    p.beta_c = tricritical_beta;
    p.theta_c = std::log(tricritical_a);
    p.frak_a1 = frak_a1;
    p.frak_a3 = frak_a3;
    p.c_gamma = c_gamma;
    auto [a, b] = tricritical_series(gamma, frak_a1, frak_a3, c_gamma);
    auto res = phi6_residuals(a, b, gamma, frak_a1, frak_a3, c_gamma);
    auto norm = [](const std::array<double, 2>& r) { return std::hypot(r[0], r[1]); };
    int it = 0;
    for (; it < 50 && norm(res) > 1e-13; ++it) {
        const double t = 2.0 * a + 1.0;
        // d/da and d/dbeta of f1 = -a(4a-1) b^3 / (3 t^2), f2 = 2ab/t - 1.
        double g = a * (4.0 * a - 1.0);
        double dg = 8.0 * a - 1.0;
        double j00 = -b * b * b / 3.0 * (dg * t - 4.0 * g) / (t * t * t);
        double j01 = -g * b * b / (t * t);
        double j10 = 2.0 * b / (t * t);
        double j11 = 2.0 * a / t;
        double det = j00 * j11 - j01 * j10;
        double da = (res[0] * j11 - j01 * res[1]) / det;
        double db = (j00 * res[1] - j10 * res[0]) / det;
        double lam = 1.0;
        double r0 = norm(res);
        for (int k = 0; k < 30; ++k) {
            double an = a - lam * da, bn = b - lam * db;
            if (an > 0.0 && bn > 0.0) {
                auto rn = phi6_residuals(an, bn, gamma, frak_a1, frak_a3, c_gamma);
                if (norm(rn) < r0 || k == 29) {
                    a = an;
                    b = bn;
                    res = rn;
                    break;
                }
            }
            lam *= 0.5;
        }
    }
    p.iterations = it;
    p.a = a;
    p.beta = b;
    p.theta = std::log(a);
    p.residuals = res;
    if (norm(res) > 1e-12)
        throw std::runtime_error("tune_phi6: Newton did not converge, residual " + std::to_string(norm(res)));
    return p;
}

} // namespace kbc
