#pragma once

#include <gsl/gsl_integration.h>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kbc {

enum class KernelProfile { annulus_poly5, centered_exp_bump };

inline std::string to_string(KernelProfile p)
{
    switch (p) {
    case KernelProfile::annulus_poly5: return "annulus_poly5";
    case KernelProfile::centered_exp_bump: return "centered_exp_bump";
    }
    return "unknown";
}

inline KernelProfile kernel_profile_from_string(const std::string& s)
{
    if (s == "annulus_poly5") return KernelProfile::annulus_poly5;
    if (s == "centered_exp_bump") return KernelProfile::centered_exp_bump;
    throw std::invalid_argument("unknown kernel profile '" + s + "'");
}

// Unscaled radial profiles phi(r), both supported in r < 3.
inline double profile_phi(KernelProfile p, double r)
{
    switch (p) {
    case KernelProfile::annulus_poly5: {
        double u = r - 2.0;
        if (std::abs(u) >= 1.0) return 0.0;
        double w = 1.0 - u * u;
        double w2 = w * w;
        return w2 * w2 * w;
    }
    case KernelProfile::centered_exp_bump: {
        double s = r / 3.0;
        if (s >= 1.0) return 0.0;
        return std::exp(-1.0 / (1.0 - s * s));
    }
    }
    return 0.0;
}

inline double profile_max(KernelProfile p)
{
    return p == KernelProfile::annulus_poly5 ? 1.0 : std::exp(-1.0);
}

// Radii where phi loses smoothness or vanishes; used as panel breaks.
inline std::vector<double> profile_breaks(KernelProfile p)
{
    if (p == KernelProfile::annulus_poly5) return {1.0, 3.0};
    return {3.0};
}

class GaussLegendre {
public:
    explicit GaussLegendre(std::size_t n) : table_(gsl_integration_glfixed_table_alloc(n)), n_(n)
    {
        if (!table_) throw std::runtime_error("gauss-legendre table allocation failed");
    }
    ~GaussLegendre() { gsl_integration_glfixed_table_free(table_); }
    GaussLegendre(const GaussLegendre&) = delete;
    GaussLegendre& operator=(const GaussLegendre&) = delete;

    std::size_t size() const { return n_; }

    // Nodes and weights mapped to [a, b].
    std::pair<std::vector<double>, std::vector<double>> nodes(double a, double b) const
    {
        std::vector<double> x(n_), w(n_);
        for (std::size_t i = 0; i < n_; ++i) gsl_integration_glfixed_point(a, b, i, &x[i], &w[i], table_);
        return {x, w};
    }

private:
    gsl_integration_glfixed_table* table_;
    std::size_t n_;
};

// The mother kernel K(x) = c1 * phi(c2 |x|).
struct MotherKernel {
    KernelProfile profile = KernelProfile::annulus_poly5;
    double c1 = 1.0;
    double c2 = 1.0;
    double mass = 0.0;          // tensor-Gauss value of the integral of K
    double second_moment = 0.0; // tensor-Gauss value of the integral of K |x|^2
    double radial_mass = 0.0;   // independent radial quadrature
    double radial_second_moment = 0.0;
    int newton_iterations = 0;

    double support_radius() const { return 3.0 / c2; }
    double operator()(double r) const { return c1 * profile_phi(profile, c2 * r); }
    double operator()(double x, double y) const { return (*this)(std::hypot(x, y)); }
};

namespace detail {

inline std::pair<double, double> tensor_moments(KernelProfile p, double c1, double c2, std::size_t nodes)
{
    double rho = 3.0 / c2;
    GaussLegendre gl(nodes);
    auto [x, w] = gl.nodes(-rho, rho);
    double m0 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < nodes; ++i) {
        double r0 = 0.0, r2 = 0.0;
        for (std::size_t j = 0; j < nodes; ++j) {
            double rr = x[i] * x[i] + x[j] * x[j];
            double v = w[j] * profile_phi(p, c2 * std::sqrt(rr));
            r0 += v;
            r2 += v * rr;
        }
        m0 += w[i] * r0;
        m2 += w[i] * r2;
    }
    return {c1 * m0, c1 * m2};
}

inline std::pair<double, double> radial_moments(KernelProfile p, double c1, double c2)
{
    std::vector<double> br{0.0};
    for (double b : profile_breaks(p)) br.push_back(b / c2);
    GaussLegendre gl(40);
    double m0 = 0.0, m2 = 0.0;
    const int panels = 64;
    for (std::size_t s = 0; s + 1 < br.size(); ++s) {
        double h = (br[s + 1] - br[s]) / panels;
        for (int k = 0; k < panels; ++k) {
            auto [x, w] = gl.nodes(br[s] + k * h, br[s] + (k + 1) * h);
            for (std::size_t i = 0; i < x.size(); ++i) {
                double v = w[i] * 2.0 * std::numbers::pi * x[i] * profile_phi(p, c2 * x[i]);
                m0 += v;
                m2 += v * x[i] * x[i];
            }
        }
    }
    return {c1 * m0, c1 * m2};
}

} // namespace detail

// Solves for (c1, c2) so that the integral of K is 1 and the integral of
// K |x|^2 is 4, by Newton on the 256^2 tensor-Gauss moments.
inline MotherKernel build_mother_kernel(KernelProfile profile = KernelProfile::annulus_poly5)
{
    constexpr std::size_t nodes = 256;
    MotherKernel k;
    k.profile = profile;
    double c1 = 1.0, c2 = 1.0;
    int it = 0;
    for (; it < 50; ++it) {
        auto [m0, m2] = detail::tensor_moments(profile, c1, c2, nodes);
        double f0 = m0 - 1.0, f1 = m2 - 4.0;
        if (std::abs(f0) <= 1e-13 && std::abs(f1) <= 4e-13) break;
        // Scaling: m0 ~ c1 c2^-2, m2 ~ c1 c2^-4.
        double j00 = m0 / c1, j01 = -2.0 * m0 / c2;
        double j10 = m2 / c1, j11 = -4.0 * m2 / c2;
        double det = j00 * j11 - j01 * j10;
        double d1 = (f0 * j11 - j01 * f1) / det;
        double d2 = (j00 * f1 - j10 * f0) / det;
        double lam = 1.0;
        while (c1 - lam * d1 <= 0.0 || c2 - lam * d2 <= 0.0) lam *= 0.5;
        c1 -= lam * d1;
        c2 -= lam * d2;
    }
    k.c1 = c1;
    k.c2 = c2;
    k.newton_iterations = it;
    std::tie(k.mass, k.second_moment) = detail::tensor_moments(profile, c1, c2, nodes);
    std::tie(k.radial_mass, k.radial_second_moment) = detail::radial_moments(profile, c1, c2);

    const std::string name = to_string(profile);
    if (it == 50) throw std::runtime_error("mother kernel '" + name + "': moment Newton did not converge");
    if (k.support_radius() > 3.0 + 1e-12)
        throw std::invalid_argument("mother kernel '" + name + "': matching the second moment needs support radius " +
                                    std::to_string(k.support_radius()) + " > 3");
    if (std::abs(k.radial_mass - 1.0) > 1e-8 || std::abs(k.radial_second_moment / 4.0 - 1.0) > 1e-8)
        throw std::invalid_argument("mother kernel '" + name + "': moment check failed (mass " +
                                    std::to_string(k.radial_mass) + ", second moment " +
                                    std::to_string(k.radial_second_moment) + ")");
    if (c1 * profile_max(profile) > 1.0)
        throw std::invalid_argument("mother kernel '" + name + "': values exceed 1");
    return k;
}

} // namespace kbc
