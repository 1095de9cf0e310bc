#pragma once

#include "kbc/field.hpp"
#include "kbc/kac_kernel.hpp"
#include "kbc/kernel_estimates.hpp"
#include "kbc/rates.hpp"
#include "kbc/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace kbc {

// Mean and second moment of the new spin as a function of the local field,
// for the tuned rates or, once the stop switch has fired, the reference rates.
struct RateModel {
    double beta = 0.0;
    double theta = 0.0;
    double theta_c = 0.0;
    bool switched = false;

    JumpRates rates(double h) const { return switched ? reference_rates(theta_c) : jump_rates(h, beta, theta); }

    // m = p+ - p-, q = p+ + p-.
    std::pair<double, double> moments(double h) const
    {
        if (switched) {
            double a = std::exp(theta_c);
            return {0.0, 2.0 * a / (1.0 + 2.0 * a)};
        }
        const double x = beta * h, u = std::abs(x);
        const double shift = std::max(theta + u, 0.0);
        const double wp = std::exp(theta + u - shift), w0 = std::exp(-shift), wm = std::exp(theta - u - shift);
        const double den = w0 + (wm + wp);
        const double m = (wp - wm) / den;
        return {x < 0.0 ? -m : m, (wp + wm) / den};
    }
};

struct TrackerConfig {
    int substeps = 16;                  // fine steps per unit of microscopic time
    bool track_z = true;                // Fourier-space martingale and stochastic convolution
    std::vector<std::pair<int, int>> probes; // lattice sites for R, brackets and iterated integrals
    double probe_terminal_time = 1.0;   // macro time t in R(s, x) = int_0^s P_{t-r} dM(r, x)
};

struct ProbeState {
    int k1 = 0, k2 = 0;
    IteratedIntegral R;        // R^{:m:} and [R]
    double angle_R = 0.0;      // <R>
    double angle_M = 0.0;      // <M>
    double square_M = 0.0;     // [M]
    double drift_rate = 0.0;   // left-point drift of R over the current interval
    double angle_rate = 0.0;   // left-point rate of <R>
    double angle_m_rate = 0.0; // left-point rate of <M>
    double last_time = 0.0;    // macro time up to which R has been advanced
    double sup_Q = 0.0;
    double sup_gap[IteratedIntegral::max_order + 1] = {0, 0, 0, 0, 0, 0};
    bool active = true;
};

// Tracks M = X - X0 - int D, the stochastic convolution Z, and probe-site
// quantities, on a fine time grid interleaved with the event loop.
class MartingaleTracker {
public:
    MartingaleTracker() = default;

    void attach(const KacKernel& k, const ScalingParameters& sc, const TrackerConfig& cfg)
    {
        kernel_ = &k;
        scaling_ = sc;
        cfg_ = cfg;
        if (cfg.substeps < 1) throw std::invalid_argument("tracker: substeps >= 1 required");
        if (cfg.probes.size() > 16) throw std::invalid_argument("tracker: at most 16 probe sites");
        semi_ = make_semigroup(k, scaling_.regime);
        const std::size_t n = k.torus.size();
        if (cfg_.track_z) {
            Zhat_.assign(n, 0.0);
            drift_.assign(n, 0.0);
            Mhat_.assign(n, 0.0);
        }
        probes_.clear();
        for (auto [a, b] : cfg.probes) {
            ProbeState p;
            p.k1 = k.torus.wrap(a);
            p.k2 = k.torus.wrap(b);
            probes_.push_back(p);
        }
        started_ = false;
    }

    bool attached() const { return kernel_ != nullptr; }
    const TrackerConfig& config() const { return cfg_; }

    // Called once at the initial time with the current configuration.
    template <class Spin>
    void start(const std::vector<Spin>& spins, const RArray& h, const RateModel& rm, double macro_time)
    {
        time_ = macro_time;
        compute_fields(spins, h, rm);
        if (cfg_.track_z) {
            X0_ = Xhat_;
            std::fill(Zhat_.begin(), Zhat_.end(), cplx(0.0));
            std::fill(drift_.begin(), drift_.end(), cplx(0.0));
            std::fill(Mhat_.begin(), Mhat_.end(), cplx(0.0));
        }
        for (auto& p : probes_) p.last_time = macro_time;
        started_ = true;
    }

    // Interval [time_, end] is about to be simulated; prepare left-point rates.
    void begin_interval(double end) { open_interval(time_, end); }

    // A spin change of size ds at site (j1, j2) at macro time t.
    void on_change(int j1, int j2, int ds, double t)
    {
        if (probes_.empty()) return;
        const Torus& T = kernel_->torus;
        const double inv_delta = 1.0 / scaling_.delta;
        for (auto& p : probes_) {
            if (!p.active) continue;
            std::size_t off = T.index(p.k1 - j1, p.k2 - j2);
            double J = kernel_R_[off] * ds;
            advance_drift(p, t);
            p.R.jump(J);
            double jm = kernel_->values[off] * inv_delta * ds;
            p.square_M += jm * jm;
            record_sups(p);
        }
    }

    // Close the interval at macro time t with the configuration at t.
    template <class Spin>
    void end_interval(const std::vector<Spin>& spins, const RArray& h, const RateModel& rm, double t)
    {
        const double dt = t - time_;
        CArray Xprev, Dprev;
        if (cfg_.track_z) {
            Xprev = Xhat_;
            Dprev = Dhat_;
        }
        // Right-point probe rates use the kernel of the interval being closed.
        std::vector<double> right_drift(probes_.size()), right_angle(probes_.size()), right_m(probes_.size());
        compute_fields(spins, h, rm);
        for (std::size_t i = 0; i < probes_.size(); ++i) probe_rates(probes_[i], right_drift[i], right_angle[i], right_m[i]);
        for (std::size_t i = 0; i < probes_.size(); ++i) {
            auto& p = probes_[i];
            if (!p.active) continue;
            advance_drift(p, t);
            // Trapezoid correction: replace the left-point rate by the mean of both ends.
            double half = 0.5 * dt;
            p.R.drift(-half * (right_drift[i] - p.drift_rate));
            p.angle_R += half * (right_angle[i] - p.angle_rate);
            p.angle_M += half * (right_m[i] - p.angle_m_rate);
            record_sups(p);
            if (t >= cfg_.probe_terminal_time * (1.0 - 1e-12)) p.active = false;
        }
        if (cfg_.track_z && dt > 0.0) {
            const std::size_t n = Xhat_.size();
            for (std::size_t i = 0; i < n; ++i) {
                cplx d = 0.5 * dt * (Dprev[i] + Dhat_[i]);
                drift_[i] += d;
                cplx dM = (Xhat_[i] - Xprev[i]) - d;
                Mhat_[i] += dM;
                double l = semi_.rate[i];
                Zhat_[i] = std::exp(l * dt) * Zhat_[i] + std::exp(0.5 * l * dt) * dM;
            }
        }
        time_ = t;
    }

    double time() const { return time_; }
    const CArray& Zhat() const { return Zhat_; }
    const CArray& Mhat() const { return Mhat_; }
    const CArray& drift() const { return drift_; }
    const CArray& Xhat() const { return Xhat_; }
    const CArray& X0hat() const { return X0_; }
    const std::vector<ProbeState>& probes() const { return probes_; }

    // max |X - X0 - drift - M| over modes.
    double residual_identity() const
    {
        double r = 0.0;
        for (std::size_t i = 0; i < Zhat_.size(); ++i)
            r = std::max(r, std::abs(Xhat_[i] - X0_[i] - drift_[i] - Mhat_[i]));
        return r;
    }

    FieldSnapshot z_snapshot() const
    {
        FieldSnapshot s;
        s.N = kernel_->torus.N;
        s.fourier = Zhat_;
        s.macro_time = time_;
        s.gamma = scaling_.gamma;
        s.regime = to_string(scaling_.regime);
        s.delta = scaling_.delta;
        s.eps = scaling_.eps;
        return s;
    }

    // Raw state access for checkpoints.
    struct State {
        double time = 0.0;
        CArray Zhat, drift, Mhat, X0, Xhat, Dhat;
        std::vector<ProbeState> probes;
        bool started = false;
    };
    State state() const { return {time_, Zhat_, drift_, Mhat_, X0_, Xhat_, Dhat_, probes_, started_}; }
    void restore(const State& s)
    {
        time_ = s.time;
        Zhat_ = s.Zhat;
        drift_ = s.drift;
        Mhat_ = s.Mhat;
        X0_ = s.X0;
        Xhat_ = s.Xhat;
        Dhat_ = s.Dhat;
        probes_ = s.probes;
        started_ = s.started;
    }
    bool started() const { return started_; }

    // Recomputes the per-site arrays needed to open an interval after restore.
    template <class Spin>
    void refresh_after_restore(const std::vector<Spin>& spins, const RArray& h, const RateModel& rm)
    {
        fill_site_arrays(spins, h, rm);
    }

private:
    template <class Spin>
    void fill_site_arrays(const std::vector<Spin>& spins, const RArray& h, const RateModel& rm)
    {
        const std::size_t n = h.size();
        mm_.resize(n);
        vv_.resize(n);
        mean_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto [m, q] = rm.moments(h[i]);
            double s = spins[i];
            mean_[i] = m;
            mm_[i] = m - s;
            vv_[i] = s * s - 2.0 * s * m + q;
        }
    }

    template <class Spin>
    void compute_fields(const std::vector<Spin>& spins, const RArray& h, const RateModel& rm)
    {
        fill_site_arrays(spins, h, rm);
        if (!cfg_.track_z) return;
        const Torus& T = kernel_->torus;
        const std::size_t n = T.size();
        // One complex FFT carries both real fields h and m(h).
        CArray f(n);
        for (std::size_t i = 0; i < n; ++i) f[i] = cplx(h[i], mean_[i]);
        fft2(f, T.side, -1);
        Xhat_.resize(n);
        Dhat_.resize(n);
        const double c = T.eps * T.eps / scaling_.delta;
        const double inv_alpha = 1.0 / scaling_.alpha;
        for (int a = 0; a < T.side; ++a)
            for (int b = 0; b < T.side; ++b) {
                std::size_t i = static_cast<std::size_t>(a) * T.side + b;
                std::size_t j = T.index(-a, -b);
                cplx fi = f[i], fj = std::conj(f[j]);
                cplx H = 0.5 * (fi + fj);
                cplx Mm = cplx(0.0, -0.5) * (fi - fj);
                Xhat_[i] = c * H;
                Dhat_[i] = inv_alpha * (c * kernel_->fourier[i] * Mm - Xhat_[i]);
            }
    }

    void open_interval(double start, double end)
    {
        if (probes_.empty()) return;
        const Torus& T = kernel_->torus;
        const std::size_t n = T.size();
        // T_tau = delta^-1 eps^2 (1/4) IFFT(K_hat e^{lambda tau}) at the interval midpoint.
        double tau = cfg_.probe_terminal_time - 0.5 * (start + end);
        tau = std::max(tau, 0.0);
        CArray g(n);
        for (std::size_t i = 0; i < n; ++i) g[i] = kernel_->fourier[i] * semi_.fourier_factor(tau, i);
        fft2(g, T.side, +1);
        const double c = 0.25 * T.eps * T.eps / scaling_.delta;
        kernel_R_.resize(n);
        for (std::size_t i = 0; i < n; ++i) kernel_R_[i] = c * g[i].real();
        for (auto& p : probes_) {
            double dr, ar, am;
            probe_rates(p, dr, ar, am);
            p.drift_rate = dr;
            p.angle_rate = ar;
            p.angle_m_rate = am;
        }
    }

    // (1/alpha) sum_z T(x-z) (m - s)(z), (1/alpha) sum_z T^2 v, (1/alpha) sum_z (kappa/delta)^2 v.
    void probe_rates(const ProbeState& p, double& drift, double& angle, double& angle_m) const
    {
        const Torus& T = kernel_->torus;
        const int L = T.side;
        double s1 = 0.0, s2 = 0.0;
        for (int a = 0; a < L; ++a) {
            int r = p.k1 - a;
            r = r < 0 ? r + L : r;
            const double* kr = kernel_R_.data() + static_cast<std::size_t>(r) * L;
            const double* m = mm_.data() + static_cast<std::size_t>(a) * L;
            const double* v = vv_.data() + static_cast<std::size_t>(a) * L;
            for (int b = 0; b < L; ++b) {
                int c = p.k2 - b;
                c = c < 0 ? c + L : c;
                double t = kr[c];
                s1 += t * m[b];
                s2 += t * t * v[b];
            }
        }
        double s3 = 0.0;
        for (const auto& run : kernel_->runs)
            for (int t = 0; t < run.count; ++t) {
                double kv = kernel_->stencil_values[run.start + t];
                s3 += kv * kv * vv_[T.index(p.k1 - run.d1, p.k2 - run.d2 - t)];
            }
        const double ia = 1.0 / scaling_.alpha;
        drift = s1 * ia;
        angle = s2 * ia;
        angle_m = s3 * ia / (scaling_.delta * scaling_.delta);
    }

    void advance_drift(ProbeState& p, double t)
    {
        double dt = t - p.last_time;
        if (dt <= 0.0) return;
        p.R.drift(-p.drift_rate * dt);
        p.angle_R += p.angle_rate * dt;
        p.angle_M += p.angle_m_rate * dt;
        p.last_time = t;
    }

    static void record_sups(ProbeState& p)
    {
        p.sup_Q = std::max(p.sup_Q, std::abs(p.R.square_bracket - p.angle_R));
        for (int m = 2; m <= IteratedIntegral::max_order; ++m)
            p.sup_gap[m] = std::max(p.sup_gap[m], std::abs(p.R.hermite_gap(m)));
    }

    const KacKernel* kernel_ = nullptr;
    ScalingParameters scaling_;
    TrackerConfig cfg_;
    SemigroupKernel semi_;
    double time_ = 0.0;
    CArray Zhat_, drift_, Mhat_, X0_, Xhat_, Dhat_;
    RArray mm_, vv_, mean_, kernel_R_;
    std::vector<ProbeState> probes_;
    bool started_ = false;
};

} // namespace kbc
