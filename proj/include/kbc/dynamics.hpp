#pragma once

#include "kbc/field.hpp"
#include "kbc/kac_kernel.hpp"
#include "kbc/rates.hpp"
#include "kbc/rng.hpp"
#include "kbc/scaling.hpp"
#include "kbc/tracker.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kbc {

using Spin = std::int8_t;

struct SpinConfiguration {
    Torus torus;
    std::vector<Spin> spins;
    RArray local_field;
    double micro_time = 0.0;
    std::uint64_t event_count = 0;
};

enum class InitKind { all_zero, iid_reference, iid_probabilities, profile };

inline std::string to_string(InitKind k)
{
    switch (k) {
    case InitKind::all_zero: return "all_zero";
    case InitKind::iid_reference: return "iid_reference";
    case InitKind::iid_probabilities: return "iid_probabilities";
    case InitKind::profile: return "profile";
    }
    return "unknown";
}

inline InitKind init_kind_from_string(const std::string& s)
{
    if (s == "all_zero") return InitKind::all_zero;
    if (s == "iid_reference") return InitKind::iid_reference;
    if (s == "iid_probabilities") return InitKind::iid_probabilities;
    if (s == "profile") return InitKind::profile;
    throw std::invalid_argument("unknown init kind '" + s + "'");
}

struct InitSpec {
    InitKind kind = InitKind::iid_reference;
    std::array<double, 3> probabilities{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}; // (-1, 0, +1)
    // Macroscopic profile X0(x1, x2); spins are drawn with mean delta * X0(eps k).
    std::function<double(double, double)> profile;
};

inline Spin draw_spin(double pm, double p0, double u)
{
    if (u < pm) return -1;
    if (u < pm + p0) return 0;
    return 1;
}

// Maximal coupling of P with the reference law: with probability q copy the
// reference draw, otherwise draw from the normalized residual (P - q Pref)/(1 - q).
struct CouplingSplit {
    double q = 1.0;
    std::array<double, 3> residual{0.0, 0.0, 0.0}; // (-1, 0, +1)
};

inline CouplingSplit coupling_split(const JumpRates& P, const JumpRates& ref)
{
    CouplingSplit c;
    c.q = std::clamp(std::min({P.p_minus / ref.p_minus, P.p_zero / ref.p_zero, P.p_plus / ref.p_plus}), 0.0, 1.0);
    double rm = std::max(P.p_minus - c.q * ref.p_minus, 0.0);
    double r0 = std::max(P.p_zero - c.q * ref.p_zero, 0.0);
    double rp = std::max(P.p_plus - c.q * ref.p_plus, 0.0);
    double tot = rm + r0 + rp;
    if (tot > 0.0) c.residual = {rm / tot, r0 / tot, rp / tot};
    else c.residual = {ref.p_minus, ref.p_zero, ref.p_plus};
    return c;
}

struct StoppedRateSwitch {
    bool enabled = false;
    double mfrak = 1e9;
    double nu = 0.1;
    double check_interval = 0.01; // macro time between norm evaluations
    int oversample = 2;
    std::optional<double> triggered_at;
};

struct CouplingStats {
    std::uint64_t rings = 0;
    std::uint64_t coin_failures = 0;
    std::uint64_t mismatch_count = 0; // rings where the residual draw differed from the reference draw
    double q_sum = 0.0;
    double q_min = 1.0;
    std::uint64_t initial_mismatch = 0;
};

struct EventRecord {
    std::size_t site = 0;
    Spin old_spin = 0;
    Spin new_spin = 0;
    double micro_time = 0.0;
};

struct SimulatorOptions {
    std::uint64_t refresh_interval = 1000000; // events between full FFT recomputations of h
    double refresh_tolerance = 1e-8;
    bool coupled = false;
    StoppedRateSwitch stop_switch;
    std::uint64_t max_events = std::numeric_limits<std::uint64_t>::max();
    InitSpec init;
};

struct TrajectoryRecord {
    std::uint64_t events = 0;
    double reached_macro_time = 0.0;
    bool budget_exhausted = false;
};

class Simulator {
public:
    using Sampler = std::function<void(const Simulator&, double)>;

    Simulator(const KacKernel& kernel, const ModelParams& params, const ScalingParameters& scaling,
              std::uint64_t seed, std::uint64_t stream, SimulatorOptions opts = {})
        : kernel_(&kernel), params_(params), scaling_(scaling), rng_(seed, stream), opts_(std::move(opts))
    {
        if (!(kernel.torus == scaling.torus()))
            throw std::invalid_argument("simulator: kernel torus does not match the scaling parameters");
        state_.torus = kernel.torus;
        const std::size_t n = kernel.torus.size();
        state_.spins.assign(n, 0);
        ref_ = reference_rates(params.theta_c);
        initialize_spins(state_.spins, opts_.init);
        if (opts_.coupled) {
            sigma_tilde_.assign(n, 0);
            for (auto& s : sigma_tilde_) s = draw_spin(ref_.p_minus, ref_.p_zero, rng_.uniform());
            for (std::size_t i = 0; i < n; ++i) coupling_.initial_mismatch += sigma_tilde_[i] != state_.spins[i];
        }
        state_.local_field = convolve_spins(state_.spins, kernel);
        count_nonzero();
        next_time_ = rng_.exponential(static_cast<double>(n));
        next_check_ = opts_.stop_switch.check_interval / scaling_.alpha;
    }

    void attach_tracker(const TrackerConfig& cfg)
    {
        tracker_.attach(*kernel_, scaling_, cfg);
        tracker_.start(state_.spins, state_.local_field, rate_model(), macro_time());
        grid_index_ = static_cast<std::uint64_t>(std::floor(state_.micro_time * cfg.substeps + 1e-9));
    }

    const SpinConfiguration& state() const { return state_; }
    const std::vector<Spin>& sigma_tilde() const { return sigma_tilde_; }
    const KacKernel& kernel() const { return *kernel_; }
    const ModelParams& params() const { return params_; }
    const ScalingParameters& scaling() const { return scaling_; }
    const MartingaleTracker& tracker() const { return tracker_; }
    const CouplingStats& coupling() const { return coupling_; }
    const StoppedRateSwitch& stop_switch() const { return opts_.stop_switch; }
    const SimulatorOptions& options() const { return opts_; }
    double macro_time() const { return state_.micro_time * scaling_.alpha; }
    double max_refresh_drift() const { return max_refresh_drift_; }
    std::uint64_t real_changes() const { return changes_; }
    bool switched() const { return opts_.stop_switch.triggered_at.has_value(); }

    // Time integrals of the site-averaged A(sigma) and A(sigma_tilde), in microscopic time.
    double integral_A() const { return int_A_; }
    double integral_A_tilde() const { return int_A_tilde_; }

    RateModel rate_model() const { return {params_.beta, params_.theta, params_.theta_c, switched()}; }

    JumpRates rates_at(std::size_t site) const
    {
        return switched() ? ref_ : jump_rates(state_.local_field[site], params_.beta, params_.theta);
    }

    FieldSnapshot snapshot() const
    {
        FieldSnapshot s = rescale_field(state_.local_field, state_.torus, scaling_.delta, macro_time());
        s.gamma = scaling_.gamma;
        s.regime = to_string(scaling_.regime);
        s.eps = scaling_.eps;
        return s;
    }

    // One ring: the event at the pending clock time.
    EventRecord step_event()
    {
        const std::size_t n = state_.torus.size();
        EventRecord ev;
        advance_integrals(next_time_);
        state_.micro_time = next_time_;
        ev.micro_time = next_time_;
        const auto site = static_cast<std::size_t>(rng_.below(n));
        ev.site = site;
        ev.old_spin = state_.spins[site];
        const JumpRates P = rates_at(site);
        Spin s_new;
        if (opts_.coupled) {
            Spin s_ref = draw_spin(ref_.p_minus, ref_.p_zero, rng_.uniform());
            const CouplingSplit cs = coupling_split(P, ref_);
            coupling_.rings++;
            coupling_.q_sum += cs.q;
            coupling_.q_min = std::min(coupling_.q_min, cs.q);
            if (rng_.uniform() < cs.q) {
                s_new = s_ref;
            } else {
                coupling_.coin_failures++;
                s_new = draw_spin(cs.residual[0], cs.residual[1], rng_.uniform());
                if (s_new != s_ref) coupling_.mismatch_count++;
            }
            Spin old_t = sigma_tilde_[site];
            sigma_tilde_[site] = s_ref;
            nonzero_tilde_ += (s_ref != 0) - (old_t != 0);
        } else {
            s_new = draw_spin(P.p_minus, P.p_zero, rng_.uniform());
        }
        ev.new_spin = s_new;
        state_.event_count++;
        if (s_new != ev.old_spin) apply_change(site, ev.old_spin, s_new);
        next_time_ = state_.micro_time + rng_.exponential(static_cast<double>(n));
        if (opts_.refresh_interval && state_.event_count % opts_.refresh_interval == 0) refresh_field();
        return ev;
    }

    // Recomputes h by FFT, checks the incremental drift and replaces h.
    double refresh_field()
    {
        RArray fresh = convolve_spins(state_.spins, *kernel_);
        double d = 0.0;
        for (std::size_t i = 0; i < fresh.size(); ++i) d = std::max(d, std::abs(fresh[i] - state_.local_field[i]));
        max_refresh_drift_ = std::max(max_refresh_drift_, d);
        if (d > opts_.refresh_tolerance)
            throw std::runtime_error("local field drifted by " + std::to_string(d) + " since the last refresh");
        state_.local_field = std::move(fresh);
        return d;
    }

    // Runs events up to microscopic time target, honouring tracker grid
    // points and stop-switch checks. Returns false if the event budget ran out.
    bool run_until_micro(double target)
    {
        const bool track = tracker_.attached();
        const double sub = track ? tracker_.config().substeps : 0.0;
        if (track) {
            // Targets that are grid points up to rounding land exactly on the grid.
            const double g = std::round(target * sub);
            if (std::abs(target * sub - g) < 1e-9) target = g / sub;
        }
        while (state_.micro_time < target) {
            double b = target;
            if (track) b = std::min(b, static_cast<double>(grid_index_ + 1) / sub);
            if (opts_.stop_switch.enabled && !switched()) b = std::min(b, next_check_);
            if (track) tracker_.begin_interval(b * scaling_.alpha);
            while (next_time_ <= b) {
                if (state_.event_count >= opts_.max_events) {
                    budget_exhausted_ = true;
                    return false;
                }
                step_event();
            }
            advance_integrals(b);
            state_.micro_time = b;
            if (track) {
                tracker_.end_interval(state_.spins, state_.local_field, rate_model(), b * scaling_.alpha);
                if (b >= static_cast<double>(grid_index_ + 1) / sub) grid_index_++;
            }
            if (opts_.stop_switch.enabled && !switched() && b >= next_check_) {
                check_switch();
                next_check_ += opts_.stop_switch.check_interval / scaling_.alpha;
            }
        }
        return true;
    }

    TrajectoryRecord run_to_macro_time(double T_macro, std::vector<double> sample_times = {},
                                       const Sampler& sampler = {})
    {
        if (!(T_macro >= 0.0)) throw std::invalid_argument("run_to_macro_time: T_macro >= 0 required");
        std::sort(sample_times.begin(), sample_times.end());
        TrajectoryRecord rec;
        const std::uint64_t e0 = state_.event_count;
        for (double ts : sample_times) {
            if (ts > T_macro) break;
            if (!run_until_micro(ts / scaling_.alpha)) break;
            if (sampler) sampler(*this, ts);
        }
        if (!budget_exhausted_) run_until_micro(T_macro / scaling_.alpha);
        rec.events = state_.event_count - e0;
        rec.reached_macro_time = macro_time();
        rec.budget_exhausted = budget_exhausted_;
        return rec;
    }

    // Evaluates the stop criterion now.
    void check_switch()
    {
        auto b = besov_norm(snapshot(), opts_.stop_switch.nu, opts_.stop_switch.oversample);
        last_norm_ = b.value;
        if (b.value >= opts_.stop_switch.mfrak) opts_.stop_switch.triggered_at = macro_time();
    }
    double last_switch_norm() const { return last_norm_; }

    // Checkpoint state (everything needed for a bit-exact resume).
    struct Checkpoint {
        SpinConfiguration state;
        std::vector<Spin> sigma_tilde;
        Rng::State rng;
        double next_time = 0.0;
        double next_check = 0.0;
        std::optional<double> triggered_at;
        CouplingStats coupling;
        double int_A = 0.0, int_A_tilde = 0.0, integral_clock = 0.0;
        std::uint64_t changes = 0;
        double max_refresh_drift = 0.0;
        std::uint64_t grid_index = 0;
        bool has_tracker = false;
        MartingaleTracker::State tracker;
    };

    Checkpoint checkpoint() const
    {
        Checkpoint c;
        c.state = state_;
        c.sigma_tilde = sigma_tilde_;
        c.rng = rng_.state();
        c.next_time = next_time_;
        c.next_check = next_check_;
        c.triggered_at = opts_.stop_switch.triggered_at;
        c.coupling = coupling_;
        c.int_A = int_A_;
        c.int_A_tilde = int_A_tilde_;
        c.integral_clock = integral_clock_;
        c.changes = changes_;
        c.max_refresh_drift = max_refresh_drift_;
        c.grid_index = grid_index_;
        c.has_tracker = tracker_.attached();
        if (c.has_tracker) c.tracker = tracker_.state();
        return c;
    }

    // The tracker (if any) must already be attached with the original config.
    void restore(const Checkpoint& c)
    {
        if (!(c.state.torus == state_.torus)) throw std::invalid_argument("restore: torus mismatch");
        if (c.has_tracker != tracker_.attached()) throw std::invalid_argument("restore: tracker attachment mismatch");
        state_ = c.state;
        sigma_tilde_ = c.sigma_tilde;
        rng_.restore(c.rng);
        next_time_ = c.next_time;
        next_check_ = c.next_check;
        opts_.stop_switch.triggered_at = c.triggered_at;
        coupling_ = c.coupling;
        int_A_ = c.int_A;
        int_A_tilde_ = c.int_A_tilde;
        integral_clock_ = c.integral_clock;
        changes_ = c.changes;
        max_refresh_drift_ = c.max_refresh_drift;
        grid_index_ = c.grid_index;
        count_nonzero();
        if (c.has_tracker) {
            tracker_.restore(c.tracker);
            tracker_.refresh_after_restore(state_.spins, state_.local_field, rate_model());
        }
    }

private:
    void initialize_spins(std::vector<Spin>& s, const InitSpec& init)
    {
        const Torus& T = state_.torus;
        switch (init.kind) {
        case InitKind::all_zero: std::fill(s.begin(), s.end(), 0); break;
        case InitKind::iid_reference:
            for (auto& x : s) x = draw_spin(ref_.p_minus, ref_.p_zero, rng_.uniform());
            break;
        case InitKind::iid_probabilities: {
            const auto& p = init.probabilities;
            double tot = p[0] + p[1] + p[2];
            if (p[0] < 0 || p[1] < 0 || p[2] < 0 || !(tot > 0))
                throw std::invalid_argument("init: probabilities must be nonnegative with positive sum");
            for (auto& x : s) x = draw_spin(p[0] / tot, p[1] / tot, rng_.uniform());
            break;
        }
        case InitKind::profile: {
            if (!init.profile) throw std::invalid_argument("init: profile function missing");
            for (int a = 0; a < T.side; ++a)
                for (int b = 0; b < T.side; ++b) {
                    double mean = scaling_.delta * init.profile(T.eps * T.centered(a), T.eps * T.centered(b));
                    double q = ref_.p_minus + ref_.p_plus;
                    mean = std::clamp(mean, -q, q);
                    double pp = 0.5 * (q + mean), pm = 0.5 * (q - mean);
                    s[T.index(a, b)] = draw_spin(pm, 1.0 - pp - pm, rng_.uniform());
                }
            break;
        }
        }
    }

    void apply_change(std::size_t site, Spin old_s, Spin new_s)
    {
        const int L = state_.torus.side;
        const int j1 = static_cast<int>(site / L), j2 = static_cast<int>(site % L);
        const int ds = new_s - old_s;
        state_.spins[site] = new_s;
        nonzero_ += (new_s != 0) - (old_s != 0);
        add_stencil(state_.local_field, *kernel_, j1, j2, static_cast<double>(ds));
        changes_++;
        if (tracker_.attached()) tracker_.on_change(j1, j2, ds, state_.micro_time * scaling_.alpha);
    }

    void count_nonzero()
    {
        nonzero_ = 0;
        for (auto s : state_.spins) nonzero_ += s != 0;
        nonzero_tilde_ = 0;
        for (auto s : sigma_tilde_) nonzero_tilde_ += s != 0;
    }

    // Integrates the site averages of A(sigma) and A(sigma_tilde) up to micro time t.
    void advance_integrals(double t)
    {
        const double dt = t - integral_clock_;
        if (dt <= 0.0) return;
        const double n = static_cast<double>(state_.torus.size());
        const double a0 = average_rate_function(0, params_.theta_c), a1 = average_rate_function(1, params_.theta_c);
        int_A_ += dt * (a0 + (a1 - a0) * static_cast<double>(nonzero_) / n);
        if (opts_.coupled) int_A_tilde_ += dt * (a0 + (a1 - a0) * static_cast<double>(nonzero_tilde_) / n);
        integral_clock_ = t;
    }

    const KacKernel* kernel_;
    ModelParams params_;
    ScalingParameters scaling_;
    Rng rng_;
    SimulatorOptions opts_;
    SpinConfiguration state_;
    std::vector<Spin> sigma_tilde_;
    JumpRates ref_;
    CouplingStats coupling_;
    MartingaleTracker tracker_;
    double next_time_ = 0.0;
    double next_check_ = 0.0;
    double last_norm_ = 0.0;
    double max_refresh_drift_ = 0.0;
    double int_A_ = 0.0, int_A_tilde_ = 0.0, integral_clock_ = 0.0;
    std::uint64_t nonzero_ = 0, nonzero_tilde_ = 0;
    std::uint64_t changes_ = 0;
    std::uint64_t grid_index_ = 0;
    bool budget_exhausted_ = false;
};

} // namespace kbc
