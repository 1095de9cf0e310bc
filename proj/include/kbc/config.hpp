#pragma once

#include "kbc/dynamics.hpp"
#include "kbc/io.hpp"
#include "kbc/spde.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace kbc {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : std::runtime_error(join(problems)), problems_(std::move(problems))
    {
    }
    const std::vector<std::string>& problems() const { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p)
    {
        std::string s = "invalid configuration:";
        for (const auto& e : p) s += "\n  " + e;
        return s;
    }
    std::vector<std::string> problems_;
};

struct ModelSection {
    RegimeKind regime = RegimeKind::Phi4;
    double gamma = 0.1;
    double a_c = 1.0;
    double frak_a1 = 0.0;
    double frak_a3 = 0.0;
    KernelProfile kernel = KernelProfile::annulus_poly5;
};

struct X0Spec {
    std::string kind = "zero"; // zero | constant | cosine | snapshot
    double value = 0.0;
    double amplitude = 0.0;
    std::array<int, 2> mode{1, 0};
    std::string path;
};

struct SimulateSection {
    double T_macro = 0.25;
    std::vector<double> snapshot_times;
    InitKind init = InitKind::iid_reference;
    std::array<double, 3> probabilities{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    X0Spec profile;
    bool coupled = false;
    StoppedRateSwitch stop_switch;
    bool tracker = false;
    TrackerConfig tracker_cfg;
    bool save_z = false;
    std::uint64_t max_events = 0; // 0: unlimited
    double checkpoint_interval = 0.0;
    std::uint64_t refresh_interval = 1000000;

    std::vector<double> times() const
    {
        return snapshot_times.empty() ? std::vector<double>{T_macro} : snapshot_times;
    }
};

struct SpdeSection {
    SpdeConfig cfg;
    X0Spec X0;
    bool beta_c_given = false;
};

struct ObservablesSection {
    std::string input;
    double nu = 0.1;
    int max_mode = 4;
};

struct CompareSection {
    std::vector<std::string> micro;
    std::string spde;
    int max_mode = 2;
    std::vector<double> times;
    std::vector<int> moments{2, 4};
    std::string test = "ci-overlap";
    int batches = 20;
    bool linearization = false;
};

struct RunConfig {
    std::string source;
    std::string hash;

    std::uint64_t seed = 1;
    int replicas = 1;
    int workers = 0;
    std::string out = "out";

    ModelSection model;
    SimulateSection simulate;
    SpdeSection spde;
    ObservablesSection observables;
    CompareSection compare;

    ScalingParameters scaling() const { return derive_scaling(model.regime, model.gamma); }
};

namespace detail {

class TableReader {
public:
    TableReader(const toml::table* t, std::string path, std::vector<std::string>& errors)
        : t_(t), path_(std::move(path)), errors_(&errors)
    {
    }

    bool present() const { return t_ != nullptr; }
    std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    void error(const std::string& key, const std::string& msg) const { errors_->push_back(path(key) + ": " + msg); }

    TableReader sub(const std::string& key)
    {
        used_.insert(key);
        if (!t_) return TableReader(nullptr, path(key), *errors_);
        const toml::node* n = t_->get(key);
        if (n && !n->is_table()) {
            error(key, "expected a table");
            return TableReader(nullptr, path(key), *errors_);
        }
        return TableReader(n ? n->as_table() : nullptr, path(key), *errors_);
    }

    template <class T>
    void get(const std::string& key, T& out)
    {
        used_.insert(key);
        if (!t_) return;
        const toml::node* n = t_->get(key);
        if (!n) return;
        if constexpr (std::is_same_v<T, bool>) {
            if (auto v = n->value_exact<bool>()) out = *v;
            else error(key, "expected a boolean");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (auto v = n->value_exact<std::string>()) out = *v;
            else error(key, "expected a string");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (n->is_number()) out = *n->value<double>();
            else error(key, "expected a number");
        } else {
            auto v = n->value_exact<std::int64_t>();
            if (!v) error(key, "expected an integer");
            else if (*v < 0 && std::is_unsigned_v<T>) error(key, "must be non-negative");
            else out = static_cast<T>(*v);
        }
    }

    template <class T>
    void get_list(const std::string& key, std::vector<T>& out)
    {
        used_.insert(key);
        if (!t_) return;
        const toml::node* n = t_->get(key);
        if (!n) return;
        const toml::array* a = n->as_array();
        if (!a) {
            error(key, "expected an array");
            return;
        }
        std::vector<T> v;
        for (std::size_t i = 0; i < a->size(); ++i) {
            const toml::node& e = *a->get(i);
            std::string p = key + "[" + std::to_string(i) + "]";
            if constexpr (std::is_same_v<T, std::string>) {
                if (auto x = e.value_exact<std::string>()) v.push_back(*x);
                else error(p, "expected a string");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (e.is_number()) v.push_back(*e.value<double>());
                else error(p, "expected a number");
            } else {
                if (auto x = e.value_exact<std::int64_t>()) v.push_back(static_cast<T>(*x));
                else error(p, "expected an integer");
            }
        }
        out = std::move(v);
    }

    void reject_unknown() const
    {
        if (!t_) return;
        for (const auto& [k, v] : *t_)
            if (!used_.count(std::string(k.str()))) error(std::string(k.str()), "unknown key");
    }

private:
    const toml::table* t_;
    std::string path_;
    std::vector<std::string>* errors_;
    std::set<std::string> used_;
};

inline void read_x0(TableReader r, X0Spec& x)
{
    r.get("kind", x.kind);
    r.get("value", x.value);
    r.get("amplitude", x.amplitude);
    std::vector<int> m;
    r.get_list("mode", m);
    if (!m.empty()) {
        if (m.size() != 2) r.error("mode", "expected two integers");
        else x.mode = {m[0], m[1]};
    }
    r.get("path", x.path);
    r.reject_unknown();
    static const std::set<std::string> kinds{"zero", "constant", "cosine", "snapshot"};
    if (!kinds.count(x.kind)) r.error("kind", "expected one of zero, constant, cosine, snapshot");
    if (x.kind == "snapshot" && x.path.empty()) r.error("path", "required when kind = \"snapshot\"");
}

template <class F>
void parse_enum(TableReader& r, const std::string& key, const std::string& text, F&& f)
{
    try {
        f(text);
    } catch (const std::exception& e) {
        r.error(key, e.what());
    }
}

inline bool increasing_within(const std::vector<double>& t, double lo, double hi)
{
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(t[i] > lo - 1e-15) || t[i] > hi + 1e-12) return false;
        if (i && !(t[i] > t[i - 1])) return false;
    }
    return true;
}

} // namespace detail

// Macroscopic profile X0(x1, x2) on [-1, 1)^2.
inline std::function<double(double, double)> x0_function(const X0Spec& x)
{
    if (x.kind == "constant") return [v = x.value](double, double) { return v; };
    if (x.kind == "cosine")
        return [a = x.amplitude, m = x.mode](double x1, double x2) {
            return a * std::cos(std::numbers::pi * (m[0] * x1 + m[1] * x2));
        };
    return [](double, double) { return 0.0; };
}

inline FieldSnapshot x0_snapshot(const X0Spec& x, int N)
{
    FieldSnapshot s;
    s.N = N;
    s.eps = 2.0 / (2.0 * N + 1.0);
    const Torus T(N);
    s.fourier.assign(T.size(), cplx(0.0));
    // Fourier coefficients of c and a cos(pi w.x) under the 1/4 convention.
    if (x.kind == "constant") s.at(0, 0) = 4.0 * x.value;
    else if (x.kind == "cosine") {
        if (std::abs(x.mode[0]) > N || std::abs(x.mode[1]) > N)
            throw std::invalid_argument("X0.mode exceeds the mode cutoff");
        if (x.mode[0] == 0 && x.mode[1] == 0) s.at(0, 0) = 4.0 * x.amplitude;
        else {
            s.at(x.mode[0], x.mode[1]) += 2.0 * x.amplitude;
            s.at(-x.mode[0], -x.mode[1]) += 2.0 * x.amplitude;
        }
    } else if (x.kind == "snapshot") {
        s = restrict_modes(read_snapshot(x.path).snapshot, N);
    }
    return s;
}

inline RunConfig parse_config(const std::string& text, const std::string& origin = "<string>")
{
    toml::table root;
    try {
        root = toml::parse(text, origin);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << origin << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
        throw ConfigError({os.str()});
    }
    std::vector<std::string> err;
    RunConfig c;
    c.source = text;
    c.hash = sha256_hex(text);
    detail::TableReader top(&root, "", err);

    {
        auto r = top.sub("run");
        r.get("seed", c.seed);
        r.get("replicas", c.replicas);
        r.get("workers", c.workers);
        r.get("out", c.out);
        r.reject_unknown();
        if (c.replicas < 1) r.error("replicas", "must be >= 1");
        if (c.workers < 0) r.error("workers", "must be >= 0 (0 selects the hardware concurrency)");
    }

    auto& m = c.model;
    bool have_a_c = false;
    {
        auto r = top.sub("model");
        std::string regime = "phi4", kernel = "annulus_poly5";
        r.get("regime", regime);
        detail::parse_enum(r, "regime", regime, [&](const std::string& s) { m.regime = regime_from_string(s); });
        r.get("gamma", m.gamma);
        have_a_c = r.present() && root["model"]["a_c"];
        r.get("a_c", m.a_c);
        r.get("frak_a1", m.frak_a1);
        r.get("frak_a3", m.frak_a3);
        r.get("kernel", kernel);
        detail::parse_enum(r, "kernel", kernel, [&](const std::string& s) { m.kernel = kernel_profile_from_string(s); });
        r.reject_unknown();
        if (!(m.gamma > 0.0)) r.error("gamma", "γ > 0 required");
        else if (!(m.gamma < 1.0 / 3.0)) r.error("gamma", "γ < 1/3 required");
        else {
            auto sc = derive_scaling(m.regime, m.gamma);
            if (3.0 / m.gamma > sc.N)
                r.error("gamma", "kernel support 3/γ = " + fmt_num(3.0 / m.gamma) + " exceeds N = " +
                                     std::to_string(sc.N) + " for regime " + to_string(m.regime));
        }
        if (m.regime == RegimeKind::Phi4) {
            if (!(m.a_c > 0.0)) r.error("a_c", "a_c > 0 required");
        } else {
            if (have_a_c && m.a_c != tricritical_a)
                r.error("a_c", "the phi6 regime is tuned around the tricritical point a_c = 1/4");
            m.a_c = tricritical_a;
        }
    }

    auto& s = c.simulate;
    {
        auto r = top.sub("simulate");
        r.get("T_macro", s.T_macro);
        r.get_list("snapshot_times", s.snapshot_times);
        std::string init = "iid_reference";
        r.get("init", init);
        detail::parse_enum(r, "init", init, [&](const std::string& x) { s.init = init_kind_from_string(x); });
        std::vector<double> probs;
        r.get_list("probabilities", probs);
        if (!probs.empty()) {
            if (probs.size() != 3) r.error("probabilities", "expected three values for spins (-1, 0, +1)");
            else s.probabilities = {probs[0], probs[1], probs[2]};
        }
        r.get("coupled", s.coupled);
        r.get("max_events", s.max_events);
        r.get("checkpoint_interval", s.checkpoint_interval);
        r.get("refresh_interval", s.refresh_interval);
        {
            auto p = r.sub("profile");
            if (p.present()) detail::read_x0(p, s.profile);
        }
        {
            auto q = r.sub("stop_switch");
            q.get("enabled", s.stop_switch.enabled);
            q.get("mfrak", s.stop_switch.mfrak);
            q.get("nu", s.stop_switch.nu);
            q.get("check_interval", s.stop_switch.check_interval);
            q.get("oversample", s.stop_switch.oversample);
            q.reject_unknown();
            if (!(s.stop_switch.mfrak > 0.0)) q.error("mfrak", "must be positive");
            if (!(s.stop_switch.nu > 0.0)) q.error("nu", "ν > 0 required");
            if (!(s.stop_switch.check_interval > 0.0)) q.error("check_interval", "must be positive");
            if (s.stop_switch.oversample < 1) q.error("oversample", "must be >= 1");
        }
        {
            auto q = r.sub("tracker");
            q.get("enabled", s.tracker);
            q.get("substeps", s.tracker_cfg.substeps);
            q.get("probe_terminal_time", s.tracker_cfg.probe_terminal_time);
            q.get("save_z", s.save_z);
            std::vector<std::int64_t> flat;
            q.get_list("probes", flat);
            if (flat.size() % 2) q.error("probes", "expected a flat list of (k1, k2) pairs");
            s.tracker_cfg.probes.clear();
            for (std::size_t i = 0; i + 1 < flat.size(); i += 2)
                s.tracker_cfg.probes.emplace_back(static_cast<int>(flat[i]), static_cast<int>(flat[i + 1]));
            q.reject_unknown();
            if (s.tracker_cfg.substeps < 1) q.error("substeps", "must be >= 1");
            if (s.tracker_cfg.probes.size() > 16) q.error("probes", "at most 16 probe sites");
            if (s.save_z && !s.tracker) q.error("save_z", "requires tracker.enabled = true");
        }
        r.reject_unknown();
        if (!(s.T_macro > 0.0)) r.error("T_macro", "must be positive");
        if (!detail::increasing_within(s.snapshot_times, 0.0, s.T_macro))
            r.error("snapshot_times", "must be strictly increasing within [0, T_macro]");
        if (s.init == InitKind::iid_probabilities) {
            double sum = s.probabilities[0] + s.probabilities[1] + s.probabilities[2];
            if (std::min({s.probabilities[0], s.probabilities[1], s.probabilities[2]}) < 0.0 ||
                std::abs(sum - 1.0) > 1e-12)
                r.error("probabilities", "must be non-negative and sum to 1");
        }
        if (s.init == InitKind::profile && s.profile.kind == "snapshot")
            r.error("profile.kind", "spin profiles must be analytic (constant or cosine)");
        if (s.checkpoint_interval < 0.0) r.error("checkpoint_interval", "must be >= 0");
        if (s.stop_switch.enabled && !s.coupled) r.error("stop_switch.enabled", "requires coupled = true");
        if (m.gamma > 0.0 && m.gamma < 1.0 / 3.0) {
            int N = regime_N(m.regime, m.gamma);
            for (auto [k1, k2] : s.tracker_cfg.probes)
                if (std::abs(k1) > N || std::abs(k2) > N)
                    r.error("tracker.probes", "probe site outside the torus {-N..N}^2 with N = " + std::to_string(N));
        }
    }

    auto& sp = c.spde;
    {
        auto r = top.sub("spde");
        auto& f = sp.cfg;
        f.n = m.regime == RegimeKind::Phi4 ? 2 : 3;
        f.a1 = m.frak_a1;
        f.a3 = m.frak_a3;
        bool have_n = r.present() && root["spde"]["n"];
        r.get("n", f.n);
        sp.beta_c_given = r.present() && root["spde"]["beta_c"];
        r.get("beta_c", f.beta_c);
        r.get("a1", f.a1);
        r.get("a3", f.a3);
        r.get("cutoff", f.mode_cutoff);
        r.get("dt", f.dt);
        r.get("T", f.T);
        r.get_list("output_times", f.output_times);
        r.get("noise_scale", f.noise_scale);
        r.get("noise_substeps", f.noise_substeps);
        std::string stepper = to_string(f.stepper), schedule = to_string(f.schedule);
        r.get("stepper", stepper);
        detail::parse_enum(r, "stepper", stepper, [&](const std::string& x) { f.stepper = stepper_from_string(x); });
        r.get("schedule", schedule);
        detail::parse_enum(r, "schedule", schedule,
                           [&](const std::string& x) { f.schedule = schedule_mode_from_string(x); });
        r.get("bar_c_cutoff", f.bar_c_cutoff);
        r.get("blowup_bound", f.blowup_bound);
        {
            auto q = r.sub("X0");
            if (q.present()) detail::read_x0(q, sp.X0);
        }
        r.reject_unknown();
        if (!have_n) f.n = m.regime == RegimeKind::Phi4 ? 2 : 3;
        if (!sp.beta_c_given) f.beta_c = f.n == 2 ? critical_beta(m.a_c) : tricritical_beta;
        if (f.n != 2 && f.n != 3) r.error("n", "expected 2 (phi4) or 3 (phi6)");
        if (!(f.beta_c > 0.0)) r.error("beta_c", "must be positive");
        if (f.mode_cutoff < 2) r.error("cutoff", "mode cutoff >= 2 required");
        if (!(f.dt > 0.0)) r.error("dt", "must be positive");
        if (!(f.T > 0.0)) r.error("T", "must be positive");
        else if (f.dt > f.T) r.error("dt", "dt <= T required");
        if (!detail::increasing_within(f.output_times, 0.0, f.T))
            r.error("output_times", "must be strictly increasing within [0, T]");
        if (f.noise_substeps < 1) r.error("noise_substeps", "must be >= 1");
        if (f.noise_scale < 0.0) r.error("noise_scale", "must be >= 0");
        if (f.bar_c_cutoff < 1) r.error("bar_c_cutoff", "must be >= 1");
        if (!(f.blowup_bound > 0.0)) r.error("blowup_bound", "must be positive");
        if (sp.X0.kind == "cosine" &&
            std::hypot(sp.X0.mode[0], sp.X0.mode[1]) >= static_cast<double>(f.mode_cutoff))
            r.error("X0.mode", "must lie inside the mode cutoff");
    }

    {
        auto r = top.sub("observables");
        r.get("input", c.observables.input);
        r.get("nu", c.observables.nu);
        r.get("max_mode", c.observables.max_mode);
        r.reject_unknown();
        if (!(c.observables.nu > 0.0)) r.error("nu", "ν > 0 required");
        if (c.observables.max_mode < 0 || c.observables.max_mode > 4) r.error("max_mode", "expected 0..4");
    }

    {
        auto r = top.sub("compare");
        auto& k = c.compare;
        r.get_list("micro", k.micro);
        r.get("spde", k.spde);
        r.get("max_mode", k.max_mode);
        r.get_list("times", k.times);
        r.get_list("moments", k.moments);
        r.get("test", k.test);
        r.get("batches", k.batches);
        r.get("linearization", k.linearization);
        r.reject_unknown();
        if (k.max_mode < 0 || k.max_mode > 4) r.error("max_mode", "modes with |ω| <= 4 only");
        for (int o : k.moments)
            if (o != 1 && o != 2 && o != 4) r.error("moments", "moment orders must be among {1, 2, 4}");
        if (k.test != "ci-overlap" && k.test != "ks") r.error("test", "expected \"ci-overlap\" or \"ks\"");
        if (k.batches < 2) r.error("batches", "must be >= 2");
    }

    top.reject_unknown();
    if (!err.empty()) throw ConfigError(err);
    return c;
}

inline RunConfig load_config(const fs::path& path)
{
    if (!fs::exists(path)) throw ConfigError({path.string() + ": file not found"});
    return parse_config(read_file(path), path.string());
}

// Derived quantities echoed by every subcommand.
inline json derived_echo(const RunConfig& c)
{
    auto sc = c.scaling();
    return json{{"regime", to_string(sc.regime)},
                {"gamma", sc.gamma},
                {"N", sc.N},
                {"side", 2 * sc.N + 1},
                {"eps", sc.eps},
                {"alpha", sc.alpha},
                {"delta", sc.delta},
                {"spde_n", c.spde.cfg.n},
                {"spde_beta_c", c.spde.cfg.beta_c}};
}

} // namespace kbc
