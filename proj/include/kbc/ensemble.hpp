#pragma once

#include "kbc/config.hpp"
#include "kbc/dynamics.hpp"
#include "kbc/io.hpp"
#include "kbc/parallel.hpp"
#include "kbc/spde.hpp"

#include <chrono>
#include <map>
#include <memory>
#include <optional>

namespace kbc {

// Replica r of a run with global seed s uses the counter stream Rng(s, r);
// SPDE replicas use the same scheme, so a replica's output never depends on
// which worker ran it.

struct MicroContext {
    ModelSection model;
    ScalingParameters scaling;
    KacKernel kernel;
    ModelParams params;
    RenormalizationReport renorm;
};

inline double model_beta_c(const ModelSection& m)
{
    return m.regime == RegimeKind::Phi4 ? critical_beta(m.a_c) : tricritical_beta;
}

inline std::shared_ptr<const MicroContext> make_micro_context(const ModelSection& m)
{
    auto ctx = std::make_shared<MicroContext>();
    ctx->model = m;
    ctx->scaling = derive_scaling(m.regime, m.gamma);
    ctx->kernel = build_kac_kernel(m.gamma, ctx->scaling.torus(), build_mother_kernel(m.kernel));
    ctx->renorm = renormalization_constant(ctx->kernel, m.regime, model_beta_c(m));
    ctx->params = m.regime == RegimeKind::Phi4 ? tune_phi4(m.gamma, m.a_c, m.frak_a1, ctx->renorm.c_gamma)
                                               : tune_phi6(m.gamma, m.frak_a1, m.frak_a3, ctx->renorm.c_gamma);
    return ctx;
}

struct SampleRow {
    double macro_time = 0.0;
    std::uint64_t events = 0;
    std::uint64_t real_changes = 0;
    double max_refresh_drift = 0.0;
    bool switched = false;
    double A_average = 0.0;       // time average of the site-averaged A(sigma)
    double A_tilde_average = 0.0; // the same for sigma_tilde
    CouplingStats coupling;
    double sup_Q = 0.0;
    std::array<double, IteratedIntegral::max_order + 1> sup_gap{};
};

struct MicroReplica {
    std::uint64_t replica = 0;
    std::vector<FieldSnapshot> X, Z;
    std::vector<SampleRow> rows;
    std::vector<ProbeState> probes;
    TrajectoryRecord trajectory;
    std::optional<double> switched_at;
    double wall_seconds = 0.0;
    bool resumed = false;
};

struct MicroRunOptions {
    int keep_modes = -1;                                 // restrict stored snapshots to |w|_inf <= keep_modes
    std::optional<fs::path> checkpoint_file;             // resume from and write to this file
    std::string config_hash;
    std::function<void(const FieldSnapshot&, const std::string&)> on_snapshot; // full snapshot, kind X or Z
};

inline SimulatorOptions simulator_options(const SimulateSection& s)
{
    SimulatorOptions o;
    o.refresh_interval = s.refresh_interval;
    o.coupled = s.coupled;
    o.stop_switch = s.stop_switch;
    o.max_events = s.max_events ? s.max_events : std::numeric_limits<std::uint64_t>::max();
    o.init.kind = s.init;
    o.init.probabilities = s.probabilities;
    if (s.init == InitKind::profile) o.init.profile = x0_function(s.profile);
    return o;
}

inline SampleRow sample_row(const Simulator& sim)
{
    SampleRow r;
    r.macro_time = sim.macro_time();
    r.events = sim.state().event_count;
    r.real_changes = sim.real_changes();
    r.max_refresh_drift = sim.max_refresh_drift();
    r.switched = sim.switched();
    const double t = sim.state().micro_time;
    r.A_average = t > 0.0 ? sim.integral_A() / t : 0.0;
    r.A_tilde_average = t > 0.0 ? sim.integral_A_tilde() / t : 0.0;
    r.coupling = sim.coupling();
    if (sim.tracker().attached())
        for (const auto& p : sim.tracker().probes()) {
            r.sup_Q = std::max(r.sup_Q, p.sup_Q);
            for (int m = 0; m <= IteratedIntegral::max_order; ++m) r.sup_gap[m] = std::max(r.sup_gap[m], p.sup_gap[m]);
        }
    return r;
}

inline void write_checkpoint_file(const fs::path& p, const std::string& blob)
{
    fs::path tmp = p.string() + ".tmp";
    write_file(tmp, blob);
    fs::rename(tmp, p);
}

inline MicroReplica run_micro_replica(const MicroContext& ctx, const SimulateSection& s, std::uint64_t seed,
                                      std::uint64_t replica, const MicroRunOptions& opt = {})
{
    const auto t0 = std::chrono::steady_clock::now();
    Simulator sim(ctx.kernel, ctx.params, ctx.scaling, seed, replica, simulator_options(s));
    if (s.tracker) sim.attach_tracker(s.tracker_cfg);
    MicroReplica out;
    out.replica = replica;
    if (opt.checkpoint_file && fs::exists(*opt.checkpoint_file)) {
        sim.restore(deserialize_checkpoint(read_file(*opt.checkpoint_file), opt.config_hash, replica));
        out.resumed = true;
    }
    const double start = sim.macro_time();

    std::vector<double> snaps = s.times();
    std::vector<double> stops;
    for (double t : snaps)
        if (t > start + 1e-12) stops.push_back(t);
    if (opt.checkpoint_file && s.checkpoint_interval > 0.0)
        for (double t = s.checkpoint_interval; t < s.T_macro - 1e-12; t += s.checkpoint_interval)
            if (t > start + 1e-12) stops.push_back(t);
    std::sort(stops.begin(), stops.end());
    stops.erase(std::unique(stops.begin(), stops.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                stops.end());

    auto is_snapshot = [&](double t) {
        return std::any_of(snaps.begin(), snaps.end(), [&](double x) { return std::abs(x - t) < 1e-12; });
    };
    auto keep = [&](const FieldSnapshot& f) { return opt.keep_modes >= 0 ? restrict_modes(f, opt.keep_modes) : f; };

    auto sampler = [&](const Simulator& sm, double t) {
        if (is_snapshot(t)) {
            FieldSnapshot x = sm.snapshot();
            x.macro_time = t;
            if (opt.on_snapshot) opt.on_snapshot(x, "X");
            out.X.push_back(keep(x));
            if (sm.tracker().attached() && sm.tracker().config().track_z) {
                FieldSnapshot z = sm.tracker().z_snapshot();
                z.macro_time = t;
                if (opt.on_snapshot && s.save_z) opt.on_snapshot(z, "Z");
                out.Z.push_back(keep(z));
            }
            out.rows.push_back(sample_row(sm));
            out.rows.back().macro_time = t;
        }
        if (opt.checkpoint_file && s.checkpoint_interval > 0.0)
            write_checkpoint_file(*opt.checkpoint_file, serialize_checkpoint(sm.checkpoint(), opt.config_hash, replica));
    };
    out.trajectory = sim.run_to_macro_time(s.T_macro, stops, sampler);
    if (opt.checkpoint_file && fs::exists(*opt.checkpoint_file) && !out.trajectory.budget_exhausted)
        fs::remove(*opt.checkpoint_file);
    if (sim.tracker().attached()) out.probes = sim.tracker().probes();
    out.switched_at = sim.stop_switch().triggered_at;
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

struct SpdeReplica {
    std::uint64_t replica = 0;
    std::vector<SpdeRecord> records;
};

inline SpdeConfig spde_config_with_x0(const SpdeSection& sp)
{
    SpdeConfig cfg = sp.cfg;
    if (sp.X0.kind != "zero") {
        cfg.has_X0 = true;
        cfg.X0 = x0_snapshot(sp.X0, cfg.mode_cutoff - 1);
    }
    return cfg;
}

inline SpdeReplica run_spde_replica(const SpdeConfig& cfg, std::uint64_t seed, std::uint64_t replica, int keep_modes = -1)
{
    SpdeSolver solver(cfg, seed, replica);
    SpdeReplica out;
    out.replica = replica;
    out.records = solver.solve();
    if (keep_modes >= 0)
        for (auto& r : out.records) r.X = restrict_modes(r.X, keep_modes);
    return out;
}

// Snapshots grouped by time; entry i of each vector is replica i.
struct Ensemble {
    std::string label;
    double gamma = 0.0;
    std::map<double, std::vector<FieldSnapshot>> at;

    std::size_t replicas() const { return at.empty() ? 0 : at.begin()->second.size(); }
    int min_N() const
    {
        int n = std::numeric_limits<int>::max();
        for (const auto& [t, v] : at)
            for (const auto& s : v) n = std::min(n, s.N);
        return n;
    }
};

inline double time_key(double t) { return std::round(t * 1e9) / 1e9; }

inline Ensemble micro_ensemble(const std::vector<MicroReplica>& reps, double gamma, bool use_Z = false)
{
    Ensemble e;
    e.label = (use_Z ? "Z_gamma=" : "X_gamma=") + fmt_num(gamma);
    e.gamma = gamma;
    for (const auto& r : reps)
        for (const auto& s : use_Z ? r.Z : r.X) e.at[time_key(s.macro_time)].push_back(s);
    return e;
}

inline Ensemble spde_ensemble(const std::vector<SpdeReplica>& reps)
{
    Ensemble e;
    e.label = "spde";
    for (const auto& r : reps)
        for (const auto& rec : r.records) e.at[time_key(rec.t)].push_back(rec.X);
    return e;
}

// Loads all snapshots of one kind (X or Z) from <dir>/snapshots.
inline Ensemble load_ensemble(const fs::path& dir, const std::string& kind = "X", int keep_modes = -1)
{
    fs::path sd = dir / "snapshots";
    if (!fs::is_directory(sd)) throw std::runtime_error(sd.string() + ": no snapshot directory");
    std::vector<fs::path> bases;
    for (const auto& e : fs::directory_iterator(sd))
        if (e.path().extension() == ".json") bases.push_back(e.path().parent_path() / e.path().stem());
    std::sort(bases.begin(), bases.end());
    Ensemble out;
    out.label = dir.filename().string();
    std::map<double, std::vector<std::pair<std::uint64_t, FieldSnapshot>>> tmp;
    for (const auto& b : bases) {
        auto l = read_snapshot(b);
        if (l.meta.kind != kind) continue;
        out.gamma = l.snapshot.gamma;
        FieldSnapshot s = keep_modes >= 0 ? restrict_modes(l.snapshot, keep_modes) : std::move(l.snapshot);
        tmp[time_key(s.macro_time)].emplace_back(l.meta.replica, std::move(s));
    }
    if (tmp.empty()) throw std::runtime_error(sd.string() + ": no " + kind + " snapshots");
    for (auto& [t, v] : tmp) {
        std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (auto& [r, s] : v) out.at[t].push_back(std::move(s));
    }
    return out;
}

inline std::string snapshot_basename(const std::string& kind, std::uint64_t replica, double t)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_r%05llu_t", kind.c_str(), static_cast<unsigned long long>(replica));
    return buf + fmt_num(t);
}

} // namespace kbc
