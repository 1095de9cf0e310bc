#pragma once

#include "kbc/ensemble.hpp"
#include "kbc/stats.hpp"

#include <chrono>
#include <numeric>
#include <set>
#include <sstream>

namespace kbc {

using Mode = std::pair<int, int>;

// Representatives of w ~ -w with |w| <= r (Euclidean).
inline std::vector<Mode> half_plane_modes(int r)
{
    std::vector<Mode> out;
    for (int a = 0; a <= r; ++a)
        for (int b = -r; b <= r; ++b) {
            if (a * a + b * b > r * r) continue;
            if (a == 0 && b < 0) continue;
            out.emplace_back(a, b);
        }
    return out;
}

struct ObservableSpec {
    std::vector<Mode> modes;
    std::vector<double> times;   // empty: all times shared by the ensembles
    std::vector<int> moments{2, 4};
    std::string test = "ci-overlap";
    int batches = 20;
};

inline ObservableSpec observable_spec(const CompareSection& c)
{
    ObservableSpec s;
    s.modes = half_plane_modes(c.max_mode);
    s.times = c.times;
    s.moments = c.moments;
    s.test = c.test;
    s.batches = c.batches;
    return s;
}

// Order 1: Re X(w); 2: |X(w)|^2; 4: |X(w)|^4.
inline double moment_sample(const FieldSnapshot& s, Mode w, int order)
{
    const cplx z = s.at(w.first, w.second);
    switch (order) {
    case 1: return z.real();
    case 2: return std::norm(z);
    case 4: return std::norm(z) * std::norm(z);
    }
    throw std::invalid_argument("moment order must be 1, 2 or 4");
}

inline std::string observable_name(Mode w, int order)
{
    static const char* names[] = {"", "re", "m2", "", "m4"};
    return std::string(names[order]) + "(" + std::to_string(w.first) + "," + std::to_string(w.second) + ")";
}

inline std::vector<double> samples(const std::vector<FieldSnapshot>& v, Mode w, int order)
{
    std::vector<double> x;
    x.reserve(v.size());
    for (const auto& s : v) x.push_back(moment_sample(s, w, order));
    return x;
}

struct ObservableRow {
    std::string observable;
    Mode mode;
    int order = 2;
    double time = 0.0;
    double gamma = 0.0;
    Estimate micro, spde;
    double discrepancy = 0.0;
    double discrepancy_se = 0.0;
    bool ci_overlap = false;
};

struct TrendVerdict {
    std::string observable;
    double time = 0.0;
    std::vector<double> gammas; // decreasing
    std::vector<double> discrepancies;
    int inversions = 0;
    bool inversions_ok = false; // none, or one within the combined CI
    bool final_overlap = false;
    bool pass() const { return inversions_ok && final_overlap; }
};

struct KsRow {
    std::string observable;
    double time = 0.0;
    double gamma = 0.0;
    KsResult ks;
};

struct ComparisonReport {
    std::vector<ObservableRow> rows;
    std::vector<TrendVerdict> verdicts;
    std::vector<KsRow> ks;
    std::vector<double> gammas;
    std::size_t spde_replicas = 0;
    std::vector<std::size_t> micro_replicas;
    bool partial = false;
    std::string partial_reason;

    std::size_t passed() const
    {
        return static_cast<std::size_t>(std::count_if(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.pass(); }));
    }
    bool pass() const { return !partial && !verdicts.empty() && passed() == verdicts.size(); }
};

inline void check_mode_set(const std::vector<const Ensemble*>& es, const ObservableSpec& spec)
{
    int n = std::numeric_limits<int>::max();
    for (const auto* e : es) n = std::min(n, e->min_N());
    for (auto [a, b] : spec.modes)
        if (a * a + b * b > n * n)
            throw std::invalid_argument("mode (" + std::to_string(a) + "," + std::to_string(b) +
                                        ") lies outside the smallest mode set (N = " + std::to_string(n) + ")");
}

inline std::vector<double> shared_times(const std::vector<const Ensemble*>& es, const ObservableSpec& spec)
{
    std::vector<double> ts;
    if (!spec.times.empty())
        for (double t : spec.times) ts.push_back(time_key(t));
    else
        for (const auto& [t, v] : es.front()->at) ts.push_back(t);
    std::vector<double> out;
    for (double t : ts) {
        bool all = std::all_of(es.begin(), es.end(), [&](const Ensemble* e) { return e->at.count(t) > 0; });
        if (all) out.push_back(t);
        else if (!spec.times.empty())
            throw std::invalid_argument("time " + fmt_num(t) + " is missing from at least one ensemble");
    }
    if (out.empty()) throw std::invalid_argument("the ensembles share no snapshot time");
    return out;
}

inline ComparisonReport compare_ensembles(std::vector<Ensemble> micro, const Ensemble& spde, const ObservableSpec& spec)
{
    if (micro.empty()) throw std::invalid_argument("compare: no microscopic ensemble");
    std::sort(micro.begin(), micro.end(), [](const auto& a, const auto& b) { return a.gamma > b.gamma; });
    std::vector<const Ensemble*> all{&spde};
    for (const auto& m : micro) all.push_back(&m);
    check_mode_set(all, spec);
    const auto times = shared_times(all, spec);

    ComparisonReport rep;
    rep.spde_replicas = spde.replicas();
    for (const auto& m : micro) {
        rep.gammas.push_back(m.gamma);
        rep.micro_replicas.push_back(m.replicas());
    }
    for (double t : times)
        for (Mode w : spec.modes)
            for (int o : spec.moments) {
                const Estimate s = batch_means(samples(spde.at.at(t), w, o), spec.batches);
                TrendVerdict v;
                v.observable = observable_name(w, o);
                v.time = t;
                std::vector<double> dse;
                for (const auto& m : micro) {
                    ObservableRow r;
                    r.observable = v.observable;
                    r.mode = w;
                    r.order = o;
                    r.time = t;
                    r.gamma = m.gamma;
                    r.micro = batch_means(samples(m.at.at(t), w, o), spec.batches);
                    r.spde = s;
                    r.discrepancy = std::abs(r.micro.mean - s.mean);
                    r.discrepancy_se = combined_se(r.micro, s);
                    r.ci_overlap = ci_overlap(r.micro, s);
                    v.gammas.push_back(m.gamma);
                    v.discrepancies.push_back(r.discrepancy);
                    dse.push_back(r.discrepancy_se);
                    rep.rows.push_back(r);
                }
                bool small = true;
                for (std::size_t i = 0; i + 1 < v.discrepancies.size(); ++i) {
                    const double up = v.discrepancies[i + 1] - v.discrepancies[i];
                    if (up > 0.0) {
                        ++v.inversions;
                        small = small && up <= 1.96 * std::hypot(dse[i], dse[i + 1]);
                    }
                }
                v.inversions_ok = v.inversions == 0 || (v.inversions == 1 && small);
                v.final_overlap = rep.rows.back().ci_overlap;
                rep.verdicts.push_back(v);
                if (o == spec.moments.front()) {
                    const auto& fin = micro.back();
                    rep.ks.push_back({"re(" + std::to_string(w.first) + "," + std::to_string(w.second) + ")", t,
                                      fin.gamma,
                                      ks_two_sample(samples(fin.at.at(t), w, 1), samples(spde.at.at(t), w, 1))});
                }
            }
    return rep;
}

inline std::pair<Ensemble, Ensemble> split_half(const Ensemble& e)
{
    Ensemble a, b;
    a.gamma = b.gamma = e.gamma;
    a.label = e.label + "/even";
    b.label = e.label + "/odd";
    for (const auto& [t, v] : e.at)
        for (std::size_t i = 0; i < v.size(); ++i) (i % 2 ? b : a).at[t].push_back(v[i]);
    return {a, b};
}

// Compares the even replicas of an ensemble against its odd replicas.
inline ComparisonReport split_half_self_test(const Ensemble& e, const ObservableSpec& spec)
{
    auto [a, b] = split_half(e);
    return compare_ensembles({a}, b, spec);
}

inline json report_json(const ComparisonReport& r)
{
    json rows = json::array(), verdicts = json::array(), ks = json::array();
    for (const auto& x : r.rows)
        rows.push_back({{"observable", x.observable},
                        {"time", x.time},
                        {"gamma", x.gamma},
                        {"micro", {{"mean", x.micro.mean}, {"se", x.micro.se}, {"n", x.micro.n}}},
                        {"spde", {{"mean", x.spde.mean}, {"se", x.spde.se}, {"n", x.spde.n}}},
                        {"discrepancy", x.discrepancy},
                        {"discrepancy_se", x.discrepancy_se},
                        {"ci_overlap", x.ci_overlap}});
    for (const auto& v : r.verdicts)
        verdicts.push_back({{"observable", v.observable},
                            {"time", v.time},
                            {"gammas", v.gammas},
                            {"discrepancies", v.discrepancies},
                            {"inversions", v.inversions},
                            {"inversions_ok", v.inversions_ok},
                            {"final_overlap", v.final_overlap},
                            {"pass", v.pass()}});
    for (const auto& k : r.ks)
        ks.push_back({{"observable", k.observable}, {"time", k.time}, {"gamma", k.gamma}, {"D", k.ks.D}, {"p", k.ks.p}});
    return json{{"gammas", r.gammas},
                {"micro_replicas", r.micro_replicas},
                {"spde_replicas", r.spde_replicas},
                {"partial", r.partial},
                {"partial_reason", r.partial_reason},
                {"verdicts_passed", r.passed()},
                {"verdicts_total", r.verdicts.size()},
                {"pass", r.pass()},
                {"rows", rows},
                {"verdicts", verdicts},
                {"ks_advisory", ks}};
}

inline std::string verdicts_csv(const ComparisonReport& r)
{
    CsvWriter w({"observable", "time", "inversions", "inversions_ok", "final_overlap", "pass"});
    for (const auto& v : r.verdicts)
        w.cell(v.observable).cell(v.time).cell(v.inversions).cell(std::string(v.inversions_ok ? "true" : "false"))
            .cell(std::string(v.final_overlap ? "true" : "false")).cell(std::string(v.pass() ? "true" : "false")).end();
    return w.str();
}

// Long format: one line per (observable, time, gamma, source).
inline std::string long_csv(const ComparisonReport& r)
{
    CsvWriter w({"observable", "mode1", "mode2", "order", "time", "gamma", "source", "mean", "se", "lo95", "hi95"});
    for (const auto& x : r.rows) {
        for (int k = 0; k < 2; ++k) {
            const Estimate& e = k ? x.spde : x.micro;
            w.cell(x.observable).cell(x.mode.first).cell(x.mode.second).cell(x.order).cell(x.time).cell(x.gamma)
                .cell(std::string(k ? "spde" : "micro")).cell(e.mean).cell(e.se).cell(e.lo95()).cell(e.hi95()).end();
        }
    }
    return w.str();
}

struct LinearizationRow {
    Mode mode;
    double time = 0.0;
    Estimate variance;
    double target = 0.0;
    double discrete_target = std::numeric_limits<double>::quiet_NaN();
    double rel_dev = 0.0;
    double z_score = 0.0;
    bool pass() const { return rel_dev <= 0.10 || std::abs(z_score) <= 3.0; }
};

struct LinearizationReport {
    std::vector<LinearizationRow> rows;
    std::size_t replicas = 0;
    bool pass() const
    {
        return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.pass(); });
    }
};

// E|Z(t, w)|^2 from the tracked stochastic convolution against the exact
// OU value; the discrete target uses the kernel's Fourier symbol if given.
inline LinearizationReport linearization_check(const Ensemble& Z, double beta_c, int max_mode, int batches,
                                               const MicroContext* ctx = nullptr)
{
    LinearizationReport rep;
    rep.replicas = Z.replicas();
    for (const auto& [t, v] : Z.at)
        for (Mode w : half_plane_modes(max_mode)) {
            LinearizationRow r;
            r.mode = w;
            r.time = t;
            r.variance = batch_means(samples(v, w, 2), batches);
            const double w2 = static_cast<double>(w.first * w.first + w.second * w.second);
            r.target = ou_mode_variance(w2, beta_c, t);
            if (ctx) {
                const double khat = ctx->kernel.fourier_at(w.first, w.second);
                const double lambda = (khat - 1.0) / ctx->scaling.alpha;
                r.discrete_target = linearized_mode_variance(khat, lambda, ctx->scaling.c_gamma2, beta_c, t);
            }
            r.rel_dev = std::abs(r.variance.mean - r.target) / r.target;
            r.z_score = r.variance.se > 0.0 ? (r.variance.mean - r.target) / r.variance.se : 0.0;
            rep.rows.push_back(r);
        }
    return rep;
}

inline std::string linearization_csv(const LinearizationReport& r)
{
    CsvWriter w({"mode1", "mode2", "time", "mean", "se", "target", "discrete_target", "rel_dev", "z", "pass"});
    for (const auto& x : r.rows)
        w.cell(x.mode.first).cell(x.mode.second).cell(x.time).cell(x.variance.mean).cell(x.variance.se)
            .cell(x.target).cell(x.discrete_target).cell(x.rel_dev).cell(x.z_score)
            .cell(std::string(x.pass() ? "true" : "false")).end();
    return w.str();
}

// Full sweep: microscopic ensembles per gamma and one SPDE ensemble, under a
// wall-clock budget. Levels whose projected cost does not fit are skipped and
// the report is flagged partial.
struct SweepSpec {
    ModelSection model;
    std::vector<double> gammas;
    SimulateSection simulate;
    int micro_replicas = 200;
    SpdeConfig spde;
    int spde_replicas = 500;
    ObservableSpec observables;
    std::uint64_t seed = 1;
    int workers = 1;
    double budget_seconds = 7200.0;
    std::function<void(const std::string&)> log;
};

struct SweepLevel {
    double gamma = 0.0;
    int N = 0;
    double events_per_replica = 0.0;
    double events_per_second = 0.0;
    double projected_seconds = 0.0;
    double wall_seconds = 0.0;
    bool ran = false;
};

struct SweepResult {
    ComparisonReport report;
    std::vector<SweepLevel> levels;
    double spde_projected_seconds = 0.0;
    double projected_total_seconds = 0.0;
    double wall_seconds = 0.0;
};

// Level l of a sweep draws replica i from stream (l + 1) * 2^32 + i; the SPDE
// ensemble uses streams 0, 1, ...
inline std::uint64_t sweep_stream(std::size_t level, std::size_t replica)
{
    return (static_cast<std::uint64_t>(level + 1) << 32) + replica;
}

// Measures the event rate of one replica over a short horizon.
inline double pilot_event_rate(const MicroContext& ctx, const SimulateSection& s, std::uint64_t seed,
                               double target_events = 4e5)
{
    SimulateSection p = s;
    const double per_macro = static_cast<double>(ctx.scaling.torus().size()) / ctx.scaling.alpha;
    p.T_macro = std::min(s.T_macro, target_events / per_macro);
    p.snapshot_times.clear();
    p.checkpoint_interval = 0.0;
    p.max_events = 0;
    auto r = run_micro_replica(ctx, p, seed ^ 0x9e3779b97f4a7c15ULL, 0);
    return static_cast<double>(std::max<std::uint64_t>(r.trajectory.events, 1)) / std::max(r.wall_seconds, 1e-6);
}

inline SweepResult run_sweep(const SweepSpec& spec)
{
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    auto log = [&](const std::string& m) {
        if (spec.log) spec.log(m);
    };
    int keep = 0;
    for (auto [a, b] : spec.observables.modes) keep = std::max({keep, std::abs(a), std::abs(b)});
    const double w = std::max(spec.workers, 1);

    SweepResult res;
    std::vector<std::shared_ptr<const MicroContext>> ctxs;
    for (double g : spec.gammas) {
        ModelSection m = spec.model;
        m.gamma = g;
        auto ctx = make_micro_context(m);
        SweepLevel lv;
        lv.gamma = g;
        lv.N = ctx->scaling.N;
        lv.events_per_replica = spec.simulate.T_macro / ctx->scaling.alpha * static_cast<double>(ctx->scaling.torus().size());
        lv.events_per_second = pilot_event_rate(*ctx, spec.simulate, spec.seed);
        lv.projected_seconds = spec.micro_replicas * lv.events_per_replica / lv.events_per_second / w;
        log("gamma=" + fmt_num(g) + " N=" + std::to_string(lv.N) + " events/replica=" + fmt_num(lv.events_per_replica, 4) +
            " rate=" + fmt_num(lv.events_per_second, 4) + "/s projected=" + fmt_num(lv.projected_seconds, 4) + "s");
        res.levels.push_back(lv);
        ctxs.push_back(ctx);
    }
    {
        const auto p0 = std::chrono::steady_clock::now();
        run_spde_replica(spec.spde, spec.seed ^ 0x5851f42d4c957f2dULL, 0, keep);
        const double one = std::chrono::duration<double>(std::chrono::steady_clock::now() - p0).count();
        res.spde_projected_seconds = one * spec.spde_replicas / w;
    }
    res.projected_total_seconds = elapsed() + res.spde_projected_seconds;
    for (const auto& lv : res.levels) res.projected_total_seconds += lv.projected_seconds;
    log("projected total " + fmt_num(res.projected_total_seconds, 4) + "s against a budget of " +
        fmt_num(spec.budget_seconds, 4) + "s");

    std::vector<SpdeReplica> spde(spec.spde_replicas);
    parallel_for(spde.size(), spec.workers,
                 [&](std::size_t i) { spde[i] = run_spde_replica(spec.spde, spec.seed, i, keep); });
    Ensemble sp = spde_ensemble(spde);

    // Cheapest levels first; a level runs only if its projection fits the remaining budget.
    std::vector<std::size_t> order(res.levels.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](auto a, auto b) { return res.levels[a].projected_seconds < res.levels[b].projected_seconds; });
    std::vector<Ensemble> micro;
    std::vector<std::string> skipped;
    for (std::size_t li : order) {
        auto& lv = res.levels[li];
        if (elapsed() + lv.projected_seconds > spec.budget_seconds) {
            skipped.push_back(fmt_num(lv.gamma));
            log("gamma=" + fmt_num(lv.gamma) + " skipped: projected " + fmt_num(lv.projected_seconds, 4) +
                "s exceeds the remaining budget");
            continue;
        }
        const auto l0 = std::chrono::steady_clock::now();
        std::vector<MicroReplica> reps(spec.micro_replicas);
        MicroRunOptions opt;
        opt.keep_modes = keep;
        parallel_for(reps.size(), spec.workers, [&](std::size_t i) {
            reps[i] = run_micro_replica(*ctxs[li], spec.simulate, spec.seed, sweep_stream(li, i), opt);
        });
        lv.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - l0).count();
        lv.ran = true;
        log("gamma=" + fmt_num(lv.gamma) + " done in " + fmt_num(lv.wall_seconds, 4) + "s");
        micro.push_back(micro_ensemble(reps, lv.gamma));
    }
    if (micro.empty()) {
        res.report.partial = true;
        res.report.partial_reason = "no gamma level fits the budget";
    } else {
        res.report = compare_ensembles(micro, sp, spec.observables);
        if (!skipped.empty()) {
            res.report.partial = true;
            std::string s;
            for (const auto& g : skipped) s += (s.empty() ? "" : ", ") + g;
            res.report.partial_reason = "budget exhausted; skipped gamma = " + s;
        }
    }
    res.wall_seconds = elapsed();
    return res;
}

} // namespace kbc
