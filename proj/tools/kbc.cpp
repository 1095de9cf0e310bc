#include "kbc/compare.hpp"
#include "kbc/config.hpp"
#include "kbc/ensemble.hpp"
#include "kbc/io.hpp"
#include "kbc/kernel_estimates.hpp"
#include "kbc/parallel.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <mutex>

using namespace kbc;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::string out;
};

void add_common(CLI::App* app, Common& c)
{
    app->add_option("--config", c.config, "TOML configuration file")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "global seed (overrides run.seed)");
    app->add_option("--workers", c.workers, "worker threads, 0 = all cores (KBC_WORKERS overrides)");
    app->add_option("--out", c.out, "output directory (overrides run.out)");
}

RunConfig resolve(const Common& c)
{
    RunConfig cfg = c.config.empty() ? parse_config("") : load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.workers) cfg.workers = *c.workers;
    if (!c.out.empty()) cfg.out = c.out;
    cfg.workers = resolve_workers(cfg.workers);
    return cfg;
}

std::mutex log_mu;

void note(const std::string& s)
{
    std::lock_guard<std::mutex> lock(log_mu);
    std::cerr << s << '\n';
}

void echo(const RunConfig& c, const std::string& cmd)
{
    auto d = derived_echo(c);
    note(cmd + ": regime=" + d["regime"].get<std::string>() + " gamma=" + fmt_num(d["gamma"].get<double>()) +
         " N=" + std::to_string(d["N"].get<int>()) + " eps=" + fmt_num(d["eps"].get<double>()) +
         " alpha=" + fmt_num(d["alpha"].get<double>()) + " seed=" + std::to_string(c.seed) +
         " workers=" + std::to_string(c.workers) + " out=" + c.out);
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RunManifest manifest_for(const RunConfig& c, const std::string& cmd, double wall)
{
    RunManifest m;
    m.command = cmd;
    m.config_hash = c.hash;
    m.seeds = {c.seed};
    m.regime = to_string(c.model.regime);
    m.gamma = c.model.gamma;
    m.wall_seconds = wall;
    return m;
}

void save_config_copy(const RunConfig& c)
{
    write_file(fs::path(c.out) / "config.toml", c.source);
}

json params_json(const ModelParams& p)
{
    return json{{"a", p.a},           {"beta", p.beta},         {"theta", p.theta},     {"a_c", p.a_c},
                {"beta_c", p.beta_c}, {"theta_c", p.theta_c},   {"frak_a1", p.frak_a1}, {"frak_a3", p.frak_a3},
                {"c_gamma", p.c_gamma}, {"residuals", p.residuals}, {"iterations", p.iterations}};
}

int cmd_tune(const Common& cc)
{
    auto t0 = std::chrono::steady_clock::now();
    RunConfig c = resolve(cc);
    echo(c, "tune");
    auto ctx = make_micro_context(c.model);
    const auto& sc = ctx->scaling;
    auto sched = c.spde.cfg.make_schedule();
    json j{{"derived", derived_echo(c)},
           {"c_gamma", ctx->renorm.c_gamma},
           {"params", params_json(ctx->params)},
           {"spde",
            {{"n", c.spde.cfg.n},
             {"beta_c", c.spde.cfg.beta_c},
             {"leading_coefficient", c.spde.cfg.leading_coefficient()},
             {"coefficients", c.spde.cfg.coefficients()},
             {"c_eps", sched.c_eps}}},
           {"time_scale_alpha", sc.alpha},
           {"field_scale_delta", sc.delta}};
    fs::create_directories(c.out);
    save_config_copy(c);
    write_file(fs::path(c.out) / "tune.json", j.dump(2) + "\n");
    write_manifest(c.out, manifest_for(c, "tune", seconds_since(t0)));
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_kernel_check(const Common& cc)
{
    auto t0 = std::chrono::steady_clock::now();
    RunConfig c = resolve(cc);
    echo(c, "kernel-check");
    auto sc = c.scaling();
    auto k = build_kac_kernel(c.model.gamma, sc.torus(), build_mother_kernel(c.model.kernel));
    double sum = 0.0;
    for (double v : k.values) sum += v;
    json reports = json::array();
    for (int b : {b_time(c.model.regime), b_freq(c.model.regime)}) {
        auto r = verify_kernel_estimates(k, b);
        reports.push_back({{"b", r.b},         {"raw_sum", r.raw_sum}, {"max_imag", r.max_imag},
                           {"nonzero", r.nonzero}, {"k24", r.k24},     {"k23", r.k23},
                           {"k22", r.k22},     {"k1_abs", r.k1_abs},   {"k1_d", r.k1_d},
                           {"k1_dd", r.k1_dd}, {"k3b_0", r.k3b_0},     {"k3b_1", r.k3b_1},
                           {"k3b_2", r.k3b_2}, {"k2_min", r.k2_min}});
    }
    auto semi = make_semigroup(k, c.model.regime);
    json heat = json::array();
    for (double t : {1e-3, 1e-2, 1e-1, 1.0}) {
        auto h = heat_kernel_bound(k, semi, b_freq(c.model.regime), t);
        heat.push_back({{"t", h.t}, {"sup", h.sup}, {"bound", h.bound}, {"ratio", h.ratio}});
    }
    json j{{"derived", derived_echo(c)},
           {"kernel", to_string(c.model.kernel)},
           {"sum", sum},
           {"sum_defect", sum - 1.0},
           {"stencil_size", k.stencil_values.size()},
           {"estimates", reports},
           {"heat_kernel", heat}};
    fs::create_directories(c.out);
    save_config_copy(c);
    write_file(fs::path(c.out) / "kernel_check.json", j.dump(2) + "\n");
    write_manifest(c.out, manifest_for(c, "kernel-check", seconds_since(t0)));
    std::cout << j.dump(2) << '\n';
    return 0;
}

std::string replica_tag(std::uint64_t r)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "r%05llu", static_cast<unsigned long long>(r));
    return buf;
}

int cmd_simulate(const Common& cc)
{
    auto t0 = std::chrono::steady_clock::now();
    RunConfig c = resolve(cc);
    echo(c, "simulate");
    auto ctx = make_micro_context(c.model);
    const fs::path out = c.out;
    fs::create_directories(out / "snapshots");
    fs::create_directories(out / "replicas");
    fs::create_directories(out / "checkpoints");
    save_config_copy(c);
    write_file(out / "params.json", json{{"derived", derived_echo(c)}, {"params", params_json(ctx->params)}}.dump(2) + "\n");

    std::vector<int> status(c.replicas, 0);
    parallel_for(static_cast<std::size_t>(c.replicas), c.workers, [&](std::size_t i) {
        const std::string tag = replica_tag(i);
        const fs::path events = out / "replicas" / (tag + "_events.csv");
        if (fs::exists(events)) {
            note("replica " + tag + ": already complete, skipped");
            return;
        }
        MicroRunOptions opt;
        opt.config_hash = c.hash;
        opt.checkpoint_file = out / "checkpoints" / (tag + ".ckpt");
        opt.on_snapshot = [&](const FieldSnapshot& s, const std::string& kind) {
            write_snapshot(out / "snapshots" / snapshot_basename(kind, i, s.macro_time), s, {c.seed, i, kind});
        };
        auto r = run_micro_replica(*ctx, c.simulate, c.seed, i, opt);
        if (r.trajectory.budget_exhausted) {
            status[i] = 1;
            note("replica " + tag + ": event budget exhausted at t=" + fmt_num(r.trajectory.reached_macro_time) +
                 ", checkpoint kept");
            return;
        }
        CsvWriter ev({"macro_time", "events", "real_changes", "max_refresh_drift", "switched", "A_average",
                      "A_tilde_average", "sup_Q", "sup_gap2", "sup_gap3", "sup_gap4", "sup_gap5"});
        CsvWriter cp({"macro_time", "rings", "coin_failures", "mismatch_count", "mismatch_rate", "q_mean", "q_min",
                      "initial_mismatch"});
        for (const auto& row : r.rows) {
            ev.cell(row.macro_time).cell(row.events).cell(row.real_changes).cell(row.max_refresh_drift)
                .cell(std::string(row.switched ? "true" : "false")).cell(row.A_average).cell(row.A_tilde_average)
                .cell(row.sup_Q).cell(row.sup_gap[2]).cell(row.sup_gap[3]).cell(row.sup_gap[4]).cell(row.sup_gap[5]).end();
            const auto& k = row.coupling;
            const double rings = static_cast<double>(std::max<std::uint64_t>(k.rings, 1));
            cp.cell(row.macro_time).cell(k.rings).cell(k.coin_failures).cell(k.mismatch_count)
                .cell(static_cast<double>(k.mismatch_count) / rings).cell(k.q_sum / rings).cell(k.q_min)
                .cell(k.initial_mismatch).end();
        }
        if (c.simulate.coupled) cp.save(out / "replicas" / (tag + "_coupling.csv"));
        ev.save(events);
        note("replica " + tag + (r.resumed ? " (resumed)" : "") + ": " + std::to_string(r.trajectory.events) +
             " events in " + fmt_num(r.wall_seconds, 4) + "s");
    });
    fs::remove(out / "checkpoints");
    const bool incomplete = std::any_of(status.begin(), status.end(), [](int s) { return s != 0; });
    auto m = manifest_for(c, "simulate", seconds_since(t0));
    write_manifest(out, m);
    return incomplete ? 1 : 0;
}

int cmd_solve_spde(const Common& cc)
{
    auto t0 = std::chrono::steady_clock::now();
    RunConfig c = resolve(cc);
    echo(c, "solve-spde");
    SpdeConfig cfg = spde_config_with_x0(c.spde);
    cfg.validate();
    const fs::path out = c.out;
    fs::create_directories(out / "snapshots");
    fs::create_directories(out / "replicas");
    save_config_copy(c);

    auto sched = cfg.make_schedule();
    {
        CsvWriter w({"t", "c_eps", "c_eps_t", "bar_c", "bar_c_tail", "a1_t", "a3_t", "a5_t"});
        const int rows = 200;
        for (int i = 1; i <= rows; ++i) {
            const double t = cfg.T * i / rows;
            auto a = sched.a_of_t(t, cfg.schedule);
            a.resize(3, 0.0);
            w.cell(t).cell(sched.c_eps).cell(sched.c_eps_of_t(t)).cell(sched.bar_c(t)).cell(sched.bar_c_tail(t))
                .cell(a[0]).cell(a[1]).cell(a[2]).end();
        }
        w.save(out / "schedule.csv");
    }

    const std::string regime = cfg.n == 2 ? "phi4" : "phi6";
    parallel_for(static_cast<std::size_t>(c.replicas), c.workers, [&](std::size_t i) {
        auto r = run_spde_replica(cfg, c.seed, i);
        CsvWriter w({"t", "v_sup", "v_half_norm", "max_imag", "c_eps_t", "bar_c"});
        for (auto& rec : r.records) {
            rec.X.regime = regime;
            write_snapshot(out / "snapshots" / snapshot_basename("X", i, rec.t), rec.X, {c.seed, i, "X"});
            w.cell(rec.t).cell(rec.v_sup).cell(rec.v_half_norm).cell(rec.max_imag).cell(rec.c_of_t).cell(rec.bar_c).end();
        }
        w.save(out / "replicas" / (replica_tag(i) + "_spde.csv"));
    });
    auto m = manifest_for(c, "solve-spde", seconds_since(t0));
    m.regime = regime;
    m.gamma = 0.0;
    write_manifest(out, m);
    note("solve-spde: " + std::to_string(c.replicas) + " paths in " + fmt_num(seconds_since(t0), 4) + "s");
    return 0;
}

int cmd_observables(const Common& cc, std::string input)
{
    auto t0 = std::chrono::steady_clock::now();
    RunConfig c = resolve(cc);
    if (input.empty()) input = c.observables.input;
    if (input.empty()) throw std::invalid_argument("observables: no input directory (--input or observables.input)");
    const fs::path out = c.out;
    fs::create_directories(out);
    std::vector<fs::path> bases;
    for (const auto& e : fs::directory_iterator(fs::path(input) / "snapshots"))
        if (e.path().extension() == ".json") bases.push_back(e.path().parent_path() / e.path().stem());
    std::sort(bases.begin(), bases.end());
    if (bases.empty()) throw std::runtime_error(input + ": no snapshots");
    const auto modes = half_plane_modes(c.observables.max_mode);
    CsvWriter summary({"file", "kind", "replica", "macro_time", "N", "besov_nu", "besov", "besov_block", "mean",
                       "variance", "fourth_moment", "l2"});
    CsvWriter table({"file", "kind", "replica", "macro_time", "mode1", "mode2", "re", "im", "abs2"});
    for (const auto& b : bases) {
        auto l = read_snapshot(b);
        const auto& s = l.snapshot;
        auto bn = besov_norm(s, c.observables.nu);
        RArray g = snapshot_to_grid(s);
        double m1 = 0.0, m2 = 0.0, m4 = 0.0;
        for (double v : g) m1 += v;
        m1 /= static_cast<double>(g.size());
        for (double v : g) {
            m2 += (v - m1) * (v - m1);
            m4 += std::pow(v - m1, 4);
        }
        m2 /= static_cast<double>(g.size());
        m4 /= static_cast<double>(g.size());
        std::size_t arg = 0;
        for (std::size_t k = 0; k < bn.block_norms.size(); ++k)
            if (bn.block_norms[k].second > bn.block_norms[arg].second) arg = k;
        const std::string name = b.filename().string();
        summary.cell(name).cell(l.meta.kind).cell(l.meta.replica).cell(s.macro_time).cell(s.N).cell(c.observables.nu)
            .cell(bn.value).cell(bn.block_norms.empty() ? 0 : bn.block_norms[arg].first).cell(m1).cell(m2).cell(m4)
            .cell(fourier_l2(s)).end();
        for (auto [a, bb] : modes) {
            if (std::max(std::abs(a), std::abs(bb)) > s.N) continue;
            const cplx z = s.at(a, bb);
            table.cell(name).cell(l.meta.kind).cell(l.meta.replica).cell(s.macro_time).cell(a).cell(bb).cell(z.real())
                .cell(z.imag()).cell(std::norm(z)).end();
        }
    }
    summary.save(out / "observables.csv");
    table.save(out / "modes.csv");
    auto m = manifest_for(c, "observables", seconds_since(t0));
    write_manifest(out, m);
    note("observables: " + std::to_string(bases.size()) + " snapshots");
    return 0;
}

int cmd_compare(const Common& cc, std::vector<std::string> micro, std::string spde, bool self_test)
{
    auto t0 = std::chrono::steady_clock::now();
    RunConfig c = resolve(cc);
    if (micro.empty()) micro = c.compare.micro;
    if (spde.empty()) spde = c.compare.spde;
    if (micro.empty()) throw std::invalid_argument("compare: no microscopic ensemble directories");
    auto spec = observable_spec(c.compare);
    int keep = 0;
    for (auto [a, b] : spec.modes) keep = std::max({keep, std::abs(a), std::abs(b)});
    const fs::path out = c.out;
    fs::create_directories(out);

    std::vector<Ensemble> ms;
    for (const auto& d : micro) ms.push_back(load_ensemble(d, "X", keep));
    ComparisonReport rep;
    if (self_test) {
        rep = split_half_self_test(ms.front(), spec);
    } else {
        if (spde.empty()) throw std::invalid_argument("compare: no SPDE ensemble directory");
        rep = compare_ensembles(ms, load_ensemble(spde, "X", keep), spec);
    }
    json j = report_json(rep);
    if (c.compare.linearization) {
        const int lk = std::max(keep, 4);
        json lin = json::array();
        for (const auto& d : micro) {
            Ensemble z = load_ensemble(d, "Z", lk);
            ModelSection m = c.model;
            m.gamma = z.gamma;
            auto ctx = make_micro_context(m);
            auto lr = linearization_check(z, ctx->params.beta_c, 4, spec.batches, ctx.get());
            write_file(out / ("linearization_gamma" + fmt_num(z.gamma) + ".csv"), linearization_csv(lr));
            lin.push_back({{"gamma", z.gamma}, {"replicas", lr.replicas}, {"pass", lr.pass()}});
        }
        j["linearization"] = lin;
    }
    write_file(out / "report.json", j.dump(2) + "\n");
    write_file(out / "verdicts.csv", verdicts_csv(rep));
    write_file(out / "long.csv", long_csv(rep));
    auto m = manifest_for(c, "compare", seconds_since(t0));
    write_manifest(out, m);
    std::cout << "verdicts passed " << rep.passed() << "/" << rep.verdicts.size() << (rep.pass() ? " PASS" : " FAIL")
              << '\n';
    return rep.pass() ? 0 : 1;
}

int cmd_verify(const Common& cc, std::string dir)
{
    if (dir.empty()) dir = cc.out;
    if (dir.empty()) throw std::invalid_argument("verify: give a directory (positional or --out)");
    auto r = verify_manifest(dir);
    for (const auto& p : r.problems) std::cout << "FAIL " << p << '\n';
    std::cout << (r.ok() ? "OK " : "FAIL ") << r.checked << " files checked in " << dir << '\n';
    return r.ok() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Kac-Blume-Capel Glauber dynamics and Phi^4 / Phi^6 SPDE toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(KBC_VERSION));

    Common tune_c, kern_c, sim_c, spde_c, obs_c, cmp_c, ver_c;
    auto* tune = app.add_subcommand("tune", "derive scaling and tuned model parameters");
    add_common(tune, tune_c);
    auto* kern = app.add_subcommand("kernel-check", "kernel normalization and Fourier estimates");
    add_common(kern, kern_c);
    auto* sim = app.add_subcommand("simulate", "microscopic Glauber dynamics ensemble");
    add_common(sim, sim_c);
    auto* spde = app.add_subcommand("solve-spde", "renormalized SPDE ensemble");
    add_common(spde, spde_c);
    auto* obs = app.add_subcommand("observables", "Besov norms, mode tables and moments of snapshots");
    add_common(obs, obs_c);
    std::string obs_input;
    obs->add_option("--input", obs_input, "directory with a snapshots/ subdirectory");
    auto* cmp = app.add_subcommand("compare", "compare microscopic ensembles against an SPDE ensemble");
    add_common(cmp, cmp_c);
    std::vector<std::string> cmp_micro;
    std::string cmp_spde;
    bool cmp_self = false;
    cmp->add_option("--micro", cmp_micro, "microscopic ensemble directories");
    cmp->add_option("--spde", cmp_spde, "SPDE ensemble directory");
    cmp->add_flag("--self-test", cmp_self, "split-half comparison of the first microscopic ensemble");
    auto* ver = app.add_subcommand("verify", "check an output directory against its manifest");
    add_common(ver, ver_c);
    std::string ver_dir;
    ver->add_option("dir", ver_dir, "output directory");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*tune) return cmd_tune(tune_c);
        if (*kern) return cmd_kernel_check(kern_c);
        if (*sim) return cmd_simulate(sim_c);
        if (*spde) return cmd_solve_spde(spde_c);
        if (*obs) return cmd_observables(obs_c, obs_input);
        if (*cmp) return cmd_compare(cmp_c, cmp_micro, cmp_spde, cmp_self);
        if (*ver) return cmd_verify(ver_c, ver_dir);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
