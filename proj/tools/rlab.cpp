// Command-line front end for the experiment harness.
//
//   rlab simulate --config run.cfg --seed 1,2,3 --out results/
//   rlab compare  --config run.cfg
//   rlab ablate   --config run.cfg
//   rlab replay   --config run.cfg --file clicks.tsv --sample-rate 0.1
//   rlab report   --from-checkpoint ck --config run.cfg --out results/
//   rlab selftest
//
// Exit codes: 0 success, 2 bad usage or configuration, 3 runtime failure
// (including any replica that aborted mid-run).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rlab/experiment.hpp"

using namespace rlab;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::uint64_t> seeds;
    std::string method;
    std::int64_t horizon = -1;
    std::int64_t report_every = -1;
    std::string out_dir;
    std::int64_t checkpoint_at = -1;
    std::string checkpoint_file;
    std::string resume;
    bool allow_fallback = false;
    bool serial = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "key=value config file");
    cmd->add_option("--seed", o.seeds, "replica seeds")->delimiter(',');
    cmd->add_option("--method", o.method,
                    "rl_llm_abtest|static_ab|linucb|fm_rank|rule_policy");
    cmd->add_option("--horizon", o.horizon, "impressions per replica");
    cmd->add_option("--report-every", o.report_every, "metric checkpoint interval");
    cmd->add_option("--out", o.out_dir, "report output directory");
    cmd->add_option("--checkpoint-at", o.checkpoint_at,
                    "write a checkpoint once this many impressions are served");
    cmd->add_option("--checkpoint-file", o.checkpoint_file, "checkpoint path");
    cmd->add_option("--resume", o.resume, "resume from this checkpoint");
    cmd->add_flag("--allow-generator-fallback", o.allow_fallback,
                  "serve from the stub generator when the external one is unavailable");
    cmd->add_flag("--serial", o.serial, "run replicas one at a time");
}

RunConfig build_config(const CommonOpts& o) {
    RunConfig cfg;
    if (!o.config_path.empty()) {
        try {
            cfg = RunConfig::from_file(o.config_path);
        } catch (const IoError& e) {
            // a bad --config argument is a usage error, not a runtime one
            throw ConfigError(e.what());
        }
    }
    if (!o.seeds.empty()) cfg.seeds = o.seeds;
    if (!o.method.empty()) cfg.method = parse_method(o.method);
    if (o.horizon >= 0) cfg.horizon = o.horizon;
    if (o.report_every >= 0) cfg.report_every = o.report_every;
    if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
    if (o.checkpoint_at >= 0) cfg.checkpoint_at = o.checkpoint_at;
    if (!o.checkpoint_file.empty()) cfg.checkpoint_path = o.checkpoint_file;
    if (!o.resume.empty()) cfg.resume_path = o.resume;
    if (o.allow_fallback) cfg.allow_generator_fallback = true;
    if (o.serial) cfg.parallel_replicas = false;
    cfg.validate();
    for (const std::string& w : cfg.warnings()) std::cerr << "warning: " << w << '\n';
    return cfg;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string now_iso() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[24];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void print_replica(const std::string& label, const ReplicaResult& r) {
    if (r.failed) {
        std::cerr << label << " seed " << r.seed << " FAILED: " << r.failure << '\n';
        return;
    }
    if (r.series.points.empty()) {
        std::cout << label << " seed " << r.seed << ": no impressions served\n";
        return;
    }
    const MetricPoint& p = r.series.points.back();
    std::cout << label << " seed " << r.seed << ": impressions " << p.impressions << " clicks "
              << p.clicks << " ctr " << fmt_double(p.ctr) << " ci [" << fmt_double(p.ci_low)
              << ", " << fmt_double(p.ci_high) << "]";
    if (p.oracle_ctr) std::cout << " oracle " << fmt_double(*p.oracle_ctr);
    if (r.generator_fallbacks)
        std::cout << " (generator fallbacks: " << r.generator_fallbacks << ")";
    std::cout << '\n';
}

// Shared tail for every run-style subcommand: print per-replica summaries,
// export the report bundle, and fold failures into the exit code.
int finish(const RunConfig& cfg, const std::vector<ExperimentResult>& results,
           const std::string& started, double wall_seconds) {
    ReportMeta meta;
    meta.config_hash = hash_hex(cfg.config_hash());
    meta.seeds = cfg.seeds;
    meta.started_at = started;
    meta.finished_at = now_iso();
    meta.wall_seconds = wall_seconds;

    bool any_failed = false;
    std::vector<MetricSeries> pooled;
    for (const ExperimentResult& res : results) {
        for (const ReplicaResult& r : res.replicas) {
            print_replica(res.label, r);
            if (r.failed) {
                any_failed = true;
                meta.failures.push_back(res.label + " seed " + std::to_string(r.seed) + ": " +
                                        r.failure);
            }
        }
        if (!res.pooled.points.empty()) {
            pooled.push_back(res.pooled);
            const MetricPoint& p = res.pooled.points.back();
            std::cout << res.label << " pooled: impressions " << p.impressions << " clicks "
                      << p.clicks << " ctr " << fmt_double(p.ctr) << " ci ["
                      << fmt_double(p.ci_low) << ", " << fmt_double(p.ci_high) << "]\n";
        }
    }
    if (pooled.empty()) {
        std::cerr << "no replica finished; nothing to export\n";
        return 3;
    }
    export_report(cfg.out_dir, pooled, meta);
    for (const MetricSeries& s : pooled)
        std::cout << "wrote " << cfg.out_dir << "/" << s.method << ".csv\n";
    std::cout << "wrote " << cfg.out_dir << "/chart.svg\n";
    return any_failed ? 3 : 0;
}

int cmd_simulate(const CommonOpts& o) {
    RunConfig cfg = build_config(o);
    const std::string started = now_iso();
    auto t0 = std::chrono::steady_clock::now();
    ExperimentResult res = run_experiment(cfg);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return finish(cfg, {res}, started, wall);
}

int cmd_compare(const CommonOpts& o) {
    RunConfig cfg = build_config(o);
    const std::string started = now_iso();
    auto t0 = std::chrono::steady_clock::now();
    std::vector<ExperimentResult> results = run_compare(cfg);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return finish(cfg, results, started, wall);
}

int cmd_ablate(const CommonOpts& o) {
    RunConfig cfg = build_config(o);
    const std::string started = now_iso();
    auto t0 = std::chrono::steady_clock::now();
    std::vector<ExperimentResult> results = run_ablation(cfg);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return finish(cfg, results, started, wall);
}

int cmd_replay(const CommonOpts& o, const std::string& file, double sample_rate, bool strict) {
    CommonOpts full = o;
    RunConfig cfg = build_config(full);
    cfg.replay_path = file;
    if (sample_rate > 0.0) cfg.replay_sample_rate = sample_rate;
    if (strict) cfg.replay_strict = true;
    const std::string started = now_iso();
    auto t0 = std::chrono::steady_clock::now();
    ExperimentResult res = run_experiment(cfg);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return finish(cfg, {res}, started, wall);
}

int cmd_report(const CommonOpts& o, const std::string& from_checkpoint) {
    RunConfig cfg = build_config(o);
    RunState st = load_checkpoint(from_checkpoint, cfg);
    if (st.series.points.empty())
        throw ConfigError("checkpoint holds no metric rows yet; nothing to report");
    ReportMeta meta;
    meta.config_hash = hash_hex(cfg.config_hash());
    meta.seeds = {st.seed};
    meta.started_at = now_iso();
    meta.finished_at = meta.started_at;
    export_report(cfg.out_dir, {st.series}, meta);
    std::cout << "seed " << st.seed << ": " << st.series.points.size() << " rows through step "
              << st.series.points.back().step << '\n';
    std::cout << "wrote " << cfg.out_dir << "/" << st.series.method << ".csv\n";
    std::cout << "wrote " << cfg.out_dir << "/chart.svg\n";
    return 0;
}

// ------------------------------------------------------------------ selftest

void expect(bool ok, const std::string& name) {
    if (!ok) throw NumericError("selftest check failed: " + name);
    std::cout << "ok: " << name << '\n';
}

Vec flat_params(const Mlp& m) {
    Vec out(m.param_count());
    m.to_flat(out.data());
    return out;
}

int cmd_selftest() {
    {
        Interval iv = wilson_interval(50, 100);
        expect(std::fabs(iv.low - 0.40383) < 1e-4 && std::fabs(iv.high - 0.59617) < 1e-4,
               "wilson interval spot value");
    }
    {
        Rng rng(7);
        Mlp actor = make_actor(4, rng);
        Transition t;
        t.state = Vec{0.3, -0.2, 0.5, 0.1};
        Vec probs = softmax(mlp_apply(actor, t.state));
        // the minority action keeps the synthetic old log-prob valid for
        // every ratio probed below
        t.action = probs[0] < probs[1] ? Arm::A : Arm::B;
        const double logp = std::log(std::min(probs[0], probs[1]));
        auto spot = [&](double ratio, double adv) {
            Transition tt = t;
            tt.log_prob_old = logp - std::log(ratio);
            Mlp g = zeros_like(actor);
            return ppo_actor_loss(actor, {tt}, {0}, Vec{adv}, 0.2, 0.0, g).loss;
        };
        expect(std::fabs(spot(1.0, 0.7) + 0.7) < 1e-12 &&
                   std::fabs(spot(2.0, 1.0) + 1.2) < 1e-12 &&
                   std::fabs(spot(0.5, -1.0) - 0.8) < 1e-12,
               "ppo clipped objective spot values");
    }
    {
        Rng rng(11);
        Mlp net({3, 5, 2}, rng);
        const Vec x{0.2, -0.4, 0.7}, y{0.5, -0.1};
        MlpCache cache;
        Vec out = mlp_apply(net, x, &cache);
        Vec upstream{2.0 * (out[0] - y[0]), 2.0 * (out[1] - y[1])};
        Mlp grads = zeros_like(net);
        mlp_grad(net, cache, upstream, grads);
        Vec analytic = flat_params(grads);

        Vec p = flat_params(net);
        double max_err = 0.0, scale = 1e-8;
        const double h = 1e-6;
        for (std::size_t i = 0; i < p.size(); ++i) {
            Mlp probe = net;
            const double orig = p[i];
            auto loss_at = [&](double v) {
                p[i] = v;
                probe.from_flat(p.data());
                Vec o = mlp_apply(probe, x);
                return (o[0] - y[0]) * (o[0] - y[0]) + (o[1] - y[1]) * (o[1] - y[1]);
            };
            const double fd = (loss_at(orig + h) - loss_at(orig - h)) / (2.0 * h);
            p[i] = orig;
            max_err = std::max(max_err, std::fabs(fd - analytic[i]));
            scale = std::max({scale, std::fabs(fd), std::fabs(analytic[i])});
        }
        expect(max_err / scale <= 1e-5, "mlp gradient matches finite differences");
    }
    {
        Rng rng(3);
        Vec r(40);
        for (double& v : r) v = rng.uniform(-1.0, 1.0);
        const double gamma = 0.9;
        Vec rec = memory_return(gamma, r);
        double max_err = 0.0;
        for (std::size_t t = 0; t < r.size(); ++t) {
            double brute = 0.0, g = 1.0;
            for (std::size_t k = t; k < r.size(); ++k, g *= gamma) brute += g * r[k];
            max_err = std::max(max_err, std::fabs(rec[t] - brute));
        }
        expect(max_err <= 1e-12, "discounted return recursion matches brute force");
    }
    {
        namespace fs = std::filesystem;
        const fs::path dir =
            fs::temp_directory_path() / ("rlab_selftest_" + std::to_string(::getpid()));
        fs::create_directories(dir);
        RunConfig cfg;
        cfg.seeds = {1};
        cfg.horizon = 60;
        cfg.report_every = 20;
        cfg.env_kind = EnvKind::TwoArm;
        cfg.n_users = 30;
        cfg.d_u = 4;
        cfg.d_c = 3;
        cfg.d_e = 6;
        cfg.d_s = 8;
        cfg.d_m = 4;
        cfg.oracle_users = 10;
        cfg.buffer_capacity = 16;
        cfg.minibatch = 8;
        cfg.estimator_minibatch = 8;
        cfg.delay_max = 3;
        cfg.no_prompt_opt = true;
        cfg.checkpoint_at = 30;
        cfg.checkpoint_path = (dir / "ck").string();
        ExperimentResult full = run_experiment(cfg);
        RunConfig resumed_cfg = cfg;
        resumed_cfg.resume_path = cfg.checkpoint_path;
        ExperimentResult resumed = run_experiment(resumed_cfg);
        bool equal = !full.replicas[0].failed && !resumed.replicas[0].failed &&
                     full.replicas[0].series.points.size() ==
                         resumed.replicas[0].series.points.size();
        if (equal)
            for (std::size_t i = 0; i < full.replicas[0].series.points.size(); ++i) {
                const MetricPoint &a = full.replicas[0].series.points[i],
                                  &b = resumed.replicas[0].series.points[i];
                equal = equal && a.step == b.step && a.clicks == b.clicks && a.ctr == b.ctr;
            }
        fs::remove_all(dir);
        expect(equal, "checkpoint resume reproduces the uninterrupted run");
    }
    std::cout << "selftest passed (5 checks)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"closed-loop ad variant experiment harness"};
    app.require_subcommand(1);

    CommonOpts sim_o, cmp_o, abl_o, rep_o, rpt_o;
    std::string replay_file, from_checkpoint;
    double sample_rate = 0.0;
    bool strict_parse = false;

    CLI::App* sim = app.add_subcommand("simulate", "run one method on the synthetic environment");
    add_common(sim, sim_o);
    CLI::App* cmp = app.add_subcommand("compare", "run every method on the same configuration");
    add_common(cmp, cmp_o);
    CLI::App* abl = app.add_subcommand("ablate", "run the single-axis ablation protocol");
    add_common(abl, abl_o);
    CLI::App* rep = app.add_subcommand("replay", "drive the loop from a logged click dataset");
    add_common(rep, rep_o);
    rep->add_option("--file", replay_file, "tab-separated click log")->required();
    rep->add_option("--sample-rate", sample_rate, "keep each row with this probability");
    rep->add_flag("--strict-parse", strict_parse, "abort on malformed rows instead of skipping");
    CLI::App* rpt = app.add_subcommand("report", "regenerate report artifacts from a checkpoint");
    add_common(rpt, rpt_o);
    rpt->add_option("--from-checkpoint", from_checkpoint, "checkpoint to read")->required();
    CLI::App* self = app.add_subcommand("selftest", "fast internal consistency checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) return cmd_simulate(sim_o);
        if (cmp->parsed()) return cmd_compare(cmp_o);
        if (abl->parsed()) return cmd_ablate(abl_o);
        if (rep->parsed()) return cmd_replay(rep_o, replay_file, sample_rate, strict_parse);
        if (rpt->parsed()) return cmd_report(rpt_o, from_checkpoint);
        if (self->parsed()) return cmd_selftest();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 2;
}
