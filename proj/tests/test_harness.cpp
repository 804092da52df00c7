#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "rlab/experiment.hpp"
#include "testutil.hpp"

using namespace rlab;
namespace fs = std::filesystem;

namespace {

std::string at(const test::TempDir& d, const std::string& name) {
    return (d.path / name).string();
}

RunConfig small_two_arm() {
    RunConfig cfg;
    cfg.seeds = {7};
    cfg.horizon = 200;
    cfg.report_every = 50;
    cfg.env_kind = EnvKind::TwoArm;
    cfg.n_users = 60;
    cfg.n_segments = 3;
    cfg.d_u = 6;
    cfg.d_c = 4;
    cfg.d_e = 8;
    cfg.d_s = 10;
    cfg.d_m = 6;
    cfg.oracle_users = 20;
    cfg.buffer_capacity = 32;
    cfg.minibatch = 16;
    cfg.delay_max = 4;
    cfg.prompt_opt_budget = 8;
    cfg.prompt_opt_probes = 5;
    cfg.estimator_minibatch = 8;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool same_series(const MetricSeries& a, const MetricSeries& b) {
    if (a.points.size() != b.points.size()) return false;
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        const MetricPoint &p = a.points[i], &q = b.points[i];
        if (p.step != q.step || p.impressions != q.impressions || p.clicks != q.clicks)
            return false;
        if (p.ctr != q.ctr || p.ci_low != q.ci_low || p.ci_high != q.ci_high) return false;
        if (p.oracle_ctr.has_value() != q.oracle_ctr.has_value()) return false;
        if (p.oracle_ctr && *p.oracle_ctr != *q.oracle_ctr) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("horizon of one produces exactly one impression and one row") {
    RunConfig cfg = small_two_arm();
    cfg.horizon = 1;
    cfg.no_prompt_opt = true;
    ExperimentResult res = run_experiment(cfg);
    REQUIRE(res.replicas.size() == 1);
    REQUIRE_FALSE(res.replicas[0].failed);
    const MetricSeries& s = res.replicas[0].series;
    REQUIRE(s.points.size() == 1);
    CHECK(s.points[0].step == 1);
    CHECK(s.points[0].impressions == 1);
    CHECK(s.points[0].clicks <= 1);
    CHECK(s.points[0].ci_low <= s.points[0].ctr);
    CHECK(s.points[0].ctr <= s.points[0].ci_high);
    REQUIRE(s.points[0].oracle_ctr.has_value());
}

TEST_CASE("rows land on the reporting grid plus the final step") {
    RunConfig cfg = small_two_arm();
    cfg.horizon = 170;
    cfg.report_every = 50;
    cfg.no_prompt_opt = true;
    ExperimentResult res = run_experiment(cfg);
    REQUIRE_FALSE(res.replicas[0].failed);
    const MetricSeries& s = res.replicas[0].series;
    REQUIRE(s.points.size() == 4);
    CHECK(s.points[0].step == 50);
    CHECK(s.points[1].step == 100);
    CHECK(s.points[2].step == 150);
    CHECK(s.points[3].step == 170);
    REQUIRE_NOTHROW(validate_series(s));

    // exact multiple: no duplicate final row
    cfg.horizon = 150;
    ExperimentResult res2 = run_experiment(cfg);
    REQUIRE(res2.replicas[0].series.points.size() == 3);
}

TEST_CASE("the full loop is deterministic for a fixed config and seed") {
    RunConfig cfg = small_two_arm();
    cfg.env_kind = EnvKind::Population;
    cfg.n_users = 40;
    cfg.drift = {DriftEvent{DriftEvent::Kind::Flip, 90, 0.0}};
    ExperimentResult a = run_experiment(cfg);
    ExperimentResult b = run_experiment(cfg);
    REQUIRE_FALSE(a.replicas[0].failed);
    REQUIRE(same_series(a.replicas[0].series, b.replicas[0].series));

    cfg.method = Method::LinUcb;
    ExperimentResult c = run_experiment(cfg);
    ExperimentResult d = run_experiment(cfg);
    REQUIRE_FALSE(c.replicas[0].failed);
    REQUIRE(same_series(c.replicas[0].series, d.replicas[0].series));
    REQUIRE_FALSE(same_series(a.replicas[0].series, c.replicas[0].series));
}

TEST_CASE("replicas merge in seed order and pooling sums the counts") {
    RunConfig cfg = small_two_arm();
    cfg.seeds = {11, 3, 25};
    cfg.no_prompt_opt = true;
    cfg.record_oracle = false;

    ExperimentResult par = run_experiment(cfg);
    REQUIRE(par.replicas.size() == 3);
    CHECK(par.replicas[0].seed == 11);
    CHECK(par.replicas[1].seed == 3);
    CHECK(par.replicas[2].seed == 25);

    cfg.parallel_replicas = false;
    ExperimentResult ser = run_experiment(cfg);
    for (int i = 0; i < 3; ++i)
        REQUIRE(same_series(par.replicas[i].series, ser.replicas[i].series));

    REQUIRE(par.pooled.points.size() == par.replicas[0].series.points.size());
    for (std::size_t i = 0; i < par.pooled.points.size(); ++i) {
        std::uint64_t impressions = 0, clicks = 0;
        for (const auto& r : par.replicas) {
            impressions += r.series.points[i].impressions;
            clicks += r.series.points[i].clicks;
        }
        CHECK(par.pooled.points[i].impressions == impressions);
        CHECK(par.pooled.points[i].clicks == clicks);
        Interval ci = wilson_interval(clicks, impressions);
        CHECK(par.pooled.points[i].ci_low == ci.low);
        CHECK(par.pooled.points[i].ci_high == ci.high);
    }
}

TEST_CASE("probe impressions are part of the budget and the metric record") {
    RunConfig cfg = small_two_arm();
    cfg.env_kind = EnvKind::ToneReward;
    cfg.tone_bonus = 0.2;
    cfg.horizon = 120;
    cfg.report_every = 40;
    ExperimentResult res = run_experiment(cfg);
    REQUIRE_FALSE(res.replicas[0].failed);
    const MetricSeries& s = res.replicas[0].series;
    // probes run first (8 evals x 5 probes = 40 max) but every row still
    // counts one impression per step
    REQUIRE(s.points.size() == 3);
    CHECK(s.points.back().step == 120);
    CHECK(s.points.back().impressions == 120);

    // a horizon too small for the probe phase is a config error
    cfg.horizon = 30;
    REQUIRE_THROWS_AS(run_experiment(cfg), ConfigError);
}

TEST_CASE("checkpoint resume reproduces the uninterrupted run for every method") {
    test::TempDir tmp("harness");
    for (Method m : kAllMethods) {
        RunConfig cfg = small_two_arm();
        cfg.method = m;
        cfg.env_kind = EnvKind::Population;
        cfg.n_users = 40;
        cfg.drift = {DriftEvent{DriftEvent::Kind::Flip, 130, 0.0}};
        cfg.horizon = 180;
        cfg.report_every = 30;
        cfg.seeds = {4};
        cfg.static_ab_exploration_n = 40;
        cfg.checkpoint_at = 90;
        cfg.checkpoint_path = at(tmp, std::string("ck_") + method_name(m));

        ExperimentResult full = run_experiment(cfg);
        REQUIRE_FALSE(full.replicas[0].failed);
        REQUIRE(fs::exists(cfg.checkpoint_path));

        RunConfig resumed_cfg = cfg;
        resumed_cfg.resume_path = cfg.checkpoint_path;
        ExperimentResult resumed = run_experiment(resumed_cfg);
        REQUIRE_FALSE(resumed.replicas[0].failed);
        INFO("method " << method_name(m));
        REQUIRE(same_series(full.replicas[0].series, resumed.replicas[0].series));
    }
}

TEST_CASE("checkpoint files round-trip byte for byte") {
    test::TempDir tmp("harness");
    RunConfig cfg = small_two_arm();
    cfg.checkpoint_at = 100;
    cfg.checkpoint_path = at(tmp, "ck");
    ExperimentResult res = run_experiment(cfg);
    REQUIRE_FALSE(res.replicas[0].failed);

    RunState st = load_checkpoint(cfg.checkpoint_path, cfg);
    save_checkpoint(at(tmp, "ck2"), st);
    REQUIRE(slurp(cfg.checkpoint_path) == slurp(at(tmp, "ck2")));

    SECTION("corruption is caught by the checksum") {
        std::string bytes = slurp(cfg.checkpoint_path);
        bytes[bytes.size() / 2] ^= 0x01;
        std::ofstream(at(tmp, "bad"), std::ios::binary) << bytes;
        REQUIRE_THROWS_AS(load_checkpoint(at(tmp, "bad"), cfg), ChecksumError);
    }
    SECTION("a bumped format version is rejected") {
        write_container(at(tmp, "vnext"), kCheckpointVersion + 1, serialize_run_state(st));
        REQUIRE_THROWS_AS(load_checkpoint(at(tmp, "vnext"), cfg), VersionError);
    }
    SECTION("a different config cannot adopt the checkpoint") {
        RunConfig other = cfg;
        other.gamma = 0.95;
        REQUIRE_THROWS_AS(load_checkpoint(cfg.checkpoint_path, other), ConfigError);
    }
}

TEST_CASE("metric csv uses the exact header and round-trips its numbers") {
    test::TempDir tmp("harness");
    RunConfig cfg = small_two_arm();
    cfg.seeds = {2, 9};
    ExperimentResult res = run_experiment(cfg);
    ReportMeta meta;
    meta.seeds = cfg.seeds;
    export_report(tmp.path.string(), {res.pooled}, meta);

    std::ifstream in(at(tmp, "rl_llm_abtest.csv"));
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    REQUIRE(header == "step,impressions,clicks,ctr,ci_low,ci_high,oracle_ctr");
    std::size_t rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.push_back("");
        REQUIRE(cells.size() == 7);
        const MetricPoint& p = res.pooled.points[rows];
        CHECK(std::stoull(cells[0]) == p.step);
        CHECK(std::stoull(cells[1]) == p.impressions);
        CHECK(std::stoull(cells[2]) == p.clicks);
        // shortest round-trip formatting means exact recovery
        CHECK(std::stod(cells[3]) == p.ctr);
        CHECK(std::stod(cells[4]) == p.ci_low);
        CHECK(std::stod(cells[5]) == p.ci_high);
        REQUIRE(p.oracle_ctr.has_value());
        CHECK(std::stod(cells[6]) == *p.oracle_ctr);
        ++rows;
    }
    REQUIRE(rows == res.pooled.points.size());

    SECTION("a one-row series exports header plus one row") {
        MetricSeries tiny;
        tiny.method = "tiny";
        append_checkpoint(tiny, 1, 1, 1);
        write_metric_csv(at(tmp, "tiny.csv"), tiny);
        const MetricPoint& p = tiny.points[0];
        std::string expected = std::string(kMetricCsvHeader) + "\n1,1,1," + fmt_double(p.ctr) +
                               "," + fmt_double(p.ci_low) + "," + fmt_double(p.ci_high) + ",\n";
        CHECK(slurp(at(tmp, "tiny.csv")) == expected);
    }
}

TEST_CASE("svg chart carries decodable interval bands and a legend") {
    test::TempDir tmp("harness");
    MetricSeries a, b;
    a.method = "alpha";
    b.method = "beta";
    Rng rng(99);
    std::uint64_t clicks_a = 0, clicks_b = 0;
    for (int i = 1; i <= 6; ++i) {
        clicks_a += rng.uniform_int(40) + 10;
        clicks_b += rng.uniform_int(20) + 5;
        append_checkpoint(a, 100 * static_cast<std::uint64_t>(i), 100ull * i, clicks_a,
                          0.3 + 0.01 * i);
        append_checkpoint(b, 100 * static_cast<std::uint64_t>(i), 100ull * i, clicks_b);
    }
    const std::string path = at(tmp, "chart.svg");
    write_chart_svg(path, {a, b});
    std::string svg = slurp(path);

    REQUIRE(svg.find(">alpha</text>") != std::string::npos);
    REQUIRE(svg.find(">beta</text>") != std::string::npos);
    REQUIRE(svg.find("<script") == std::string::npos);
    REQUIRE(svg.find("href") == std::string::npos);

    ChartLayout lay;
    {
        auto pos = svg.find("<desc id=\"layout\">");
        REQUIRE(pos != std::string::npos);
        auto end = svg.find("</desc>", pos);
        std::string body = svg.substr(pos + 18, end - pos - 18);
        REQUIRE(std::sscanf(body.c_str(),
                            "x0=%lf y0=%lf w=%lf h=%lf xmin=%lf xmax=%lf ymin=%lf ymax=%lf",
                            &lay.x0, &lay.y0, &lay.w, &lay.h, &lay.xmin, &lay.xmax, &lay.ymin,
                            &lay.ymax) == 8);
    }

    auto decode_band = [&](const std::string& method, const MetricSeries& s) {
        std::string tag = "id=\"band-" + method + "\"";
        auto pos = svg.find(tag);
        REQUIRE(pos != std::string::npos);
        auto pts_begin = svg.find("points=\"", pos) + 8;
        auto pts_end = svg.find('"', pts_begin);
        std::stringstream ss(svg.substr(pts_begin, pts_end - pts_begin));
        std::vector<std::pair<double, double>> pts;
        std::string tok;
        while (ss >> tok) {
            auto comma = tok.find(',');
            pts.emplace_back(std::stod(tok.substr(0, comma)), std::stod(tok.substr(comma + 1)));
        }
        const std::size_t n = s.points.size();
        REQUIRE(pts.size() == 2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            const MetricPoint& p = s.points[i];
            CHECK(lay.inv_x(pts[i].first) ==
                  Catch::Approx(static_cast<double>(p.step)).margin(1e-6));
            CHECK(lay.inv_y(pts[i].second) == Catch::Approx(p.ci_high).margin(1e-9));
            CHECK(lay.inv_y(pts[2 * n - 1 - i].second) == Catch::Approx(p.ci_low).margin(1e-9));
        }
    };
    decode_band("alpha", a);
    decode_band("beta", b);

    SECTION("a single-point series still renders a valid chart") {
        MetricSeries one;
        one.method = "single";
        append_checkpoint(one, 1, 1, 0);
        REQUIRE_NOTHROW(write_chart_svg(at(tmp, "one.svg"), {one}));
        REQUIRE(slurp(at(tmp, "one.svg")).find("band-single") != std::string::npos);
    }
}

TEST_CASE("export to an unwritable target raises an io error with the path") {
    test::TempDir tmp("harness");
    std::ofstream(at(tmp, "occupied")) << "x";
    MetricSeries s;
    s.method = "m";
    append_checkpoint(s, 1, 1, 0);
    REQUIRE_THROWS_AS(export_report(at(tmp, "occupied"), {s}, ReportMeta{}), IoError);
    REQUIRE_THROWS_WITH(export_report(at(tmp, "occupied"), {s}, ReportMeta{}),
                        Catch::Matchers::ContainsSubstring("occupied"));
}

TEST_CASE("rerunning a config writes byte-identical artifacts") {
    test::TempDir t1("harness"), t2("harness");
    RunConfig cfg = small_two_arm();
    cfg.seeds = {5, 6};
    ReportMeta meta;
    meta.started_at = "ignored";
    ExperimentResult r1 = run_experiment(cfg);
    export_report(t1.path.string(), {r1.pooled}, meta);
    ExperimentResult r2 = run_experiment(cfg);
    export_report(t2.path.string(), {r2.pooled}, meta);
    CHECK(slurp(at(t1, "rl_llm_abtest.csv")) == slurp(at(t2, "rl_llm_abtest.csv")));
    CHECK(slurp(at(t1, "chart.svg")) == slurp(at(t2, "chart.svg")));
}

TEST_CASE("ablation protocol is single-axis over paired seeds") {
    RunConfig cfg = small_two_arm();
    cfg.seeds = {1, 2};
    cfg.horizon = 120;
    cfg.record_oracle = false;

    SECTION("flags in the base config are rejected") {
        RunConfig flagged = cfg;
        flagged.no_memory = true;
        REQUIRE_THROWS_AS(run_ablation(flagged), ConfigError);
    }
    SECTION("two flags at once are rejected at validation") {
        RunConfig flagged = cfg;
        flagged.no_memory = true;
        flagged.no_actor_critic = true;
        REQUIRE_THROWS_AS(flagged.validate(), ConfigError);
    }
    SECTION("baseline methods reject ablation flags") {
        RunConfig flagged = cfg;
        flagged.method = Method::LinUcb;
        flagged.no_memory = true;
        REQUIRE_THROWS_AS(flagged.validate(), ConfigError);
    }
    SECTION("axes run against the same seeds") {
        std::vector<ExperimentResult> axes = run_ablation(cfg);
        REQUIRE(axes.size() == 4);
        CHECK(axes[0].label == "full");
        CHECK(axes[1].label == "no_prompt_opt");
        CHECK(axes[2].label == "no_actor_critic");
        CHECK(axes[3].label == "no_memory");
        for (const ExperimentResult& ax : axes) {
            REQUIRE(ax.replicas.size() == 2);
            CHECK(ax.replicas[0].seed == 1);
            CHECK(ax.replicas[1].seed == 2);
            for (const ReplicaResult& r : ax.replicas) REQUIRE_FALSE(r.failed);
        }
        // the axis labels name the csv outputs, so they must be distinct
        test::TempDir tmp("harness");
        std::vector<MetricSeries> pooled;
        for (const ExperimentResult& ax : axes) pooled.push_back(ax.pooled);
        export_report(tmp.path.string(), pooled, ReportMeta{});
        for (const char* name : {"full.csv", "no_prompt_opt.csv", "no_actor_critic.csv",
                                 "no_memory.csv", "chart.svg"})
            CHECK(fs::exists(tmp.path / name));
    }
}

TEST_CASE("a diverging replica is persisted as a failure record") {
    RunConfig cfg = small_two_arm();
    cfg.no_prompt_opt = true;
    cfg.record_oracle = false;
    cfg.horizon = 400;
    cfg.report_every = 10;
    cfg.delay_max = 0;
    cfg.actor_lr = 1e9;  // guaranteed blow-up at the first update
    cfg.critic_lr = 1e9;
    cfg.encoder_lr = 1e9;
    ExperimentResult res = run_experiment(cfg);
    REQUIRE(res.replicas.size() == 1);
    REQUIRE(res.replicas[0].failed);
    REQUIRE_FALSE(res.replicas[0].failure.empty());
    // rows recorded before the abort survive
    CHECK(res.replicas[0].series.points.size() >= 1);
    CHECK(res.pooled.points.empty());
}

TEST_CASE("generator fallback keeps the run alive and is counted") {
    RunConfig cfg = small_two_arm();
    cfg.horizon = 40;
    cfg.report_every = 40;
    cfg.no_prompt_opt = true;
    cfg.record_oracle = false;
    cfg.gen_mode = GenMode::External;
    cfg.gen_transport = GenTransport::Subprocess;
    cfg.gen_command = "/nonexistent/generator/binary";

    SECTION("without the fallback flag the replica fails") {
        ExperimentResult res = run_experiment(cfg);
        REQUIRE(res.replicas[0].failed);
    }
    SECTION("with the fallback flag the stub takes over") {
        cfg.allow_generator_fallback = true;
        ExperimentResult res = run_experiment(cfg);
        REQUIRE_FALSE(res.replicas[0].failed);
        CHECK(res.replicas[0].generator_fallbacks > 0);
        CHECK(res.replicas[0].series.points.back().impressions == 40);
    }
}

namespace {

std::string write_criteo_fixture(const test::TempDir& tmp, int rows) {
    std::string path = at(tmp, "clicks.tsv");
    std::ofstream out(path);
    Rng rng(314);
    for (int i = 0; i < rows; ++i) {
        out << (rng.bernoulli(0.3) ? 1 : 0);
        for (int j = 0; j < 13; ++j) {
            out << '\t';
            if (rng.bernoulli(0.8)) out << rng.uniform_int(1000);
        }
        for (int j = 0; j < 26; ++j) {
            out << '\t';
            if (rng.bernoulli(0.9)) {
                char buf[16];
                std::snprintf(buf, sizeof buf, "%08x",
                              static_cast<unsigned>(rng.next_u64() & 0xffffffffu));
                out << buf;
            }
        }
        out << '\n';
    }
    return path;
}

}  // namespace

TEST_CASE("replay runs are deterministic and resume bit-exactly") {
    test::TempDir tmp("harness");
    const std::string data = write_criteo_fixture(tmp, 90);

    RunConfig cfg = small_two_arm();
    cfg.replay_path = data;
    cfg.d_c = 16;  // room for the 13 numeric fields beside hashed tokens
    cfg.horizon = 80;
    cfg.report_every = 20;
    cfg.seeds = {12};
    cfg.buffer_capacity = 16;
    cfg.delay_max = 2;
    cfg.record_oracle = false;

    for (Method m : {Method::RlLlmAbtest, Method::LinUcb, Method::StaticAb}) {
        RunConfig c = cfg;
        c.method = m;
        ExperimentResult once = run_experiment(c);
        REQUIRE_FALSE(once.replicas[0].failed);
        ExperimentResult again = run_experiment(c);
        INFO("method " << method_name(m));
        REQUIRE(same_series(once.replicas[0].series, again.replicas[0].series));
        CHECK(once.replicas[0].series.points.back().impressions == 80);

        RunConfig split = c;
        split.checkpoint_at = 40;
        split.checkpoint_path = at(tmp, std::string("rck_") + method_name(m));
        ExperimentResult first = run_experiment(split);
        REQUIRE_FALSE(first.replicas[0].failed);
        RunConfig resumed = split;
        resumed.resume_path = split.checkpoint_path;
        ExperimentResult second = run_experiment(resumed);
        REQUIRE_FALSE(second.replicas[0].failed);
        REQUIRE(same_series(once.replicas[0].series, second.replicas[0].series));
    }

    SECTION("a short file ends the run at the last full row") {
        RunConfig c = cfg;
        c.horizon = 500;
        ExperimentResult res = run_experiment(c);
        REQUIRE_FALSE(res.replicas[0].failed);
        CHECK(res.replicas[0].series.points.back().impressions == 90);
    }
}

TEST_CASE("multi-seed checkpointing splits files per seed") {
    test::TempDir tmp("harness");
    RunConfig cfg = small_two_arm();
    cfg.seeds = {3, 8};
    cfg.no_prompt_opt = true;
    cfg.record_oracle = false;
    cfg.checkpoint_at = 100;
    cfg.checkpoint_path = at(tmp, "multi");
    ExperimentResult full = run_experiment(cfg);
    REQUIRE(fs::exists(at(tmp, "multi.s3")));
    REQUIRE(fs::exists(at(tmp, "multi.s8")));

    RunConfig resumed = cfg;
    resumed.resume_path = cfg.checkpoint_path;
    ExperimentResult res = run_experiment(resumed);
    for (int i = 0; i < 2; ++i) {
        REQUIRE_FALSE(res.replicas[i].failed);
        REQUIRE(same_series(full.replicas[i].series, res.replicas[i].series));
    }
}

TEST_CASE("cli maps outcomes to exit codes") {
    auto run_cli = [](const std::string& args) {
        std::string cmd = std::string(RLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
        int rc = std::system(cmd.c_str());
        REQUIRE(WIFEXITED(rc));
        return WEXITSTATUS(rc);
    };
    test::TempDir tmp("cli");

    const std::string base =
        "schema_version = 1\n"
        "seeds = 3\n"
        "horizon = 120\n"
        "report_every = 40\n"
        "env.kind = two_arm\n"
        "env.n_users = 40\n"
        "env.delay_max = 3\n"
        "dims.d_u = 5\ndims.d_c = 4\ndims.d_e = 6\ndims.d_s = 8\ndims.d_m = 4\n"
        "oracle_users = 10\n"
        "agent.buffer_capacity = 16\n"
        "agent.minibatch = 8\n"
        "memory.minibatch = 8\n"
        "ablate.no_prompt_opt = true\n";

    SECTION("a clean run exits 0 and writes the report bundle") {
        test::TempFile cfg("cli_cfg", base);
        CHECK(run_cli("simulate --config " + cfg.path + " --out " + at(tmp, "out")) == 0);
        CHECK(fs::exists(at(tmp, "out") + "/rl_llm_abtest.csv"));
        CHECK(fs::exists(at(tmp, "out") + "/chart.svg"));
        CHECK(fs::exists(at(tmp, "out") + "/run_meta.txt"));
    }
    SECTION("usage and configuration problems exit 2") {
        CHECK(run_cli("simulate --config /nonexistent/rlab.cfg") == 2);
        CHECK(run_cli("frobnicate") == 2);
        test::TempFile cfg("cli_cfg", base + "unknown.key = 1\n");
        CHECK(run_cli("simulate --config " + cfg.path) == 2);
    }
    SECTION("a run that aborts exits 3") {
        test::TempFile cfg("cli_cfg", base + "agent.actor_lr = 1e9\nagent.critic_lr = 1e9\n");
        CHECK(run_cli("simulate --config " + cfg.path + " --out " + at(tmp, "bad")) == 3);
    }
    SECTION("selftest exits 0") { CHECK(run_cli("selftest") == 0); }
}
