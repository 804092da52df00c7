// Flat key=value configuration with a typed schema. Files carry an embedded
// schema_version; unknown keys and malformed values are hard errors so typos
// cannot silently change an experiment.
#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rlab/common.hpp"
#include "rlab/rng.hpp"

namespace rlab {

inline constexpr int kConfigSchemaVersion = 1;

namespace detail {
inline std::string trim(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}
}  // namespace detail

// Raw parsed key=value pairs, insertion order preserved for diagnostics.
class KvConfig {
  public:
    static KvConfig from_string(const std::string& text) {
        KvConfig kv;
        std::istringstream in(text);
        std::string line;
        long line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#') continue;
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": expected key = value, got: " + t);
            std::string key = detail::trim(t.substr(0, eq));
            std::string val = detail::trim(t.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
            if (kv.values_.count(key))
                throw ConfigError("config: duplicate key '" + key + "'");
            kv.values_[key] = val;
        }
        return kv;
    }

    static KvConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file: " + path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        KvConfig kv = from_string(text);
        kv.from_file_ = true;
        return kv;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const { return values_; }
    bool from_file() const { return from_file_; }

    std::optional<std::string> get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

  private:
    std::map<std::string, std::string> values_;
    bool from_file_ = false;
};

namespace detail {

inline std::int64_t parse_int(const std::string& key, const std::string& v) {
    std::int64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

}  // namespace detail

// ------------------------------------------------------------ rule policy

struct Rule {
    enum class Field : std::uint8_t { User, Context } field;
    std::size_t index = 0;
    enum class Cmp : std::uint8_t { Lt, Le, Gt, Ge } cmp;
    double threshold = 0.0;
    Arm arm = Arm::A;
};

struct RulePolicyConfig {
    std::vector<Rule> rules;  // first match wins
    Arm default_arm = Arm::A;
};

// Grammar: "<u|c>[<index>] <op> <number> -> <A|B>", e.g. "u[0] > 0.5 -> B"
inline Rule parse_rule(const std::string& key, const std::string& text) {
    auto fail = [&](const std::string& why) -> Rule {
        throw ConfigError("config key '" + key + "': bad rule '" + text + "' (" + why + ")");
    };
    std::istringstream in(text);
    std::string fieldtok, op, arrow, armtok;
    double threshold;
    if (!(in >> fieldtok >> op >> threshold >> arrow >> armtok)) return fail("expected: u[i] OP x -> ARM");
    std::string rest;
    if (in >> rest) return fail("trailing tokens");
    Rule r;
    if (fieldtok.size() < 4 || fieldtok[1] != '[' || fieldtok.back() != ']')
        return fail("field must be u[i] or c[i]");
    if (fieldtok[0] == 'u')
        r.field = Rule::Field::User;
    else if (fieldtok[0] == 'c')
        r.field = Rule::Field::Context;
    else
        return fail("field must be u[i] or c[i]");
    r.index = static_cast<std::size_t>(
        detail::parse_int(key, fieldtok.substr(2, fieldtok.size() - 3)));
    if (op == "<")
        r.cmp = Rule::Cmp::Lt;
    else if (op == "<=")
        r.cmp = Rule::Cmp::Le;
    else if (op == ">")
        r.cmp = Rule::Cmp::Gt;
    else if (op == ">=")
        r.cmp = Rule::Cmp::Ge;
    else
        return fail("comparator must be one of < <= > >=");
    r.threshold = threshold;
    if (arrow != "->") return fail("expected '->'");
    if (armtok == "A")
        r.arm = Arm::A;
    else if (armtok == "B")
        r.arm = Arm::B;
    else
        return fail("arm must be A or B");
    return r;
}

// ------------------------------------------------------------- run config

enum class Method : std::uint8_t { RlLlmAbtest, StaticAb, LinUcb, FmRank, RulePolicy };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::RlLlmAbtest: return "rl_llm_abtest";
        case Method::StaticAb: return "static_ab";
        case Method::LinUcb: return "linucb";
        case Method::FmRank: return "fm_rank";
        case Method::RulePolicy: return "rule_policy";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    for (Method m : {Method::RlLlmAbtest, Method::StaticAb, Method::LinUcb, Method::FmRank,
                     Method::RulePolicy})
        if (s == method_name(m)) return m;
    throw ConfigError("unknown method '" + s + "'");
}

enum class EnvKind : std::uint8_t { Population, TwoArm, ToneReward };
enum class AdvantageMode : std::uint8_t { Td1, MonteCarlo };
enum class GenMode : std::uint8_t { Stub, External };
enum class GenTransport : std::uint8_t { Subprocess, Tcp };

struct DriftEvent {
    enum class Kind : std::uint8_t { Flip, Rotate, SegmentSwap } kind;
    std::int64_t step = 0;
    double angle = 0.0;  // rotate only
};

struct RunConfig {
    Method method = Method::RlLlmAbtest;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::int64_t horizon = 50000;
    std::int64_t report_every = 500;
    std::string out_dir = "out";
    bool record_oracle = true;
    int oracle_users = 200;
    bool parallel_replicas = true;

    // dimensions
    std::size_t d_u = 16, d_c = 8, d_e = 32, d_s = 32, d_m = 16;
    std::size_t emphasis_dim = 4;

    // environment
    EnvKind env_kind = EnvKind::Population;
    int n_segments = 5;
    int n_users = 10000;
    double pref_noise_std = 0.1;
    double click_temperature = 4.0;
    double click_bias = -1.0;
    double click_noise_std = 0.0;
    double two_arm_p_a = 0.8;
    double two_arm_p_b = 0.2;
    double tone_base = 0.3;
    double tone_bonus = 0.0;  // >0 makes any env kind tone-sensitive
    std::int64_t delay_max = 20;
    std::vector<DriftEvent> drift;

    // agent
    double gamma = 0.99;
    double clip_eps = 0.2;
    double actor_lr = 3e-4;
    double critic_lr = 3e-4;
    double encoder_lr = 3e-4;
    int ppo_epochs = 4;
    int minibatch = 64;
    int buffer_capacity = 256;
    AdvantageMode advantage_mode = AdvantageMode::Td1;
    double entropy_coef = 0.01;

    // memory-augmented reward estimator
    double memory_lambda = 0.3;
    std::size_t memory_capacity = 100000;
    int estimator_epochs = 3;
    double estimator_lr = 1e-3;
    int estimator_minibatch = 32;

    // prompt optimization
    int prompt_opt_budget = 16;
    int prompt_opt_probes = 100;
    double prompt_opt_step = 0.25;

    // generator
    GenMode gen_mode = GenMode::Stub;
    GenTransport gen_transport = GenTransport::Subprocess;
    std::string gen_command;
    std::string gen_host = "127.0.0.1";
    int gen_port = 0;
    int gen_timeout_ms = 2000;
    bool allow_generator_fallback = false;
    std::string templates_path;

    // baselines
    std::int64_t static_ab_exploration_n = 1000;
    double static_ab_alpha = 0.05;
    double linucb_alpha = 1.0;
    int fm_latent_dim = 8;
    double fm_lr = 0.05;
    double fm_init_std = 0.01;
    RulePolicyConfig rule_policy;

    // ablations (rl_llm_abtest only)
    bool no_prompt_opt = false;
    bool no_actor_critic = false;
    bool no_memory = false;

    // checkpointing
    std::int64_t checkpoint_at = 0;  // 0 = off
    std::string checkpoint_path;
    std::string resume_path;

    // replay
    std::string replay_path;
    double replay_sample_rate = 1.0;
    bool replay_strict = false;

    void validate() const;
    std::vector<std::string> warnings() const;
    std::string canonical_text() const;
    std::uint64_t config_hash() const { return hash_str64(canonical_text()); }

    static RunConfig from_kv(const KvConfig& kv);
    static RunConfig from_file(const std::string& path) { return from_kv(KvConfig::from_file(path)); }
};

inline void RunConfig::validate() const {
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (seeds.empty()) throw ConfigError("seeds must be non-empty");
    if (report_every < 1) throw ConfigError("report_every must be >= 1");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("agent.gamma must be in (0, 1]");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("agent.clip_eps must be in (0, 1)");
    if (buffer_capacity < 1) throw ConfigError("agent.buffer_capacity must be >= 1");
    if (minibatch < 1) throw ConfigError("agent.minibatch must be >= 1");
    if (memory_lambda < 0.0 || memory_lambda > 1.0)
        throw ConfigError("memory.lambda must be in [0, 1]");
    if (delay_max < 0) throw ConfigError("env.delay_max must be >= 0");
    if (method != Method::RlLlmAbtest && (no_prompt_opt || no_actor_critic || no_memory))
        throw ConfigError("ablation flags are only valid with method rl_llm_abtest");
    if (static_cast<int>(no_prompt_opt) + static_cast<int>(no_actor_critic) +
            static_cast<int>(no_memory) > 1)
        throw ConfigError("ablations are single-axis: set at most one of ablate.no_prompt_opt, "
                          "ablate.no_actor_critic, ablate.no_memory");
    for (std::size_t i = 1; i < drift.size(); ++i)
        if (drift[i].step <= drift[i - 1].step)
            throw ConfigError("env.drift steps must be strictly increasing");
    if (gen_mode == GenMode::External && gen_transport == GenTransport::Subprocess &&
        gen_command.empty())
        throw ConfigError("generator.command required for external subprocess mode");
    if (gen_mode == GenMode::External && gen_transport == GenTransport::Tcp && gen_port == 0)
        throw ConfigError("generator.port required for external tcp mode");
}

inline std::vector<std::string> RunConfig::warnings() const {
    std::vector<std::string> w;
    for (auto [name, lr] : {std::pair<const char*, double>{"agent.actor_lr", actor_lr},
                            {"agent.critic_lr", critic_lr}})
        if (lr < 1e-4 || lr > 5e-4)
            w.push_back(std::string(name) + " = " + std::to_string(lr) +
                        " is outside the stable band [1e-4, 5e-4]");
    return w;
}

inline std::string RunConfig::canonical_text() const {
    std::map<std::string, std::string> kv;
    auto num = [](double d) {
        std::ostringstream o;
        o.precision(17);
        o << d;
        return o.str();
    };
    kv["method"] = method_name(method);
    {
        std::string s;
        for (std::size_t i = 0; i < seeds.size(); ++i)
            s += (i ? "," : "") + std::to_string(seeds[i]);
        kv["seeds"] = s;
    }
    kv["horizon"] = std::to_string(horizon);
    kv["report_every"] = std::to_string(report_every);
    kv["record_oracle"] = record_oracle ? "true" : "false";
    kv["oracle_users"] = std::to_string(oracle_users);
    kv["dims.d_u"] = std::to_string(d_u);
    kv["dims.d_c"] = std::to_string(d_c);
    kv["dims.d_e"] = std::to_string(d_e);
    kv["dims.d_s"] = std::to_string(d_s);
    kv["dims.d_m"] = std::to_string(d_m);
    kv["dims.emphasis"] = std::to_string(emphasis_dim);
    kv["env.kind"] = env_kind == EnvKind::Population ? "population"
                     : env_kind == EnvKind::TwoArm   ? "two_arm"
                                                     : "tone_reward";
    kv["env.n_segments"] = std::to_string(n_segments);
    kv["env.n_users"] = std::to_string(n_users);
    kv["env.noise_std"] = num(pref_noise_std);
    kv["env.click.temperature"] = num(click_temperature);
    kv["env.click.bias"] = num(click_bias);
    kv["env.click.noise_std"] = num(click_noise_std);
    kv["env.two_arm.p_a"] = num(two_arm_p_a);
    kv["env.two_arm.p_b"] = num(two_arm_p_b);
    kv["env.tone.base"] = num(tone_base);
    kv["env.tone.bonus"] = num(tone_bonus);
    kv["env.delay_max"] = std::to_string(delay_max);
    {
        std::string s;
        for (const auto& e : drift) {
            if (!s.empty()) s += ";";
            switch (e.kind) {
                case DriftEvent::Kind::Flip: s += "flip@" + std::to_string(e.step); break;
                case DriftEvent::Kind::Rotate:
                    s += "rotate@" + std::to_string(e.step) + ":" + num(e.angle);
                    break;
                case DriftEvent::Kind::SegmentSwap: s += "segswap@" + std::to_string(e.step); break;
            }
        }
        kv["env.drift"] = s;
    }
    kv["agent.gamma"] = num(gamma);
    kv["agent.clip_eps"] = num(clip_eps);
    kv["agent.actor_lr"] = num(actor_lr);
    kv["agent.critic_lr"] = num(critic_lr);
    kv["agent.encoder_lr"] = num(encoder_lr);
    kv["agent.epochs"] = std::to_string(ppo_epochs);
    kv["agent.minibatch"] = std::to_string(minibatch);
    kv["agent.buffer_capacity"] = std::to_string(buffer_capacity);
    kv["agent.advantage_mode"] = advantage_mode == AdvantageMode::Td1 ? "td1" : "monte_carlo";
    kv["agent.entropy_coef"] = num(entropy_coef);
    kv["memory.lambda"] = num(memory_lambda);
    kv["memory.capacity"] = std::to_string(memory_capacity);
    kv["memory.train_epochs"] = std::to_string(estimator_epochs);
    kv["memory.train_lr"] = num(estimator_lr);
    kv["memory.minibatch"] = std::to_string(estimator_minibatch);
    kv["prompt.opt_budget"] = std::to_string(prompt_opt_budget);
    kv["prompt.opt_probes"] = std::to_string(prompt_opt_probes);
    kv["prompt.opt_step"] = num(prompt_opt_step);
    kv["generator.mode"] = gen_mode == GenMode::Stub ? "stub" : "external";
    kv["static_ab.exploration_n"] = std::to_string(static_ab_exploration_n);
    kv["static_ab.alpha"] = num(static_ab_alpha);
    kv["linucb.alpha"] = num(linucb_alpha);
    kv["fm.latent_dim"] = std::to_string(fm_latent_dim);
    kv["fm.lr"] = num(fm_lr);
    kv["fm.init_std"] = num(fm_init_std);
    for (std::size_t i = 0; i < rule_policy.rules.size(); ++i) {
        const Rule& r = rule_policy.rules[i];
        std::string s = (r.field == Rule::Field::User ? "u[" : "c[") + std::to_string(r.index) + "] ";
        switch (r.cmp) {
            case Rule::Cmp::Lt: s += "<"; break;
            case Rule::Cmp::Le: s += "<="; break;
            case Rule::Cmp::Gt: s += ">"; break;
            case Rule::Cmp::Ge: s += ">="; break;
        }
        s += " " + num(r.threshold) + " -> " + arm_name(r.arm);
        kv["rule." + std::to_string(i)] = s;
    }
    kv["rule.default"] = arm_name(rule_policy.default_arm);
    kv["ablate.no_prompt_opt"] = no_prompt_opt ? "true" : "false";
    kv["ablate.no_actor_critic"] = no_actor_critic ? "true" : "false";
    kv["ablate.no_memory"] = no_memory ? "true" : "false";
    kv["replay.sample_rate"] = num(replay_sample_rate);
    kv["replay.strict"] = replay_strict ? "true" : "false";

    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

namespace detail {

inline std::vector<DriftEvent> parse_drift(const std::string& key, const std::string& v) {
    std::vector<DriftEvent> out;
    if (trim(v).empty()) return out;
    for (const std::string& tok : split(v, ';')) {
        auto parts = split(tok, '@');
        if (parts.size() != 2)
            throw ConfigError("config key '" + key + "': expected kind@step, got '" + tok + "'");
        DriftEvent e;
        auto kind_parts = split(parts[1], ':');
        e.step = parse_int(key, kind_parts[0]);
        if (parts[0] == "flip") {
            e.kind = DriftEvent::Kind::Flip;
        } else if (parts[0] == "rotate") {
            e.kind = DriftEvent::Kind::Rotate;
            if (kind_parts.size() != 2)
                throw ConfigError("config key '" + key + "': rotate needs rotate@step:angle");
            e.angle = parse_double(key, kind_parts[1]);
        } else if (parts[0] == "segswap") {
            e.kind = DriftEvent::Kind::SegmentSwap;
        } else {
            throw ConfigError("config key '" + key + "': unknown drift kind '" + parts[0] + "'");
        }
        if (kind_parts.size() > 2 || (parts[0] != "rotate" && kind_parts.size() > 1))
            throw ConfigError("config key '" + key + "': malformed drift event '" + tok + "'");
        out.push_back(e);
    }
    return out;
}

}  // namespace detail

inline RunConfig RunConfig::from_kv(const KvConfig& kv) {
    RunConfig c;
    // every key the schema accepts; anything else is rejected below
    auto geti = [&](const char* k, std::int64_t& out) {
        if (auto v = kv.get(k)) out = detail::parse_int(k, *v);
    };
    auto getsz = [&](const char* k, std::size_t& out) {
        if (auto v = kv.get(k)) {
            std::int64_t i = detail::parse_int(k, *v);
            if (i < 1) throw ConfigError(std::string("config key '") + k + "' must be positive");
            out = static_cast<std::size_t>(i);
        }
    };
    auto getint = [&](const char* k, int& out) {
        if (auto v = kv.get(k)) out = static_cast<int>(detail::parse_int(k, *v));
    };
    auto getd = [&](const char* k, double& out) {
        if (auto v = kv.get(k)) out = detail::parse_double(k, *v);
    };
    auto getb = [&](const char* k, bool& out) {
        if (auto v = kv.get(k)) out = detail::parse_bool(k, *v);
    };
    auto gets = [&](const char* k, std::string& out) {
        if (auto v = kv.get(k)) out = *v;
    };

    static const std::vector<std::string> known = {
        "schema_version", "method", "seeds", "horizon", "report_every", "out_dir",
        "record_oracle", "oracle_users", "parallel_replicas",
        "dims.d_u", "dims.d_c", "dims.d_e", "dims.d_s", "dims.d_m", "dims.emphasis",
        "env.kind", "env.n_segments", "env.n_users", "env.noise_std",
        "env.click.temperature", "env.click.bias", "env.click.noise_std",
        "env.two_arm.p_a", "env.two_arm.p_b", "env.tone.base", "env.tone.bonus",
        "env.delay_max", "env.drift",
        "agent.gamma", "agent.clip_eps", "agent.actor_lr", "agent.critic_lr",
        "agent.encoder_lr", "agent.epochs", "agent.minibatch", "agent.buffer_capacity",
        "agent.advantage_mode", "agent.entropy_coef",
        "memory.lambda", "memory.capacity", "memory.train_epochs", "memory.train_lr",
        "memory.minibatch",
        "prompt.opt_budget", "prompt.opt_probes", "prompt.opt_step",
        "generator.mode", "generator.transport", "generator.command", "generator.host",
        "generator.port", "generator.timeout_ms", "generator.allow_fallback",
        "generator.templates_path",
        "static_ab.exploration_n", "static_ab.alpha", "linucb.alpha",
        "fm.latent_dim", "fm.lr", "fm.init_std", "rule.default",
        "ablate.no_prompt_opt", "ablate.no_actor_critic", "ablate.no_memory",
        "checkpoint.at", "checkpoint.path", "resume.path",
        "replay.path", "replay.sample_rate", "replay.strict",
    };
    for (const auto& [key, value] : kv.values()) {
        bool ok = false;
        for (const auto& k : known)
            if (key == k) {
                ok = true;
                break;
            }
        if (!ok && key.rfind("rule.", 0) == 0) ok = true;  // rule.<n> entries
        if (!ok) throw ConfigError("unknown config key '" + key + "'");
        (void)value;
    }

    if (kv.from_file()) {
        auto sv = kv.get("schema_version");
        if (!sv) throw ConfigError("config file missing schema_version");
        if (detail::parse_int("schema_version", *sv) != kConfigSchemaVersion)
            throw ConfigError("config schema_version " + *sv + " unsupported (expected " +
                              std::to_string(kConfigSchemaVersion) + ")");
    }

    if (auto v = kv.get("method")) c.method = parse_method(*v);
    if (auto v = kv.get("seeds")) {
        c.seeds.clear();
        for (const auto& tok : detail::split(*v, ','))
            c.seeds.push_back(static_cast<std::uint64_t>(detail::parse_int("seeds", tok)));
    }
    geti("horizon", c.horizon);
    geti("report_every", c.report_every);
    gets("out_dir", c.out_dir);
    getb("record_oracle", c.record_oracle);
    getint("oracle_users", c.oracle_users);
    getb("parallel_replicas", c.parallel_replicas);

    getsz("dims.d_u", c.d_u);
    getsz("dims.d_c", c.d_c);
    getsz("dims.d_e", c.d_e);
    getsz("dims.d_s", c.d_s);
    getsz("dims.d_m", c.d_m);
    getsz("dims.emphasis", c.emphasis_dim);

    if (auto v = kv.get("env.kind")) {
        if (*v == "population")
            c.env_kind = EnvKind::Population;
        else if (*v == "two_arm")
            c.env_kind = EnvKind::TwoArm;
        else if (*v == "tone_reward")
            c.env_kind = EnvKind::ToneReward;
        else
            throw ConfigError("env.kind must be population|two_arm|tone_reward");
    }
    getint("env.n_segments", c.n_segments);
    getint("env.n_users", c.n_users);
    getd("env.noise_std", c.pref_noise_std);
    getd("env.click.temperature", c.click_temperature);
    getd("env.click.bias", c.click_bias);
    getd("env.click.noise_std", c.click_noise_std);
    getd("env.two_arm.p_a", c.two_arm_p_a);
    getd("env.two_arm.p_b", c.two_arm_p_b);
    getd("env.tone.base", c.tone_base);
    getd("env.tone.bonus", c.tone_bonus);
    geti("env.delay_max", c.delay_max);
    if (auto v = kv.get("env.drift")) c.drift = detail::parse_drift("env.drift", *v);

    getd("agent.gamma", c.gamma);
    getd("agent.clip_eps", c.clip_eps);
    getd("agent.actor_lr", c.actor_lr);
    getd("agent.critic_lr", c.critic_lr);
    getd("agent.encoder_lr", c.encoder_lr);
    getint("agent.epochs", c.ppo_epochs);
    getint("agent.minibatch", c.minibatch);
    getint("agent.buffer_capacity", c.buffer_capacity);
    if (auto v = kv.get("agent.advantage_mode")) {
        if (*v == "td1")
            c.advantage_mode = AdvantageMode::Td1;
        else if (*v == "monte_carlo")
            c.advantage_mode = AdvantageMode::MonteCarlo;
        else
            throw ConfigError("agent.advantage_mode must be td1|monte_carlo");
    }
    getd("agent.entropy_coef", c.entropy_coef);

    getd("memory.lambda", c.memory_lambda);
    getsz("memory.capacity", c.memory_capacity);
    getint("memory.train_epochs", c.estimator_epochs);
    getd("memory.train_lr", c.estimator_lr);
    getint("memory.minibatch", c.estimator_minibatch);

    getint("prompt.opt_budget", c.prompt_opt_budget);
    getint("prompt.opt_probes", c.prompt_opt_probes);
    getd("prompt.opt_step", c.prompt_opt_step);

    if (auto v = kv.get("generator.mode")) {
        if (*v == "stub")
            c.gen_mode = GenMode::Stub;
        else if (*v == "external")
            c.gen_mode = GenMode::External;
        else
            throw ConfigError("generator.mode must be stub|external");
    }
    if (auto v = kv.get("generator.transport")) {
        if (*v == "subprocess")
            c.gen_transport = GenTransport::Subprocess;
        else if (*v == "tcp")
            c.gen_transport = GenTransport::Tcp;
        else
            throw ConfigError("generator.transport must be subprocess|tcp");
    }
    gets("generator.command", c.gen_command);
    gets("generator.host", c.gen_host);
    getint("generator.port", c.gen_port);
    getint("generator.timeout_ms", c.gen_timeout_ms);
    getb("generator.allow_fallback", c.allow_generator_fallback);
    gets("generator.templates_path", c.templates_path);

    geti("static_ab.exploration_n", c.static_ab_exploration_n);
    getd("static_ab.alpha", c.static_ab_alpha);
    getd("linucb.alpha", c.linucb_alpha);
    getint("fm.latent_dim", c.fm_latent_dim);
    getd("fm.lr", c.fm_lr);
    getd("fm.init_std", c.fm_init_std);

    // ordered rule list: rule.0, rule.1, ...
    for (int i = 0;; ++i) {
        auto v = kv.get("rule." + std::to_string(i));
        if (!v) break;
        c.rule_policy.rules.push_back(parse_rule("rule." + std::to_string(i), *v));
    }
    if (auto v = kv.get("rule.default")) {
        if (*v == "A")
            c.rule_policy.default_arm = Arm::A;
        else if (*v == "B")
            c.rule_policy.default_arm = Arm::B;
        else
            throw ConfigError("rule.default must be A or B");
    }

    getb("ablate.no_prompt_opt", c.no_prompt_opt);
    getb("ablate.no_actor_critic", c.no_actor_critic);
    getb("ablate.no_memory", c.no_memory);

    geti("checkpoint.at", c.checkpoint_at);
    gets("checkpoint.path", c.checkpoint_path);
    gets("resume.path", c.resume_path);

    gets("replay.path", c.replay_path);
    getd("replay.sample_rate", c.replay_sample_rate);
    getb("replay.strict", c.replay_strict);

    c.validate();
    return c;
}

}  // namespace rlab
