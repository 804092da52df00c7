// Full run state for one replica and its binary round trip. A checkpoint is
// a versioned, CRC-guarded container whose payload captures everything the
// loop needs to continue bit-exactly: counters, metric rows, population,
// learner parameters, optimizer moments, pending feedback, and RNG states.
// Static settings are not duplicated; a checkpoint only resumes under the
// config (hash) that produced it.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rlab/agent.hpp"
#include "rlab/baselines.hpp"
#include "rlab/config.hpp"
#include "rlab/encoder.hpp"
#include "rlab/env.hpp"
#include "rlab/generator.hpp"
#include "rlab/memory.hpp"
#include "rlab/report.hpp"
#include "rlab/rng.hpp"
#include "rlab/serialize.hpp"

namespace rlab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// One impression that has been served but not yet committed to the rollout
// buffer: the transition is complete once the observed reward has arrived
// and the follow-up state is known.
struct PendingImpression {
    Vec u, c, e_a, e_b, state;
    Arm action = Arm::A;
    double log_prob = 0.0;
    double estimate = 0.0;  // reward estimate frozen at impression time
    Vec m_pre;              // memory the estimate consumed (empty when memory is off)
    std::uint64_t user_id = 0;
    bool have_reward = false;
    double reward = 0.0;
    bool have_next = false;
    Vec next_state;
    bool done = false;
};

// Estimator inputs aligned with rollout-buffer order; targets are the
// windowed returns computed when the buffer trains.
struct WindowSample {
    Vec s;
    Arm a = Arm::A;
    Vec m;
};

struct RlState {
    PromptParams prompt;
    bool prompt_opt_done = false;
    StateEncoder encoder;
    Mlp actor, critic;
    AdamState actor_opt, critic_opt, encoder_opt;
    RewardEstimatorParams estimator;
    MemoryStore store{1, 1};
    RolloutBuffer buffer{1};
    std::map<std::uint64_t, PendingImpression> pending;  // keyed by impression index
    std::uint64_t next_commit = 0;
    std::vector<WindowSample> window;
    DelayedRewardQueue queue{0};
};

struct RunState {
    std::uint64_t config_hash = 0;
    Method method = Method::RlLlmAbtest;
    std::uint64_t seed = 0;

    std::uint64_t impressions = 0;
    std::uint64_t clicks = 0;
    MetricSeries series;

    Population population;
    std::size_t drift_cursor = 0;

    std::optional<RlState> rl;
    std::optional<StaticAbState> static_ab;
    bool ab_pair_ready = false;
    VariantPair ab_pair;
    std::optional<LinUcbState> linucb;
    std::optional<FmParams> fm;

    Rng env_rng, agent_rng, train_rng, estimator_rng, delay_rng, drift_rng, prompt_rng,
        oracle_rng;
};

namespace detail {

inline void put_mlp(BinWriter& w, const Mlp& m) {
    w.u64(m.layers.size());
    for (const DenseLayer& l : m.layers) {
        w.mat(l.w);
        w.vec(l.b);
    }
}

inline Mlp get_mlp(BinReader& r) {
    Mlp m;
    std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        DenseLayer l;
        l.w = r.mat();
        l.b = r.vec();
        m.layers.push_back(std::move(l));
    }
    return m;
}

inline void put_gru(BinWriter& w, const Gru& g) {
    w.u64(g.input_dim);
    w.u64(g.hidden_dim);
    for (const GruGate* gate : {&g.update, &g.reset, &g.cand}) {
        w.mat(gate->w);
        w.mat(gate->u);
        w.vec(gate->b);
    }
}

inline Gru get_gru(BinReader& r) {
    Gru g;
    g.input_dim = r.u64();
    g.hidden_dim = r.u64();
    for (GruGate* gate : {&g.update, &g.reset, &g.cand}) {
        gate->w = r.mat();
        gate->u = r.mat();
        gate->b = r.vec();
    }
    return g;
}

inline void put_adam(BinWriter& w, const AdamState& a) {
    w.vec(a.m);
    w.vec(a.v);
    w.i64(a.step_count);
}

inline AdamState get_adam(BinReader& r, double lr) {
    AdamState a;
    a.m = r.vec();
    a.v = r.vec();
    a.step_count = r.i64();
    a.learning_rate = lr;
    return a;
}

inline void put_rng(BinWriter& w, const Rng& rng) {
    for (std::uint64_t word : rng.state()) w.u64(word);
}

inline Rng get_rng(BinReader& r) {
    std::array<std::uint64_t, 4> s;
    for (std::uint64_t& word : s) word = r.u64();
    Rng rng;
    rng.set_state(s);
    return rng;
}

inline void put_variant(BinWriter& w, const Variant& v) {
    w.u8(static_cast<std::uint8_t>(v.id));
    w.str(v.text);
    w.vec(v.raw);
    w.vec(v.embedding);
}

inline Variant get_variant(BinReader& r) {
    Variant v;
    v.id = static_cast<Arm>(r.u8());
    v.text = r.str();
    v.raw = r.vec();
    v.embedding = r.vec();
    return v;
}

inline void put_series(BinWriter& w, const MetricSeries& s) {
    w.str(s.method);
    w.u64(s.points.size());
    for (const MetricPoint& p : s.points) {
        w.u64(p.step);
        w.u64(p.impressions);
        w.u64(p.clicks);
        w.f64(p.ctr);
        w.f64(p.ci_low);
        w.f64(p.ci_high);
        w.u8(p.oracle_ctr ? 1 : 0);
        w.f64(p.oracle_ctr.value_or(0.0));
    }
}

inline MetricSeries get_series(BinReader& r) {
    MetricSeries s;
    s.method = r.str();
    std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        MetricPoint p;
        p.step = r.u64();
        p.impressions = r.u64();
        p.clicks = r.u64();
        p.ctr = r.f64();
        p.ci_low = r.f64();
        p.ci_high = r.f64();
        bool has = r.u8() != 0;
        double v = r.f64();
        if (has) p.oracle_ctr = v;
        s.points.push_back(std::move(p));
    }
    return s;
}

inline void put_pending_impression(BinWriter& w, const PendingImpression& p) {
    w.vec(p.u);
    w.vec(p.c);
    w.vec(p.e_a);
    w.vec(p.e_b);
    w.vec(p.state);
    w.u8(static_cast<std::uint8_t>(p.action));
    w.f64(p.log_prob);
    w.f64(p.estimate);
    w.vec(p.m_pre);
    w.u64(p.user_id);
    w.u8(p.have_reward ? 1 : 0);
    w.f64(p.reward);
    w.u8(p.have_next ? 1 : 0);
    w.vec(p.next_state);
    w.u8(p.done ? 1 : 0);
}

inline PendingImpression get_pending_impression(BinReader& r) {
    PendingImpression p;
    p.u = r.vec();
    p.c = r.vec();
    p.e_a = r.vec();
    p.e_b = r.vec();
    p.state = r.vec();
    p.action = static_cast<Arm>(r.u8());
    p.log_prob = r.f64();
    p.estimate = r.f64();
    p.m_pre = r.vec();
    p.user_id = r.u64();
    p.have_reward = r.u8() != 0;
    p.reward = r.f64();
    p.have_next = r.u8() != 0;
    p.next_state = r.vec();
    p.done = r.u8() != 0;
    return p;
}

}  // namespace detail

inline std::string serialize_run_state(const RunState& st) {
    BinWriter w;
    w.u64(st.config_hash);
    w.u8(static_cast<std::uint8_t>(st.method));
    w.u64(st.seed);
    w.u64(st.impressions);
    w.u64(st.clicks);
    detail::put_series(w, st.series);

    const auto& users = st.population.users();
    w.u64(users.size());
    for (const SimUser& u : users) {
        w.u64(u.user_id);
        w.u64(u.segment);
        w.vec(u.preference);
        w.vec(u.offset);
        w.vec(u.profile);
    }
    const auto& arch = st.population.archetypes();
    w.u64(arch.size());
    for (const Vec& a : arch) w.vec(a);
    w.u64(st.drift_cursor);

    w.u8(st.rl ? 1 : 0);
    if (st.rl) {
        const RlState& rl = *st.rl;
        w.u8(static_cast<std::uint8_t>(rl.prompt.tone));
        w.u8(static_cast<std::uint8_t>(rl.prompt.framing));
        w.u8(static_cast<std::uint8_t>(rl.prompt.length));
        w.vec(rl.prompt.emphasis);
        w.u8(rl.prompt_opt_done ? 1 : 0);
        detail::put_mlp(w, rl.encoder.net);
        detail::put_mlp(w, rl.actor);
        detail::put_mlp(w, rl.critic);
        detail::put_adam(w, rl.actor_opt);
        detail::put_adam(w, rl.critic_opt);
        detail::put_adam(w, rl.encoder_opt);
        detail::put_gru(w, rl.estimator.gru);
        detail::put_mlp(w, rl.estimator.head);

        w.u64(rl.store.size());
        rl.store.for_each_lru([&](const UserMemory& m) {
            w.u64(m.user_id);
            w.i64(m.last_update_step);
            w.vec(m.m);
        });

        const auto& ts = rl.buffer.transitions();
        w.u64(ts.size());
        for (const Transition& t : ts) {
            w.vec(t.u);
            w.vec(t.c);
            w.vec(t.e_a);
            w.vec(t.e_b);
            w.vec(t.state);
            w.vec(t.next_state);
            w.u8(static_cast<std::uint8_t>(t.action));
            w.f64(t.reward);
            w.f64(t.log_prob_old);
            w.u8(t.done ? 1 : 0);
        }

        w.u64(rl.pending.size());
        for (const auto& [id, p] : rl.pending) {
            w.u64(id);
            detail::put_pending_impression(w, p);
        }
        w.u64(rl.next_commit);

        w.u64(rl.window.size());
        for (const WindowSample& s : rl.window) {
            w.vec(s.s);
            w.u8(static_cast<std::uint8_t>(s.a));
            w.vec(s.m);
        }

        const auto& pend = rl.queue.pending();
        w.u64(pend.size());
        for (const PendingReward& p : pend) {
            w.i64(p.due_step);
            w.u64(p.transition_id);
            w.f64(p.reward);
        }
    }

    w.u8(st.static_ab ? 1 : 0);
    if (st.static_ab) {
        const StaticAbState& ab = *st.static_ab;
        w.u8(ab.phase == StaticAbState::Phase::Committed ? 1 : 0);
        w.u64(ab.impressions[0]);
        w.u64(ab.impressions[1]);
        w.u64(ab.clicks[0]);
        w.u64(ab.clicks[1]);
        w.u8(static_cast<std::uint8_t>(ab.committed_arm));
        w.f64(ab.z);
        w.u8(ab.significant ? 1 : 0);
        w.u8(st.ab_pair_ready ? 1 : 0);
        detail::put_variant(w, st.ab_pair.a);
        detail::put_variant(w, st.ab_pair.b);
    }

    w.u8(st.linucb ? 1 : 0);
    if (st.linucb) {
        w.mat(st.linucb->arm_a.a);
        w.vec(st.linucb->arm_a.b);
        w.mat(st.linucb->arm_b.a);
        w.vec(st.linucb->arm_b.b);
    }

    w.u8(st.fm ? 1 : 0);
    if (st.fm) {
        w.f64(st.fm->w0);
        w.vec(st.fm->w);
        w.mat(st.fm->v);
    }

    for (const Rng* r : {&st.env_rng, &st.agent_rng, &st.train_rng, &st.estimator_rng,
                         &st.delay_rng, &st.drift_rng, &st.prompt_rng, &st.oracle_rng})
        detail::put_rng(w, *r);
    return w.take();
}

inline RunState deserialize_run_state(const std::string& payload, const RunConfig& cfg) {
    BinReader r(payload);
    RunState st;
    st.config_hash = r.u64();
    if (st.config_hash != cfg.config_hash())
        throw ConfigError("checkpoint was produced by a different config (hash " +
                          std::to_string(st.config_hash) + ")");
    st.method = static_cast<Method>(r.u8());
    st.seed = r.u64();
    st.impressions = r.u64();
    st.clicks = r.u64();
    st.series = detail::get_series(r);

    std::uint64_t n_users = r.u64();
    std::vector<SimUser> users;
    users.reserve(n_users);
    for (std::uint64_t i = 0; i < n_users; ++i) {
        SimUser u;
        u.user_id = r.u64();
        u.segment = r.u64();
        u.preference = r.vec();
        u.offset = r.vec();
        u.profile = r.vec();
        users.push_back(std::move(u));
    }
    std::uint64_t n_arch = r.u64();
    std::vector<Vec> arch;
    arch.reserve(n_arch);
    for (std::uint64_t i = 0; i < n_arch; ++i) arch.push_back(r.vec());
    st.population = Population(std::move(users), std::move(arch));
    st.drift_cursor = r.u64();

    if (r.u8()) {
        RlState rl;
        rl.prompt = PromptParams(cfg.emphasis_dim);
        rl.prompt.tone = static_cast<Tone>(r.u8());
        rl.prompt.framing = static_cast<Framing>(r.u8());
        rl.prompt.length = static_cast<PromptLength>(r.u8());
        rl.prompt.emphasis = r.vec();
        rl.prompt_opt_done = r.u8() != 0;
        rl.encoder.dims = encoder_dims(cfg);
        rl.encoder.net = detail::get_mlp(r);
        rl.actor = detail::get_mlp(r);
        rl.critic = detail::get_mlp(r);
        rl.actor_opt = detail::get_adam(r, cfg.actor_lr);
        rl.critic_opt = detail::get_adam(r, cfg.critic_lr);
        rl.encoder_opt = detail::get_adam(r, cfg.encoder_lr);
        rl.estimator.gru = detail::get_gru(r);
        rl.estimator.head = detail::get_mlp(r);

        rl.store = MemoryStore(cfg.memory_capacity, cfg.d_m);
        std::uint64_t n_mem = r.u64();
        for (std::uint64_t i = 0; i < n_mem; ++i) {
            UserMemory m;
            m.user_id = r.u64();
            m.last_update_step = r.i64();
            m.m = r.vec();
            rl.store.put(std::move(m));
        }

        rl.buffer = RolloutBuffer(static_cast<std::size_t>(cfg.buffer_capacity));
        std::uint64_t n_ts = r.u64();
        for (std::uint64_t i = 0; i < n_ts; ++i) {
            Transition t;
            t.u = r.vec();
            t.c = r.vec();
            t.e_a = r.vec();
            t.e_b = r.vec();
            t.state = r.vec();
            t.next_state = r.vec();
            t.action = static_cast<Arm>(r.u8());
            t.reward = r.f64();
            t.log_prob_old = r.f64();
            t.done = r.u8() != 0;
            rl.buffer.push(std::move(t));
        }

        std::uint64_t n_pending = r.u64();
        for (std::uint64_t i = 0; i < n_pending; ++i) {
            std::uint64_t id = r.u64();
            rl.pending.emplace(id, detail::get_pending_impression(r));
        }
        rl.next_commit = r.u64();

        std::uint64_t n_window = r.u64();
        for (std::uint64_t i = 0; i < n_window; ++i) {
            WindowSample s;
            s.s = r.vec();
            s.a = static_cast<Arm>(r.u8());
            s.m = r.vec();
            rl.window.push_back(std::move(s));
        }

        rl.queue = DelayedRewardQueue(cfg.delay_max);
        std::uint64_t n_due = r.u64();
        std::vector<PendingReward> due;
        due.reserve(n_due);
        for (std::uint64_t i = 0; i < n_due; ++i) {
            PendingReward p;
            p.due_step = r.i64();
            p.transition_id = r.u64();
            p.reward = r.f64();
            due.push_back(p);
        }
        rl.queue.restore(std::move(due));
        st.rl.emplace(std::move(rl));
    }

    if (r.u8()) {
        StaticAbState ab;
        ab.cfg.exploration_n = static_cast<std::uint64_t>(cfg.static_ab_exploration_n);
        ab.cfg.alpha = cfg.static_ab_alpha;
        ab.phase = r.u8() ? StaticAbState::Phase::Committed : StaticAbState::Phase::Exploring;
        ab.impressions[0] = r.u64();
        ab.impressions[1] = r.u64();
        ab.clicks[0] = r.u64();
        ab.clicks[1] = r.u64();
        ab.committed_arm = static_cast<Arm>(r.u8());
        ab.z = r.f64();
        ab.significant = r.u8() != 0;
        st.static_ab = ab;
        st.ab_pair_ready = r.u8() != 0;
        st.ab_pair.a = detail::get_variant(r);
        st.ab_pair.b = detail::get_variant(r);
    }

    if (r.u8()) {
        LinUcbState lin(cfg.d_u + cfg.d_c + cfg.d_e, cfg.linucb_alpha);
        lin.arm_a.a = r.mat();
        lin.arm_a.b = r.vec();
        lin.arm_b.a = r.mat();
        lin.arm_b.b = r.vec();
        st.linucb.emplace(std::move(lin));
    }

    if (r.u8()) {
        FmParams fm;
        fm.w0 = r.f64();
        fm.w = r.vec();
        fm.v = r.mat();
        st.fm = std::move(fm);
    }

    for (Rng* rng : {&st.env_rng, &st.agent_rng, &st.train_rng, &st.estimator_rng, &st.delay_rng,
                     &st.drift_rng, &st.prompt_rng, &st.oracle_rng})
        *rng = detail::get_rng(r);
    if (!r.at_end()) throw ChecksumError("checkpoint payload has trailing bytes");
    return st;
}

inline void save_checkpoint(const std::string& path, const RunState& st) {
    write_container(path, kCheckpointVersion, serialize_run_state(st));
}

inline RunState load_checkpoint(const std::string& path, const RunConfig& cfg) {
    return deserialize_run_state(read_container(path, kCheckpointVersion), cfg);
}

}  // namespace rlab
