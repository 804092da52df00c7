// The closed loop: serve impressions, learn from delayed feedback, checkpoint
// metrics, and run the comparison/ablation/replay protocols on top of it.
//
// Per-impression order for the full system: sample user, build the prompt,
// generate the variant pair, embed, encode state, select an arm, draw the
// click, queue the delayed reward, update the user's memory, and commit
// matured transitions in impression order. PPO updates fire when the rollout
// buffer fills; the reward estimator trains on the same window. Baselines
// share the environment loop but credit feedback immediately, which is the
// classical assumption and keeps the comparison conservative for the learner.
#pragma once

#include <cmath>
#include <cstdint>
#include <future>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rlab/checkpoint.hpp"
#include "rlab/criteo.hpp"

namespace rlab {

struct ReplicaResult {
    std::uint64_t seed = 0;
    bool failed = false;
    std::string failure;
    MetricSeries series;  // rows recorded before any abort
    std::size_t generator_fallbacks = 0;
    std::shared_ptr<RunState> final_state;  // null when the replica failed
};

struct ExperimentResult {
    std::string label;  // method name, or axis name for ablation runs
    std::vector<ReplicaResult> replicas;
    MetricSeries pooled;  // counts summed over replicas that finished
};

inline double final_ctr(const ReplicaResult& r) {
    if (r.series.points.empty()) return std::numeric_limits<double>::quiet_NaN();
    return r.series.points.back().ctr;
}

inline double final_oracle_ctr(const ReplicaResult& r) {
    if (r.series.points.empty() || !r.series.points.back().oracle_ctr)
        return std::numeric_limits<double>::quiet_NaN();
    return *r.series.points.back().oracle_ctr;
}

class ReplicaRunner {
  public:
    ReplicaRunner(RunConfig cfg, std::uint64_t seed, std::string label)
        : cfg_(std::move(cfg)),
          env_(env_params(cfg_)),
          ppo_(ppo_config(cfg_)),
          default_prompt_(cfg_.emphasis_dim),
          label_(std::move(label)) {
        if (cfg_.gen_mode == GenMode::External && cfg_.allow_generator_fallback) {
            VariantEmbedder embedder(cfg_.d_e, variant_raw_dim(cfg_.emphasis_dim),
                                     seed ^ 0x7a5c'd1e9'4b3f'2087ULL);
            StubTemplates t = cfg_.templates_path.empty()
                                  ? StubTemplates::defaults()
                                  : StubTemplates::from_file(cfg_.templates_path);
            fallback_.emplace(GeneratorBinding::make_stub(std::move(embedder), std::move(t)));
        }
        if (!cfg_.resume_path.empty()) {
            st_ = load_checkpoint(cfg_.resume_path, cfg_);
            if (st_.seed != seed)
                throw ConfigError("checkpoint holds seed " + std::to_string(st_.seed) +
                                  ", run was asked for seed " + std::to_string(seed));
        } else {
            st_ = fresh_state(seed);
        }
        st_.series.method = label_;
        if (cfg_.replay_path.empty() && st_.rl && !st_.rl->prompt_opt_done) {
            const std::uint64_t probe_cost = static_cast<std::uint64_t>(cfg_.prompt_opt_budget) *
                                             static_cast<std::uint64_t>(cfg_.prompt_opt_probes);
            if (probe_cost >= horizon())
                throw ConfigError("prompt optimization needs up to " + std::to_string(probe_cost) +
                                  " probe impressions but the horizon is only " +
                                  std::to_string(cfg_.horizon));
        }
    }

    ReplicaResult run() {
        ReplicaResult out;
        out.seed = st_.seed;
        out.series.method = label_;
        try {
            if (!cfg_.replay_path.empty()) {
                replay_loop();
            } else {
                if (st_.rl && !st_.rl->prompt_opt_done) prompt_phase();
                while (st_.impressions < horizon()) impression();
            }
            out.series = st_.series;
            out.generator_fallbacks = fallback_count_;
            out.final_state = std::make_shared<RunState>(std::move(st_));
        } catch (const ConfigError&) {
            throw;  // configuration problems hit every replica; not a failure record
        } catch (const std::exception& e) {
            out.failed = true;
            out.failure = e.what();
            out.series = st_.series;
            out.generator_fallbacks = fallback_count_;
        }
        return out;
    }

  private:
    std::uint64_t horizon() const { return static_cast<std::uint64_t>(cfg_.horizon); }

    RunState fresh_state(std::uint64_t seed) const {
        RunState st;
        st.config_hash = cfg_.config_hash();
        st.method = cfg_.method;
        st.seed = seed;
        Rng pop_rng = derive_rng(seed, "population");
        st.population = Population::create(population_config(cfg_), pop_rng);
        st.env_rng = derive_rng(seed, "env");
        st.agent_rng = derive_rng(seed, "agent");
        st.train_rng = derive_rng(seed, "train");
        st.estimator_rng = derive_rng(seed, "estimator");
        st.delay_rng = derive_rng(seed, "delay");
        st.drift_rng = derive_rng(seed, "drift");
        st.prompt_rng = derive_rng(seed, "prompt");
        st.oracle_rng = derive_rng(seed, "oracle");

        Rng init_rng = derive_rng(seed, "init");
        switch (cfg_.method) {
            case Method::RlLlmAbtest: {
                RlState rl;
                rl.prompt = PromptParams(cfg_.emphasis_dim);
                rl.prompt_opt_done = cfg_.no_prompt_opt;
                rl.encoder = StateEncoder(encoder_dims(cfg_), init_rng);
                rl.actor = make_actor(cfg_.d_s, init_rng);
                rl.critic = make_critic(cfg_.d_s, init_rng);
                rl.actor_opt = AdamState(rl.actor.param_count(), cfg_.actor_lr);
                rl.critic_opt = AdamState(rl.critic.param_count(), cfg_.critic_lr);
                rl.encoder_opt = AdamState(rl.encoder.net.param_count(), cfg_.encoder_lr);
                rl.estimator = RewardEstimatorParams(cfg_.d_s, cfg_.d_m, init_rng);
                rl.store = MemoryStore(cfg_.memory_capacity, cfg_.d_m);
                rl.buffer = RolloutBuffer(static_cast<std::size_t>(cfg_.buffer_capacity));
                rl.queue = DelayedRewardQueue(cfg_.delay_max);
                st.rl.emplace(std::move(rl));
                break;
            }
            case Method::StaticAb: {
                StaticAbState ab;
                ab.cfg.exploration_n = static_cast<std::uint64_t>(cfg_.static_ab_exploration_n);
                ab.cfg.alpha = cfg_.static_ab_alpha;
                st.static_ab = ab;
                break;
            }
            case Method::LinUcb:
                st.linucb.emplace(cfg_.d_u + cfg_.d_c + cfg_.d_e, cfg_.linucb_alpha);
                break;
            case Method::FmRank:
                st.fm = fm_init(cfg_.d_u + cfg_.d_c + cfg_.d_e, cfg_.fm_latent_dim,
                                cfg_.fm_init_std, init_rng);
                break;
            case Method::RulePolicy:
                break;
        }
        return st;
    }

    // The external endpoint is launched on first use so that an unlaunchable
    // generator aborts the replica (a runtime failure) rather than the whole
    // experiment, and so the fallback can take over when one is configured.
    VariantPair generate(const Prompt& prompt, std::uint64_t gseed) {
        if (!gen_ && !extern_dead_) {
            try {
                gen_.emplace(make_generator(cfg_, st_.seed));
            } catch (const GeneratorUnavailableError&) {
                if (!fallback_) throw;
                extern_dead_ = true;
            }
        }
        if (extern_dead_) {
            ++fallback_count_;
            return fallback_->generate_pair(prompt, gseed);
        }
        if (!fallback_) return gen_->generate_pair(prompt, gseed);
        try {
            return gen_->generate_pair(prompt, gseed);
        } catch (const GeneratorUnavailableError&) {
            ++fallback_count_;
        } catch (const ProtocolError&) {
            ++fallback_count_;
        }
        return fallback_->generate_pair(prompt, gseed);
    }

    // ---------------------------------------------------------- simulation

    void impression() {
        apply_due_drift(st_.population, cfg_.drift, st_.drift_cursor,
                        static_cast<std::int64_t>(st_.impressions), st_.drift_rng);
        if (st_.method == Method::RlLlmAbtest)
            rl_impression();
        else
            baseline_impression();
        maybe_record();
        maybe_save();
    }

    void rl_impression() {
        RlState& rl = *st_.rl;
        const std::uint64_t id = st_.impressions;
        const SimUser& user = st_.population.sample(st_.env_rng);
        Vec ctx = sample_context(cfg_.d_c, st_.env_rng);
        Prompt prompt = build_prompt(rl.prompt, user.profile, ctx, cfg_.d_u, cfg_.d_c);
        VariantPair pair = generate(prompt, id);
        Vec s = encode_state(rl.encoder, user.profile, ctx, pair.a.embedding, pair.b.embedding);

        Arm action;
        double logp;
        if (cfg_.no_actor_critic) {
            action = st_.agent_rng.bernoulli(0.5) ? Arm::B : Arm::A;
            logp = std::log(0.5);
        } else {
            ActionSample as = select_action(rl.actor, s, st_.agent_rng);
            action = as.action;
            logp = as.log_prob;
        }
        const Variant& shown = action == Arm::A ? pair.a : pair.b;
        StepOutcome o = env_step(env_, user, shown, st_.env_rng);
        ++st_.impressions;
        if (o.clicked) ++st_.clicks;

        // this state closes the previous impression's transition
        if (id > 0) {
            auto prev = rl.pending.find(id - 1);
            if (prev != rl.pending.end()) {
                prev->second.next_state = s;
                prev->second.have_next = true;
            }
        }

        rl.queue.push(id, o.clicked, static_cast<std::int64_t>(id), st_.delay_rng);

        PendingImpression p;
        p.u = user.profile;
        p.c = std::move(ctx);
        p.e_a = pair.a.embedding;
        p.e_b = pair.b.embedding;
        p.state = std::move(s);
        p.action = action;
        p.log_prob = logp;
        p.user_id = user.user_id;
        p.done = st_.impressions == horizon();
        if (!cfg_.no_memory) {
            UserMemory m = rl.store.lookup(user.user_id);
            p.m_pre = m.m;
            p.estimate = estimate_reward(rl.estimator, p.state, action, m.m);
            rl.store.put(
                update_memory(rl.estimator, m, p.state, action, static_cast<std::int64_t>(id)));
        }
        rl.pending.emplace(id, std::move(p));

        deliver_and_commit(static_cast<std::int64_t>(id));
    }

    void deliver_and_commit(std::int64_t now) {
        RlState& rl = *st_.rl;
        for (const PendingReward& pr : rl.queue.collect(now)) {
            auto it = rl.pending.find(pr.transition_id);
            if (it == rl.pending.end()) continue;
            it->second.reward = pr.reward;
            it->second.have_reward = true;
        }
        // commits stay in impression order so return recursion sees the
        // stream as it happened; the bounded delay window caps the holdback
        while (true) {
            auto it = rl.pending.find(rl.next_commit);
            if (it == rl.pending.end()) break;
            PendingImpression& p = it->second;
            if (!p.have_reward || (!p.have_next && !p.done)) break;
            const double lambda = cfg_.no_memory ? 0.0 : cfg_.memory_lambda;
            Transition t;
            t.u = std::move(p.u);
            t.c = std::move(p.c);
            t.e_a = std::move(p.e_a);
            t.e_b = std::move(p.e_b);
            t.state = std::move(p.state);
            t.next_state = p.have_next ? std::move(p.next_state) : Vec(cfg_.d_s, 0.0);
            t.action = p.action;
            t.log_prob_old = p.log_prob;
            t.done = p.done;
            t.reward = (1.0 - lambda) * p.reward + lambda * p.estimate;
            if (!cfg_.no_memory) rl.window.push_back({t.state, t.action, std::move(p.m_pre)});
            rl.buffer.push(std::move(t));
            rl.pending.erase(it);
            ++rl.next_commit;
            if (rl.buffer.full()) train();
        }
    }

    void train() {
        RlState& rl = *st_.rl;
        if (!cfg_.no_memory && !rl.window.empty()) {
            const std::vector<Transition>& ts = rl.buffer.transitions();
            Vec shaped(ts.size());
            for (std::size_t i = 0; i < ts.size(); ++i) shaped[i] = ts[i].reward;
            Vec returns = memory_return(cfg_.gamma, shaped);
            std::vector<EstimatorSample> data(ts.size());
            for (std::size_t i = 0; i < ts.size(); ++i) {
                data[i].s = rl.window[i].s;
                data[i].a = rl.window[i].a;
                data[i].m = rl.window[i].m;
                data[i].target = returns[i];
            }
            train_estimator(rl.estimator, data, cfg_.estimator_epochs, cfg_.estimator_lr,
                            cfg_.estimator_minibatch, st_.estimator_rng);
            rl.window.clear();
        }
        if (cfg_.no_actor_critic)
            rl.buffer.clear();
        else
            train_update(ppo_, rl.actor, rl.critic, rl.encoder, rl.actor_opt, rl.critic_opt,
                         rl.encoder_opt, rl.buffer, st_.train_rng);
    }

    void baseline_impression() {
        const std::uint64_t id = st_.impressions;
        const SimUser& user = st_.population.sample(st_.env_rng);
        Vec ctx = sample_context(cfg_.d_c, st_.env_rng);
        VariantPair pair;
        if (st_.method == Method::StaticAb) {
            ensure_ab_pair();
            pair = st_.ab_pair;
        } else {
            Prompt prompt = build_prompt(default_prompt_, user.profile, ctx, cfg_.d_u, cfg_.d_c);
            pair = generate(prompt, id);
        }

        Arm arm = Arm::A;
        Vec xa, xb;
        switch (st_.method) {
            case Method::StaticAb:
                arm = static_ab_select(*st_.static_ab, st_.agent_rng);
                break;
            case Method::LinUcb:
            case Method::FmRank:
                xa = concat({&user.profile, &ctx, &pair.a.embedding});
                xb = concat({&user.profile, &ctx, &pair.b.embedding});
                arm = st_.method == Method::LinUcb ? linucb_select(*st_.linucb, xa, xb)
                                                   : fm_rank_select(*st_.fm, xa, xb);
                break;
            case Method::RulePolicy:
                arm = rule_select(cfg_.rule_policy, user.profile, ctx);
                break;
            default:
                throw ContractError("baseline loop reached with the learner method");
        }

        const Variant& shown = arm == Arm::A ? pair.a : pair.b;
        StepOutcome o = env_step(env_, user, shown, st_.env_rng);
        ++st_.impressions;
        if (o.clicked) ++st_.clicks;

        const double label = o.clicked ? 1.0 : 0.0;
        switch (st_.method) {
            case Method::StaticAb:
                static_ab_record(*st_.static_ab, arm, o.clicked);
                break;
            case Method::LinUcb:
                linucb_update(*st_.linucb, arm, arm == Arm::A ? xa : xb, label);
                break;
            case Method::FmRank:
                fm_update(*st_.fm, arm == Arm::A ? xa : xb, label, cfg_.fm_lr);
                break;
            default:
                break;
        }
    }

    void ensure_ab_pair() {
        if (st_.ab_pair_ready) return;
        // the classical test fixes its two creatives up front
        Prompt prompt = build_prompt(default_prompt_, Vec(cfg_.d_u, 0.0), Vec(cfg_.d_c, 0.0),
                                     cfg_.d_u, cfg_.d_c);
        st_.ab_pair = generate(prompt, 0);
        st_.ab_pair_ready = true;
    }

    // ------------------------------------------------------- prompt search

    void prompt_phase() {
        RlState& rl = *st_.rl;
        const int probes = cfg_.prompt_opt_probes;
        auto score = [&](const PromptParams& cand) {
            std::uint64_t hits = 0;
            for (int i = 0; i < probes; ++i) {
                apply_due_drift(st_.population, cfg_.drift, st_.drift_cursor,
                                static_cast<std::int64_t>(st_.impressions), st_.drift_rng);
                const SimUser& user = st_.population.sample(st_.env_rng);
                Vec ctx = sample_context(cfg_.d_c, st_.env_rng);
                Prompt prompt = build_prompt(cand, user.profile, ctx, cfg_.d_u, cfg_.d_c);
                VariantPair pair = generate(prompt, st_.impressions);
                const Variant& shown = st_.agent_rng.bernoulli(0.5) ? pair.b : pair.a;
                StepOutcome o = env_step(env_, user, shown, st_.env_rng);
                ++st_.impressions;
                if (o.clicked) {
                    ++st_.clicks;
                    ++hits;
                }
                maybe_record();
            }
            return static_cast<double>(hits) / static_cast<double>(probes);
        };
        PromptOptResult res = optimize_prompt_params(score, rl.prompt, cfg_.prompt_opt_budget,
                                                     cfg_.prompt_opt_step, st_.prompt_rng);
        rl.prompt = res.best;
        rl.prompt_opt_done = true;
        rl.next_commit = st_.impressions;  // probes produce no transitions
    }

    // ------------------------------------------------------------- replay

    void replay_loop() {
        ReplayStream stream(cfg_.replay_path, cfg_.d_u, cfg_.d_c, cfg_.replay_sample_rate,
                            st_.seed, cfg_.replay_strict);
        // a resumed run fast-forwards through the rows it already served;
        // this replays the sampling draws, so the stream state matches
        for (std::uint64_t i = 0; i < st_.impressions; ++i)
            if (!stream.next())
                throw ConfigError("resume: replay file has fewer rows than the checkpoint used");
        while (st_.impressions < horizon()) {
            std::optional<ReplayItem> item = stream.next();
            if (!item) break;
            replay_impression(*item);
            maybe_record();
            maybe_save();
        }
        if (st_.impressions > 0 &&
            (st_.series.points.empty() || st_.series.points.back().step != st_.impressions))
            append_checkpoint(st_.series, st_.impressions, st_.impressions, st_.clicks,
                              std::nullopt);
    }

    void replay_impression(const ReplayItem& item) {
        const std::uint64_t id = st_.impressions;
        const double label = item.label ? 1.0 : 0.0;
        const Vec zero_e(cfg_.d_e, 0.0);
        switch (st_.method) {
            case Method::RlLlmAbtest: {
                RlState& rl = *st_.rl;
                Vec s = encode_state(rl.encoder, item.u, item.c, zero_e, zero_e);
                Arm action;
                double logp;
                if (cfg_.no_actor_critic) {
                    action = st_.agent_rng.bernoulli(0.5) ? Arm::B : Arm::A;
                    logp = std::log(0.5);
                } else {
                    ActionSample as = select_action(rl.actor, s, st_.agent_rng);
                    action = as.action;
                    logp = as.log_prob;
                }
                ++st_.impressions;
                if (item.label) ++st_.clicks;
                if (id > 0) {
                    auto prev = rl.pending.find(id - 1);
                    if (prev != rl.pending.end()) {
                        prev->second.next_state = s;
                        prev->second.have_next = true;
                    }
                }
                rl.queue.push(id, item.label != 0, static_cast<std::int64_t>(id), st_.delay_rng);
                PendingImpression p;
                p.u = item.u;
                p.c = item.c;
                p.e_a = zero_e;
                p.e_b = zero_e;
                p.state = std::move(s);
                p.action = action;
                p.log_prob = logp;
                p.user_id = hash_vec_bits(item.u);
                p.done = st_.impressions == horizon();
                if (!cfg_.no_memory) {
                    UserMemory m = rl.store.lookup(p.user_id);
                    m.user_id = p.user_id;
                    p.m_pre = m.m;
                    p.estimate = estimate_reward(rl.estimator, p.state, action, m.m);
                    rl.store.put(update_memory(rl.estimator, m, p.state, action,
                                               static_cast<std::int64_t>(id)));
                }
                rl.pending.emplace(id, std::move(p));
                deliver_and_commit(static_cast<std::int64_t>(id));
                break;
            }
            case Method::StaticAb: {
                Arm arm = static_ab_select(*st_.static_ab, st_.agent_rng);
                ++st_.impressions;
                if (item.label) ++st_.clicks;
                // logged label credits whichever arm was dealt; there is no
                // counterfactual correction on replayed traffic
                static_ab_record(*st_.static_ab, arm, item.label != 0);
                break;
            }
            case Method::LinUcb:
            case Method::FmRank: {
                Vec x = concat({&item.u, &item.c, &zero_e});
                Arm arm = st_.method == Method::LinUcb ? linucb_select(*st_.linucb, x, x)
                                                       : fm_rank_select(*st_.fm, x, x);
                ++st_.impressions;
                if (item.label) ++st_.clicks;
                if (st_.method == Method::LinUcb)
                    linucb_update(*st_.linucb, arm, x, label);
                else
                    fm_update(*st_.fm, x, label, cfg_.fm_lr);
                break;
            }
            case Method::RulePolicy:
                ++st_.impressions;
                if (item.label) ++st_.clicks;
                break;
        }
    }

    // ------------------------------------------------------------ metrics

    void maybe_record() {
        const std::uint64_t every = static_cast<std::uint64_t>(cfg_.report_every);
        if (st_.impressions % every != 0 && st_.impressions != horizon()) return;
        if (!st_.series.points.empty() && st_.series.points.back().step == st_.impressions)
            return;
        append_checkpoint(st_.series, st_.impressions, st_.impressions, st_.clicks,
                          compute_oracle());
    }

    std::optional<double> compute_oracle() {
        if (!cfg_.record_oracle || !cfg_.replay_path.empty()) return std::nullopt;
        const int n = cfg_.oracle_users;
        if (n <= 0) throw ConfigError("oracle_users must be positive when record_oracle is on");
        double acc = 0.0;
        for (int k = 0; k < n; ++k) {
            const SimUser& user = st_.population.sample(st_.oracle_rng);
            Vec ctx = sample_context(cfg_.d_c, st_.oracle_rng);
            acc += policy_value(user, ctx, static_cast<std::uint64_t>(k));
        }
        return acc / static_cast<double>(n);
    }

    // Expected click probability of the current policy snapshot on one
    // sampled user; generation seeds are pure functions of (checkpoint, k)
    // so the oracle never disturbs the run's random streams.
    double policy_value(const SimUser& user, const Vec& ctx, std::uint64_t k) {
        const std::uint64_t gseed =
            0x6f5902ac237024bdULL ^ (st_.impressions * 1315423911ULL + k);
        switch (st_.method) {
            case Method::RlLlmAbtest: {
                RlState& rl = *st_.rl;
                Prompt prompt = build_prompt(rl.prompt, user.profile, ctx, cfg_.d_u, cfg_.d_c);
                VariantPair pair = generate(prompt, gseed);
                if (cfg_.no_actor_critic)
                    return 0.5 * (ground_truth_p(env_, user, pair.a) +
                                  ground_truth_p(env_, user, pair.b));
                Vec s = encode_state(rl.encoder, user.profile, ctx, pair.a.embedding,
                                     pair.b.embedding);
                Arm a = greedy_action(rl.actor, s);
                return ground_truth_p(env_, user, a == Arm::A ? pair.a : pair.b);
            }
            case Method::StaticAb: {
                ensure_ab_pair();
                if (st_.static_ab->phase == StaticAbState::Phase::Committed)
                    return ground_truth_p(env_, user,
                                          st_.static_ab->committed_arm == Arm::A ? st_.ab_pair.a
                                                                                 : st_.ab_pair.b);
                return 0.5 * (ground_truth_p(env_, user, st_.ab_pair.a) +
                              ground_truth_p(env_, user, st_.ab_pair.b));
            }
            case Method::LinUcb:
            case Method::FmRank: {
                Prompt prompt = build_prompt(default_prompt_, user.profile, ctx, cfg_.d_u,
                                             cfg_.d_c);
                VariantPair pair = generate(prompt, gseed);
                Vec xa = concat({&user.profile, &ctx, &pair.a.embedding});
                Vec xb = concat({&user.profile, &ctx, &pair.b.embedding});
                Arm a = st_.method == Method::LinUcb ? linucb_select(*st_.linucb, xa, xb)
                                                     : fm_rank_select(*st_.fm, xa, xb);
                return ground_truth_p(env_, user, a == Arm::A ? pair.a : pair.b);
            }
            case Method::RulePolicy: {
                Prompt prompt = build_prompt(default_prompt_, user.profile, ctx, cfg_.d_u,
                                             cfg_.d_c);
                VariantPair pair = generate(prompt, gseed);
                Arm a = rule_select(cfg_.rule_policy, user.profile, ctx);
                return ground_truth_p(env_, user, a == Arm::A ? pair.a : pair.b);
            }
        }
        throw ContractError("policy_value: unknown method");
    }

    void maybe_save() {
        if (cfg_.checkpoint_at <= 0 || cfg_.checkpoint_path.empty() || saved_) return;
        if (!cfg_.resume_path.empty()) return;  // a resumed run does not re-checkpoint
        if (st_.impressions < static_cast<std::uint64_t>(cfg_.checkpoint_at)) return;
        save_checkpoint(cfg_.checkpoint_path, st_);
        saved_ = true;
    }

    RunConfig cfg_;
    EnvParams env_;
    PpoConfig ppo_;
    PromptParams default_prompt_;
    std::string label_;
    std::optional<GeneratorBinding> gen_;
    std::optional<GeneratorBinding> fallback_;
    bool extern_dead_ = false;
    std::size_t fallback_count_ = 0;
    RunState st_;
    bool saved_ = false;
};

// ------------------------------------------------------------- experiments

namespace detail {

inline RunConfig per_seed_config(const RunConfig& cfg, std::uint64_t seed) {
    RunConfig c = cfg;
    if (cfg.seeds.size() > 1) {
        if (!c.checkpoint_path.empty()) c.checkpoint_path += ".s" + std::to_string(seed);
        if (!c.resume_path.empty()) c.resume_path += ".s" + std::to_string(seed);
    }
    return c;
}

}  // namespace detail

// Runs one replica per seed (in parallel when configured) and merges results
// in seed order. A replica that aborts at runtime becomes a failure record;
// setup problems (bad config, unreadable checkpoint) propagate.
inline ExperimentResult run_experiment(const RunConfig& cfg, const std::string& label = "") {
    cfg.validate();
    ExperimentResult res;
    res.label = label.empty() ? method_name(cfg.method) : label;

    auto one = [&res, &cfg](std::uint64_t seed) {
        ReplicaRunner runner(detail::per_seed_config(cfg, seed), seed, res.label);
        return runner.run();
    };

    if (cfg.parallel_replicas && cfg.seeds.size() > 1) {
        std::vector<std::future<ReplicaResult>> futures;
        futures.reserve(cfg.seeds.size());
        for (std::uint64_t seed : cfg.seeds)
            futures.push_back(std::async(std::launch::async, one, seed));
        for (auto& f : futures) res.replicas.push_back(f.get());
    } else {
        for (std::uint64_t seed : cfg.seeds) res.replicas.push_back(one(seed));
    }

    std::vector<MetricSeries> finished;
    for (const ReplicaResult& r : res.replicas)
        if (!r.failed && !r.series.points.empty()) finished.push_back(r.series);
    if (!finished.empty())
        res.pooled = pool_series(finished);
    else
        res.pooled.method = res.label;
    return res;
}

inline const std::array<Method, 5> kAllMethods = {Method::RlLlmAbtest, Method::StaticAb,
                                                  Method::LinUcb, Method::FmRank,
                                                  Method::RulePolicy};

inline std::vector<ExperimentResult> run_compare(const RunConfig& cfg) {
    if (cfg.no_prompt_opt || cfg.no_actor_critic || cfg.no_memory)
        throw ConfigError("compare runs full methods; ablation flags are not valid here");
    std::vector<ExperimentResult> out;
    for (Method m : kAllMethods) {
        RunConfig c = cfg;
        c.method = m;
        if (!c.checkpoint_path.empty()) c.checkpoint_path += std::string(".") + method_name(m);
        if (!c.resume_path.empty()) c.resume_path += std::string(".") + method_name(m);
        out.push_back(run_experiment(c));
    }
    return out;
}

// Single-axis ablations against the same seeds: the full system plus one run
// per disabled module.
inline std::vector<ExperimentResult> run_ablation(const RunConfig& cfg) {
    if (cfg.method != Method::RlLlmAbtest)
        throw ConfigError("ablation requires method rl_llm_abtest");
    if (cfg.no_prompt_opt || cfg.no_actor_critic || cfg.no_memory)
        throw ConfigError(
            "ablations are single-axis: start from a config with no ablation flags set");
    std::vector<ExperimentResult> out;
    struct Axis {
        const char* name;
        bool RunConfig::* flag;
    };
    const std::array<Axis, 3> axes = {Axis{"no_prompt_opt", &RunConfig::no_prompt_opt},
                                      Axis{"no_actor_critic", &RunConfig::no_actor_critic},
                                      Axis{"no_memory", &RunConfig::no_memory}};
    {
        RunConfig c = cfg;
        if (!c.checkpoint_path.empty()) c.checkpoint_path += ".full";
        if (!c.resume_path.empty()) c.resume_path += ".full";
        out.push_back(run_experiment(c, "full"));
    }
    for (const Axis& ax : axes) {
        RunConfig c = cfg;
        c.*ax.flag = true;
        if (!c.checkpoint_path.empty()) c.checkpoint_path += std::string(".") + ax.name;
        if (!c.resume_path.empty()) c.resume_path += std::string(".") + ax.name;
        out.push_back(run_experiment(c, ax.name));
    }
    return out;
}

}  // namespace rlab
