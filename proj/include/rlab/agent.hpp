// PPO actor-critic over the two-arm action space. The actor trains on the
// states stored at collection time; the critic recomputes states through the
// current encoder so its loss also trains the fusion network.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "rlab/adam.hpp"
#include "rlab/common.hpp"
#include "rlab/config.hpp"
#include "rlab/encoder.hpp"
#include "rlab/nn.hpp"
#include "rlab/rng.hpp"

namespace rlab {

inline constexpr std::size_t kActorHidden = 32;
inline constexpr std::size_t kCriticHidden = 32;

struct PpoConfig {
    double gamma = 0.99;
    double clip_eps = 0.2;
    double actor_lr = 3e-4;
    double critic_lr = 3e-4;
    double encoder_lr = 3e-4;
    int epochs = 4;
    int minibatch = 64;
    AdvantageMode advantage_mode = AdvantageMode::Td1;
    double entropy_coef = 0.01;
};

inline PpoConfig ppo_config(const RunConfig& cfg) {
    PpoConfig p;
    p.gamma = cfg.gamma;
    p.clip_eps = cfg.clip_eps;
    p.actor_lr = cfg.actor_lr;
    p.critic_lr = cfg.critic_lr;
    p.encoder_lr = cfg.encoder_lr;
    p.epochs = cfg.ppo_epochs;
    p.minibatch = cfg.minibatch;
    p.advantage_mode = cfg.advantage_mode;
    p.entropy_coef = cfg.entropy_coef;
    return p;
}

inline Mlp make_actor(std::size_t d_s, Rng& rng) { return Mlp({d_s, kActorHidden, 2}, rng); }
inline Mlp make_critic(std::size_t d_s, Rng& rng) { return Mlp({d_s, kCriticHidden, 1}, rng); }

struct Transition {
    // encoder inputs at decision time, kept so the critic pass can flow
    // gradients through the current encoder
    Vec u, c, e_a, e_b;
    Vec state;       // s_t as encoded at collection time
    Vec next_state;  // s_{t+1} as encoded at collection time
    Arm action = Arm::A;
    double reward = 0.0;  // training reward (blend of observed and shaped)
    double log_prob_old = std::numeric_limits<double>::quiet_NaN();
    bool done = false;
};

class RolloutBuffer {
  public:
    explicit RolloutBuffer(std::size_t capacity) : cap_(capacity) {
        if (capacity == 0) throw ContractError("RolloutBuffer capacity must be positive");
        ts_.reserve(capacity);
    }

    void push(Transition t) {
        if (ts_.size() >= cap_) throw ContractError("RolloutBuffer overflow: train before pushing");
        if (!std::isfinite(t.reward)) throw ContractError("transition reward must be finite");
        if (!(t.log_prob_old <= 0.0))
            throw ContractError("transition is missing a valid log_prob_old");
        ts_.push_back(std::move(t));
    }

    bool full() const { return ts_.size() >= cap_; }
    std::size_t size() const { return ts_.size(); }
    bool empty() const { return ts_.empty(); }
    std::size_t capacity() const { return cap_; }
    void clear() { ts_.clear(); }
    const std::vector<Transition>& transitions() const { return ts_; }

  private:
    std::vector<Transition> ts_;
    std::size_t cap_;
};

// ------------------------------------------------------------------ policy

inline double critic_value(const Mlp& critic, const Vec& s) { return mlp_apply(critic, s)[0]; }

struct ActionSample {
    Arm action;
    double log_prob;
    Vec probs;
};

inline ActionSample select_action(const Mlp& actor, const Vec& s, Rng& rng) {
    Vec logits = mlp_apply(actor, s);
    require_finite(logits, "select_action logits");
    Vec p = softmax(logits);
    Arm a = rng.uniform() < p[0] ? Arm::A : Arm::B;
    double logp = std::log(p[static_cast<std::size_t>(a)]);
    return {a, logp, std::move(p)};
}

inline Arm greedy_action(const Mlp& actor, const Vec& s) {
    Vec logits = mlp_apply(actor, s);
    require_finite(logits, "greedy_action logits");
    return logits[0] >= logits[1] ? Arm::A : Arm::B;
}

// -------------------------------------------------------------- advantages

struct AdvantageResult {
    Vec advantages;
    Vec returns;
};

inline AdvantageResult compute_advantages(const PpoConfig& cfg, const Mlp& critic,
                                          const std::vector<Transition>& ts) {
    if (ts.empty()) throw ContractError("compute_advantages: empty buffer");
    const std::size_t n = ts.size();
    AdvantageResult out;
    out.advantages.resize(n);
    out.returns.resize(n);

    Vec v(n), v_next(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = critic_value(critic, ts[i].state);
        v_next[i] = ts[i].done ? 0.0 : critic_value(critic, ts[i].next_state);
    }

    if (cfg.advantage_mode == AdvantageMode::Td1) {
        for (std::size_t i = 0; i < n; ++i) out.returns[i] = ts[i].reward + cfg.gamma * v_next[i];
    } else {
        // discounted sums by backward recursion; a non-terminal tail
        // bootstraps from the critic's view of its successor state
        for (std::size_t r = n; r-- > 0;) {
            if (ts[r].done)
                out.returns[r] = ts[r].reward;
            else if (r + 1 < n)
                out.returns[r] = ts[r].reward + cfg.gamma * out.returns[r + 1];
            else
                out.returns[r] = ts[r].reward + cfg.gamma * v_next[r];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        out.advantages[i] = out.returns[i] - v[i];
        if (!std::isfinite(out.advantages[i]))
            throw NumericError("non-finite advantage at transition " + std::to_string(i));
    }
    return out;
}

// Mean-center and variance-normalize; if the batch is (near-)constant only
// the centering is applied. Positive scaling, so the argmax is preserved.
inline void normalize_advantages(Vec& adv) {
    if (adv.empty()) return;
    double mean = 0.0;
    for (double a : adv) mean += a;
    mean /= static_cast<double>(adv.size());
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    var /= static_cast<double>(adv.size());
    const double sd = std::sqrt(var);
    for (double& a : adv) {
        a -= mean;
        if (sd >= 1e-8) a /= sd;
    }
}

// ------------------------------------------------------------------ losses

struct ActorLossResult {
    double loss = 0.0;
    double mean_ratio = 0.0;
    double clip_fraction = 0.0;
    double mean_entropy = 0.0;
};

// L = -mean(min(ratio*A, clip(ratio)*A)) - entropy_coef*mean(H); gradients
// accumulate into `grads`. Where the clipped branch attains the strict min
// the policy-gradient term vanishes.
inline ActorLossResult ppo_actor_loss(const Mlp& actor, const std::vector<Transition>& ts,
                                      const std::vector<std::size_t>& idx, const Vec& adv,
                                      double clip_eps, double entropy_coef, Mlp& grads) {
    if (idx.empty()) throw ContractError("ppo_actor_loss: empty batch");
    ActorLossResult res;
    const double inv_n = 1.0 / static_cast<double>(idx.size());

    for (std::size_t i : idx) {
        const Transition& t = ts[i];
        if (!(t.log_prob_old <= 0.0))
            throw ContractError("ppo_actor_loss: transition missing log_prob_old");
        MlpCache cache;
        Vec logits = mlp_apply(actor, t.state, &cache);
        Vec p = softmax(logits);
        const std::size_t a = static_cast<std::size_t>(t.action);
        const double logp_new = std::log(p[a]);
        const double ratio = std::exp(logp_new - t.log_prob_old);
        const double lo = 1.0 - clip_eps, hi = 1.0 + clip_eps;
        const double surr1 = ratio * adv[i];
        const double surr2 = std::clamp(ratio, lo, hi) * adv[i];

        double entropy = 0.0;
        for (double pj : p) entropy -= pj * std::log(pj);

        res.loss += (-std::min(surr1, surr2) - entropy_coef * entropy) * inv_n;
        res.mean_ratio += ratio * inv_n;
        res.mean_entropy += entropy * inv_n;
        const bool clipped = surr2 < surr1;
        if (clipped) res.clip_fraction += inv_n;

        // d(-min)/dlogp vanishes when the clipped branch is strictly active
        const double dloss_dlogp = clipped ? 0.0 : -ratio * adv[i];
        Vec dlogits(2);
        for (std::size_t j = 0; j < 2; ++j) {
            const double dlogp_dlogit = (j == a ? 1.0 : 0.0) - p[j];
            const double dH_dlogit = -p[j] * (std::log(p[j]) + entropy);
            dlogits[j] = (dloss_dlogp * dlogp_dlogit - entropy_coef * dH_dlogit) * inv_n;
        }
        mlp_grad(actor, cache, dlogits, grads);
    }
    return res;
}

// Mean squared error of V(s) against the return targets (critic training
// objective). Optionally emits dL/ds per sample for the encoder pass.
inline double critic_loss(const Mlp& critic, const std::vector<Vec>& states, const Vec& targets,
                          Mlp& grads, std::vector<Vec>* dstates = nullptr) {
    if (states.empty()) throw ContractError("critic_loss: empty batch");
    if (states.size() != targets.size())
        throw DimensionError("critic_loss: states/targets length mismatch");
    if (dstates) dstates->resize(states.size());
    const double inv_n = 1.0 / static_cast<double>(states.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
        MlpCache cache;
        const double v = mlp_apply(critic, states[i], &cache)[0];
        const double err = v - targets[i];
        loss += err * err * inv_n;
        Vec upstream{2.0 * err * inv_n};
        Vec ds = mlp_grad(critic, cache, upstream, grads);
        if (dstates) (*dstates)[i] = std::move(ds);
    }
    return loss;
}

// ---------------------------------------------------------------- training

struct TrainDiagnostics {
    double actor_loss = 0.0;
    double critic_loss = 0.0;
    double mean_ratio = 0.0;
    double clip_fraction = 0.0;
    double mean_entropy = 0.0;
    double mean_advantage = 0.0;
    int minibatches = 0;
};

namespace detail {
inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
}
}  // namespace detail

// One PPO update over the buffer: advantages and targets are computed once
// against the pre-update critic, then cfg.epochs passes of minibatch Adam.
// The critic pass re-encodes states through the current encoder and its
// gradient trains both; the actor consumes collection-time states only.
// Clears the buffer on success; throws TrainingAborted on non-finite loss.
inline TrainDiagnostics train_update(const PpoConfig& cfg, Mlp& actor, Mlp& critic,
                                     StateEncoder& encoder, AdamState& actor_opt,
                                     AdamState& critic_opt, AdamState& encoder_opt,
                                     RolloutBuffer& buffer, Rng& rng) {
    if (buffer.empty()) throw ContractError("train_update: empty buffer");
    const std::vector<Transition>& ts = buffer.transitions();
    const std::size_t n = ts.size();

    AdvantageResult ar = compute_advantages(cfg, critic, ts);
    normalize_advantages(ar.advantages);

    TrainDiagnostics diag;
    for (double a : ar.advantages) diag.mean_advantage += a / static_cast<double>(n);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    const std::size_t mb = std::min<std::size_t>(static_cast<std::size_t>(cfg.minibatch), n);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        detail::shuffle_indices(order, rng);
        for (std::size_t lo = 0; lo < n; lo += mb) {
            const std::size_t hi = std::min(lo + mb, n);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                         order.begin() + static_cast<std::ptrdiff_t>(hi));

            Mlp actor_grads = zeros_like(actor);
            ActorLossResult al =
                ppo_actor_loss(actor, ts, idx, ar.advantages, cfg.clip_eps, cfg.entropy_coef,
                               actor_grads);

            // critic + encoder joint pass on freshly encoded states
            std::vector<Vec> states(idx.size());
            std::vector<EncodeCache> caches(idx.size());
            Vec targets(idx.size());
            for (std::size_t k = 0; k < idx.size(); ++k) {
                const Transition& t = ts[idx[k]];
                states[k] = encode_state(encoder, t.u, t.c, t.e_a, t.e_b, &caches[k]);
                targets[k] = ar.returns[idx[k]];
            }
            Mlp critic_grads = zeros_like(critic);
            std::vector<Vec> dstates;
            double cl = critic_loss(critic, states, targets, critic_grads, &dstates);

            if (!std::isfinite(al.loss) || !std::isfinite(cl))
                throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch) +
                                      " (actor=" + std::to_string(al.loss) +
                                      ", critic=" + std::to_string(cl) + ")");

            Mlp encoder_grads = zeros_like(encoder.net);
            for (std::size_t k = 0; k < idx.size(); ++k)
                encode_grad(encoder, caches[k], dstates[k], encoder_grads);

            actor_opt.learning_rate = cfg.actor_lr;
            critic_opt.learning_rate = cfg.critic_lr;
            encoder_opt.learning_rate = cfg.encoder_lr;
            adam_update(actor_opt, actor, actor_grads);
            adam_update(critic_opt, critic, critic_grads);
            adam_update(encoder_opt, encoder.net, encoder_grads);

            diag.actor_loss += al.loss;
            diag.critic_loss += cl;
            diag.mean_ratio += al.mean_ratio;
            diag.clip_fraction += al.clip_fraction;
            diag.mean_entropy += al.mean_entropy;
            ++diag.minibatches;
        }
    }
    if (diag.minibatches > 0) {
        diag.actor_loss /= diag.minibatches;
        diag.critic_loss /= diag.minibatches;
        diag.mean_ratio /= diag.minibatches;
        diag.clip_fraction /= diag.minibatches;
        diag.mean_entropy /= diag.minibatches;
    }
    buffer.clear();
    return diag;
}

}  // namespace rlab
