// Synthetic user population with a logistic ground-truth click model,
// scheduled preference drift, and a delayed feedback queue. Drift is latent:
// it rewrites preferences, never the observable profiles.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rlab/common.hpp"
#include "rlab/config.hpp"
#include "rlab/rng.hpp"
#include "rlab/variants.hpp"

namespace rlab {

struct SimUser {
    std::uint64_t user_id = 0;
    std::size_t segment = 0;
    Vec preference;  // unit norm, latent
    Vec offset;      // latent noise around the segment archetype
    Vec profile;     // observable features, fixed at creation
};

struct PopulationConfig {
    std::size_t n_segments = 5;
    std::size_t n_users = 10000;
    std::size_t d_e = 32;
    std::size_t d_u = 16;
    double pref_noise_std = 0.1;
};

inline PopulationConfig population_config(const RunConfig& cfg) {
    PopulationConfig p;
    p.n_segments = static_cast<std::size_t>(cfg.n_segments);
    p.n_users = static_cast<std::size_t>(cfg.n_users);
    p.d_e = cfg.d_e;
    p.d_u = cfg.d_u;
    p.pref_noise_std = cfg.pref_noise_std;
    return p;
}

// Archetype plus Gaussian offset, renormalized. The offset is retained so
// segment-level drift can recompose the preference later.
inline SimUser make_user(std::uint64_t id, std::size_t segment, const Vec& archetype,
                         const Mat& profile_proj, double noise_std, Rng& rng) {
    SimUser u;
    u.user_id = id;
    u.segment = segment;
    u.offset.assign(archetype.size(), 0.0);
    Vec p;
    for (;;) {
        for (auto& e : u.offset) e = noise_std * rng.normal();
        p = archetype;
        add_inplace(p, u.offset);
        if (norm2(p) >= 1e-9) break;  // offset cancelling the archetype: redraw
    }
    u.preference = p;
    scale_inplace(u.preference, 1.0 / norm2(p));
    u.profile = matvec(profile_proj, u.preference);
    for (auto& e : u.profile) e += noise_std * rng.normal();
    return u;
}

class Population {
  public:
    Population() = default;
    Population(std::vector<SimUser> users, std::vector<Vec> archetypes)
        : users_(std::move(users)), archetypes_(std::move(archetypes)) {
        if (users_.empty() || archetypes_.empty())
            throw ContractError("population restore needs users and archetypes");
        for (const SimUser& u : users_)
            if (u.segment >= archetypes_.size())
                throw ContractError("population restore: user segment out of range");
    }

    static Population create(const PopulationConfig& cfg, Rng& rng) {
        if (cfg.n_segments == 0 || cfg.n_users == 0 || cfg.d_e == 0 || cfg.d_u == 0)
            throw ConfigError("population needs segments, users and positive dims");
        Population pop;
        Mat proj(cfg.d_u, cfg.d_e);
        const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_e));
        for (auto& e : proj.v) e = scale * rng.normal();

        pop.archetypes_.reserve(cfg.n_segments);
        for (std::size_t s = 0; s < cfg.n_segments; ++s) {
            Vec a(cfg.d_e);
            do {
                for (auto& x : a) x = rng.normal();
            } while (norm2(a) < 1e-9);
            scale_inplace(a, 1.0 / norm2(a));
            pop.archetypes_.push_back(std::move(a));
        }

        pop.users_.reserve(cfg.n_users);
        for (std::uint64_t id = 0; id < cfg.n_users; ++id) {
            const std::size_t seg = id % cfg.n_segments;
            pop.users_.push_back(
                make_user(id, seg, pop.archetypes_[seg], proj, cfg.pref_noise_std, rng));
        }
        return pop;
    }

    const std::vector<SimUser>& users() const { return users_; }
    const std::vector<Vec>& archetypes() const { return archetypes_; }
    const SimUser& user(std::size_t i) const { return users_.at(i); }
    std::size_t size() const { return users_.size(); }

    const SimUser& sample(Rng& rng) const {
        return users_[static_cast<std::size_t>(rng.uniform_int(users_.size()))];
    }

    void apply_flip() {
        for (auto& a : archetypes_) scale_inplace(a, -1.0);
        for (auto& u : users_) {
            scale_inplace(u.preference, -1.0);
            scale_inplace(u.offset, -1.0);
        }
    }

    // rotates everything latent by `angle` in a 2-plane drawn from `rng`
    void apply_rotation(double angle, Rng& rng) {
        const std::size_t d = archetypes_.front().size();
        if (d < 2) throw ContractError("rotation drift needs d_e >= 2");
        Vec e1(d), e2(d);
        do {
            for (auto& x : e1) x = rng.normal();
        } while (norm2(e1) < 1e-9);
        scale_inplace(e1, 1.0 / norm2(e1));
        for (;;) {
            for (auto& x : e2) x = rng.normal();
            const double c = dot(e1, e2);
            for (std::size_t i = 0; i < d; ++i) e2[i] -= c * e1[i];
            if (norm2(e2) >= 1e-9) break;
        }
        scale_inplace(e2, 1.0 / norm2(e2));

        const double c = std::cos(angle), s = std::sin(angle);
        auto rot = [&](Vec& v) {
            const double a1 = dot(v, e1), a2 = dot(v, e2);
            const double b1 = c * a1 - s * a2, b2 = s * a1 + c * a2;
            for (std::size_t i = 0; i < d; ++i) v[i] += (b1 - a1) * e1[i] + (b2 - a2) * e2[i];
        };
        for (auto& a : archetypes_) rot(a);
        for (auto& u : users_) {
            rot(u.preference);
            rot(u.offset);
        }
    }

    // adjacent segments exchange archetypes; preferences recompose from the
    // swapped archetype plus each user's retained offset
    void apply_segment_swap() {
        for (std::size_t s = 0; s + 1 < archetypes_.size(); s += 2)
            std::swap(archetypes_[s], archetypes_[s + 1]);
        for (auto& u : users_) {
            Vec p = archetypes_[u.segment];
            add_inplace(p, u.offset);
            const double n = norm2(p);
            if (n < 1e-9) continue;
            u.preference = std::move(p);
            scale_inplace(u.preference, 1.0 / n);
        }
    }

    void apply(const DriftEvent& ev, Rng& rng) {
        switch (ev.kind) {
            case DriftEvent::Kind::Flip: apply_flip(); break;
            case DriftEvent::Kind::Rotate: apply_rotation(ev.angle, rng); break;
            case DriftEvent::Kind::SegmentSwap: apply_segment_swap(); break;
        }
    }

  private:
    std::vector<SimUser> users_;
    std::vector<Vec> archetypes_;
};

// applies every event whose step has arrived; returns how many fired
inline std::size_t apply_due_drift(Population& pop, const std::vector<DriftEvent>& events,
                                   std::size_t& cursor, std::int64_t step, Rng& drift_rng) {
    std::size_t fired = 0;
    while (cursor < events.size() && events[cursor].step <= step) {
        pop.apply(events[cursor], drift_rng);
        ++cursor;
        ++fired;
    }
    return fired;
}

// ---------------------------------------------------------------- click model

struct ClickModel {
    double bias = -1.0;
    double temperature = 4.0;
    double noise_std = 0.0;
};

struct EnvParams {
    EnvKind kind = EnvKind::Population;
    ClickModel click;
    double two_arm_p_a = 0.8;
    double two_arm_p_b = 0.2;
    double tone_base = 0.3;
    double tone_bonus = 0.0;  // additive on any kind when the shown variant is urgent
};

inline EnvParams env_params(const RunConfig& cfg) {
    EnvParams e;
    e.kind = cfg.env_kind;
    e.click = {cfg.click_bias, cfg.click_temperature, cfg.click_noise_std};
    e.two_arm_p_a = cfg.two_arm_p_a;
    e.two_arm_p_b = cfg.two_arm_p_b;
    e.tone_base = cfg.tone_base;
    e.tone_bonus = cfg.tone_bonus;
    if (e.click.temperature < 0.0) throw ConfigError("env.click.temperature must be >= 0");
    if (e.click.noise_std < 0.0) throw ConfigError("env.click.noise_std must be >= 0");
    for (double p : {e.two_arm_p_a, e.two_arm_p_b, e.tone_base})
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("env probabilities must lie in [0,1]");
    return e;
}

inline bool variant_is_urgent(const Variant& v) {
    return !v.raw.empty() && v.raw[static_cast<std::size_t>(Tone::Urgent)] > 0.5;
}

// Noise-free click probability; the oracle path. Policies never see this.
inline double ground_truth_p(const EnvParams& env, const SimUser& user, const Variant& v) {
    double p = 0.0;
    switch (env.kind) {
        case EnvKind::Population:
            require_dim(v.embedding, user.preference.size(), "variant embedding");
            p = sigmoid(env.click.temperature * dot(user.preference, v.embedding) +
                        env.click.bias);
            break;
        case EnvKind::TwoArm: p = v.id == Arm::A ? env.two_arm_p_a : env.two_arm_p_b; break;
        case EnvKind::ToneReward: p = env.tone_base; break;
    }
    if (env.tone_bonus != 0.0 && variant_is_urgent(v)) p += env.tone_bonus;
    return clamp01(p);
}

struct StepOutcome {
    bool clicked = false;
    double p = 0.0;  // the probability behind this draw
};

inline StepOutcome env_step(const EnvParams& env, const SimUser& user, const Variant& v,
                            Rng& rng) {
    double p;
    if (env.kind == EnvKind::Population && env.click.noise_std > 0.0) {
        require_dim(v.embedding, user.preference.size(), "variant embedding");
        p = sigmoid(env.click.temperature * dot(user.preference, v.embedding) + env.click.bias +
                    env.click.noise_std * rng.normal());
        if (env.tone_bonus != 0.0 && variant_is_urgent(v)) p += env.tone_bonus;
        p = clamp01(p);
    } else {
        p = ground_truth_p(env, user, v);
    }
    StepOutcome out;
    out.p = p;
    out.clicked = rng.bernoulli(p);
    return out;
}

inline Vec sample_context(std::size_t d_c, Rng& rng) {
    Vec c(d_c);
    for (auto& x : c) x = rng.uniform(-1.0, 1.0);
    return c;
}

// Exact expected CTR of a (possibly stochastic) arm rule over sampled users.
// The policy returns P(choose B); click randomness never enters, so greedy
// and uniform policies get exact expectations.
template <class PolicyFn>
double oracle_ctr(const EnvParams& env, const Population& pop, const Variant& va,
                  const Variant& vb, std::size_t d_c, PolicyFn&& policy, std::size_t n_users,
                  Rng& rng) {
    if (n_users == 0) throw ContractError("oracle_ctr: n_users must be positive");
    double total = 0.0;
    for (std::size_t i = 0; i < n_users; ++i) {
        const SimUser& u = pop.sample(rng);
        Vec ctx = sample_context(d_c, rng);
        const double q = policy(u, ctx);
        if (!(q >= 0.0 && q <= 1.0))
            throw ContractError("oracle_ctr: policy must return P(B) in [0,1]");
        total += (1.0 - q) * ground_truth_p(env, u, va) + q * ground_truth_p(env, u, vb);
    }
    return total / static_cast<double>(n_users);
}

// ------------------------------------------------------------ delayed rewards

struct PendingReward {
    std::int64_t due_step = 0;
    std::uint64_t transition_id = 0;
    double reward = 0.0;
};

// Click feedback arrives after a uniform delay in [0, d_max]. A non-click
// emits no event at all, so it is zero-filled when its window closes.
class DelayedRewardQueue {
  public:
    explicit DelayedRewardQueue(std::int64_t d_max) : d_max_(d_max) {
        if (d_max < 0) throw ContractError("delay window must be nonnegative");
    }

    void push(std::uint64_t transition_id, bool clicked, std::int64_t now, Rng& rng) {
        PendingReward p;
        p.transition_id = transition_id;
        p.reward = clicked ? 1.0 : 0.0;
        p.due_step =
            now + (clicked ? static_cast<std::int64_t>(
                                 rng.uniform_int(static_cast<std::uint64_t>(d_max_) + 1))
                           : d_max_);
        pending_.push_back(p);
    }

    // removes and returns everything due, ordered by (due_step, id)
    std::vector<PendingReward> collect(std::int64_t now) {
        auto keep = std::stable_partition(pending_.begin(), pending_.end(),
                                          [&](const PendingReward& p) { return p.due_step > now; });
        std::vector<PendingReward> due(keep, pending_.end());
        pending_.erase(keep, pending_.end());
        std::sort(due.begin(), due.end(), [](const PendingReward& a, const PendingReward& b) {
            return a.due_step != b.due_step ? a.due_step < b.due_step
                                            : a.transition_id < b.transition_id;
        });
        return due;
    }

    std::size_t pending_count() const { return pending_.size(); }
    const std::vector<PendingReward>& pending() const { return pending_; }
    void restore(std::vector<PendingReward> p) { pending_ = std::move(p); }
    std::int64_t d_max() const { return d_max_; }

  private:
    std::int64_t d_max_ = 20;
    std::vector<PendingReward> pending_;
};

}  // namespace rlab
