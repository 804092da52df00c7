// Comparison policies: static A/B with a significance test, the LinUCB
// contextual bandit, an online factorization-machine re-ranker, and a
// first-match rule policy. All tie-breaks resolve to arm A.
#pragma once

#include <cmath>
#include <cstdint>

#include "rlab/common.hpp"
#include "rlab/config.hpp"
#include "rlab/metrics.hpp"
#include "rlab/rng.hpp"

namespace rlab {

// ---------------------------------------------------------------- static A/B

// Pooled two-proportion z statistic, positive when arm B clicks more often.
inline double two_proportion_z(std::uint64_t clicks_a, std::uint64_t n_a, std::uint64_t clicks_b,
                               std::uint64_t n_b) {
    if (n_a == 0 || n_b == 0) throw ContractError("two_proportion_z: zero impressions");
    if (clicks_a > n_a || clicks_b > n_b)
        throw ContractError("two_proportion_z: clicks exceed impressions");
    const double na = static_cast<double>(n_a), nb = static_cast<double>(n_b);
    const double pa = static_cast<double>(clicks_a) / na;
    const double pb = static_cast<double>(clicks_b) / nb;
    const double pooled = static_cast<double>(clicks_a + clicks_b) / (na + nb);
    const double var = pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb);
    if (var <= 0.0) return 0.0;  // all clicks or none: no separating evidence
    return (pb - pa) / std::sqrt(var);
}

struct StaticAbConfig {
    std::uint64_t exploration_n = 1000;  // per arm
    double alpha = 0.05;
};

struct StaticAbState {
    enum class Phase : std::uint8_t { Exploring, Committed };

    StaticAbConfig cfg;
    Phase phase = Phase::Exploring;
    std::uint64_t impressions[2] = {0, 0};
    std::uint64_t clicks[2] = {0, 0};
    Arm committed_arm = Arm::A;
    double z = 0.0;  // set at commit time
    bool significant = false;
};

inline Arm static_ab_select(const StaticAbState& st, Rng& rng) {
    if (st.phase == StaticAbState::Phase::Committed) return st.committed_arm;
    Arm a = rng.uniform() < 0.5 ? Arm::A : Arm::B;
    // keep the split exact: a full arm hands its remaining draws to the other
    if (st.impressions[static_cast<std::size_t>(a)] >= st.cfg.exploration_n) a = other_arm(a);
    return a;
}

// Adopts the higher-CTR arm; when |z| falls short of the critical value the
// choice still happens but is flagged as not significant.
inline void static_ab_commit(StaticAbState& st) {
    if (st.impressions[0] == 0 || st.impressions[1] == 0)
        throw ContractError("static_ab_commit: both arms need impressions");
    st.z = two_proportion_z(st.clicks[0], st.impressions[0], st.clicks[1], st.impressions[1]);
    st.significant = std::fabs(st.z) >= normal_quantile(1.0 - st.cfg.alpha / 2.0);
    const double pa = static_cast<double>(st.clicks[0]) / static_cast<double>(st.impressions[0]);
    const double pb = static_cast<double>(st.clicks[1]) / static_cast<double>(st.impressions[1]);
    st.committed_arm = pb > pa ? Arm::B : Arm::A;
    st.phase = StaticAbState::Phase::Committed;
}

inline void static_ab_record(StaticAbState& st, Arm arm, bool clicked) {
    ++st.impressions[static_cast<std::size_t>(arm)];
    if (clicked) ++st.clicks[static_cast<std::size_t>(arm)];
    if (st.phase == StaticAbState::Phase::Exploring &&
        st.impressions[0] >= st.cfg.exploration_n && st.impressions[1] >= st.cfg.exploration_n)
        static_ab_commit(st);
}

// ------------------------------------------------------------------- LinUCB

namespace detail {

// Lower-triangular Cholesky factor of a symmetric PD matrix.
inline Mat cholesky(const Mat& a) {
    const std::size_t d = a.rows;
    Mat l(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (!(s > 0.0)) throw NumericError("design matrix is not positive definite");
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return l;
}

inline Vec cholesky_solve(const Mat& l, const Vec& rhs) {
    const std::size_t d = l.rows;
    Vec y(d);
    for (std::size_t i = 0; i < d; ++i) {
        double s = rhs[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    Vec x(d);
    for (std::size_t i = d; i-- > 0;) {
        double s = y[i];
        for (std::size_t k = i + 1; k < d; ++k) s -= l(k, i) * x[k];
        x[i] = s / l(i, i);
    }
    return x;
}

}  // namespace detail

struct LinUcbArm {
    Mat a;  // d x d design matrix, starts at identity
    Vec b;  // d

    explicit LinUcbArm(std::size_t d) : a(d, d), b(d, 0.0) {
        for (std::size_t i = 0; i < d; ++i) a(i, i) = 1.0;
    }
};

struct LinUcbState {
    LinUcbArm arm_a, arm_b;
    double alpha = 1.0;

    LinUcbState(std::size_t d, double alpha_ucb) : arm_a(d), arm_b(d), alpha(alpha_ucb) {
        if (d == 0) throw ConfigError("linucb feature dim must be positive");
        if (alpha_ucb < 0.0) throw ConfigError("linucb alpha must be nonnegative");
    }
};

inline Vec linucb_theta(const LinUcbArm& arm) {
    return detail::cholesky_solve(detail::cholesky(arm.a), arm.b);
}

inline double linucb_ucb(const LinUcbArm& arm, const Vec& x, double alpha) {
    require_dim(x, arm.b.size(), "linucb feature");
    Mat l = detail::cholesky(arm.a);
    Vec theta = detail::cholesky_solve(l, arm.b);
    Vec y = detail::cholesky_solve(l, x);
    const double quad = std::max(0.0, dot(x, y));  // x' A^-1 x, PD up to roundoff
    return dot(theta, x) + alpha * std::sqrt(quad);
}

inline Arm linucb_select(const LinUcbState& st, const Vec& x_a, const Vec& x_b) {
    const double sa = linucb_ucb(st.arm_a, x_a, st.alpha);
    const double sb = linucb_ucb(st.arm_b, x_b, st.alpha);
    return sb > sa ? Arm::B : Arm::A;
}

inline void linucb_update(LinUcbState& st, Arm arm, const Vec& x, double reward) {
    LinUcbArm& t = arm == Arm::A ? st.arm_a : st.arm_b;
    require_dim(x, t.b.size(), "linucb feature");
    require_finite(x, "linucb feature");
    if (!std::isfinite(reward)) throw NumericError("linucb reward is not finite");
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = 0; j < x.size(); ++j) t.a(i, j) += x[i] * x[j];
        t.b[i] += reward * x[i];
    }
}

// -------------------------------------------------- factorization machine

struct FmParams {
    double w0 = 0.0;
    Vec w;  // d linear weights
    Mat v;  // d x k latent factors
};

inline FmParams fm_init(std::size_t d, std::size_t k, double init_std, Rng& rng) {
    if (d == 0 || k == 0) throw ConfigError("fm dims must be positive");
    FmParams p;
    p.w.assign(d, 0.0);
    p.v = Mat(d, k);
    for (auto& e : p.v.v) e = init_std * rng.normal();
    return p;
}

// Raw score; the pairwise term uses the O(dk) sum-of-squares identity
// 0.5 * sum_f [(sum_i v_if x_i)^2 - sum_i (v_if x_i)^2].
inline double fm_raw(const FmParams& p, const Vec& x) {
    require_dim(x, p.w.size(), "fm feature");
    double s = p.w0 + dot(p.w, x);
    for (std::size_t f = 0; f < p.v.cols; ++f) {
        double lin = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < p.v.rows; ++i) {
            const double t = p.v(i, f) * x[i];
            lin += t;
            sq += t * t;
        }
        s += 0.5 * (lin * lin - sq);
    }
    return s;
}

inline double fm_score(const FmParams& p, const Vec& x) { return sigmoid(fm_raw(p, x)); }

inline Arm fm_rank_select(const FmParams& p, const Vec& x_a, const Vec& x_b) {
    return fm_score(p, x_b) > fm_score(p, x_a) ? Arm::B : Arm::A;
}

// One SGD step on the logistic loss against a binary click label.
inline void fm_update(FmParams& p, const Vec& x, double label, double lr) {
    require_dim(x, p.w.size(), "fm feature");
    if (label != 0.0 && label != 1.0) throw ContractError("fm_update: label must be 0 or 1");
    const double err = sigmoid(fm_raw(p, x)) - label;

    Vec sums(p.v.cols, 0.0);  // per-factor sum_i v_if x_i, frozen pre-update
    for (std::size_t f = 0; f < p.v.cols; ++f)
        for (std::size_t i = 0; i < p.v.rows; ++i) sums[f] += p.v(i, f) * x[i];

    p.w0 -= lr * err;
    for (std::size_t i = 0; i < p.w.size(); ++i) {
        if (x[i] == 0.0) continue;
        p.w[i] -= lr * err * x[i];
        for (std::size_t f = 0; f < p.v.cols; ++f)
            p.v(i, f) -= lr * err * (x[i] * sums[f] - p.v(i, f) * x[i] * x[i]);
    }
}

// -------------------------------------------------------------- rule policy

inline bool rule_matches(const Rule& r, const Vec& u, const Vec& c) {
    const Vec& src = r.field == Rule::Field::User ? u : c;
    if (r.index >= src.size())
        throw ConfigError("rule index " + std::to_string(r.index) + " out of range for " +
                          (r.field == Rule::Field::User ? "user" : "context") + " dim " +
                          std::to_string(src.size()));
    const double val = src[r.index];
    switch (r.cmp) {
        case Rule::Cmp::Lt: return val < r.threshold;
        case Rule::Cmp::Le: return val <= r.threshold;
        case Rule::Cmp::Gt: return val > r.threshold;
        case Rule::Cmp::Ge: return val >= r.threshold;
    }
    return false;
}

inline Arm rule_select(const RulePolicyConfig& cfg, const Vec& u, const Vec& c) {
    for (const Rule& r : cfg.rules)
        if (rule_matches(r, u, c)) return r.arm;
    return cfg.default_arm;
}

}  // namespace rlab
