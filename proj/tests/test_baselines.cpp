#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "rlab/baselines.hpp"
#include "testutil.hpp"

using namespace rlab;

namespace {

Vec random_vec(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Vec v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

// independent dense solve (Gauss-Jordan with partial pivoting)
Vec gauss_jordan_solve(Mat a, Vec b) {
    const std::size_t d = a.rows;
    for (std::size_t col = 0; col < d; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < d; ++r)
            if (std::fabs(a(r, col)) > std::fabs(a(piv, col))) piv = r;
        if (piv != col) {
            for (std::size_t j = 0; j < d; ++j) std::swap(a(col, j), a(piv, j));
            std::swap(b[col], b[piv]);
        }
        const double inv = 1.0 / a(col, col);
        for (std::size_t j = 0; j < d; ++j) a(col, j) *= inv;
        b[col] *= inv;
        for (std::size_t r = 0; r < d; ++r) {
            if (r == col) continue;
            const double f = a(r, col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) a(r, j) -= f * a(col, j);
            b[r] -= f * b[col];
        }
    }
    return b;
}

// brute-force FM raw score: explicit i<j pairwise double loop
double fm_raw_brute(const FmParams& p, const Vec& x) {
    double s = p.w0;
    for (std::size_t i = 0; i < x.size(); ++i) s += p.w[i] * x[i];
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i + 1; j < x.size(); ++j) {
            double inner = 0.0;
            for (std::size_t f = 0; f < p.v.cols; ++f) inner += p.v(i, f) * p.v(j, f);
            s += inner * x[i] * x[j];
        }
    return s;
}

}  // namespace

// ---------------------------------------------------------------- static A/B

TEST_CASE("two-proportion z statistic reproduces the hand calculation") {
    double z = two_proportion_z(100, 1000, 150, 1000);
    REQUIRE(z == Catch::Approx(3.38).margin(1e-2));
    REQUIRE(two_proportion_z(150, 1000, 100, 1000) == -z);
    REQUIRE(two_proportion_z(70, 700, 40, 400) == 0.0);
}

TEST_CASE("z statistic degenerate guards") {
    REQUIRE(two_proportion_z(0, 1000, 0, 1000) == 0.0);
    REQUIRE(two_proportion_z(1000, 1000, 1000, 1000) == 0.0);
    REQUIRE_THROWS_AS(two_proportion_z(0, 0, 5, 10), ContractError);
    REQUIRE_THROWS_AS(two_proportion_z(11, 10, 5, 10), ContractError);
}

TEST_CASE("static A/B commits to the significantly better arm") {
    StaticAbState st;
    st.impressions[0] = st.impressions[1] = 1000;
    st.clicks[0] = 100;
    st.clicks[1] = 150;
    static_ab_commit(st);
    REQUIRE(st.phase == StaticAbState::Phase::Committed);
    REQUIRE(st.committed_arm == Arm::B);
    REQUIRE(st.significant);
    REQUIRE(st.z == Catch::Approx(3.38).margin(1e-2));
}

TEST_CASE("an insignificant difference still adopts the leader, flagged") {
    StaticAbState st;
    st.impressions[0] = st.impressions[1] = 1000;
    st.clicks[0] = 100;
    st.clicks[1] = 110;
    static_ab_commit(st);
    REQUIRE(st.committed_arm == Arm::B);
    REQUIRE(!st.significant);

    StaticAbState tie;
    tie.impressions[0] = tie.impressions[1] = 500;
    tie.clicks[0] = tie.clicks[1] = 60;
    static_ab_commit(tie);
    REQUIRE(tie.committed_arm == Arm::A);
    REQUIRE(tie.z == 0.0);

    StaticAbState empty;
    empty.impressions[0] = 10;
    REQUIRE_THROWS_AS(static_ab_commit(empty), ContractError);
}

TEST_CASE("exploring selection is uniform") {
    StaticAbState st;
    st.cfg.exploration_n = 100000;
    Rng rng(11);
    int a_count = 0;
    for (int i = 0; i < 10000; ++i)
        if (static_ab_select(st, rng) == Arm::A) ++a_count;
    double freq = a_count / 10000.0;
    REQUIRE(freq >= 0.48);
    REQUIRE(freq <= 0.52);
}

TEST_CASE("static A/B transitions at exactly twice the exploration budget") {
    StaticAbState st;
    st.cfg.exploration_n = 50;
    Rng rng(7);
    std::uint64_t total = 0;
    while (st.phase == StaticAbState::Phase::Exploring) {
        Arm a = static_ab_select(st, rng);
        bool click = rng.bernoulli(a == Arm::A ? 0.9 : 0.1);
        static_ab_record(st, a, click);
        ++total;
        REQUIRE(total <= 100);
    }
    REQUIRE(total == 100);
    REQUIRE(st.impressions[0] == 50);
    REQUIRE(st.impressions[1] == 50);
    REQUIRE(st.committed_arm == Arm::A);

    // committed means committed: selection is constant, recording never reopens
    for (int i = 0; i < 100; ++i) {
        Arm a = static_ab_select(st, rng);
        REQUIRE(a == Arm::A);
        static_ab_record(st, a, false);
    }
    REQUIRE(st.phase == StaticAbState::Phase::Committed);
    REQUIRE(st.impressions[0] == 150);
}

// -------------------------------------------------------------------- LinUCB

TEST_CASE("fresh LinUCB scores reduce to the exploration bonus") {
    LinUcbState st(3, 2.0);
    Vec x{0.0, 3.0, 4.0};  // norm 5
    REQUIRE(linucb_ucb(st.arm_a, x, 2.0) == Catch::Approx(10.0).margin(1e-12));
    REQUIRE(linucb_select(st, Vec{1.0, 0.0, 0.0}, x) == Arm::B);
    REQUIRE(linucb_select(st, x, x) == Arm::A);
}

TEST_CASE("scalar LinUCB update matches hand arithmetic") {
    LinUcbState st(1, 1.0);
    linucb_update(st, Arm::A, Vec{1.0}, 1.0);
    REQUIRE(st.arm_a.a(0, 0) == 2.0);
    REQUIRE(st.arm_a.b[0] == 1.0);
    REQUIRE(linucb_theta(st.arm_a)[0] == Catch::Approx(0.5).margin(1e-12));

    // with the bonus off, history beats an empty arm
    linucb_update(st, Arm::A, Vec{1.0}, 1.0);
    st.alpha = 0.0;
    REQUIRE(linucb_select(st, Vec{1.0}, Vec{1.0}) == Arm::A);
}

TEST_CASE("zero-feature updates leave the state untouched") {
    LinUcbState st(2, 1.0);
    linucb_update(st, Arm::B, Vec{0.3, -0.7}, 1.0);
    Mat a_before = st.arm_b.a;
    Vec b_before = st.arm_b.b;
    linucb_update(st, Arm::B, Vec{0.0, 0.0}, 1.0);
    REQUIRE(st.arm_b.a.v == a_before.v);
    REQUIRE(st.arm_b.b == b_before);

    REQUIRE_THROWS_AS(linucb_update(st, Arm::B, Vec{1.0}, 1.0), DimensionError);
    REQUIRE_THROWS_AS(linucb_update(st, Arm::B, Vec{1.0, 1.0}, 1.0 / 0.0), NumericError);
}

TEST_CASE("ridge estimates match an independent dense solve") {
    for (std::size_t d = 1; d <= 5; ++d) {
        Rng rng(100 + d);
        LinUcbState st(d, 1.0);
        Mat a_oracle(d, d);
        for (std::size_t i = 0; i < d; ++i) a_oracle(i, i) = 1.0;
        Vec b_oracle(d, 0.0);

        for (int n = 0; n < 100; ++n) {
            Vec x = random_vec(d, rng);
            double r = rng.normal();
            linucb_update(st, Arm::A, x, r);
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t j = 0; j < d; ++j) a_oracle(i, j) += x[i] * x[j];
                b_oracle[i] += r * x[i];
            }
        }
        Vec theta = linucb_theta(st.arm_a);
        Vec expect = gauss_jordan_solve(a_oracle, b_oracle);
        REQUIRE(rlab::test::rel_err(theta, expect) <= 1e-8);

        // quadratic exploration term against the same oracle inverse
        Vec probe = random_vec(d, rng);
        Vec y = gauss_jordan_solve(a_oracle, probe);
        double expect_ucb = dot(expect, probe) + 1.0 * std::sqrt(dot(probe, y));
        REQUIRE(linucb_ucb(st.arm_a, probe, 1.0) == Catch::Approx(expect_ucb).margin(1e-8));
    }
}

TEST_CASE("design matrix stays symmetric with eigenvalues at least one") {
    Rng rng(9);
    LinUcbState st(2, 1.0);
    for (int n = 0; n < 200; ++n)
        linucb_update(st, Arm::A, random_vec(2, rng, -3.0, 3.0), rng.normal());
    const Mat& a = st.arm_a.a;
    REQUIRE(a(0, 1) == a(1, 0));
    double tr = a(0, 0) + a(1, 1);
    double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    double min_eig = 0.5 * (tr - std::sqrt(tr * tr - 4.0 * det));
    REQUIRE(min_eig >= 1.0 - 1e-9);
}

TEST_CASE("LinUCB regret trends downward on a stationary logistic task") {
    const std::size_t d = 6;
    const int steps = 10000;
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(500 + seed);
        Vec theta = random_vec(d, rng);
        scale_inplace(theta, 1.0 / norm2(theta));

        LinUcbState st(d, 1.0);
        double first = 0.0, last = 0.0;
        for (int t = 0; t < steps; ++t) {
            Vec xa = random_vec(d, rng), xb = random_vec(d, rng);
            double pa = sigmoid(2.0 * dot(theta, xa));
            double pb = sigmoid(2.0 * dot(theta, xb));
            Arm pick = linucb_select(st, xa, xb);
            const Vec& x = pick == Arm::A ? xa : xb;
            double p = pick == Arm::A ? pa : pb;
            linucb_update(st, pick, x, rng.bernoulli(p) ? 1.0 : 0.0);
            double regret = std::max(pa, pb) - p;
            if (t < 1000) first += regret;
            if (t >= steps - 1000) last += regret;
        }
        if (last < first) ++improved;
    }
    REQUIRE(improved >= 9);
}

// ------------------------------------------------- factorization machine

TEST_CASE("zero FM parameters score one half") {
    Rng rng(1);
    FmParams p = fm_init(4, 2, 0.0, rng);
    REQUIRE(fm_score(p, Vec{1.0, -2.0, 0.5, 3.0}) == 0.5);
}

TEST_CASE("zero factors reduce the FM to logistic regression") {
    Rng rng(2);
    FmParams p = fm_init(5, 3, 0.0, rng);
    p.w0 = 0.4;
    p.w = Vec{0.1, -0.2, 0.3, 0.0, -0.5};
    Vec x = random_vec(5, rng);
    REQUIRE(fm_raw(p, x) == p.w0 + dot(p.w, x));
}

TEST_CASE("sum-of-squares identity matches the explicit pairwise loop") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(40 + seed);
        std::size_t d = 2 + seed % 9, k = 1 + seed % 4;
        FmParams p = fm_init(d, k, 0.5, rng);
        p.w0 = rng.normal();
        for (auto& w : p.w) w = rng.normal();
        Vec x = random_vec(d, rng, -2.0, 2.0);
        REQUIRE(std::fabs(fm_raw(p, x) - fm_raw_brute(p, x)) <= 1e-12);
    }
}

TEST_CASE("FM ranking follows predicted probability with ties to A") {
    Rng rng(3);
    FmParams p = fm_init(4, 2, 0.1, rng);
    p.w[0] = 5.0;
    REQUIRE(fm_rank_select(p, Vec{1.0, 0.0, 0.0, 0.0}, Vec{0.0, 1.0, 0.0, 0.0}) == Arm::A);
    Vec same{0.2, 0.4, -0.1, 0.9};
    REQUIRE(fm_rank_select(p, same, same) == Arm::A);

    int decided = 0;
    for (int i = 0; i < 1000; ++i) {
        Vec xa = random_vec(4, rng), xb = random_vec(4, rng);
        double ra = fm_raw_brute(p, xa), rb = fm_raw_brute(p, xb);
        if (std::fabs(rb - ra) < 1e-9) continue;  // too close to pin across float routes
        ++decided;
        REQUIRE(fm_rank_select(p, xa, xb) == (rb > ra ? Arm::B : Arm::A));
    }
    REQUIRE(decided >= 990);
}

TEST_CASE("FM update moves only the bias on an all-zero feature vector") {
    Rng rng(4);
    FmParams p = fm_init(3, 2, 0.1, rng);
    Vec w_before = p.w;
    std::vector<double> v_before = p.v.v;
    fm_update(p, Vec{0.0, 0.0, 0.0}, 1.0, 0.05);
    REQUIRE(p.w == w_before);
    REQUIRE(p.v.v == v_before);
    REQUIRE(p.w0 == 0.05 * 0.5);  // err = sigmoid(0) - 1 = -0.5

    REQUIRE_THROWS_AS(fm_update(p, Vec{1.0, 0.0, 0.0}, 0.5, 0.05), ContractError);
    REQUIRE_THROWS_AS(fm_score(p, Vec{1.0}), DimensionError);
}

TEST_CASE("online FM learns a pairwise interaction the linear part cannot") {
    Rng rng(5);
    const std::size_t d = 4;
    auto sample = [&](Vec& x, double& label_p) {
        x = random_vec(d, rng, -1.0, 1.0);
        label_p = sigmoid(3.0 * x[0] * x[1] - 1.0 * x[2]);
    };

    FmParams p = fm_init(d, 8, 0.01, rng);
    FmParams initial = p;
    for (int t = 0; t < 8000; ++t) {
        Vec x;
        double q;
        sample(x, q);
        fm_update(p, x, rng.bernoulli(q) ? 1.0 : 0.0, 0.05);
    }

    auto log_loss = [&](const FmParams& m) {
        Rng eval_rng(999);
        double total = 0.0;
        for (int i = 0; i < 2000; ++i) {
            Vec x(d);
            for (auto& e : x) e = eval_rng.uniform(-1.0, 1.0);
            double q = sigmoid(3.0 * x[0] * x[1] - 1.0 * x[2]);
            double s = fm_score(m, x);
            total += -(q * std::log(s) + (1.0 - q) * std::log(1.0 - s));
        }
        return total / 2000.0;
    };
    REQUIRE(log_loss(p) < 0.95 * log_loss(initial));
}

// --------------------------------------------------------------- rule policy

TEST_CASE("rule selection is first-match with a default") {
    RulePolicyConfig cfg;
    cfg.default_arm = Arm::B;
    REQUIRE(rule_select(cfg, Vec{1.0}, Vec{1.0}) == Arm::B);

    cfg.rules.push_back(parse_rule("rule.0", "u[0] > 0 -> B"));
    cfg.rules.push_back(parse_rule("rule.1", "u[0] > -10 -> A"));
    cfg.default_arm = Arm::A;

    Rng rng(6);
    for (int i = 0; i < 1000; ++i) {
        Vec u = random_vec(3, rng, -5.0, 5.0);
        Arm expect = u[0] > 0.0 ? Arm::B : Arm::A;
        REQUIRE(rule_select(cfg, u, Vec{}) == expect);
    }
}

TEST_CASE("comparators honor boundary equality") {
    Vec u{0.5}, c{0.5};
    REQUIRE(rule_matches(parse_rule("r", "u[0] <= 0.5 -> B"), u, c));
    REQUIRE(!rule_matches(parse_rule("r", "u[0] < 0.5 -> B"), u, c));
    REQUIRE(rule_matches(parse_rule("r", "c[0] >= 0.5 -> B"), u, c));
    REQUIRE(!rule_matches(parse_rule("r", "c[0] > 0.5 -> B"), u, c));
}

TEST_CASE("rules referencing missing coordinates are rejected") {
    RulePolicyConfig cfg;
    cfg.rules.push_back(parse_rule("rule.0", "c[7] > 0 -> B"));
    REQUIRE_THROWS_AS(rule_select(cfg, Vec{1.0}, Vec{1.0, 2.0}), ConfigError);
}
