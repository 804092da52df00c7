#include <catch2/catch_amalgamated.hpp>

#include "rlab/encoder.hpp"
#include "testutil.hpp"

using namespace rlab;

namespace {

struct Inputs {
    Vec u, c, ea, eb;
};

Inputs random_inputs(const EncoderDims& d, Rng& rng) {
    Inputs in;
    in.u.resize(d.d_u);
    in.c.resize(d.d_c);
    in.ea.resize(d.d_e);
    in.eb.resize(d.d_e);
    for (Vec* v : {&in.u, &in.c, &in.ea, &in.eb})
        for (auto& x : *v) x = rng.normal();
    return in;
}

}  // namespace

TEST_CASE("zero encoder maps every input to the zero state") {
    EncoderDims d{3, 2, 4, 5};
    Rng rng(1);
    StateEncoder enc(d, rng);
    enc.net = zeros_like(enc.net);
    for (int i = 0; i < 5; ++i) {
        Inputs in = random_inputs(d, rng);
        Vec s = encode_state(enc, in.u, in.c, in.ea, in.eb);
        REQUIRE(s == Vec(5, 0.0));
    }
}

TEST_CASE("encoder is deterministic and order-sensitive in the variant slots") {
    EncoderDims d{3, 2, 4, 5};
    Rng rng(2);
    StateEncoder enc(d, rng);
    Inputs in = random_inputs(d, rng);

    Vec s1 = encode_state(enc, in.u, in.c, in.ea, in.eb);
    Vec s2 = encode_state(enc, in.u, in.c, in.ea, in.eb);
    REQUIRE(s1 == s2);

    Vec swapped = encode_state(enc, in.u, in.c, in.eb, in.ea);
    REQUIRE(s1 != swapped);
}

TEST_CASE("dimension errors name the offending block") {
    EncoderDims d{3, 2, 4, 5};
    Rng rng(3);
    StateEncoder enc(d, rng);
    Inputs in = random_inputs(d, rng);

    auto expect_block = [&](const Vec& u, const Vec& c, const Vec& ea, const Vec& eb,
                            const char* needle) {
        try {
            encode_state(enc, u, c, ea, eb);
            FAIL("expected DimensionError");
        } catch (const DimensionError& e) {
            REQUIRE(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_block(Vec(4, 0.0), in.c, in.ea, in.eb, "user");
    expect_block(in.u, Vec(9, 0.0), in.ea, in.eb, "context");
    expect_block(in.u, in.c, Vec(3, 0.0), in.eb, "variant A");
    expect_block(in.u, in.c, in.ea, Vec(5, 0.0), "variant B");
}

TEST_CASE("forward pass matches a straight-line recomputation") {
    EncoderDims d{2, 1, 2, 3};
    Rng rng(4);
    StateEncoder enc(d, rng);
    Inputs in = random_inputs(d, rng);
    Vec s = encode_state(enc, in.u, in.c, in.ea, in.eb);

    // rebuild concat -> tanh -> tanh -> linear with raw loops
    Vec x;
    for (const Vec* v : {&in.u, &in.c, &in.ea, &in.eb}) x.insert(x.end(), v->begin(), v->end());
    Vec h = x;
    for (std::size_t layer = 0; layer < enc.net.layers.size(); ++layer) {
        const auto& L = enc.net.layers[layer];
        Vec out(L.b.size());
        for (std::size_t i = 0; i < L.w.rows; ++i) {
            double acc = L.b[i];
            for (std::size_t j = 0; j < L.w.cols; ++j) acc += L.w(i, j) * h[j];
            out[i] = layer + 1 < enc.net.layers.size() ? std::tanh(acc) : acc;
        }
        h = out;
    }
    REQUIRE(s.size() == h.size());
    for (std::size_t i = 0; i < s.size(); ++i)
        REQUIRE(s[i] == Catch::Approx(h[i]).margin(1e-12));
}

TEST_CASE("zero upstream produces zero gradients in every block") {
    EncoderDims d{3, 2, 4, 5};
    Rng rng(5);
    StateEncoder enc(d, rng);
    Inputs in = random_inputs(d, rng);
    EncodeCache cache;
    encode_state(enc, in.u, in.c, in.ea, in.eb, &cache);

    Mlp grads = zeros_like(enc.net);
    InputBlockGrads g = encode_grad(enc, cache, Vec(d.d_s, 0.0), grads);
    REQUIRE(g.du == Vec(d.d_u, 0.0));
    REQUIRE(g.dc == Vec(d.d_c, 0.0));
    REQUIRE(g.de_a == Vec(d.d_e, 0.0));
    REQUIRE(g.de_b == Vec(d.d_e, 0.0));
    Vec flat(grads.param_count());
    grads.to_flat(flat.data());
    REQUIRE(flat == Vec(grads.param_count(), 0.0));
}

TEST_CASE("block gradients match finite differences across seeds") {
    EncoderDims d{3, 2, 4, 2};
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        Rng rng(seed + 100);
        StateEncoder enc(d, rng);
        Inputs in = random_inputs(d, rng);
        Vec upstream(d.d_s);
        for (auto& x : upstream) x = rng.normal();

        EncodeCache cache;
        encode_state(enc, in.u, in.c, in.ea, in.eb, &cache);
        Mlp grads = zeros_like(enc.net);
        InputBlockGrads g = encode_grad(enc, cache, upstream, grads);

        REQUIRE(g.flat().size() == d.input_dim());

        // parameters
        Vec theta(enc.net.param_count());
        enc.net.to_flat(theta.data());
        auto loss_theta = [&](const Vec& t) {
            StateEncoder e2 = enc;
            e2.net.from_flat(t.data());
            Vec s = encode_state(e2, in.u, in.c, in.ea, in.eb);
            return dot(s, upstream);
        };
        Vec analytic(grads.param_count());
        grads.to_flat(analytic.data());
        REQUIRE(rlab::test::rel_err(analytic, rlab::test::fd_grad(loss_theta, theta)) <= 1e-5);

        // input blocks
        Vec x = concat({&in.u, &in.c, &in.ea, &in.eb});
        auto loss_x = [&](const Vec& xin) {
            Vec u(xin.begin(), xin.begin() + 3);
            Vec c(xin.begin() + 3, xin.begin() + 5);
            Vec ea(xin.begin() + 5, xin.begin() + 9);
            Vec eb(xin.begin() + 9, xin.end());
            return dot(encode_state(enc, u, c, ea, eb), upstream);
        };
        REQUIRE(rlab::test::rel_err(g.flat(), rlab::test::fd_grad(loss_x, x)) <= 1e-5);
    }
}

TEST_CASE("a user-only change is explained by the du block jacobian") {
    EncoderDims d{3, 2, 4, 4};
    Rng rng(77);
    StateEncoder enc(d, rng);
    Inputs in = random_inputs(d, rng);

    Vec dir(d.d_u);
    for (auto& x : dir) x = rng.normal();
    const double eps = 1e-6;

    Vec u_plus = in.u, u_minus = in.u;
    for (std::size_t i = 0; i < d.d_u; ++i) {
        u_plus[i] += eps * dir[i];
        u_minus[i] -= eps * dir[i];
    }
    Vec s_plus = encode_state(enc, u_plus, in.c, in.ea, in.eb);
    Vec s_minus = encode_state(enc, u_minus, in.c, in.ea, in.eb);

    EncodeCache cache;
    encode_state(enc, in.u, in.c, in.ea, in.eb, &cache);
    for (std::size_t k = 0; k < d.d_s; ++k) {
        Vec onehot(d.d_s, 0.0);
        onehot[k] = 1.0;
        Mlp grads = zeros_like(enc.net);
        InputBlockGrads g = encode_grad(enc, cache, onehot, grads);
        double analytic = dot(g.du, dir);
        double fd = (s_plus[k] - s_minus[k]) / (2.0 * eps);
        REQUIRE(analytic == Catch::Approx(fd).margin(1e-6));
    }
}
