// Small dense layers with analytic forward/backward passes: softmax, an MLP
// (tanh hidden layers, linear output) and a standard Cho-formulation GRU cell.
// Gradients are exact; the test suite checks them against central finite
// differences.
#pragma once

#include <cstdint>

#include "rlab/common.hpp"
#include "rlab/rng.hpp"

namespace rlab {

inline Vec softmax(const Vec& logits) {
    if (logits.empty()) throw DimensionError("softmax: empty input");
    require_finite(logits, "softmax input");
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    Vec out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

// Glorot-style uniform init in ±sqrt(6/(fan_in+fan_out)).
inline void init_uniform(Mat& w, Rng& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
    for (double& e : w.v) e = rng.uniform(-bound, bound);
}

// ------------------------------------------------------------------- MLP

struct DenseLayer {
    Mat w;  // out_dim × in_dim
    Vec b;  // out_dim
};

// Feed-forward net, tanh on hidden layers, linear output head. The same
// struct doubles as a gradient accumulator (zeros_like + accumulate).
struct Mlp {
    std::vector<DenseLayer> layers;

    Mlp() = default;
    // dims = {in, h1, ..., out}; weights seeded, biases zero
    Mlp(const std::vector<std::size_t>& dims, Rng& rng) {
        if (dims.size() < 2) throw ConfigError("Mlp: need at least input and output dims");
        for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
            DenseLayer l;
            l.w = Mat(dims[k + 1], dims[k]);
            l.b = Vec(dims[k + 1], 0.0);
            init_uniform(l.w, rng);
            layers.push_back(std::move(l));
        }
    }

    std::size_t input_dim() const { return layers.front().w.cols; }
    std::size_t output_dim() const { return layers.back().w.rows; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.w.size() + l.b.size();
        return n;
    }
    void to_flat(double* out) const {
        for (const auto& l : layers) {
            for (double e : l.w.v) *out++ = e;
            for (double e : l.b) *out++ = e;
        }
    }
    void from_flat(const double* in) {
        for (auto& l : layers) {
            for (double& e : l.w.v) e = *in++;
            for (double& e : l.b) e = *in++;
        }
    }
};

inline Mlp zeros_like(const Mlp& m) {
    Mlp z;
    for (const auto& l : m.layers)
        z.layers.push_back({Mat(l.w.rows, l.w.cols), Vec(l.b.size(), 0.0)});
    return z;
}

struct MlpCache {
    // acts[0] is the input, acts[k] the post-activation output of layer k-1
    std::vector<Vec> acts;
    std::vector<std::size_t> dims;  // layer output dims, for the contract check
};

inline Vec mlp_apply(const Mlp& m, const Vec& x, MlpCache* cache = nullptr) {
    if (m.layers.empty()) throw ContractError("mlp_apply: empty network");
    if (x.size() != m.input_dim())
        throw DimensionError("mlp_apply: input dim " + std::to_string(x.size()) +
                             " != expected " + std::to_string(m.input_dim()));
    if (cache) {
        cache->acts.clear();
        cache->dims.clear();
        cache->acts.push_back(x);
    }
    Vec a = x;
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
        const auto& l = m.layers[k];
        Vec z = matvec(l.w, a);
        add_inplace(z, l.b);
        if (k + 1 < m.layers.size())
            for (double& e : z) e = std::tanh(e);
        a = std::move(z);
        if (cache) {
            cache->acts.push_back(a);
            cache->dims.push_back(l.w.rows);
        }
    }
    return a;
}

// Backward pass. Accumulates parameter gradients into `grads` (same shape as
// the net, see zeros_like) and returns the gradient w.r.t. the input.
inline Vec mlp_grad(const Mlp& m, const MlpCache& cache, const Vec& upstream, Mlp& grads) {
    if (cache.acts.size() != m.layers.size() + 1 || cache.dims.size() != m.layers.size())
        throw ContractError("mlp_grad: cache does not match network");
    for (std::size_t k = 0; k < m.layers.size(); ++k)
        if (cache.dims[k] != m.layers[k].w.rows || cache.acts[k].size() != m.layers[k].w.cols)
            throw ContractError("mlp_grad: cache layer shape mismatch");
    if (upstream.size() != m.output_dim())
        throw DimensionError("mlp_grad: upstream dim mismatch");
    if (grads.layers.size() != m.layers.size()) throw ContractError("mlp_grad: grads shape mismatch");

    Vec up = upstream;
    for (std::size_t k = m.layers.size(); k-- > 0;) {
        Vec dz = up;
        if (k + 1 < m.layers.size()) {
            // tanh'(z) = 1 - tanh(z)^2, and acts[k+1] holds tanh(z)
            const Vec& h = cache.acts[k + 1];
            for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= 1.0 - h[i] * h[i];
        }
        outer_add(grads.layers[k].w, dz, cache.acts[k]);
        add_inplace(grads.layers[k].b, dz);
        up = matvec_t(m.layers[k].w, dz);
    }
    return up;
}

// ------------------------------------------------------------------- GRU

struct GruGate {
    Mat w;  // hidden × input
    Mat u;  // hidden × hidden
    Vec b;  // hidden
};

// z = σ(Wz x + Uz h + bz), r = σ(Wr x + Ur h + br),
// h̃ = tanh(Wh x + Uh (r⊙h) + bh), h' = (1−z)⊙h + z⊙h̃
struct Gru {
    GruGate update, reset, cand;
    std::size_t input_dim = 0, hidden_dim = 0;

    Gru() = default;
    Gru(std::size_t in, std::size_t hidden, Rng& rng) : input_dim(in), hidden_dim(hidden) {
        for (GruGate* g : {&update, &reset, &cand}) {
            g->w = Mat(hidden, in);
            g->u = Mat(hidden, hidden);
            g->b = Vec(hidden, 0.0);
            init_uniform(g->w, rng);
            init_uniform(g->u, rng);
        }
    }

    std::size_t param_count() const {
        return 3 * (hidden_dim * input_dim + hidden_dim * hidden_dim + hidden_dim);
    }
    void to_flat(double* out) const {
        for (const GruGate* g : {&update, &reset, &cand}) {
            for (double e : g->w.v) *out++ = e;
            for (double e : g->u.v) *out++ = e;
            for (double e : g->b) *out++ = e;
        }
    }
    void from_flat(const double* in) {
        for (GruGate* g : {&update, &reset, &cand}) {
            for (double& e : g->w.v) e = *in++;
            for (double& e : g->u.v) e = *in++;
            for (double& e : g->b) e = *in++;
        }
    }
};

inline Gru zeros_like(const Gru& g) {
    Gru z;
    z.input_dim = g.input_dim;
    z.hidden_dim = g.hidden_dim;
    for (GruGate* gate : {&z.update, &z.reset, &z.cand}) {
        gate->w = Mat(g.hidden_dim, g.input_dim);
        gate->u = Mat(g.hidden_dim, g.hidden_dim);
        gate->b = Vec(g.hidden_dim, 0.0);
    }
    return z;
}

struct GruCache {
    Vec x, h;         // inputs
    Vec z, r, hcand;  // gate activations
    Vec rh;           // r ⊙ h
};

inline Vec gru_apply(const Gru& g, const Vec& h, const Vec& x, GruCache* cache = nullptr) {
    if (x.size() != g.input_dim) throw DimensionError("gru_apply: input dim mismatch");
    if (h.size() != g.hidden_dim) throw DimensionError("gru_apply: hidden dim mismatch");

    Vec az = matvec(g.update.w, x);
    add_inplace(az, matvec(g.update.u, h));
    add_inplace(az, g.update.b);
    Vec ar = matvec(g.reset.w, x);
    add_inplace(ar, matvec(g.reset.u, h));
    add_inplace(ar, g.reset.b);

    Vec z(g.hidden_dim), r(g.hidden_dim);
    for (std::size_t i = 0; i < g.hidden_dim; ++i) {
        z[i] = sigmoid(az[i]);
        r[i] = sigmoid(ar[i]);
    }

    Vec rh(g.hidden_dim);
    for (std::size_t i = 0; i < g.hidden_dim; ++i) rh[i] = r[i] * h[i];

    Vec ac = matvec(g.cand.w, x);
    add_inplace(ac, matvec(g.cand.u, rh));
    add_inplace(ac, g.cand.b);
    Vec hc(g.hidden_dim);
    for (std::size_t i = 0; i < g.hidden_dim; ++i) hc[i] = std::tanh(ac[i]);

    Vec hn(g.hidden_dim);
    for (std::size_t i = 0; i < g.hidden_dim; ++i) hn[i] = (1.0 - z[i]) * h[i] + z[i] * hc[i];

    if (cache) {
        cache->x = x;
        cache->h = h;
        cache->z = std::move(z);
        cache->r = std::move(r);
        cache->hcand = std::move(hc);
        cache->rh = std::move(rh);
    }
    require_finite(hn, "gru_apply output");
    return hn;
}

// Backward pass; accumulates into `grads`, writes dL/dh and dL/dx.
inline void gru_grad(const Gru& g, const GruCache& cache, const Vec& upstream, Gru& grads,
                     Vec& dh, Vec& dx) {
    const std::size_t H = g.hidden_dim;
    if (cache.x.size() != g.input_dim || cache.h.size() != H || cache.z.size() != H)
        throw ContractError("gru_grad: cache does not match cell");
    if (upstream.size() != H) throw DimensionError("gru_grad: upstream dim mismatch");

    dh.assign(H, 0.0);
    dx.assign(g.input_dim, 0.0);

    Vec dz(H), dhc(H);
    for (std::size_t i = 0; i < H; ++i) {
        dz[i] = upstream[i] * (cache.hcand[i] - cache.h[i]);
        dhc[i] = upstream[i] * cache.z[i];
        dh[i] += upstream[i] * (1.0 - cache.z[i]);
    }

    // candidate: h̃ = tanh(ac), ac = Wh x + Uh (r⊙h) + bh
    Vec dac(H);
    for (std::size_t i = 0; i < H; ++i) dac[i] = dhc[i] * (1.0 - cache.hcand[i] * cache.hcand[i]);
    outer_add(grads.cand.w, dac, cache.x);
    outer_add(grads.cand.u, dac, cache.rh);
    add_inplace(grads.cand.b, dac);
    add_inplace(dx, matvec_t(g.cand.w, dac));
    Vec drh = matvec_t(g.cand.u, dac);
    Vec dr(H);
    for (std::size_t i = 0; i < H; ++i) {
        dr[i] = drh[i] * cache.h[i];
        dh[i] += drh[i] * cache.r[i];
    }

    // update gate
    Vec daz(H);
    for (std::size_t i = 0; i < H; ++i) daz[i] = dz[i] * cache.z[i] * (1.0 - cache.z[i]);
    outer_add(grads.update.w, daz, cache.x);
    outer_add(grads.update.u, daz, cache.h);
    add_inplace(grads.update.b, daz);
    add_inplace(dx, matvec_t(g.update.w, daz));
    add_inplace(dh, matvec_t(g.update.u, daz));

    // reset gate
    Vec dar(H);
    for (std::size_t i = 0; i < H; ++i) dar[i] = dr[i] * cache.r[i] * (1.0 - cache.r[i]);
    outer_add(grads.reset.w, dar, cache.x);
    outer_add(grads.reset.u, dar, cache.h);
    add_inplace(grads.reset.b, dar);
    add_inplace(dx, matvec_t(g.reset.w, dar));
    add_inplace(dh, matvec_t(g.reset.u, dar));
}

}  // namespace rlab
