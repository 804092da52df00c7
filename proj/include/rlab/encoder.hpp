// State fusion: s = MLP([u; c; e_A; e_B]) with two tanh hidden layers of 64
// units and a linear head of width d_s. Backward pass splits the input
// gradient back into the four blocks for joint training.
#pragma once

#include <cstddef>

#include "rlab/common.hpp"
#include "rlab/config.hpp"
#include "rlab/nn.hpp"

namespace rlab {

inline constexpr std::size_t kFusionHidden = 64;

struct EncoderDims {
    std::size_t d_u = 16, d_c = 8, d_e = 32, d_s = 32;
    std::size_t input_dim() const { return d_u + d_c + 2 * d_e; }
};

inline EncoderDims encoder_dims(const RunConfig& cfg) {
    return EncoderDims{cfg.d_u, cfg.d_c, cfg.d_e, cfg.d_s};
}

struct StateEncoder {
    EncoderDims dims;
    Mlp net;

    StateEncoder() = default;
    StateEncoder(EncoderDims d, Rng& rng)
        : dims(d), net({d.input_dim(), kFusionHidden, kFusionHidden, d.d_s}, rng) {}
};

struct EncodeCache {
    MlpCache mlp;
};

inline Vec encode_state(const StateEncoder& enc, const Vec& u, const Vec& c, const Vec& e_a,
                        const Vec& e_b, EncodeCache* cache = nullptr) {
    require_dim(u, enc.dims.d_u, "encode_state user block");
    require_dim(c, enc.dims.d_c, "encode_state context block");
    require_dim(e_a, enc.dims.d_e, "encode_state variant A embedding");
    require_dim(e_b, enc.dims.d_e, "encode_state variant B embedding");
    Vec x = concat({&u, &c, &e_a, &e_b});
    return mlp_apply(enc.net, x, cache ? &cache->mlp : nullptr);
}

struct InputBlockGrads {
    Vec du, dc, de_a, de_b;

    Vec flat() const { return concat({&du, &dc, &de_a, &de_b}); }
};

// Accumulates parameter gradients into `param_grads` (shape of enc.net) and
// returns the gradient with respect to each input block.
inline InputBlockGrads encode_grad(const StateEncoder& enc, const EncodeCache& cache,
                                   const Vec& upstream, Mlp& param_grads) {
    Vec dx = mlp_grad(enc.net, cache.mlp, upstream, param_grads);
    const EncoderDims& d = enc.dims;
    InputBlockGrads g;
    auto it = dx.begin();
    g.du.assign(it, it + static_cast<std::ptrdiff_t>(d.d_u));
    it += static_cast<std::ptrdiff_t>(d.d_u);
    g.dc.assign(it, it + static_cast<std::ptrdiff_t>(d.d_c));
    it += static_cast<std::ptrdiff_t>(d.d_c);
    g.de_a.assign(it, it + static_cast<std::ptrdiff_t>(d.d_e));
    it += static_cast<std::ptrdiff_t>(d.d_e);
    g.de_b.assign(it, it + static_cast<std::ptrdiff_t>(d.d_e));
    return g;
}

}  // namespace rlab
