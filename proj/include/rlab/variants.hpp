// Prompt parameterization, variant embeddings, and derivative-free prompt
// search. Embeddings are deterministic: signed token hashing plus a seeded
// linear projection of the structured features, L2-normalized.
#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rlab/common.hpp"
#include "rlab/rng.hpp"

namespace rlab {

enum class Tone : std::uint8_t { Urgent = 0, Friendly = 1, Neutral = 2 };
enum class Framing : std::uint8_t { Discount = 0, Scarcity = 1, SocialProof = 2 };
enum class PromptLength : std::uint8_t { Short = 0, Long = 1 };

inline const char* tone_name(Tone t) {
    switch (t) {
        case Tone::Urgent: return "urgent";
        case Tone::Friendly: return "friendly";
        case Tone::Neutral: return "neutral";
    }
    return "?";
}
inline const char* framing_name(Framing f) {
    switch (f) {
        case Framing::Discount: return "discount";
        case Framing::Scarcity: return "scarcity";
        case Framing::SocialProof: return "social-proof";
    }
    return "?";
}
inline const char* length_name(PromptLength l) { return l == PromptLength::Short ? "short" : "long"; }

inline constexpr std::size_t kToneCount = 3;
inline constexpr std::size_t kFramingCount = 3;
inline constexpr std::size_t kLengthCount = 2;
inline constexpr std::size_t kKnobOneHotDim = kToneCount + kFramingCount + kLengthCount;  // 8
inline constexpr std::size_t kVariantPerturbDim = 4;

struct PromptParams {
    Tone tone = Tone::Neutral;
    Framing framing = Framing::Discount;
    PromptLength length = PromptLength::Short;
    Vec emphasis;

    PromptParams() : emphasis(4, 0.5) {}
    explicit PromptParams(std::size_t emphasis_dim) : emphasis(emphasis_dim, 0.5) {}

    bool operator==(const PromptParams& o) const {
        return tone == o.tone && framing == o.framing && length == o.length &&
               emphasis == o.emphasis;
    }

    // tone(3) + framing(3) + length(2) + emphasis
    Vec knob_features() const {
        Vec f(kKnobOneHotDim + emphasis.size(), 0.0);
        f[static_cast<std::size_t>(tone)] = 1.0;
        f[kToneCount + static_cast<std::size_t>(framing)] = 1.0;
        f[kToneCount + kFramingCount + static_cast<std::size_t>(length)] = 1.0;
        std::copy(emphasis.begin(), emphasis.end(), f.begin() + kKnobOneHotDim);
        return f;
    }

    std::string describe() const {
        std::string s = std::string("tone=") + tone_name(tone) + " framing=" + framing_name(framing) +
                        " length=" + length_name(length) + " emphasis=";
        for (std::size_t i = 0; i < emphasis.size(); ++i) {
            if (i) s += ",";
            s += fmt_fixed(emphasis[i], 3);
        }
        return s;
    }

    static std::string fmt_fixed(double x, int prec) {
        std::array<char, 64> buf{};
        auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x,
                                     std::chars_format::fixed, prec);
        if (ec != std::errc{}) return "nan";
        return std::string(buf.data(), p);
    }
};

struct Prompt {
    std::string text;
    Vec features;  // [user; context; knob one-hots; emphasis]
    PromptParams params;
};

inline std::uint64_t hash_vec_bits(const Vec& v) {
    return hash_str64(std::string_view(reinterpret_cast<const char*>(v.data()),
                                       v.size() * sizeof(double)));
}

// expect_d_u / expect_d_c of 0 skip the dimension check
inline Prompt build_prompt(const PromptParams& params, const Vec& user, const Vec& context,
                           std::size_t expect_d_u = 0, std::size_t expect_d_c = 0) {
    if (expect_d_u != 0) require_dim(user, expect_d_u, "build_prompt user");
    if (expect_d_c != 0) require_dim(context, expect_d_c, "build_prompt context");
    require_finite(user, "build_prompt user");
    require_finite(context, "build_prompt context");
    require_finite(params.emphasis, "build_prompt emphasis");
    Prompt p;
    Vec knobs = params.knob_features();
    p.features = concat({&user, &context, &knobs});

    std::uint64_t sig = hash_vec_bits(user) ^ (hash_vec_bits(context) * 0x9e3779b97f4a7c15ULL);
    char sigbuf[17];
    std::snprintf(sigbuf, sizeof sigbuf, "%08x", static_cast<unsigned>(sig & 0xffffffffu));
    p.text = std::string("Write two ad copy variants for the audience. ") +
             "Tone: " + tone_name(params.tone) + ". Framing: " + framing_name(params.framing) +
             ". Length: " + length_name(params.length) + ". Emphasis: [";
    for (std::size_t i = 0; i < params.emphasis.size(); ++i) {
        if (i) p.text += " ";
        p.text += PromptParams::fmt_fixed(params.emphasis[i], 2);
    }
    p.text += "]. Audience: ";
    p.text += sigbuf;
    p.text += ".";
    p.params = params;
    return p;
}

struct Variant {
    Arm id = Arm::A;
    std::string text;
    Vec raw;        // [tone(3); framing(3); length(2); emphasis; perturb(4)]
    Vec embedding;  // d_e, unit L2 norm
};

// Signed feature hashing of whitespace/punctuation-split lowercase tokens.
inline Vec hash_text_embedding(const std::string& text, std::size_t d_e) {
    if (d_e == 0) throw DimensionError("hash_text_embedding: d_e must be positive");
    Vec e(d_e, 0.0);
    std::string tok;
    auto flush = [&] {
        if (tok.empty()) return;
        std::uint64_t h = hash_str64(tok);
        std::size_t bucket = static_cast<std::size_t>(h % d_e);
        double sign = ((h >> 32) & 1u) ? 1.0 : -1.0;
        e[bucket] += sign;
        tok.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)))
            tok += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        else
            flush();
    }
    flush();
    return e;
}

// Projects structured variant features through a fixed seeded matrix and adds
// the token-hash embedding; the result is L2-normalized (e_0 if degenerate).
class VariantEmbedder {
  public:
    VariantEmbedder(std::size_t d_e, std::size_t raw_dim, std::uint64_t seed)
        : d_e_(d_e), proj_(d_e, raw_dim) {
        Rng rng = derive_rng(seed, "variant_projection");
        double scale = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(raw_dim, 1)));
        for (double& w : proj_.v) w = rng.normal() * scale;
    }

    std::size_t d_e() const { return d_e_; }
    std::size_t raw_dim() const { return proj_.cols; }

    Vec embed(const std::string& text, const Vec& raw) const {
        if (text.empty()) throw ContractError("VariantEmbedder: variant text is empty");
        require_dim(raw, proj_.cols, "VariantEmbedder raw features");
        require_finite(raw, "VariantEmbedder raw features");
        Vec e = hash_text_embedding(text, d_e_);
        Vec proj = matvec(proj_, raw);
        for (std::size_t i = 0; i < d_e_; ++i) e[i] += proj[i];
        double n = norm2(e);
        if (n < 1e-12) {
            std::fill(e.begin(), e.end(), 0.0);
            e[0] = 1.0;
            return e;
        }
        scale_inplace(e, 1.0 / n);
        return e;
    }

  private:
    std::size_t d_e_;
    Mat proj_;
};

inline Vec embed_variant(const VariantEmbedder& embedder, const Variant& v) {
    return embedder.embed(v.text, v.raw);
}

struct PromptOptResult {
    PromptParams best;
    double best_score = 0.0;
    int evals_used = 0;
    std::vector<std::pair<std::string, double>> trace;
};

// Derivative-free maximization of score over prompt parameters. One pass of
// coordinate sweeps over the categorical knobs costs exactly 8 evaluations
// (the incumbent value is re-scored inside its own sweep); any remaining
// budget runs +/- probes on the emphasis coordinates. Replacement requires a
// strict improvement, so under ties the incumbent wins.
inline PromptOptResult optimize_prompt_params(const std::function<double(const PromptParams&)>& score,
                                              PromptParams start, int budget, double step, Rng& rng) {
    if (budget < static_cast<int>(kKnobOneHotDim))
        throw ConfigError("prompt optimization budget must be at least 8, got " +
                          std::to_string(budget));
    if (step <= 0.0) throw ConfigError("prompt optimization step must be positive");

    PromptOptResult res;
    res.best = start;
    res.best_score = -std::numeric_limits<double>::infinity();
    PromptParams current = start;
    double current_score = -std::numeric_limits<double>::infinity();

    auto eval = [&](const PromptParams& p) {
        double s = score(p);
        if (!std::isfinite(s)) throw NumericError("prompt score is not finite");
        ++res.evals_used;
        res.trace.emplace_back(p.describe(), s);
        if (s > res.best_score) {
            res.best_score = s;
            res.best = p;
        }
        return s;
    };

    // incumbent value first in each sweep so strict > keeps it under ties
    auto sweep = [&](std::size_t count, auto get, auto set) {
        std::size_t inc = get(current);
        double sweep_best = -std::numeric_limits<double>::infinity();
        std::size_t sweep_arg = inc;
        for (std::size_t k = 0; k < count && res.evals_used < budget; ++k) {
            std::size_t v = (inc + k) % count;
            PromptParams cand = current;
            set(cand, v);
            double s = eval(cand);
            if (s > sweep_best) {
                sweep_best = s;
                sweep_arg = v;
            }
        }
        set(current, sweep_arg);
        current_score = sweep_best;
    };

    sweep(kToneCount,
          [](const PromptParams& p) { return static_cast<std::size_t>(p.tone); },
          [](PromptParams& p, std::size_t v) { p.tone = static_cast<Tone>(v); });
    sweep(kFramingCount,
          [](const PromptParams& p) { return static_cast<std::size_t>(p.framing); },
          [](PromptParams& p, std::size_t v) { p.framing = static_cast<Framing>(v); });
    sweep(kLengthCount,
          [](const PromptParams& p) { return static_cast<std::size_t>(p.length); },
          [](PromptParams& p, std::size_t v) { p.length = static_cast<PromptLength>(v); });

    while (!current.emphasis.empty() && res.evals_used + 2 <= budget) {
        std::size_t i = rng.uniform_int(current.emphasis.size());
        PromptParams up = current, down = current;
        up.emphasis[i] = std::clamp(current.emphasis[i] + step, 0.0, 1.0);
        down.emphasis[i] = std::clamp(current.emphasis[i] - step, 0.0, 1.0);
        double su = eval(up);
        double sd = eval(down);
        const PromptParams& better = su >= sd ? up : down;
        double sb = std::max(su, sd);
        if (sb > current_score) {
            current = better;
            current_score = sb;
        }
    }
    return res;
}

}  // namespace rlab
