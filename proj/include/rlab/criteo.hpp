// Criteo click-log handling: strict 40-field TSV parsing, hashed feature
// construction, and a constant-memory replay stream.
#pragma once

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rlab/common.hpp"
#include "rlab/rng.hpp"

namespace rlab {

inline constexpr std::size_t kCriteoIntFields = 13;
inline constexpr std::size_t kCriteoCatFields = 26;
inline constexpr std::size_t kCriteoFields = 1 + kCriteoIntFields + kCriteoCatFields;

struct CriteoRecord {
    int label = 0;
    std::array<std::optional<std::int64_t>, kCriteoIntFields> ints;
    std::array<std::optional<std::string>, kCriteoCatFields> cats;
};

namespace detail {

inline ParseError criteo_error(std::uint64_t line_no, std::size_t field, const std::string& why) {
    return ParseError("criteo line " + std::to_string(line_no) + ", field " +
                      std::to_string(field) + ": " + why);
}

}  // namespace detail

// Grammar: label TAB 13 integer fields TAB 26 hex fields; empty = missing.
// Field positions in errors are 1-based over the whole 40-field line.
inline CriteoRecord parse_criteo_line(const std::string& line, std::uint64_t line_no = 0) {
    std::vector<std::string_view> fields;
    fields.reserve(kCriteoFields);
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == '\t') {
            fields.emplace_back(line.data() + start, i - start);
            start = i + 1;
        }
    }
    if (fields.size() != kCriteoFields)
        throw detail::criteo_error(line_no, kCriteoFields,
                                   "expected 40 tab-separated fields, got " +
                                       std::to_string(fields.size()));

    CriteoRecord rec;
    if (fields[0] == "0")
        rec.label = 0;
    else if (fields[0] == "1")
        rec.label = 1;
    else
        throw detail::criteo_error(line_no, 1,
                                   "label must be 0 or 1, got '" + std::string(fields[0]) + "'");

    for (std::size_t i = 0; i < kCriteoIntFields; ++i) {
        std::string_view f = fields[1 + i];
        if (f.empty()) continue;
        std::int64_t v = 0;
        auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc() || ptr != f.data() + f.size())
            throw detail::criteo_error(line_no, 2 + i,
                                       "expected integer, got '" + std::string(f) + "'");
        rec.ints[i] = v;
    }

    for (std::size_t i = 0; i < kCriteoCatFields; ++i) {
        std::string_view f = fields[1 + kCriteoIntFields + i];
        if (f.empty()) continue;
        for (char ch : f)
            if (!std::isxdigit(static_cast<unsigned char>(ch)))
                throw detail::criteo_error(line_no, 2 + kCriteoIntFields + i,
                                           "expected hex token, got '" + std::string(f) + "'");
        rec.cats[i] = std::string(f);
    }
    return rec;
}

// sign(x) * log(1 + |x|); missing values contribute zero
inline double criteo_int_transform(const std::optional<std::int64_t>& v) {
    if (!v) return 0.0;
    const double x = static_cast<double>(*v);
    return (x < 0.0 ? -1.0 : 1.0) * std::log1p(std::fabs(x));
}

struct CriteoFeatures {
    Vec u;
    Vec c;
};

// Categorical tokens hash into d_u + (d_c - 13) signed buckets: low buckets
// form the profile, high buckets the context head, and the 13 transformed
// integers fill the context tail.
inline CriteoFeatures criteo_to_features(const CriteoRecord& rec, std::size_t d_u,
                                         std::size_t d_c) {
    if (d_u == 0) throw ConfigError("criteo features need d_u > 0");
    if (d_c <= kCriteoIntFields)
        throw ConfigError("criteo features need d_c > 13 to hold the integer block");

    CriteoFeatures out;
    out.u.assign(d_u, 0.0);
    out.c.assign(d_c, 0.0);
    const std::size_t cat_buckets = d_u + (d_c - kCriteoIntFields);
    for (std::size_t i = 0; i < kCriteoCatFields; ++i) {
        if (!rec.cats[i]) continue;
        const std::uint64_t h = hash_str64("c" + std::to_string(i) + "|" + *rec.cats[i]);
        const std::size_t bucket = static_cast<std::size_t>(h % cat_buckets);
        const double sign = ((h >> 32) & 1) ? 1.0 : -1.0;
        if (bucket < d_u)
            out.u[bucket] += sign;
        else
            out.c[bucket - d_u] += sign;
    }
    for (std::size_t i = 0; i < kCriteoIntFields; ++i)
        out.c[d_c - kCriteoIntFields + i] = criteo_int_transform(rec.ints[i]);
    return out;
}

struct ReplayItem {
    Vec u;
    Vec c;
    int label = 0;
};

// Streams (profile, context, label) rows off disk. Lenient mode counts and
// skips malformed lines; strict mode rethrows with the line position.
class ReplayStream {
  public:
    ReplayStream(const std::string& path, std::size_t d_u, std::size_t d_c, double sample_rate,
                 std::uint64_t seed, bool strict)
        : d_u_(d_u),
          d_c_(d_c),
          rate_(sample_rate),
          strict_(strict),
          rng_(derive_rng(seed, "replay_sampling")),
          in_(path) {
        if (!(sample_rate >= 0.0 && sample_rate <= 1.0))
            throw ConfigError("replay.sample_rate must lie in [0,1]");
        if (d_c <= kCriteoIntFields)
            throw ConfigError("criteo features need d_c > 13 to hold the integer block");
        if (!in_) throw IoError("cannot open replay file: " + path);
    }

    std::optional<ReplayItem> next() {
        std::string line;
        while (std::getline(in_, line)) {
            ++lines_read_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (rate_ < 1.0 && !(rng_.uniform() < rate_)) {
                ++sampled_out_;
                continue;
            }
            try {
                CriteoRecord rec = parse_criteo_line(line, lines_read_);
                CriteoFeatures f = criteo_to_features(rec, d_u_, d_c_);
                return ReplayItem{std::move(f.u), std::move(f.c), rec.label};
            } catch (const ParseError&) {
                if (strict_) throw;
                ++skipped_;
            }
        }
        return std::nullopt;
    }

    std::uint64_t lines_read() const { return lines_read_; }
    std::uint64_t skipped() const { return skipped_; }
    std::uint64_t sampled_out() const { return sampled_out_; }

  private:
    std::size_t d_u_, d_c_;
    double rate_;
    bool strict_;
    Rng rng_;
    std::ifstream in_;
    std::uint64_t lines_read_ = 0, skipped_ = 0, sampled_out_ = 0;
};

}  // namespace rlab
