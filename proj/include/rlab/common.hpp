// Shared value types and error hierarchy used across the library.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rlab {

using Vec = std::vector<double>;

// ---------------------------------------------------------------- errors

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape of an input does not match what the operation expects.
struct DimensionError : Error {
    using Error::Error;
};

// A precondition on call ordering or cached state was violated.
struct ContractError : Error {
    using Error::Error;
};

// Bad configuration (file, CLI, or programmatic).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed input data; carries the position that failed.
struct ParseError : Error {
    long line_no = -1;  // 1-based, -1 when unknown
    int field_no = -1;  // 1-based, -1 when not field-specific
    ParseError(const std::string& msg, long line, int field)
        : Error(msg), line_no(line), field_no(field) {}
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// External generator replied with something that is not the wire format.
struct ProtocolError : Error {
    using Error::Error;
};

// External generator could not be reached or timed out.
struct GeneratorUnavailableError : Error {
    using Error::Error;
};

// A numeric result left the finite domain where it should not have.
struct NumericError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Checkpoint container failures.
struct ChecksumError : Error {
    using Error::Error;
};
struct VersionError : Error {
    using Error::Error;
};

// Training produced a non-finite loss; the harness persists a snapshot.
struct TrainingAborted : Error {
    using Error::Error;
};

// ---------------------------------------------------------------- matrix

// Dense row-major matrix of doubles. Small models only; no BLAS.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
    std::size_t size() const { return v.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// ---------------------------------------------------------------- checks

inline bool all_finite(const Vec& x) {
    for (double e : x)
        if (!std::isfinite(e)) return false;
    return true;
}

inline bool all_finite(const Mat& m) {
    for (double e : m.v)
        if (!std::isfinite(e)) return false;
    return true;
}

inline void require_finite(const Vec& x, const char* what) {
    if (!all_finite(x)) throw NumericError(std::string(what) + ": non-finite entry");
}

inline void require_dim(const Vec& x, std::size_t dim, const char* what) {
    if (x.size() != dim)
        throw DimensionError(std::string(what) + ": expected dim " + std::to_string(dim) +
                             ", got " + std::to_string(x.size()));
}

// ---------------------------------------------------------------- linalg

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DimensionError("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

// y = M x
inline Vec matvec(const Mat& m, const Vec& x) {
    if (x.size() != m.cols) throw DimensionError("matvec: cols mismatch");
    Vec y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double s = 0.0;
        const double* row = m.v.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

// y = Mᵀ x
inline Vec matvec_t(const Mat& m, const Vec& x) {
    if (x.size() != m.rows) throw DimensionError("matvec_t: rows mismatch");
    Vec y(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = m.v.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) y[j] += row[j] * x[i];
    }
    return y;
}

// M += g xᵀ
inline void outer_add(Mat& m, const Vec& g, const Vec& x) {
    if (g.size() != m.rows || x.size() != m.cols) throw DimensionError("outer_add: shape mismatch");
    for (std::size_t i = 0; i < m.rows; ++i) {
        double* row = m.v.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) row[j] += g[i] * x[j];
    }
}

inline void add_inplace(Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DimensionError("add_inplace: size mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

inline void scale_inplace(Vec& a, double s) {
    for (double& e : a) e *= s;
}

inline Vec concat(std::initializer_list<const Vec*> parts) {
    std::size_t n = 0;
    for (const Vec* p : parts) n += p->size();
    Vec out;
    out.reserve(n);
    for (const Vec* p : parts) out.insert(out.end(), p->begin(), p->end());
    return out;
}

inline double sigmoid(double x) {
    // split to avoid exp overflow on large negative inputs
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

enum class Arm : std::uint8_t { A = 0, B = 1 };

inline const char* arm_name(Arm a) { return a == Arm::A ? "A" : "B"; }

inline Arm other_arm(Arm a) { return a == Arm::A ? Arm::B : Arm::A; }

}  // namespace rlab
