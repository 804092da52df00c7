// Little-endian binary serialization plus the versioned, CRC-checked
// container used for checkpoints. All multi-byte values are written
// explicitly byte-by-byte so files are portable across hosts.
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>

#include "rlab/common.hpp"

namespace rlab {

inline std::uint32_t crc32(std::string_view data) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = 0xffffffffu;
    for (unsigned char ch : data) c = table[(c ^ ch) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

class BinWriter {
  public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(std::string_view s) {
        u64(s.size());
        buf_.append(s.data(), s.size());
    }
    void vec(const Vec& v) {
        u64(v.size());
        for (double e : v) f64(e);
    }
    void mat(const Mat& m) {
        u64(m.rows);
        u64(m.cols);
        for (double e : m.v) f64(e);
    }
    const std::string& data() const { return buf_; }
    std::string take() { return std::move(buf_); }

  private:
    std::string buf_;
};

class BinReader {
  public:
    explicit BinReader(std::string_view data) : data_(data) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() {
        auto s = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        auto s = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        std::size_t n = checked_count(u64(), 1);
        auto s = take(n);
        return std::string(s);
    }
    Vec vec() {
        std::size_t n = checked_count(u64(), 8);
        Vec v(n);
        for (double& e : v) e = f64();
        return v;
    }
    Mat mat() {
        Mat m;
        m.rows = checked_count(u64(), 8);
        m.cols = checked_count(u64(), 8);
        if (m.cols != 0 && m.rows > data_.size() / m.cols)  // coarse bound before allocating
            throw Error("binary data: matrix larger than remaining payload");
        m.v.resize(m.rows * m.cols);
        for (double& e : m.v) e = f64();
        return m;
    }
    bool at_end() const { return pos_ == data_.size(); }

  private:
    std::string_view take(std::size_t n) {
        if (pos_ + n > data_.size()) throw Error("binary data: truncated");
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t checked_count(std::uint64_t n, std::size_t elem_size) const {
        if (n > (data_.size() - pos_) / elem_size + 1)
            throw Error("binary data: count exceeds remaining payload");
        return static_cast<std::size_t>(n);
    }
    std::string_view data_;
    std::size_t pos_ = 0;
};

// -------------------------------------------------- versioned container

inline constexpr std::uint32_t kContainerMagic = 0x4b43'4c52u;  // "RLCK"

inline void write_container(const std::string& path, std::uint32_t format_version,
                            std::string_view payload) {
    BinWriter head;
    head.u32(kContainerMagic);
    head.u32(format_version);
    head.u64(payload.size());
    head.u32(crc32(payload));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(head.data().data(), static_cast<std::streamsize>(head.data().size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("write failed: " + path);
}

inline std::string read_container(const std::string& path, std::uint32_t expected_version) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    BinReader r(all);
    if (r.u32() != kContainerMagic) throw ChecksumError("not a checkpoint container: " + path);
    const std::uint32_t version = r.u32();
    if (version != expected_version)
        throw VersionError("checkpoint format version " + std::to_string(version) +
                           ", expected " + std::to_string(expected_version));
    const std::uint64_t size = r.u64();
    const std::uint32_t sum = r.u32();
    if (all.size() < 20 + size) throw ChecksumError("checkpoint truncated: " + path);
    std::string payload = all.substr(20, size);
    if (crc32(payload) != sum) throw ChecksumError("checkpoint checksum mismatch: " + path);
    return payload;
}

}  // namespace rlab
