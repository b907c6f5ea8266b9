#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "hufu/common.hpp"

namespace hufu {

/// Little-endian byte-buffer writer used by every on-disk format.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) {
        buf_.push_back(static_cast<std::uint8_t>(v));
        buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void bytes(const std::uint8_t* data, std::size_t len) { buf_.insert(buf_.end(), data, data + len); }
    void tag(const char (&magic)[5]) { bytes(reinterpret_cast<const std::uint8_t*>(magic), 4); }

    const std::vector<std::uint8_t>& buffer() const { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t len) : data_(data), len_(len) {}
    explicit ByteReader(const std::vector<std::uint8_t>& buf) : ByteReader(buf.data(), buf.size()) {}

    std::uint8_t u8() { return take(1)[0]; }
    std::uint16_t u16() {
        const std::uint8_t* p = take(2);
        return static_cast<std::uint16_t>(p[0] | (std::uint16_t(p[1]) << 8));
    }
    std::uint32_t u32() {
        const std::uint8_t* p = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        const std::uint8_t* p = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    void bytes(std::uint8_t* out, std::size_t len) { std::memcpy(out, take(len), len); }
    bool expect_tag(const char (&magic)[5]) {
        const std::uint8_t* p = take(4);
        return std::memcmp(p, magic, 4) == 0;
    }

    std::size_t remaining() const { return len_ - pos_; }
    bool done() const { return pos_ == len_; }

private:
    const std::uint8_t* take(std::size_t n) {
        if (pos_ + n > len_) fail(ErrorKind::Truncated, "file truncated");
        const std::uint8_t* p = data_ + pos_;
        pos_ += n;
        return p;
    }

    const std::uint8_t* data_;
    std::size_t len_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& data);

} // namespace hufu
