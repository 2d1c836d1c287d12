#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>

namespace nncov {

/// 64-bit FNV-1a, used for binding checks (model and profile identity).
class Fnv1a64 {
public:
    void bytes(std::span<const unsigned char> data) {
        for (unsigned char c : data) {
            hash_ ^= c;
            hash_ *= 0x100000001b3ULL;
        }
    }
    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b);
    }
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b);
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u32(bits);
    }
    std::uint64_t digest() const { return hash_; }

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

/// 16 lowercase hex digits.
std::string to_hex(std::uint64_t id);
/// Inverse of to_hex; throws ParseError on malformed input.
std::uint64_t from_hex(const std::string& text);

}  // namespace nncov
