#include "nncov/hash.hpp"

#include <charconv>

#include "nncov/errors.hpp"

namespace nncov {

std::string to_hex(std::uint64_t id) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[id & 0xf];
        id >>= 4;
    }
    return out;
}

std::uint64_t from_hex(const std::string& text) {
    std::uint64_t value = 0;
    if (text.size() != 16) throw ParseError("expected 16 hex digits, got '" + text + "'");
    for (char c : text) {
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) {
            throw ParseError("malformed hex id '" + text + "'");
        }
    }
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, 16);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ParseError("malformed hex id '" + text + "'");
    }
    return value;
}

}  // namespace nncov
