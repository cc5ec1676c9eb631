#pragma once

#include <charconv>
#include <string>

namespace gproto {

// Shortest decimal form that round-trips the exact double. Used by every
// text emitter (embedding files, CSV traces, reports).
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace gproto
