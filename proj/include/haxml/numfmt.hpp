#pragma once

#include <charconv>
#include <string>

namespace haxml {

// Shortest round-trip decimal form; keeps every text artifact byte-stable.
inline void append_double(std::string& out, double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, p);
}

inline std::string format_double(double v) {
    std::string s;
    append_double(s, v);
    return s;
}

}  // namespace haxml
