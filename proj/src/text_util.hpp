#pragma once

// Small helpers shared by the text formats. Not part of the public headers.

#include "tomtalker/error.hpp"

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace tomtalker::detail {

// Shortest representation that parses back to the same double.
inline std::string format_double(double x)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc{})
        throw Error(ErrorCode::Malformed, "cannot format number");
    return std::string(buf, end);
}

inline std::string_view trim(std::string_view s)
{
    const auto ws = " \t\r\n";
    const auto first = s.find_first_not_of(ws);
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(ws);
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

inline double parse_double(std::string_view s, std::string_view what)
{
    s = trim(s);
    // from_chars rejects a leading '+'
    if (!s.empty() && s.front() == '+')
        s.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw Error(ErrorCode::Malformed, "bad number for " + std::string(what) + ": '" + std::string(s) + "'");
    return value;
}

inline std::int64_t parse_int(std::string_view s, std::string_view what)
{
    s = trim(s);
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw Error(ErrorCode::Malformed, "bad integer for " + std::string(what) + ": '" + std::string(s) + "'");
    return value;
}

} // namespace tomtalker::detail
