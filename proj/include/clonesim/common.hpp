#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace clonesim {

// All protocol and trace times are integer seconds on the trace's own
// timeline. Keeping the arithmetic integral makes freshness/expiry order
// statistics exact and replay comparisons bit-stable.
using Timestamp = std::int64_t;
using Seconds = std::int64_t;

inline constexpr Seconds kSecondsPerDay = 86400;
inline constexpr Seconds kSecondsPerWeek = 7 * kSecondsPerDay;

struct TimeSpan {
    Timestamp begin = 0;
    Timestamp end = 0;

    Seconds length() const { return end - begin; }
    bool contains(Timestamp t) const { return t >= begin && t <= end; }
};

// Floor division that is correct for negative offsets too.
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

// Day bucket of an instant, counted from `origin` (bucket 0 starts there).
inline int day_index(Timestamp t, Timestamp origin) {
    return static_cast<int>(floor_div(t - origin, kSecondsPerDay));
}

// Number of day buckets a span covers. A span of exactly N days yields N;
// anything shorter than a day yields 1.
inline int day_count(const TimeSpan& span) {
    if (span.end <= span.begin) return 1;
    return static_cast<int>(floor_div(span.end - span.begin - 1, kSecondsPerDay)) + 1;
}

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Little-endian canonical byte serialization used for every signed payload,
// so a signature over a tuple is reproducible byte for byte.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

    void tag(const char* s) {
        // Fixed 4-char domain tags.
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(s[i]));
    }

    const std::vector<std::uint8_t>& data() const { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

// splitmix64 finalizer; used to derive independent sub-seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(mix64(a) ^ b); }

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix64(mix64(a, b) ^ c);
}

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::uint8_t byte : data) {
        h ^= byte;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace clonesim
