#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "kgc/errors.hpp"

// Little-endian primitives shared by every binary artifact.
namespace kgc::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
    requires std::is_arithmetic_v<T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
    requires std::is_arithmetic_v<T>
T get(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw IntegrityError("unexpected end of binary stream");
    return value;
}

inline void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
    const auto n = get<std::uint32_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw IntegrityError("unexpected end of binary stream");
    return s;
}

inline void put_magic(std::ostream& out, const char (&magic)[5], std::uint32_t version) {
    out.write(magic, 4);
    put<std::uint32_t>(out, version);
}

inline void expect_magic(std::istream& in, const char (&magic)[5], std::uint32_t version) {
    char buf[4] = {};
    in.read(buf, 4);
    if (!in || std::memcmp(buf, magic, 4) != 0)
        throw IntegrityError(std::string("bad magic, expected ") + magic);
    const auto v = get<std::uint32_t>(in);
    if (v != version)
        throw IntegrityError(std::string(magic) + " version " + std::to_string(v) +
                             " unsupported (want " + std::to_string(version) + ")");
}

}  // namespace kgc::binio
