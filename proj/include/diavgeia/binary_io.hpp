#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "diavgeia/errors.hpp"

// Little-endian primitives shared by the index snapshot and vector store
// formats. Strings are a u32 byte length followed by raw UTF-8.
namespace diavgeia::binio {

template <typename UInt>
void write_le(std::ostream& out, UInt value)
{
    char buf[sizeof(UInt)];
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        buf[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
    }
    out.write(buf, sizeof(UInt));
}

template <typename UInt>
UInt read_le(std::istream& in)
{
    unsigned char buf[sizeof(UInt)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(UInt))) {
        throw CorruptRecord("unexpected end of binary stream");
    }
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        value |= static_cast<UInt>(buf[i]) << (8 * i);
    }
    return value;
}

inline void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v)); }
inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_le<std::uint64_t>(in)); }
inline void write_f32(std::ostream& out, float v) { write_le(out, std::bit_cast<std::uint32_t>(v)); }
inline float read_f32(std::istream& in) { return std::bit_cast<float>(read_le<std::uint32_t>(in)); }

inline void write_str(std::ostream& out, std::string_view s)
{
    write_le(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::istream& in)
{
    const auto n = read_le<std::uint32_t>(in);
    std::string s(n, '\0');
    if (n > 0 && !in.read(s.data(), n)) {
        throw CorruptRecord("truncated string in binary stream");
    }
    return s;
}

inline void expect_magic(std::istream& in, std::string_view magic)
{
    std::string got(magic.size(), '\0');
    if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
        throw CorruptRecord("bad magic, expected " + std::string(magic));
    }
}

}  // namespace diavgeia::binio
