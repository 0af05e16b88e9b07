#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "dufold/errors.hpp"

namespace dufold::io {

// Little-endian primitives. The in-memory representation on every supported
// target is already little-endian; encode explicitly anyway.

template <typename T>
void write_le(std::ostream& os, T v) {
    static_assert(std::is_integral_v<T>);
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    static_assert(std::is_integral_v<T>);
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw IntegrityError("unexpected end of stream");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
}

inline void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_le<std::uint64_t>(os, bits);
}

inline double read_f64(std::istream& is) {
    const std::uint64_t bits = read_le<std::uint64_t>(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline void write_f64s(std::ostream& os, const std::vector<double>& v) {
    for (double x : v) write_f64(os, x);
}

inline void read_f64s(std::istream& is, std::vector<double>& v, std::size_t n) {
    v.resize(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = read_f64(is);
}

inline void write_str(std::ostream& os, const std::string& s) {
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::istream& is) {
    const std::uint16_t n = read_le<std::uint16_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw IntegrityError("unexpected end of stream in string");
    return s;
}

/// IEEE CRC-32 (reflected, poly 0xEDB88320).
std::uint32_t crc32(const unsigned char* data, std::size_t n, std::uint32_t seed = 0);

}  // namespace dufold::io

namespace dufold {
class Tensor;
}

namespace dufold::io {

/// Tensor record: dtype u8 (0 real, 1 complex), ndim u8, dims u64[],
/// raw length u64, f64 payload.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

}  // namespace dufold::io
