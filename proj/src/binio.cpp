#include "dufold/binio.hpp"

#include <array>

#include "dufold/tensor.hpp"

namespace dufold::io {

namespace {
std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int b = 0; b < 8; ++b) c = (c & 1) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
        table[i] = c;
    }
    return table;
}
}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t n, std::uint32_t seed) {
    static const std::array<std::uint32_t, 256> table = make_crc_table();
    std::uint32_t c = seed ^ 0xFFFFFFFFu;
    for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

void write_tensor(std::ostream& os, const Tensor& t) {
    write_le<std::uint8_t>(os, t.is_complex() ? 1 : 0);
    write_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.shape().size()));
    for (std::size_t d : t.shape()) write_le<std::uint64_t>(os, d);
    write_le<std::uint64_t>(os, t.raw_size());
    write_f64s(os, t.raw());
}

Tensor read_tensor(std::istream& is) {
    const bool complex = read_le<std::uint8_t>(is) != 0;
    const std::uint8_t nd = read_le<std::uint8_t>(is);
    Shape shape(nd);
    for (auto& d : shape) d = read_le<std::uint64_t>(is);
    const std::uint64_t raw_len = read_le<std::uint64_t>(is);
    if (raw_len != shape_numel(shape) * (complex ? 2u : 1u))
        throw IntegrityError("tensor record: length field does not match shape");
    std::vector<double> raw;
    read_f64s(is, raw, raw_len);
    return Tensor::from_raw(std::move(shape), std::move(raw), complex);
}

}  // namespace dufold::io
