#pragma once

#include "rrr/tensor.hpp"

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

namespace rrr::detail {

inline void write_u32le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("container: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f64le(std::ostream& os, const Tensor& t) {
    for (Index i = 0; i < t.numel(); ++i) {
        std::uint64_t bits;
        const double d = t[i];
        std::memcpy(&bits, &d, 8);
        unsigned char b[8];
        for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
        os.write(reinterpret_cast<const char*>(b), 8);
    }
}

inline void read_f64le(std::istream& is, Tensor& t) {
    for (Index i = 0; i < t.numel(); ++i) {
        unsigned char b[8];
        is.read(reinterpret_cast<char*>(b), 8);
        if (!is) throw IoError("container: truncated tensor data");
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
        double d;
        std::memcpy(&d, &bits, 8);
        t[i] = d;
    }
}

}  // namespace rrr::detail
