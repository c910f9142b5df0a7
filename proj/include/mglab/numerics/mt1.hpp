#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mglab/numerics/tensor.hpp"

// MT1 tensor files: "MT1\n", then "ndims d0 d1 ...\n", then row-major
// little-endian float32 payload.

namespace mglab::mt1 {

inline void write_f32_le(std::ostream& os, float v)
{
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                          static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

template <typename T>
std::string encode(const Tensor<T>& t)
{
    std::ostringstream os(std::ios::binary);
    os << "MT1\n" << t.rank();
    for (auto d : t.dims()) os << ' ' << d;
    os << '\n';
    for (T v : t.data()) write_f32_le(os, static_cast<float>(v));
    return os.str();
}

template <typename T>
Tensor<T> decode(const std::string& bytes)
{
    if (bytes.size() < 4 || bytes.compare(0, 4, "MT1\n") != 0) throw std::runtime_error("MT1: bad magic");
    const auto eol = bytes.find('\n', 4);
    if (eol == std::string::npos) throw std::runtime_error("MT1: truncated header");
    std::istringstream header(bytes.substr(4, eol - 4));
    std::size_t nd = 0;
    if (!(header >> nd) || nd == 0) throw std::runtime_error("MT1: bad rank");
    Dims dims(nd);
    for (auto& d : dims)
        if (!(header >> d) || d == 0) throw std::runtime_error("MT1: bad dimension");
    const std::size_t n = dims_product(dims);
    const std::size_t off = eol + 1;
    if (bytes.size() != off + 4 * n)
        throw std::runtime_error("MT1: payload is " + std::to_string(bytes.size() - off) + " bytes, expected "
                                 + std::to_string(4 * n));
    std::vector<T> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto* b = reinterpret_cast<const unsigned char*>(bytes.data() + off + 4 * i);
        const std::uint32_t bits = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16)
                                   | (std::uint32_t(b[3]) << 24);
        float f;
        std::memcpy(&f, &bits, sizeof f);
        data[i] = static_cast<T>(f);
    }
    return Tensor<T>(std::move(dims), std::move(data));
}

template <typename T>
void save(const std::filesystem::path& path, const Tensor<T>& t)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("MT1: cannot open " + path.string() + " for writing");
    const auto bytes = encode(t);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("MT1: write failed for " + path.string());
}

template <typename T>
Tensor<T> load(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("MT1: cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode<T>(ss.str());
}

}  // namespace mglab::mt1
