#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

#include "mglab/numerics/tensor.hpp"
#include "mglab/scene/render.hpp"

namespace mglab::io {

inline std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return f;
}

/// Binary 8-bit PPM (P6) from a [3,H,W] tensor with values in [0,1].
inline void write_ppm(const std::filesystem::path& path, const Tensor<float>& img)
{
    if (img.rank() != 3 || img.dim(0) != 3) throw std::invalid_argument("write_ppm: expected [3,H,W]");
    const std::size_t H = img.dim(1), W = img.dim(2);
    auto f = open_out(path);
    f << "P6\n" << W << ' ' << H << "\n255\n";
    for (std::size_t v = 0; v < H; ++v)
        for (std::size_t u = 0; u < W; ++u)
            for (std::size_t c = 0; c < 3; ++c) {
                const float x = std::clamp(img.at(c, v, u), 0.0f, 1.0f);
                f.put(static_cast<char>(static_cast<unsigned char>(std::lround(x * 255.0f))));
            }
}

/// Binary 16-bit PGM (P5, big-endian samples) from a [1,H,W] tensor in [0,1].
inline void write_pgm16(const std::filesystem::path& path, const Tensor<float>& img)
{
    if (img.rank() != 3 || img.dim(0) != 1) throw std::invalid_argument("write_pgm16: expected [1,H,W]");
    const std::size_t H = img.dim(1), W = img.dim(2);
    auto f = open_out(path);
    f << "P5\n" << W << ' ' << H << "\n65535\n";
    for (std::size_t i = 0; i < H * W; ++i) {
        const auto s = static_cast<std::uint16_t>(std::lround(std::clamp(img[i], 0.0f, 1.0f) * 65535.0f));
        f.put(static_cast<char>(s >> 8));
        f.put(static_cast<char>(s & 0xFF));
    }
}

/// Shortest decimal text that reads back to the same double.
inline std::string fmt_real(double v)
{
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline void write_trajectory_csv(const std::filesystem::path& path, const SyntheticVideo& video)
{
    auto f = open_out(path);
    f << "frame,tx,ty,tz,rx,ry,rz,alpha\n";
    for (std::size_t k = 0; k < video.size(); ++k) {
        const auto& p = video.spec.trajectory.poses[k];
        f << k;
        for (double v : p.values()) f << ',' << fmt_real(v);
        f << ',' << fmt_real(video.frames[k].alpha) << '\n';
    }
}

}  // namespace mglab::io
