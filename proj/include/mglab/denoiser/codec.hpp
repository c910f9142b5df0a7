#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mglab/motionguide/motionguide.hpp"
#include "mglab/numerics/tensor.hpp"
#include "mglab/scene/render.hpp"

namespace mglab {

/// Fixed latent codec: rgb is block-averaged by `scale`, mapped to [-1,1] and
/// lifted to 4 channels by a matrix with orthonormal columns. Decoding
/// projects back, which is exact for any encoded frame, then upsamples by
/// nearest neighbour.
struct LatentCodec {
    static constexpr std::size_t channels = 4;
    std::size_t scale = 8;

    // First three columns of the 4x4 Hadamard matrix scaled by 1/2.
    static constexpr std::array<std::array<double, 3>, 4> lift{{
        {0.5, 0.5, 0.5},
        {0.5, -0.5, 0.5},
        {0.5, 0.5, -0.5},
        {0.5, -0.5, -0.5},
    }};

    /// [3,H,W] rgb in [0,1] to [4,H/s,W/s].
    Tensor<float> encode_frame(const Tensor<float>& rgb) const
    {
        const auto small = downscale(rgb, scale);
        const std::size_t h = small.dim(1), w = small.dim(2), hw = h * w;
        Tensor<float> z({channels, h, w});
        for (std::size_t i = 0; i < hw; ++i)
            for (std::size_t c = 0; c < channels; ++c) {
                double s = 0;
                for (std::size_t k = 0; k < 3; ++k) s += lift[c][k] * (2.0 * small[k * hw + i] - 1.0);
                z[c * hw + i] = static_cast<float>(s);
            }
        return z;
    }

    /// [4,h,w] to rgb [3,h·s,w·s], clamped to [0,1].
    Tensor<float> decode_frame(const Tensor<float>& z) const
    {
        if (z.rank() != 3 || z.dim(0) != channels)
            throw std::invalid_argument("decode: expected [4,h,w], got " + dims_string(z.dims()));
        const std::size_t h = z.dim(1), w = z.dim(2), hw = h * w;
        Tensor<float> rgb({3, h * scale, w * scale});
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                for (std::size_t k = 0; k < 3; ++k) {
                    double u = 0;
                    for (std::size_t c = 0; c < channels; ++c) u += lift[c][k] * z[c * hw + y * w + x];
                    const float v = static_cast<float>(std::clamp(0.5 * (u + 1.0), 0.0, 1.0));
                    for (std::size_t dy = 0; dy < scale; ++dy)
                        for (std::size_t dx = 0; dx < scale; ++dx) rgb.at(k, y * scale + dy, x * scale + dx) = v;
                }
        return rgb;
    }

    /// Latent video [N,4,h,w] of a rendered video.
    Tensor<float> encode(const SyntheticVideo& video) const
    {
        std::vector<float> data;
        Dims fd;
        for (const auto& f : video.frames) {
            auto z = encode_frame(f.rgb);
            fd = z.dims();
            data.insert(data.end(), z.data().begin(), z.data().end());
        }
        return Tensor<float>({video.size(), fd[0], fd[1], fd[2]}, std::move(data));
    }

    Tensor<float> frame(const Tensor<float>& z, std::size_t n) const
    {
        const Dims fd{z.dim(1), z.dim(2), z.dim(3)};
        const std::size_t sz = dims_product(fd);
        return Tensor<float>(fd, std::vector<float>(z.ptr() + n * sz, z.ptr() + (n + 1) * sz));
    }

    std::vector<Tensor<float>> decode(const Tensor<float>& z) const
    {
        std::vector<Tensor<float>> out;
        for (std::size_t n = 0; n < z.dim(0); ++n) out.push_back(decode_frame(frame(z, n)));
        return out;
    }
};

/// Latent-resolution foreground mask [h,w]: a cell is foreground when its
/// block contains any object pixel in any frame of the video.
inline Tensor<float> latent_mask(const SyntheticVideo& video, std::size_t scale)
{
    const auto& m0 = video.frames.at(0).mask;
    const std::size_t H = m0.dim(1), W = m0.dim(2);
    if (H % scale || W % scale) throw std::invalid_argument("latent_mask: frame size not divisible by scale");
    Tensor<float> out({H / scale, W / scale});
    for (const auto& f : video.frames)
        for (std::size_t v = 0; v < H; ++v)
            for (std::size_t u = 0; u < W; ++u)
                if (f.mask.at(0, v, u) > 0.5f) out.at(v / scale, u / scale) = 1.0f;
    return out;
}

/// Intensity-weighted centroid of pixels whose mean rgb exceeds `threshold`;
/// image centre when nothing passes.
inline std::array<double, 2> intensity_centroid(const Tensor<float>& rgb, double threshold = 0.15)
{
    const std::size_t H = rgb.dim(1), W = rgb.dim(2), hw = H * W;
    double sx = 0, sy = 0, sw = 0;
    for (std::size_t v = 0; v < H; ++v)
        for (std::size_t u = 0; u < W; ++u) {
            const std::size_t i = v * W + u;
            const double I = (rgb[i] + rgb[hw + i] + rgb[2 * hw + i]) / 3.0;
            if (I <= threshold) continue;
            sx += I * (u + 0.5);
            sy += I * (v + 0.5);
            sw += I;
        }
    if (sw == 0) return {0.5 * W, 0.5 * H};
    return {sx / sw, sy / sw};
}

using CentroidTrack = std::vector<std::array<double, 2>>;

inline CentroidTrack centroid_track(const LatentCodec& codec, const Tensor<float>& z, double threshold = 0.15)
{
    CentroidTrack out;
    for (const auto& f : codec.decode(z)) out.push_back(intensity_centroid(f, threshold));
    return out;
}

/// Mean squared per-frame centroid distance in pixels².
inline double track_mse(const CentroidTrack& a, const CentroidTrack& b)
{
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("track_mse: track lengths differ");
    double s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double dx = a[k][0] - b[k][0], dy = a[k][1] - b[k][1];
        s += dx * dx + dy * dy;
    }
    return s / static_cast<double>(a.size());
}

inline double path_length(const CentroidTrack& t)
{
    double s = 0;
    for (std::size_t k = 1; k < t.size(); ++k) s += std::hypot(t[k][0] - t[k - 1][0], t[k][1] - t[k - 1][1]);
    return s;
}

/// Generated path length over source path length.
inline double range_ratio(const CentroidTrack& generated, const CentroidTrack& source)
{
    const double src = path_length(source);
    if (!(src > 0)) throw std::invalid_argument("range_ratio: source track does not move");
    return path_length(generated) / src;
}

}  // namespace mglab
