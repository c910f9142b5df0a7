#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mglab/numerics/gradcheck.hpp"
#include "mglab/numerics/layers.hpp"
#include "mglab/numerics/params.hpp"
#include "mglab/numerics/rng.hpp"
#include "mglab/numerics/tensor.hpp"
#include "mglab/scene/render.hpp"

namespace mglab {

/// How correspondence and depth maps are combined before the first convolution.
enum class InputMode { multiply, corr_only, depth_only, concat };

inline std::string to_string(InputMode m)
{
    switch (m) {
    case InputMode::multiply: return "multiply";
    case InputMode::corr_only: return "corr_only";
    case InputMode::depth_only: return "depth_only";
    case InputMode::concat: return "concat";
    }
    return "?";
}

inline InputMode input_mode_from_string(const std::string& s)
{
    if (s == "multiply") return InputMode::multiply;
    if (s == "corr_only") return InputMode::corr_only;
    if (s == "depth_only") return InputMode::depth_only;
    if (s == "concat") return InputMode::concat;
    throw std::invalid_argument("unknown input mode '" + s + "'");
}

inline std::size_t input_channels(InputMode m) { return m == InputMode::concat ? 4 : 3; }

/// Non-overlapping average pooling by an integer factor over [C,H,W].
template <typename T>
Tensor<T> downscale(const Tensor<T>& x, std::size_t factor)
{
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (factor == 0 || H % factor || W % factor)
        throw std::invalid_argument("downscale: " + dims_string(x.dims()) + " not divisible by "
                                    + std::to_string(factor));
    const std::size_t h = H / factor, w = W / factor;
    Tensor<T> out({C, h, w});
    const T inv = T(1) / static_cast<T>(factor * factor);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xo = 0; xo < w; ++xo) {
                T s = 0;
                for (std::size_t dy = 0; dy < factor; ++dy)
                    for (std::size_t dx = 0; dx < factor; ++dx) s += x.at(c, y * factor + dy, xo * factor + dx);
                out.at(c, y, xo) = s * inv;
            }
    return out;
}

/// Builds the MotionGuide input for one frame from corr [3,H,W] and depth [1,H,W].
template <typename T>
Tensor<T> preprocess_input(const Tensor<T>& corr, const Tensor<T>& depth, std::size_t scale, InputMode mode)
{
    if (corr.rank() != 3 || corr.dim(0) != 3 || depth.rank() != 3 || depth.dim(0) != 1
        || corr.dim(1) != depth.dim(1) || corr.dim(2) != depth.dim(2))
        throw std::invalid_argument("preprocess_input: expected corr [3,H,W] and depth [1,H,W], got "
                                    + dims_string(corr.dims()) + " and " + dims_string(depth.dims()));
    const std::size_t H = corr.dim(1), W = corr.dim(2), hw = H * W;
    Tensor<T> full({input_channels(mode), H, W});
    for (std::size_t i = 0; i < hw; ++i) {
        const T d = depth[i];
        switch (mode) {
        case InputMode::multiply:
            for (std::size_t c = 0; c < 3; ++c) full[c * hw + i] = corr[c * hw + i] * d;
            break;
        case InputMode::corr_only:
            for (std::size_t c = 0; c < 3; ++c) full[c * hw + i] = corr[c * hw + i];
            break;
        case InputMode::depth_only:
            for (std::size_t c = 0; c < 3; ++c) full[c * hw + i] = d;
            break;
        case InputMode::concat:
            for (std::size_t c = 0; c < 3; ++c) full[c * hw + i] = corr[c * hw + i];
            full[3 * hw + i] = d;
            break;
        }
    }
    return downscale(full, scale);
}

/// Per-video MotionGuide input: frames stacked as [N,Cin,h,w] plus occupancy ratios.
template <typename T>
struct MotionInputs {
    Tensor<T> frames;
    std::vector<double> alphas;
};

template <typename T>
MotionInputs<T> motion_inputs(const SyntheticVideo& video, InputMode mode, std::size_t scale = 8)
{
    if (video.frames.empty()) throw std::invalid_argument("motion_inputs: empty video");
    MotionInputs<T> in;
    std::vector<T> data;
    Dims fd;
    for (const auto& f : video.frames) {
        auto x = preprocess_input(f.corr.cast<T>(), f.depth.cast<T>(), scale, mode);
        fd = x.dims();
        data.insert(data.end(), x.data().begin(), x.data().end());
        in.alphas.push_back(f.alpha);
    }
    in.frames = Tensor<T>({video.size(), fd[0], fd[1], fd[2]}, std::move(data));
    return in;
}

inline constexpr std::size_t kPositionalChannels = 64;

/// Fixed 2D sinusoidal encoding [64,h,w]. Channels 0..31 depend on x only:
/// (sin, cos) of ω_k·x for 16 frequencies ω_k = π·8^(k/15); channels 32..63 are
/// the same ladder over y. Coordinates are pixel centres normalized to [0,1].
template <typename T>
Tensor<T> positional_encoding(std::size_t h, std::size_t w)
{
    if (h == 0 || w == 0) throw std::invalid_argument("positional_encoding: empty grid");
    constexpr std::size_t freqs = kPositionalChannels / 4;
    Tensor<T> pe({kPositionalChannels, h, w});
    for (std::size_t k = 0; k < freqs; ++k) {
        const double omega = std::numbers::pi * std::pow(8.0, static_cast<double>(k) / (freqs - 1));
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double nx = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
                const double ny = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
                pe.at(2 * k, y, x) = static_cast<T>(std::sin(omega * nx));
                pe.at(2 * k + 1, y, x) = static_cast<T>(std::cos(omega * nx));
                pe.at(2 * freqs + 2 * k, y, x) = static_cast<T>(std::sin(omega * ny));
                pe.at(2 * freqs + 2 * k + 1, y, x) = static_cast<T>(std::cos(omega * ny));
            }
    }
    return pe;
}

struct MotionGuideConfig {
    std::size_t in_channels = 3;
    std::size_t conv1_channels = 64;
    std::size_t conv2_channels = 256;
    std::size_t kernel = 3;
    std::size_t out_dim = 64;  ///< d, width of the per-frame embedding
    bool head_bias = false;
    bool zero_init_head = true;
};

/// Seeded parameters under `prefix`: conv1.weight, conv2.weight, head.weight
/// (and head.bias when enabled). Convolutions carry no bias.
template <typename T>
ParamSet<T> motionguide_init(const MotionGuideConfig& cfg, std::uint64_t seed, const std::string& prefix = "mg")
{
    if (cfg.out_dim == 0) throw std::invalid_argument("motionguide_init: embedding width must be >= 1");
    Rng rng = substream(seed, "init/" + prefix);
    const std::size_t k = cfg.kernel;
    const std::size_t cat = cfg.conv1_channels + kPositionalChannels;
    ParamSet<T> p;
    p.add(prefix + ".conv1.weight",
          kaiming_uniform<T>({cfg.conv1_channels, cfg.in_channels, k, k}, cfg.in_channels * k * k, rng));
    p.add(prefix + ".conv2.weight", kaiming_uniform<T>({cfg.conv2_channels, cat, k, k}, cat * k * k, rng));
    if (cfg.zero_init_head) {
        p.add(prefix + ".head.weight", Tensor<T>({cfg.out_dim, cfg.conv2_channels}));
    } else {
        const double b = 1.0 / std::sqrt(static_cast<double>(cfg.conv2_channels));
        p.add(prefix + ".head.weight", random_uniform<T>({cfg.out_dim, cfg.conv2_channels}, rng, -b, b));
    }
    if (cfg.head_bias) p.add(prefix + ".head.bias", Tensor<T>({cfg.out_dim}));
    return p;
}

/// The MotionGuide network: conv → ReLU → concat P → conv → ReLU → spatial
/// mean → ÷α → linear head. Frames are processed as one batch.
template <typename T>
class MotionGuide {
public:
    explicit MotionGuide(MotionGuideConfig cfg, std::string prefix = "mg")
      : cfg_(cfg), prefix_(std::move(prefix))
    { }

    const MotionGuideConfig& config() const { return cfg_; }
    const std::string& prefix() const { return prefix_; }
    std::string name(const char* leaf) const { return prefix_ + "." + leaf; }

    /// Replaces the positional encoding used for grids of the given size.
    void set_positional_encoding(Tensor<T> pe) { pe_ = std::move(pe); }

    /// inputs [N,Cin,h,w], one α per frame; returns the embedding [N,d].
    Tensor<T> forward(const Tensor<T>& inputs, std::span<const double> alphas, const ParamSet<T>& params)
    {
        if (inputs.rank() != 4) throw std::invalid_argument("motionguide: inputs must be [N,Cin,h,w]");
        const std::size_t N = inputs.dim(0), h = inputs.dim(2), w = inputs.dim(3);
        if (alphas.size() != N)
            throw std::invalid_argument("motionguide: " + std::to_string(alphas.size()) + " alphas for "
                                        + std::to_string(N) + " frames");
        for (double a : alphas)
            if (!(a > 0.0) || a > 1.0) throw std::invalid_argument("motionguide: alpha must lie in (0,1]");
        if (pe_.empty() || pe_.dim(1) != h || pe_.dim(2) != w) pe_ = positional_encoding<T>(h, w);
        alphas_.assign(alphas.begin(), alphas.end());

        auto a1 = conv1_.forward(inputs, params.value(name("conv1.weight")));
        auto r1 = relu1_.forward(a1);

        const std::size_t c1 = r1.dim(1), hw = h * w, cat_c = c1 + kPositionalChannels;
        Tensor<T> cat({N, cat_c, h, w});
        for (std::size_t n = 0; n < N; ++n) {
            std::copy(r1.ptr() + n * c1 * hw, r1.ptr() + (n + 1) * c1 * hw, cat.ptr() + n * cat_c * hw);
            std::copy(pe_.ptr(), pe_.ptr() + pe_.size(), cat.ptr() + n * cat_c * hw + c1 * hw);
        }
        auto a2 = conv2_.forward(cat, params.value(name("conv2.weight")));
        auto r2 = relu2_.forward(a2);
        pooled_ = pool_.forward(r2);  // [N,C2]

        scaled_ = pooled_;
        const std::size_t c2 = pooled_.dim(1);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < c2; ++c) scaled_[n * c2 + c] = pooled_[n * c2 + c] / static_cast<T>(alphas_[n]);

        const Tensor<T>* bias = cfg_.head_bias ? &params.value(name("head.bias")) : nullptr;
        ready_ = true;
        return head_.forward(scaled_, params.value(name("head.weight")), bias);
    }

    /// Accumulates parameter gradients for upstream dL/dM [N,d].
    void backward(const Tensor<T>& upstream, ParamSet<T>& params) const
    {
        if (!ready_) throw std::logic_error("motionguide: backward called without a saved forward context");
        auto gh = head_.backward(upstream);
        params.accumulate(name("head.weight"), gh.weight);
        if (cfg_.head_bias) params.accumulate(name("head.bias"), gh.bias);

        Tensor<T> dpooled = gh.input;
        const std::size_t N = dpooled.dim(0), c2 = dpooled.dim(1);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < c2; ++c) dpooled[n * c2 + c] /= static_cast<T>(alphas_[n]);

        auto dr2 = pool_.backward(dpooled);
        auto da2 = relu2_.backward(dr2);
        auto g2 = conv2_.backward(da2, true);
        params.accumulate(name("conv2.weight"), g2.weight);

        // The positional channels are fixed; only the conv1 half flows back.
        const std::size_t cat_c = g2.input.dim(1), h = g2.input.dim(2), w = g2.input.dim(3), hw = h * w;
        const std::size_t c1 = cat_c - kPositionalChannels;
        Tensor<T> dr1({N, c1, h, w});
        for (std::size_t n = 0; n < N; ++n)
            std::copy(g2.input.ptr() + n * cat_c * hw, g2.input.ptr() + n * cat_c * hw + c1 * hw,
                      dr1.ptr() + n * c1 * hw);
        auto da1 = relu1_.backward(dr1);
        auto g1 = conv1_.backward(da1, false);
        params.accumulate(name("conv1.weight"), g1.weight);
    }

    /// Pooled, α-normalized activations [N,C2] that feed the head.
    const Tensor<T>& pre_head() const { return scaled_; }

    /// Fingerprint of the ReLU sign patterns of the last forward.
    std::uint64_t activation_pattern() const { return hash_pattern(relu2_.pattern(), hash_pattern(relu1_.pattern())); }

private:
    MotionGuideConfig cfg_;
    std::string prefix_;
    Tensor<T> pe_;
    std::vector<double> alphas_;
    bool ready_ = false;
    Conv2d<T> conv1_, conv2_;
    Relu<T> relu1_, relu2_;
    SpatialAvgPool<T> pool_;
    Tensor<T> pooled_, scaled_;
    Linear<T> head_;
};

/// Finite-difference check of the full module: loss = <M, R> over a 2-frame
/// 8x8 input, differentiated with respect to every parameter tensor.
inline void register_motionguide_checks(GradCheckRegistry& reg)
{
    reg.add("motionguide",
            [](const std::vector<Dims>& shapes, Rng& rng) {
                const Dims in = shapes.at(0);
                MotionGuideConfig cfg;
                cfg.in_channels = in.at(1);
                cfg.out_dim = 8;
                cfg.zero_init_head = false;
                auto params = motionguide_init<double>(cfg, 3);
                auto x = random_uniform<double>(in, rng, 0.0, 1.0);
                std::vector<double> alphas(in[0]);
                for (auto& a : alphas) a = std::uniform_real_distribution<double>(0.2, 1.0)(rng);
                auto cot = random_uniform<double>({in[0], cfg.out_dim}, rng);

                GradProblem p;
                p.names = params.names();
                for (const auto& n : p.names) p.inputs.push_back(params.value(n));
                auto rebuild = [cfg, names = p.names](const std::vector<Tensor<double>>& v) {
                    ParamSet<double> ps;
                    for (std::size_t i = 0; i < names.size(); ++i) ps.add(names[i], v[i]);
                    return ps;
                };
                p.eval = [=](const std::vector<Tensor<double>>& v) {
                    MotionGuide<double> mg(cfg);
                    auto ps = rebuild(v);
                    auto m = mg.forward(x, alphas, ps);
                    return GradEval{detail::contract(m, cot), mg.activation_pattern()};
                };
                p.gradient = [=](const std::vector<Tensor<double>>& v) {
                    MotionGuide<double> mg(cfg);
                    auto ps = rebuild(v);
                    mg.forward(x, alphas, ps);
                    mg.backward(cot, ps);
                    std::vector<Tensor<double>> g;
                    for (const auto& n : p.names) g.push_back(ps.grad(n));
                    return g;
                };
                return p;
            },
            {{2, 3, 8, 8}}, 1e-6);
}

}  // namespace mglab
