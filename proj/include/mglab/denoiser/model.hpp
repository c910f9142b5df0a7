#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "mglab/numerics/layers.hpp"
#include "mglab/numerics/params.hpp"
#include "mglab/numerics/rng.hpp"
#include "mglab/numerics/tensor.hpp"

namespace mglab {

struct DenoiserConfig {
    std::size_t latent_channels = 4;  ///< C
    std::size_t width = 32;           ///< D, token width inside the blocks
    std::size_t blocks = 2;
    std::size_t mlp_hidden = 64;
    std::size_t concepts = 2;
    std::size_t timesteps = 100;
    bool token_positions = true;  ///< add a fixed 2D sinusoidal code to every token

    void validate() const
    {
        if (!latent_channels || !width || !blocks || !mlp_hidden || !concepts || !timesteps)
            throw std::invalid_argument("denoiser: every size in the config must be >= 1");
        if (token_positions && width % 4)
            throw std::invalid_argument("denoiser: token positions need a width divisible by 4");
    }
};

/// [h·w, D] sinusoidal code of each latent cell: D/4 frequencies, sin and cos
/// of the normalized x then y coordinate.
template <typename T>
Tensor<T> token_position_code(std::size_t h, std::size_t w, std::size_t D)
{
    const std::size_t F = D / 4;
    Tensor<T> out({h * w, D});
    for (std::size_t k = 0; k < F; ++k) {
        const double e = F > 1 ? static_cast<double>(k) / static_cast<double>(F - 1) : 0.0;
        const double omega = std::numbers::pi * std::pow(8.0, e);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double nx = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
                const double ny = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
                T* row = out.ptr() + (y * w + x) * D;
                row[2 * k] = static_cast<T>(std::sin(omega * nx));
                row[2 * k + 1] = static_cast<T>(std::cos(omega * nx));
                row[2 * F + 2 * k] = static_cast<T>(std::sin(omega * ny));
                row[2 * F + 2 * k + 1] = static_cast<T>(std::cos(omega * ny));
            }
    }
    return out;
}

inline std::string block_param(std::size_t b, const std::string& leaf)
{
    return "den.block" + std::to_string(b) + "." + leaf;
}

/// Seeded denoiser parameters. Linear weights are uniform in ±1/sqrt(fan_in),
/// the timestep table starts sinusoidal, concepts start N(0, 0.5²).
template <typename T>
ParamSet<T> denoiser_init(const DenoiserConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    Rng rng = substream(seed, "init/den");
    const std::size_t C = cfg.latent_channels, D = cfg.width, H = cfg.mlp_hidden;
    auto lin = [&](std::size_t out, std::size_t in) {
        const double b = 1.0 / std::sqrt(static_cast<double>(in));
        return random_uniform<T>({out, in}, rng, -b, b);
    };
    ParamSet<T> p;
    p.add("den.in.weight", lin(D, C));
    p.add("den.out.weight", lin(C, D));
    Tensor<T> time({cfg.timesteps, D});
    for (std::size_t t = 0; t < cfg.timesteps; ++t)
        for (std::size_t i = 0; i < D / 2; ++i) {
            const double f = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(D));
            time[t * D + 2 * i] = static_cast<T>(std::sin(static_cast<double>(t + 1) * f));
            time[t * D + 2 * i + 1] = static_cast<T>(std::cos(static_cast<double>(t + 1) * f));
        }
    p.add("den.time", std::move(time));
    p.add("den.concept", random_normal<T>({cfg.concepts, D}, rng, 0.5));
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        for (const char* sub : {"spatial", "temporal"})
            for (const char* w : {"q", "k", "v", "o"})
                p.add(block_param(b, std::string(sub) + "." + w + ".weight"), lin(D, D));
        p.add(block_param(b, "mlp.w1"), lin(H, D));
        p.add(block_param(b, "mlp.b1"), Tensor<T>({H}));
        p.add(block_param(b, "mlp.w2"), lin(D, H));
        p.add(block_param(b, "mlp.b2"), Tensor<T>({D}));
    }
    return p;
}

inline bool ends_with(const std::string& s, const std::string& tail)
{
    return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

/// Fine-tuning split: spatial W^Q, temporal W^V and every MotionGuide tensor
/// train; everything else is frozen.
inline bool finetune_trainable(const std::string& name)
{
    return ends_with(name, ".spatial.q.weight") || ends_with(name, ".temporal.v.weight") || name.rfind("mg.", 0) == 0;
}

template <typename T>
void apply_finetune_split(ParamSet<T>& p)
{
    for (auto& [name, e] : p.entries()) e.trainable = finetune_trainable(name);
}

namespace detail {

template <typename T>
Tensor<T> take_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows, std::size_t width)
{
    Tensor<T> out({rows.size(), width});
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(x.ptr() + rows[r] * width, x.ptr() + (rows[r] + 1) * width, out.ptr() + r * width);
    return out;
}

template <typename T>
void put_rows(Tensor<T>& x, const std::vector<std::size_t>& rows, const Tensor<T>& src, std::size_t width)
{
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(src.ptr() + r * width, src.ptr() + (r + 1) * width, x.ptr() + rows[r] * width);
}

template <typename T>
void add_rows(Tensor<T>& x, const std::vector<std::size_t>& rows, const Tensor<T>& src, std::size_t width)
{
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < width; ++c) x[rows[r] * width + c] += src[r * width + c];
}

inline std::vector<std::size_t> frame_rows(std::size_t frame, std::size_t P)
{
    std::vector<std::size_t> rows(P);
    for (std::size_t p = 0; p < P; ++p) rows[p] = frame * P + p;
    return rows;
}

}  // namespace detail

/// Frames whose tokens serve as keys/values for queries of frame i: the first
/// frame and the previous one (just the first for i <= 1).
inline std::vector<std::size_t> sparse_causal_frames(std::size_t i)
{
    if (i <= 1) return {0};
    return {0, i - 1};
}

/// Spatial attention where frame i attends over the tokens of the first and
/// previous frame. Tokens are rows of [N·P, D], frame-major.
template <typename T>
class SparseCausalAttention {
public:
    explicit SparseCausalAttention(std::string prefix = "spatial") : prefix_(std::move(prefix)) { }

    Tensor<T> forward(const Tensor<T>& h, std::size_t N, std::size_t P, const ParamSet<T>& p)
    {
        N_ = N;
        P_ = P;
        D_ = h.dim(1);
        auto Q = q_.forward(h, p.value(prefix_ + ".q.weight"));
        auto K = k_.forward(h, p.value(prefix_ + ".k.weight"));
        auto V = v_.forward(h, p.value(prefix_ + ".v.weight"));
        Tensor<T> A({N * P, D_});
        attn_.assign(N, SoftmaxAttention<T>{});
        for (std::size_t i = 0; i < N; ++i) {
            const auto qrows = detail::frame_rows(i, P);
            std::vector<std::size_t> kv;
            for (std::size_t f : sparse_causal_frames(i)) {
                const auto r = detail::frame_rows(f, P);
                kv.insert(kv.end(), r.begin(), r.end());
            }
            auto a = attn_[i].forward(detail::take_rows(Q, qrows, D_), detail::take_rows(K, kv, D_),
                                      detail::take_rows(V, kv, D_));
            detail::put_rows(A, qrows, a, D_);
        }
        return o_.forward(A, p.value(prefix_ + ".o.weight"));
    }

    Tensor<T> backward(const Tensor<T>& upstream, ParamSet<T>& p) const
    {
        auto go = o_.backward(upstream);
        p.accumulate(prefix_ + ".o.weight", go.weight);
        Tensor<T> dQ({N_ * P_, D_}), dK({N_ * P_, D_}), dV({N_ * P_, D_});
        for (std::size_t i = 0; i < N_; ++i) {
            const auto qrows = detail::frame_rows(i, P_);
            std::vector<std::size_t> kv;
            for (std::size_t f : sparse_causal_frames(i)) {
                const auto r = detail::frame_rows(f, P_);
                kv.insert(kv.end(), r.begin(), r.end());
            }
            auto g = attn_[i].backward(detail::take_rows(go.input, qrows, D_));
            detail::add_rows(dQ, qrows, g.q, D_);
            detail::add_rows(dK, kv, g.k, D_);
            detail::add_rows(dV, kv, g.v, D_);
        }
        auto gq = q_.backward(dQ), gk = k_.backward(dK), gv = v_.backward(dV);
        p.accumulate(prefix_ + ".q.weight", gq.weight);
        p.accumulate(prefix_ + ".k.weight", gk.weight);
        p.accumulate(prefix_ + ".v.weight", gv.weight);
        gq.input += gk.input;
        gq.input += gv.input;
        return gq.input;
    }

    const std::vector<SoftmaxAttention<T>>& attention() const { return attn_; }

private:
    std::string prefix_;
    std::size_t N_ = 0, P_ = 0, D_ = 0;
    Linear<T> q_, k_, v_, o_;
    std::vector<SoftmaxAttention<T>> attn_;
};

/// Self-attention across frames at each spatial position, with the motion
/// embedding added to the value input: V = W^V (h + λ M), M's row for frame
/// n broadcast over that frame's positions.
template <typename T>
class TemporalAttention {
public:
    explicit TemporalAttention(std::string prefix = "temporal") : prefix_(std::move(prefix)) { }

    Tensor<T> forward(const Tensor<T>& h, std::size_t N, std::size_t P, const Tensor<T>* M, double lambda,
                      const ParamSet<T>& p)
    {
        N_ = N;
        P_ = P;
        D_ = h.dim(1);
        if (M && (M->rank() != 2 || M->dim(0) != N || M->dim(1) != D_))
            throw std::invalid_argument("temporal attention: motion embedding " + dims_string(M->dims())
                                        + " does not match [" + std::to_string(N) + "," + std::to_string(D_) + "]");
        injected_ = M != nullptr && lambda != 0.0;
        lambda_ = lambda;
        auto Q = q_.forward(h, p.value(prefix_ + ".q.weight"));
        auto K = k_.forward(h, p.value(prefix_ + ".k.weight"));
        Tensor<T> V;
        if (injected_) {
            Tensor<T> hv = h;
            const T l = static_cast<T>(lambda);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t q = 0; q < P; ++q)
                    for (std::size_t c = 0; c < D_; ++c) hv[(n * P + q) * D_ + c] += l * (*M)[n * D_ + c];
            V = v_.forward(hv, p.value(prefix_ + ".v.weight"));
        } else {
            V = v_.forward(h, p.value(prefix_ + ".v.weight"));
        }
        Tensor<T> A({N * P, D_});
        attn_.assign(P, SoftmaxAttention<T>{});
        for (std::size_t q = 0; q < P; ++q) {
            const auto rows = position_rows(q);
            auto a = attn_[q].forward(detail::take_rows(Q, rows, D_), detail::take_rows(K, rows, D_),
                                      detail::take_rows(V, rows, D_));
            detail::put_rows(A, rows, a, D_);
        }
        return o_.forward(A, p.value(prefix_ + ".o.weight"));
    }

    /// Returns dL/dh; adds dL/dM into `dM` when the embedding was injected.
    Tensor<T> backward(const Tensor<T>& upstream, ParamSet<T>& p, Tensor<T>* dM) const
    {
        auto go = o_.backward(upstream);
        p.accumulate(prefix_ + ".o.weight", go.weight);
        Tensor<T> dQ({N_ * P_, D_}), dK({N_ * P_, D_}), dV({N_ * P_, D_});
        for (std::size_t q = 0; q < P_; ++q) {
            const auto rows = position_rows(q);
            auto g = attn_[q].backward(detail::take_rows(go.input, rows, D_));
            detail::put_rows(dQ, rows, g.q, D_);
            detail::put_rows(dK, rows, g.k, D_);
            detail::put_rows(dV, rows, g.v, D_);
        }
        auto gq = q_.backward(dQ), gk = k_.backward(dK), gv = v_.backward(dV);
        p.accumulate(prefix_ + ".q.weight", gq.weight);
        p.accumulate(prefix_ + ".k.weight", gk.weight);
        p.accumulate(prefix_ + ".v.weight", gv.weight);
        if (injected_ && dM) {
            const T l = static_cast<T>(lambda_);
            for (std::size_t n = 0; n < N_; ++n)
                for (std::size_t q = 0; q < P_; ++q)
                    for (std::size_t c = 0; c < D_; ++c) (*dM)[n * D_ + c] += l * gv.input[(n * P_ + q) * D_ + c];
        }
        gq.input += gk.input;
        gq.input += gv.input;
        return gq.input;
    }

    const std::vector<SoftmaxAttention<T>>& attention() const { return attn_; }

private:
    std::vector<std::size_t> position_rows(std::size_t q) const
    {
        std::vector<std::size_t> rows(N_);
        for (std::size_t n = 0; n < N_; ++n) rows[n] = n * P_ + q;
        return rows;
    }

    std::string prefix_;
    std::size_t N_ = 0, P_ = 0, D_ = 0;
    bool injected_ = false;
    double lambda_ = 0;
    Linear<T> q_, k_, v_, o_;
    std::vector<SoftmaxAttention<T>> attn_;
};

template <typename T>
class PointwiseMlp {
public:
    explicit PointwiseMlp(std::string prefix = "mlp") : prefix_(std::move(prefix)) { }

    Tensor<T> forward(const Tensor<T>& h, const ParamSet<T>& p)
    {
        auto a = l1_.forward(h, p.value(prefix_ + ".w1"), &p.value(prefix_ + ".b1"));
        return l2_.forward(act_.forward(a), p.value(prefix_ + ".w2"), &p.value(prefix_ + ".b2"));
    }

    Tensor<T> backward(const Tensor<T>& upstream, ParamSet<T>& p) const
    {
        auto g2 = l2_.backward(upstream);
        p.accumulate(prefix_ + ".w2", g2.weight);
        p.accumulate(prefix_ + ".b2", g2.bias);
        auto g1 = l1_.backward(act_.backward(g2.input));
        p.accumulate(prefix_ + ".w1", g1.weight);
        p.accumulate(prefix_ + ".b1", g1.bias);
        return g1.input;
    }

private:
    std::string prefix_;
    Linear<T> l1_, l2_;
    Silu<T> act_;
};

/// One residual block: h += spatial(h); h += temporal(h, M); h += mlp(h).
template <typename T>
struct DenoiserBlock {
    explicit DenoiserBlock(std::size_t b)
      : spatial(block_param(b, "spatial")), temporal(block_param(b, "temporal")), mlp(block_param(b, "mlp"))
    { }

    SparseCausalAttention<T> spatial;
    TemporalAttention<T> temporal;
    PointwiseMlp<T> mlp;
};

/// Noise predictor ε_θ(z_t; t, concept, M). Latents are [N,C,h,w]; each
/// latent cell is a token, lifted to width D by a pointwise projection.
template <typename T>
class Denoiser {
public:
    explicit Denoiser(DenoiserConfig cfg) : cfg_(cfg)
    {
        cfg_.validate();
        for (std::size_t b = 0; b < cfg_.blocks; ++b) blocks_.emplace_back(b);
    }

    const DenoiserConfig& config() const { return cfg_; }

    Tensor<T> forward(const Tensor<T>& z, std::size_t t, std::size_t concept_id, const Tensor<T>* M, double lambda,
                      const ParamSet<T>& p)
    {
        const std::size_t C = cfg_.latent_channels, D = cfg_.width;
        if (z.rank() != 4 || z.dim(1) != C)
            throw std::invalid_argument("denoiser: latents must be [N," + std::to_string(C) + ",h,w], got "
                                        + dims_string(z.dims()));
        if (t < 1 || t > cfg_.timesteps)
            throw std::out_of_range("denoiser: timestep " + std::to_string(t) + " outside [1,"
                                    + std::to_string(cfg_.timesteps) + "]");
        if (concept_id >= cfg_.concepts)
            throw std::invalid_argument("denoiser: unknown concept id " + std::to_string(concept_id));
        N_ = z.dim(0);
        P_ = z.dim(2) * z.dim(3);
        t_ = t;
        concept_ = concept_id;
        has_motion_ = M != nullptr;

        Tensor<T> x({N_ * P_, C});
        for (std::size_t n = 0; n < N_; ++n)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t q = 0; q < P_; ++q) x[(n * P_ + q) * C + c] = z[(n * C + c) * P_ + q];
        auto h = in_.forward(x, p.value("den.in.weight"));
        const auto& te = p.value("den.time");
        const auto& ce = p.value("den.concept");
        for (std::size_t r = 0; r < N_ * P_; ++r)
            for (std::size_t c = 0; c < D; ++c) h[r * D + c] += te[(t - 1) * D + c] + ce[concept_id * D + c];
        if (cfg_.token_positions) {
            const auto pos = token_position_code<T>(z.dim(2), z.dim(3), D);
            for (std::size_t n = 0; n < N_; ++n)
                for (std::size_t i = 0; i < P_ * D; ++i) h[n * P_ * D + i] += pos[i];
        }

        for (auto& b : blocks_) {
            h += b.spatial.forward(h, N_, P_, p);
            h += b.temporal.forward(h, N_, P_, M, lambda, p);
            h += b.mlp.forward(h, p);
        }
        auto y = out_.forward(h, p.value("den.out.weight"));
        Tensor<T> eps(z.dims());
        for (std::size_t n = 0; n < N_; ++n)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t q = 0; q < P_; ++q) eps[(n * C + c) * P_ + q] = y[(n * P_ + q) * C + c];
        ready_ = true;
        return eps;
    }

    /// Accumulates parameter gradients for dL/dε̂; returns dL/dM ([N,D], zero
    /// when no embedding was passed).
    Tensor<T> backward(const Tensor<T>& d_eps, ParamSet<T>& p) const
    {
        if (!ready_) throw std::logic_error("denoiser: backward called without a saved forward context");
        const std::size_t C = cfg_.latent_channels, D = cfg_.width;
        Tensor<T> dy({N_ * P_, C});
        for (std::size_t n = 0; n < N_; ++n)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t q = 0; q < P_; ++q) dy[(n * P_ + q) * C + c] = d_eps[(n * C + c) * P_ + q];
        auto go = out_.backward(dy);
        p.accumulate("den.out.weight", go.weight);
        Tensor<T> dh = std::move(go.input);
        Tensor<T> dM({N_, D});
        for (std::size_t b = blocks_.size(); b-- > 0;) {
            const auto& blk = blocks_[b];
            dh += blk.mlp.backward(dh, p);
            dh += blk.temporal.backward(dh, p, has_motion_ ? &dM : nullptr);
            dh += blk.spatial.backward(dh, p);
        }
        Tensor<T> dte(p.value("den.time").dims()), dce(p.value("den.concept").dims());
        for (std::size_t r = 0; r < N_ * P_; ++r)
            for (std::size_t c = 0; c < D; ++c) {
                dte[(t_ - 1) * D + c] += dh[r * D + c];
                dce[concept_ * D + c] += dh[r * D + c];
            }
        p.accumulate("den.time", dte);
        p.accumulate("den.concept", dce);
        auto gi = in_.backward(dh, false);
        p.accumulate("den.in.weight", gi.weight);
        return dM;
    }

    const std::vector<DenoiserBlock<T>>& blocks() const { return blocks_; }

private:
    DenoiserConfig cfg_;
    std::vector<DenoiserBlock<T>> blocks_;
    Linear<T> in_, out_;
    std::size_t N_ = 0, P_ = 0, t_ = 0, concept_ = 0;
    bool has_motion_ = false;
    bool ready_ = false;
};

}  // namespace mglab
