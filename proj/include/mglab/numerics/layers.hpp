#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "mglab/numerics/gemm.hpp"
#include "mglab/numerics/tensor.hpp"

// Differentiable layers with explicit backward passes. Each layer object saves
// what its backward needs during forward(); calling backward() without a prior
// forward() throws std::logic_error.

namespace mglab {

namespace detail {

inline void require_context(bool ready, const char* layer)
{
    if (!ready)
        throw std::logic_error(std::string(layer) + ": backward called without a saved forward context");
}

}  // namespace detail

template <typename T>
struct Conv2dGrads {
    Tensor<T> input;  ///< empty when not requested
    Tensor<T> weight;
    Tensor<T> bias;   ///< empty when the forward pass had no bias
};

/// Stride-1 "same" cross-correlation with zero padding. Accepts a single image
/// [Cin,H,W] or a batch [B,Cin,H,W]; the output has the same rank.
template <typename T>
class Conv2d {
public:
    Tensor<T> forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias = nullptr)
    {
        if (weight.rank() != 4)
            throw std::invalid_argument("conv2d: weight must be [Cout,Cin,kh,kw], got " + dims_string(weight.dims()));
        if (input.rank() != 3 && input.rank() != 4)
            throw std::invalid_argument("conv2d: input must be [Cin,H,W] or [B,Cin,H,W], got "
                                        + dims_string(input.dims()));
        batched_ = input.rank() == 4;
        const std::size_t o = batched_ ? 1 : 0;
        batch_ = batched_ ? input.dim(0) : 1;
        cin_ = input.dim(o);
        h_ = input.dim(o + 1);
        w_ = input.dim(o + 2);
        cout_ = weight.dim(0);
        kh_ = weight.dim(2);
        kw_ = weight.dim(3);
        if (weight.dim(1) != cin_)
            throw std::invalid_argument("conv2d: input has " + std::to_string(cin_) + " channels but weight expects "
                                        + std::to_string(weight.dim(1)));
        if (kh_ % 2 == 0 || kw_ % 2 == 0)
            throw std::invalid_argument("conv2d: kernel dims must be odd, got " + dims_string(weight.dims()));
        has_bias_ = bias != nullptr;
        if (has_bias_ && (bias->rank() != 1 || bias->dim(0) != cout_))
            throw std::invalid_argument("conv2d: bias must be [Cout], got " + dims_string(bias->dims()));

        weight_ = weight;
        im2col(input);

        const std::size_t hw = h_ * w_;
        const std::size_t cols = batch_ * hw;
        std::vector<T> tmp(cout_ * cols, T(0));
        gemm::nn(cout_, cols, cin_ * kh_ * kw_, weight.ptr(), cols_.data(), tmp.data());

        Tensor<T> out(batched_ ? Dims{batch_, cout_, h_, w_} : Dims{cout_, h_, w_});
        for (std::size_t b = 0; b < batch_; ++b)
            for (std::size_t co = 0; co < cout_; ++co) {
                const T bv = has_bias_ ? (*bias)[co] : T(0);
                const T* src = tmp.data() + co * cols + b * hw;
                T* dst = out.ptr() + (b * cout_ + co) * hw;
                for (std::size_t p = 0; p < hw; ++p) dst[p] = src[p] + bv;
            }
        ready_ = true;
        return out;
    }

    Conv2dGrads<T> backward(const Tensor<T>& upstream, bool want_input_grad = true) const
    {
        detail::require_context(ready_, "conv2d");
        const Dims expect = batched_ ? Dims{batch_, cout_, h_, w_} : Dims{cout_, h_, w_};
        if (upstream.dims() != expect)
            throw std::invalid_argument("conv2d backward: upstream " + dims_string(upstream.dims())
                                        + " does not match output " + dims_string(expect));
        const std::size_t hw = h_ * w_;
        const std::size_t cols = batch_ * hw;
        const std::size_t kdim = cin_ * kh_ * kw_;

        // Gather the upstream into [Cout, B*HW] to line up with the column matrix.
        std::vector<T> up(cout_ * cols);
        for (std::size_t b = 0; b < batch_; ++b)
            for (std::size_t co = 0; co < cout_; ++co) {
                const T* src = upstream.ptr() + (b * cout_ + co) * hw;
                std::copy(src, src + hw, up.data() + co * cols + b * hw);
            }

        Conv2dGrads<T> g;
        g.weight = Tensor<T>(weight_.dims());
        gemm::nt(cout_, kdim, cols, up.data(), cols_.data(), g.weight.ptr());

        if (has_bias_) {
            g.bias = Tensor<T>({cout_});
            for (std::size_t co = 0; co < cout_; ++co) {
                T s = 0;
                for (std::size_t p = 0; p < cols; ++p) s += up[co * cols + p];
                g.bias[co] = s;
            }
        }

        if (want_input_grad) {
            std::vector<T> gcols(kdim * cols, T(0));
            gemm::tn(kdim, cols, cout_, weight_.ptr(), up.data(), gcols.data());
            g.input = Tensor<T>(batched_ ? Dims{batch_, cin_, h_, w_} : Dims{cin_, h_, w_});
            col2im(gcols, g.input);
        }
        return g;
    }

    bool has_context() const { return ready_; }

private:
    void im2col(const Tensor<T>& input)
    {
        const std::size_t hw = h_ * w_;
        const std::size_t cols = batch_ * hw;
        const long ph = static_cast<long>(kh_ / 2), pw = static_cast<long>(kw_ / 2);
        cols_.assign(cin_ * kh_ * kw_ * cols, T(0));
        for (std::size_t c = 0; c < cin_; ++c)
            for (std::size_t ky = 0; ky < kh_; ++ky)
                for (std::size_t kx = 0; kx < kw_; ++kx) {
                    T* row = cols_.data() + ((c * kh_ + ky) * kw_ + kx) * cols;
                    for (std::size_t b = 0; b < batch_; ++b) {
                        const T* img = input.ptr() + (b * cin_ + c) * hw;
                        for (std::size_t y = 0; y < h_; ++y) {
                            const long sy = static_cast<long>(y) + static_cast<long>(ky) - ph;
                            if (sy < 0 || sy >= static_cast<long>(h_)) continue;
                            for (std::size_t x = 0; x < w_; ++x) {
                                const long sx = static_cast<long>(x) + static_cast<long>(kx) - pw;
                                if (sx < 0 || sx >= static_cast<long>(w_)) continue;
                                row[b * hw + y * w_ + x] = img[sy * static_cast<long>(w_) + sx];
                            }
                        }
                    }
                }
    }

    void col2im(const std::vector<T>& gcols, Tensor<T>& gin) const
    {
        const std::size_t hw = h_ * w_;
        const std::size_t cols = batch_ * hw;
        const long ph = static_cast<long>(kh_ / 2), pw = static_cast<long>(kw_ / 2);
        for (std::size_t c = 0; c < cin_; ++c)
            for (std::size_t ky = 0; ky < kh_; ++ky)
                for (std::size_t kx = 0; kx < kw_; ++kx) {
                    const T* row = gcols.data() + ((c * kh_ + ky) * kw_ + kx) * cols;
                    for (std::size_t b = 0; b < batch_; ++b) {
                        T* img = gin.ptr() + (b * cin_ + c) * hw;
                        for (std::size_t y = 0; y < h_; ++y) {
                            const long sy = static_cast<long>(y) + static_cast<long>(ky) - ph;
                            if (sy < 0 || sy >= static_cast<long>(h_)) continue;
                            for (std::size_t x = 0; x < w_; ++x) {
                                const long sx = static_cast<long>(x) + static_cast<long>(kx) - pw;
                                if (sx < 0 || sx >= static_cast<long>(w_)) continue;
                                img[sy * static_cast<long>(w_) + sx] += row[b * hw + y * w_ + x];
                            }
                        }
                    }
                }
    }

    bool ready_ = false;
    bool batched_ = false;
    bool has_bias_ = false;
    std::size_t batch_ = 0, cin_ = 0, h_ = 0, w_ = 0, cout_ = 0, kh_ = 0, kw_ = 0;
    Tensor<T> weight_;
    std::vector<T> cols_;
};

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias = nullptr)
{
    Conv2d<T> layer;
    return layer.forward(input, weight, bias);
}

template <typename T>
struct LinearGrads {
    Tensor<T> input;
    Tensor<T> weight;
    Tensor<T> bias;
};

/// y = x W^T + b along the last axis. weight is [Dout,Din].
template <typename T>
class Linear {
public:
    Tensor<T> forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias = nullptr)
    {
        if (weight.rank() != 2)
            throw std::invalid_argument("linear: weight must be [Dout,Din], got " + dims_string(weight.dims()));
        if (input.rank() < 1 || input.dims().back() != weight.dim(1))
            throw std::invalid_argument("linear: input " + dims_string(input.dims()) + " incompatible with weight "
                                        + dims_string(weight.dims()));
        dout_ = weight.dim(0);
        din_ = weight.dim(1);
        has_bias_ = bias != nullptr;
        if (has_bias_ && (bias->rank() != 1 || bias->dim(0) != dout_))
            throw std::invalid_argument("linear: bias must be [Dout], got " + dims_string(bias->dims()));
        rows_ = input.size() / din_;
        input_ = input;
        weight_ = weight;

        Dims od = input.dims();
        od.back() = dout_;
        Tensor<T> out(od);
        if (has_bias_)
            for (std::size_t r = 0; r < rows_; ++r)
                for (std::size_t o = 0; o < dout_; ++o) out[r * dout_ + o] = (*bias)[o];
        gemm::nt(rows_, dout_, din_, input.ptr(), weight.ptr(), out.ptr());
        ready_ = true;
        return out;
    }

    LinearGrads<T> backward(const Tensor<T>& upstream, bool want_input_grad = true) const
    {
        detail::require_context(ready_, "linear");
        if (upstream.size() != rows_ * dout_ || upstream.dims().back() != dout_)
            throw std::invalid_argument("linear backward: upstream " + dims_string(upstream.dims())
                                        + " does not match output");
        LinearGrads<T> g;
        g.weight = Tensor<T>(weight_.dims());
        gemm::tn(dout_, din_, rows_, upstream.ptr(), input_.ptr(), g.weight.ptr());
        if (has_bias_) {
            g.bias = Tensor<T>({dout_});
            for (std::size_t r = 0; r < rows_; ++r)
                for (std::size_t o = 0; o < dout_; ++o) g.bias[o] += upstream[r * dout_ + o];
        }
        if (want_input_grad) {
            g.input = Tensor<T>(input_.dims());
            gemm::nn(rows_, din_, dout_, upstream.ptr(), weight_.ptr(), g.input.ptr());
        }
        return g;
    }

    bool has_context() const { return ready_; }

private:
    bool ready_ = false;
    bool has_bias_ = false;
    std::size_t rows_ = 0, din_ = 0, dout_ = 0;
    Tensor<T> input_;
    Tensor<T> weight_;
};

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias = nullptr)
{
    Linear<T> layer;
    return layer.forward(input, weight, bias);
}

template <typename T>
class Relu {
public:
    Tensor<T> forward(const Tensor<T>& x)
    {
        Tensor<T> y = x;
        active_.assign(x.size(), 0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] > T(0))
                active_[i] = 1;
            else
                y[i] = T(0);
        }
        dims_ = x.dims();
        ready_ = true;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& upstream) const
    {
        detail::require_context(ready_, "relu");
        if (upstream.dims() != dims_) throw std::invalid_argument("relu backward: dims mismatch");
        Tensor<T> g = upstream;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!active_[i]) g[i] = T(0);
        return g;
    }

    /// Sign pattern of the last forward; gradient checks use it to detect
    /// finite-difference probes that straddle a kink.
    const std::vector<unsigned char>& pattern() const { return active_; }

private:
    bool ready_ = false;
    Dims dims_;
    std::vector<unsigned char> active_;
};

/// x * sigmoid(x)
template <typename T>
class Silu {
public:
    Tensor<T> forward(const Tensor<T>& x)
    {
        x_ = x;
        Tensor<T> y = x;
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / (T(1) + std::exp(-x[i]));
        ready_ = true;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& upstream) const
    {
        detail::require_context(ready_, "silu");
        if (upstream.dims() != x_.dims()) throw std::invalid_argument("silu backward: dims mismatch");
        Tensor<T> g = upstream;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T s = T(1) / (T(1) + std::exp(-x_[i]));
            g[i] *= s * (T(1) + x_[i] * (T(1) - s));
        }
        return g;
    }

private:
    bool ready_ = false;
    Tensor<T> x_;
};

/// Per-channel mean over the two trailing spatial axes: [C,H,W] -> [C] or
/// [B,C,H,W] -> [B,C].
template <typename T>
class SpatialAvgPool {
public:
    Tensor<T> forward(const Tensor<T>& x)
    {
        if (x.rank() != 3 && x.rank() != 4)
            throw std::invalid_argument("avg_pool_spatial: expected [C,H,W] or [B,C,H,W], got " + dims_string(x.dims()));
        in_dims_ = x.dims();
        hw_ = x.dim(x.rank() - 1) * x.dim(x.rank() - 2);
        Dims od(in_dims_.begin(), in_dims_.end() - 2);
        Tensor<T> y(od);
        for (std::size_t c = 0; c < y.size(); ++c) {
            T s = 0;
            const T* p = x.ptr() + c * hw_;
            for (std::size_t i = 0; i < hw_; ++i) s += p[i];
            y[c] = s / static_cast<T>(hw_);
        }
        ready_ = true;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& upstream) const
    {
        detail::require_context(ready_, "avg_pool_spatial");
        if (upstream.size() * hw_ != dims_product(in_dims_))
            throw std::invalid_argument("avg_pool_spatial backward: dims mismatch");
        Tensor<T> g(in_dims_);
        for (std::size_t c = 0; c < upstream.size(); ++c) {
            const T v = upstream[c] / static_cast<T>(hw_);
            T* p = g.ptr() + c * hw_;
            for (std::size_t i = 0; i < hw_; ++i) p[i] = v;
        }
        return g;
    }

private:
    bool ready_ = false;
    Dims in_dims_;
    std::size_t hw_ = 0;
};

template <typename T>
Tensor<T> avg_pool_spatial(const Tensor<T>& x)
{
    SpatialAvgPool<T> layer;
    return layer.forward(x);
}

template <typename T>
struct AttentionGrads {
    Tensor<T> q, k, v;
};

/// softmax(Q K^T / sqrt(d)) V for Q[n,d], K[m,d], V[m,dv].
template <typename T>
class SoftmaxAttention {
public:
    Tensor<T> forward(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v)
    {
        if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
            throw std::invalid_argument("softmax_attention: Q, K, V must be matrices");
        n_ = q.dim(0);
        d_ = q.dim(1);
        m_ = k.dim(0);
        dv_ = v.dim(1);
        if (k.dim(1) != d_ || v.dim(0) != m_)
            throw std::invalid_argument("softmax_attention: incompatible Q " + dims_string(q.dims()) + ", K "
                                        + dims_string(k.dims()) + ", V " + dims_string(v.dims()));
        require_finite(q, "softmax_attention Q");
        require_finite(k, "softmax_attention K");
        require_finite(v, "softmax_attention V");

        q_ = q;
        k_ = k;
        v_ = v;
        scale_ = T(1) / std::sqrt(static_cast<T>(d_));
        weights_ = Tensor<T>({n_, m_});
        gemm::nt(n_, m_, d_, q.ptr(), k.ptr(), weights_.ptr());
        for (std::size_t i = 0; i < n_; ++i) {
            T* row = weights_.ptr() + i * m_;
            T mx = row[0] * scale_;
            for (std::size_t j = 0; j < m_; ++j) {
                row[j] *= scale_;
                mx = std::max(mx, row[j]);
            }
            T s = 0;
            for (std::size_t j = 0; j < m_; ++j) {
                row[j] = std::exp(row[j] - mx);
                s += row[j];
            }
            for (std::size_t j = 0; j < m_; ++j) row[j] /= s;
        }
        Tensor<T> out({n_, dv_});
        gemm::nn(n_, dv_, m_, weights_.ptr(), v.ptr(), out.ptr());
        ready_ = true;
        return out;
    }

    AttentionGrads<T> backward(const Tensor<T>& upstream) const
    {
        detail::require_context(ready_, "softmax_attention");
        if (upstream.dims() != Dims{n_, dv_})
            throw std::invalid_argument("softmax_attention backward: upstream dims mismatch");
        AttentionGrads<T> g;
        g.v = Tensor<T>({m_, dv_});
        gemm::tn(m_, dv_, n_, weights_.ptr(), upstream.ptr(), g.v.ptr());

        Tensor<T> ds({n_, m_});
        gemm::nt(n_, m_, dv_, upstream.ptr(), v_.ptr(), ds.ptr());
        for (std::size_t i = 0; i < n_; ++i) {
            const T* a = weights_.ptr() + i * m_;
            T* r = ds.ptr() + i * m_;
            T dot = 0;
            for (std::size_t j = 0; j < m_; ++j) dot += a[j] * r[j];
            for (std::size_t j = 0; j < m_; ++j) r[j] = a[j] * (r[j] - dot) * scale_;
        }
        g.q = Tensor<T>({n_, d_});
        gemm::nn(n_, d_, m_, ds.ptr(), k_.ptr(), g.q.ptr());
        g.k = Tensor<T>({m_, d_});
        gemm::tn(m_, d_, n_, ds.ptr(), q_.ptr(), g.k.ptr());
        return g;
    }

    /// Row-stochastic attention weights [n,m] of the last forward.
    const Tensor<T>& weights() const { return weights_; }

private:
    bool ready_ = false;
    std::size_t n_ = 0, m_ = 0, d_ = 0, dv_ = 0;
    T scale_ = 1;
    Tensor<T> q_, k_, v_, weights_;
};

template <typename T>
Tensor<T> softmax_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v)
{
    SoftmaxAttention<T> layer;
    return layer.forward(q, k, v);
}

}  // namespace mglab
