#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mglab {

using Dims = std::vector<std::size_t>;

inline std::size_t dims_product(const Dims& dims)
{
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string dims_string(const Dims& dims)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i)
        os << (i ? "," : "") << dims[i];
    os << ']';
    return os.str();
}

/// Dense row-major tensor. `T` is float for experiments and double for
/// gradient verification.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Dims dims, T fill = T(0))
      : dims_(std::move(dims))
    {
        for (auto d : dims_)
            if (d == 0)
                throw std::invalid_argument("Tensor: zero-sized dimension in " + dims_string(dims_));
        data_.assign(dims_product(dims_), fill);
    }

    Tensor(Dims dims, std::vector<T> data)
      : dims_(std::move(dims)), data_(std::move(data))
    {
        if (data_.size() != dims_product(dims_))
            throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size())
                                        + " does not match dims " + dims_string(dims_));
    }

    Tensor(std::initializer_list<std::size_t> dims, std::initializer_list<T> values)
      : Tensor(Dims(dims), std::vector<T>(values))
    { }

    template <typename U>
    Tensor<U> cast() const
    {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(dims_, std::move(out));
    }

    const Dims& dims() const { return dims_; }
    std::size_t dim(std::size_t i) const { return dims_.at(i); }
    std::size_t rank() const { return dims_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* ptr() { return data_.data(); }
    const T* ptr() const { return data_.data(); }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    template <typename... Idx>
    T& at(Idx... idx) { return data_[offset(idx...)]; }
    template <typename... Idx>
    const T& at(Idx... idx) const { return data_[offset(idx...)]; }

    Tensor reshaped(Dims dims) const
    {
        if (dims_product(dims) != data_.size())
            throw std::invalid_argument("Tensor::reshaped: " + dims_string(dims_) + " -> " + dims_string(dims));
        return Tensor(std::move(dims), data_);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    T sum() const
    {
        T s = 0;
        for (T v : data_) s += v;
        return s;
    }

    T l2_norm() const
    {
        T s = 0;
        for (T v : data_) s += v * v;
        return std::sqrt(s);
    }

    T max_abs() const
    {
        T m = 0;
        for (T v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    Tensor& operator+=(const Tensor& o)
    {
        require_same_dims(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Tensor& operator-=(const Tensor& o)
    {
        require_same_dims(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }

    Tensor& operator*=(T s)
    {
        for (T& v : data_) v *= s;
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, T s) { return a *= s; }

    /// Exact equality of dims and of every stored bit pattern.
    bool bit_equal(const Tensor& o) const
    {
        if (dims_ != o.dims_) return false;
        return std::equal(data_.begin(), data_.end(), o.data_.begin(), [](T a, T b) {
            return std::memcmp(&a, &b, sizeof(T)) == 0;
        });
    }

    void require_same_dims(const Tensor& o, const char* what) const
    {
        if (dims_ != o.dims_)
            throw std::invalid_argument(std::string("Tensor ") + what + ": dims " + dims_string(dims_)
                                        + " vs " + dims_string(o.dims_));
    }

private:
    template <typename... Idx>
    std::size_t offset(Idx... idx) const
    {
        const std::size_t ids[] = {static_cast<std::size_t>(idx)...};
        std::size_t off = 0;
        for (std::size_t i = 0; i < sizeof...(Idx); ++i)
            off = off * dims_[i] + ids[i];
        return off;
    }

    Dims dims_;
    std::vector<T> data_;
};

template <typename T>
inline void require_finite(const Tensor<T>& t, const char* what)
{
    if (!t.all_finite())
        throw std::domain_error(std::string(what) + ": non-finite value in input");
}

}  // namespace mglab
