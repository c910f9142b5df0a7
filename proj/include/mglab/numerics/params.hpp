#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mglab/numerics/tensor.hpp"

namespace mglab {

template <typename T>
struct ParamEntry {
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;
};

/// Named parameter tensors with paired gradient buffers. Iteration order is
/// the lexicographic order of names, which keeps every sweep deterministic.
template <typename T>
class ParamSet {
public:
    using Map = std::map<std::string, ParamEntry<T>>;

    Tensor<T>& add(const std::string& name, Tensor<T> value, bool trainable = true)
    {
        if (entries_.count(name)) throw std::invalid_argument("ParamSet: duplicate entry '" + name + "'");
        Tensor<T> grad(value.dims());
        auto& e = entries_[name];
        e.value = std::move(value);
        e.grad = std::move(grad);
        e.trainable = trainable;
        return e.value;
    }

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    ParamEntry<T>& entry(const std::string& name)
    {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw std::out_of_range("ParamSet: no entry '" + name + "'");
        return it->second;
    }
    const ParamEntry<T>& entry(const std::string& name) const
    {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw std::out_of_range("ParamSet: no entry '" + name + "'");
        return it->second;
    }

    Tensor<T>& value(const std::string& name) { return entry(name).value; }
    const Tensor<T>& value(const std::string& name) const { return entry(name).value; }
    Tensor<T>& grad(const std::string& name) { return entry(name).grad; }
    const Tensor<T>& grad(const std::string& name) const { return entry(name).grad; }

    /// Adds `g` into the gradient buffer of `name`.
    void accumulate(const std::string& name, const Tensor<T>& g)
    {
        auto& e = entry(name);
        e.grad += g;
    }

    void set_trainable(const std::string& name, bool trainable) { entry(name).trainable = trainable; }

    void zero_grad()
    {
        for (auto& [_, e] : entries_) e.grad.fill(T(0));
    }

    /// Merges another set's entries in; names must not collide.
    void merge(const ParamSet& other)
    {
        for (const auto& [name, e] : other.entries_) {
            add(name, e.value, e.trainable);
            entries_[name].grad = e.grad;
        }
    }

    std::vector<std::string> names() const
    {
        std::vector<std::string> out;
        for (const auto& [name, _] : entries_) out.push_back(name);
        return out;
    }

    std::size_t count() const { return entries_.size(); }

    std::size_t scalar_count() const
    {
        std::size_t n = 0;
        for (const auto& [_, e] : entries_) n += e.value.size();
        return n;
    }

    Map& entries() { return entries_; }
    const Map& entries() const { return entries_; }

    template <typename U>
    ParamSet<U> cast() const
    {
        ParamSet<U> out;
        for (const auto& [name, e] : entries_) out.add(name, e.value.template cast<U>(), e.trainable);
        return out;
    }

private:
    Map entries_;
};

struct AdamHyper {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    AdamHyper hyper;
    std::uint64_t step = 0;
    std::map<std::string, Tensor<T>> m;
    std::map<std::string, Tensor<T>> v;

    bool initialized() const { return !m.empty(); }

    static AdamState init(const ParamSet<T>& params, AdamHyper hyper = {})
    {
        AdamState s;
        s.hyper = hyper;
        for (const auto& [name, e] : params.entries()) {
            if (!e.trainable) continue;
            s.m.emplace(name, Tensor<T>(e.value.dims()));
            s.v.emplace(name, Tensor<T>(e.value.dims()));
        }
        if (s.m.empty()) throw std::invalid_argument("AdamState::init: parameter set has no trainable entries");
        return s;
    }
};

/// One bias-corrected Adam update over every trainable entry; frozen entries
/// are left untouched. All gradient buffers are zeroed afterwards.
template <typename T>
void adam_step(ParamSet<T>& params, AdamState<T>& state)
{
    if (!state.initialized()) throw std::logic_error("adam_step: optimizer state is not initialized");
    const std::uint64_t t = state.step + 1;
    const double b1 = state.hyper.beta1, b2 = state.hyper.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (auto& [name, e] : params.entries()) {
        if (!e.trainable) continue;
        auto mi = state.m.find(name);
        auto vi = state.v.find(name);
        if (mi == state.m.end() || vi == state.v.end() || mi->second.dims() != e.value.dims())
            throw std::logic_error("adam_step: no moment buffers for '" + name + "'");
        Tensor<T>& m = mi->second;
        Tensor<T>& v = vi->second;
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const double g = e.grad[i];
            const double mn = b1 * m[i] + (1.0 - b1) * g;
            const double vn = b2 * v[i] + (1.0 - b2) * g * g;
            m[i] = static_cast<T>(mn);
            v[i] = static_cast<T>(vn);
            const double upd = state.hyper.lr * (mn / bc1) / (std::sqrt(vn / bc2) + state.hyper.eps);
            e.value[i] = static_cast<T>(e.value[i] - upd);
        }
    }
    state.step = t;
    params.zero_grad();
}

}  // namespace mglab
