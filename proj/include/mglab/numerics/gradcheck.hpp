#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mglab/numerics/layers.hpp"
#include "mglab/numerics/rng.hpp"
#include "mglab/numerics/tensor.hpp"

namespace mglab {

/// Loss value plus a fingerprint of every piecewise-linear branch taken
/// (ReLU signs). Probes whose fingerprint differs from the centre point
/// straddle a kink and are resampled.
struct GradEval {
    double loss = 0.0;
    std::uint64_t pattern = 0;
};

/// A scalar-valued function of named double tensors together with its
/// analytic gradient.
struct GradProblem {
    std::vector<std::string> names;
    std::vector<Tensor<double>> inputs;
    std::function<GradEval(const std::vector<Tensor<double>>&)> eval;
    std::function<std::vector<Tensor<double>>(const std::vector<Tensor<double>>&)> gradient;
};

struct TensorCheck {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t kinks_skipped = 0;
};

struct GradReport {
    std::string op;
    std::vector<TensorCheck> tensors;

    double max_rel_error() const
    {
        double m = 0.0;
        for (const auto& t : tensors) m = std::max(m, t.max_rel_error);
        return m;
    }
    bool passed(double tol) const { return max_rel_error() < tol; }
};

struct GradCheckOptions {
    double step = 1e-5;
    /// Entries probed per tensor; tensors at or below this size are probed exhaustively.
    std::size_t max_entries = 48;
    std::uint64_t seed = 7;
};

inline std::uint64_t hash_pattern(const std::vector<unsigned char>& bits, std::uint64_t h = 1469598103934665603ull)
{
    for (unsigned char b : bits) {
        h ^= b;
        h *= 1099511628211ull;
    }
    return h;
}

/// Compares analytic gradients with central finite differences. The error
/// reported per tensor is max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|).
inline GradReport check_gradients(const std::string& op, GradProblem problem, const GradCheckOptions& opt = {},
                                  const std::function<void(std::vector<Tensor<double>>&)>& fault = {})
{
    auto analytic = problem.gradient(problem.inputs);
    if (fault) fault(analytic);
    if (analytic.size() != problem.inputs.size())
        throw std::logic_error("grad_check(" + op + "): gradient count does not match inputs");

    const GradEval centre = problem.eval(problem.inputs);
    Rng rng = substream(opt.seed, op);
    GradReport report{op, {}};
    auto probe = problem.inputs;

    for (std::size_t t = 0; t < probe.size(); ++t) {
        TensorCheck tc{problem.names.at(t)};
        const std::size_t n = probe[t].size();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        if (n > opt.max_entries) std::shuffle(order.begin(), order.end(), rng);

        double max_diff = 0.0, scale_a = 0.0, scale_n = 0.0;
        for (std::size_t idx : order) {
            if (tc.checked >= opt.max_entries) break;
            const double orig = probe[t][idx];
            probe[t][idx] = orig + opt.step;
            const GradEval up = problem.eval(probe);
            probe[t][idx] = orig - opt.step;
            const GradEval dn = problem.eval(probe);
            probe[t][idx] = orig;
            if (up.pattern != centre.pattern || dn.pattern != centre.pattern) {
                ++tc.kinks_skipped;
                continue;
            }
            const double numeric = (up.loss - dn.loss) / (2.0 * opt.step);
            const double a = analytic[t][idx];
            max_diff = std::max(max_diff, std::abs(a - numeric));
            scale_a = std::max(scale_a, std::abs(a));
            scale_n = std::max(scale_n, std::abs(numeric));
            ++tc.checked;
        }
        const double scale = std::max(scale_a, scale_n);
        tc.max_rel_error = scale > 0.0 ? max_diff / scale : 0.0;
        report.tensors.push_back(tc);
    }
    return report;
}

/// Builds a problem instance for an op from input shapes and a generator.
using GradProblemFactory = std::function<GradProblem(const std::vector<Dims>&, Rng&)>;

class GradCheckRegistry {
public:
    struct Op {
        GradProblemFactory factory;
        std::vector<Dims> default_shapes;
        double tolerance;
    };

    void add(const std::string& name, GradProblemFactory factory, std::vector<Dims> default_shapes, double tolerance)
    {
        ops_[name] = Op{std::move(factory), std::move(default_shapes), tolerance};
    }

    bool contains(const std::string& name) const { return ops_.count(name) != 0; }

    const Op& op(const std::string& name) const
    {
        auto it = ops_.find(name);
        if (it == ops_.end()) throw std::invalid_argument("grad_check: no registered op '" + name + "'");
        return it->second;
    }

    std::vector<std::string> names() const
    {
        std::vector<std::string> out;
        for (const auto& [n, _] : ops_) out.push_back(n);
        return out;
    }

    /// Test hook: scales the analytic gradient of `name` so its check fails.
    void corrupt(const std::string& name) { corrupted_ = name; }

    GradReport run(const std::string& name, std::optional<std::vector<Dims>> shapes = std::nullopt,
                   GradCheckOptions opt = {}) const
    {
        const Op& o = op(name);
        Rng rng = substream(opt.seed, "gradcheck-inputs/" + name);
        GradProblem p = o.factory(shapes ? *shapes : o.default_shapes, rng);
        std::function<void(std::vector<Tensor<double>>&)> fault;
        if (corrupted_ == name)
            fault = [](std::vector<Tensor<double>>& g) {
                for (auto& t : g)
                    for (auto& v : t.data()) v = v * 1.01 + 1e-3;
            };
        return check_gradients(name, std::move(p), opt, fault);
    }

private:
    std::map<std::string, Op> ops_;
    std::string corrupted_;
};

namespace detail {

/// Contracts an op output with a fixed random cotangent so the check sees a
/// scalar loss whose gradient with respect to the output is `weights`.
inline double contract(const Tensor<double>& out, const Tensor<double>& weights)
{
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
    return s;
}

inline Dims shape_at(const std::vector<Dims>& shapes, std::size_t i, const char* op)
{
    if (i >= shapes.size()) throw std::invalid_argument(std::string("grad_check(") + op + "): missing input shape");
    return shapes[i];
}

}  // namespace detail

/// Registers the dense layers of the numerics substrate.
inline void register_layer_checks(GradCheckRegistry& reg)
{
    using detail::contract;
    using detail::shape_at;

    reg.add("conv2d",
            [](const std::vector<Dims>& s, Rng& rng) {
                Dims in = shape_at(s, 0, "conv2d"), w = shape_at(s, 1, "conv2d");
                GradProblem p;
                p.names = {"input", "weight", "bias"};
                p.inputs = {random_uniform<double>(in, rng), random_uniform<double>(w, rng),
                            random_uniform<double>({w[0]}, rng)};
                Dims od = in;
                od[od.size() - 3] = w[0];
                auto cot = std::make_shared<Tensor<double>>(random_uniform<double>(od, rng));
                p.eval = [cot](const std::vector<Tensor<double>>& x) {
                    return GradEval{contract(conv2d(x[0], x[1], &x[2]), *cot), 0};
                };
                p.gradient = [cot](const std::vector<Tensor<double>>& x) {
                    Conv2d<double> c;
                    c.forward(x[0], x[1], &x[2]);
                    auto g = c.backward(*cot);
                    return std::vector<Tensor<double>>{g.input, g.weight, g.bias};
                };
                return p;
            },
            {{2, 4, 4}, {3, 2, 3, 3}}, 1e-6);

    reg.add("linear",
            [](const std::vector<Dims>& s, Rng& rng) {
                Dims in = shape_at(s, 0, "linear"), w = shape_at(s, 1, "linear");
                GradProblem p;
                p.names = {"input", "weight", "bias"};
                p.inputs = {random_uniform<double>(in, rng), random_uniform<double>(w, rng),
                            random_uniform<double>({w[0]}, rng)};
                Dims od = in;
                od.back() = w[0];
                auto cot = std::make_shared<Tensor<double>>(random_uniform<double>(od, rng));
                p.eval = [cot](const std::vector<Tensor<double>>& x) {
                    return GradEval{contract(linear(x[0], x[1], &x[2]), *cot), 0};
                };
                p.gradient = [cot](const std::vector<Tensor<double>>& x) {
                    Linear<double> l;
                    l.forward(x[0], x[1], &x[2]);
                    auto g = l.backward(*cot);
                    return std::vector<Tensor<double>>{g.input, g.weight, g.bias};
                };
                return p;
            },
            {{5, 4}, {3, 4}}, 1e-6);

    reg.add("relu",
            [](const std::vector<Dims>& s, Rng& rng) {
                GradProblem p;
                p.names = {"input"};
                p.inputs = {random_uniform<double>(shape_at(s, 0, "relu"), rng)};
                auto cot = std::make_shared<Tensor<double>>(random_uniform<double>(p.inputs[0].dims(), rng));
                p.eval = [cot](const std::vector<Tensor<double>>& x) {
                    Relu<double> r;
                    const double l = contract(r.forward(x[0]), *cot);
                    return GradEval{l, hash_pattern(r.pattern())};
                };
                p.gradient = [cot](const std::vector<Tensor<double>>& x) {
                    Relu<double> r;
                    r.forward(x[0]);
                    return std::vector<Tensor<double>>{r.backward(*cot)};
                };
                return p;
            },
            {{3, 5, 5}}, 1e-6);

    reg.add("silu",
            [](const std::vector<Dims>& s, Rng& rng) {
                GradProblem p;
                p.names = {"input"};
                p.inputs = {random_uniform<double>(shape_at(s, 0, "silu"), rng, -3.0, 3.0)};
                auto cot = std::make_shared<Tensor<double>>(random_uniform<double>(p.inputs[0].dims(), rng));
                p.eval = [cot](const std::vector<Tensor<double>>& x) {
                    Silu<double> a;
                    return GradEval{contract(a.forward(x[0]), *cot), 0};
                };
                p.gradient = [cot](const std::vector<Tensor<double>>& x) {
                    Silu<double> a;
                    a.forward(x[0]);
                    return std::vector<Tensor<double>>{a.backward(*cot)};
                };
                return p;
            },
            {{4, 6}}, 1e-6);

    reg.add("avg_pool_spatial",
            [](const std::vector<Dims>& s, Rng& rng) {
                GradProblem p;
                p.names = {"input"};
                p.inputs = {random_uniform<double>(shape_at(s, 0, "avg_pool_spatial"), rng)};
                Dims od(p.inputs[0].dims().begin(), p.inputs[0].dims().end() - 2);
                auto cot = std::make_shared<Tensor<double>>(random_uniform<double>(od, rng));
                p.eval = [cot](const std::vector<Tensor<double>>& x) {
                    return GradEval{contract(avg_pool_spatial(x[0]), *cot), 0};
                };
                p.gradient = [cot](const std::vector<Tensor<double>>& x) {
                    SpatialAvgPool<double> pool;
                    pool.forward(x[0]);
                    return std::vector<Tensor<double>>{pool.backward(*cot)};
                };
                return p;
            },
            {{3, 4, 5}}, 1e-6);

    reg.add("softmax_attention",
            [](const std::vector<Dims>& s, Rng& rng) {
                GradProblem p;
                p.names = {"Q", "K", "V"};
                p.inputs = {random_uniform<double>(shape_at(s, 0, "softmax_attention"), rng),
                            random_uniform<double>(shape_at(s, 1, "softmax_attention"), rng),
                            random_uniform<double>(shape_at(s, 2, "softmax_attention"), rng)};
                auto cot = std::make_shared<Tensor<double>>(
                    random_uniform<double>({p.inputs[0].dim(0), p.inputs[2].dim(1)}, rng));
                p.eval = [cot](const std::vector<Tensor<double>>& x) {
                    return GradEval{contract(softmax_attention(x[0], x[1], x[2]), *cot), 0};
                };
                p.gradient = [cot](const std::vector<Tensor<double>>& x) {
                    SoftmaxAttention<double> a;
                    a.forward(x[0], x[1], x[2]);
                    auto g = a.backward(*cot);
                    return std::vector<Tensor<double>>{g.q, g.k, g.v};
                };
                return p;
            },
            {{3, 4}, {3, 4}, {3, 4}}, 1e-6);
}

}  // namespace mglab
