#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mglab/motionguide/motionguide.hpp"
#include "mglab/numerics/errors.hpp"
#include "mglab/numerics/params.hpp"
#include "mglab/scene/io.hpp"
#include "mglab/scene/samples.hpp"

namespace mglab {

struct ToyConfig {
    std::size_t iterations = 500;
    double lr = 5e-4;
    std::uint64_t seed = 0;
    std::size_t log_stride = 1;
    InputMode mode = InputMode::multiply;
    std::size_t scale = 8;

    void validate() const
    {
        if (iterations < 1) throw std::invalid_argument("toy: iterations must be >= 1");
        if (!(lr > 0)) throw std::invalid_argument("toy: lr must be > 0");
        if (log_stride < 1) throw std::invalid_argument("toy: log stride must be >= 1");
    }
};

/// Pose sequence as a [N,6] matrix.
template <typename T>
Tensor<T> trajectory_matrix(const Trajectory& traj)
{
    Tensor<T> out({traj.size(), 6});
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const auto v = traj.poses[k].values();
        for (std::size_t j = 0; j < 6; ++j) out[k * 6 + j] = static_cast<T>(v[j]);
    }
    return out;
}

/// Per-dimension mean and deviation over frames of the training trajectory.
/// A dimension with (numerically) no spread keeps unit scale and standardizes
/// to exactly zero; round-off there would otherwise feed Adam a spurious
/// direction at full step size.
struct TargetStats {
    std::array<double, 6> mean{};
    std::array<double, 6> scale{1, 1, 1, 1, 1, 1};
    std::array<bool, 6> constant{};

    static TargetStats of(const Trajectory& traj)
    {
        for (const auto& p : traj.poses)
            for (double v : p.values())
                if (!std::isfinite(v)) throw std::invalid_argument("target trajectory has non-finite values");
        TargetStats s;
        const double n = static_cast<double>(traj.size());
        for (std::size_t j = 0; j < 6; ++j) {
            double m = 0;
            for (const auto& p : traj.poses) m += p.values()[j];
            m /= n;
            double var = 0;
            for (const auto& p : traj.poses) var += (p.values()[j] - m) * (p.values()[j] - m);
            const double sd = std::sqrt(var / n);
            s.mean[j] = m;
            s.constant[j] = !(sd > 1e-9);
            s.scale[j] = s.constant[j] ? 1.0 : sd;
        }
        return s;
    }

    template <typename T>
    Tensor<T> standardize(const Trajectory& traj) const
    {
        Tensor<T> out({traj.size(), 6});
        for (std::size_t k = 0; k < traj.size(); ++k) {
            const auto v = traj.poses[k].values();
            for (std::size_t j = 0; j < 6; ++j)
                out[k * 6 + j] = constant[j] ? T(0) : static_cast<T>((v[j] - mean[j]) / scale[j]);
        }
        return out;
    }

    /// Inverse of standardize for a [N,6] prediction.
    template <typename T>
    Tensor<double> destandardize(const Tensor<T>& z) const
    {
        Tensor<double> out(z.dims());
        for (std::size_t i = 0; i < z.size(); ++i) out[i] = static_cast<double>(z[i]) * scale[i % 6] + mean[i % 6];
        return out;
    }
};

/// Mean of squared differences over all N×6 entries.
template <typename T>
double toy_loss(const Tensor<T>& pred, const Tensor<T>& target)
{
    pred.require_same_dims(target, "toy_loss");
    double s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

template <typename T>
Tensor<T> toy_loss_grad(const Tensor<T>& pred, const Tensor<T>& target)
{
    pred.require_same_dims(target, "toy_loss");
    Tensor<T> g(pred.dims());
    const T c = T(2) / static_cast<T>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) g[i] = c * (pred[i] - target[i]);
    return g;
}

inline MotionGuideConfig toy_motionguide_config(const ToyConfig& cfg)
{
    MotionGuideConfig m;
    m.in_channels = input_channels(cfg.mode);
    m.out_dim = 6;
    return m;
}

/// Trained toy regressor: MotionGuide parameters plus the target statistics
/// that map its standardized output back to poses.
struct ToyModel {
    ToyConfig cfg;
    MotionGuideConfig mg;
    ParamSet<float> params;
    TargetStats stats;
};

struct LossPoint {
    std::size_t iter;
    double mse;
};

struct ToyTrainResult {
    ToyModel model;
    std::vector<LossPoint> curve;  ///< last point is the post-training evaluation

    double initial_mse() const { return curve.front().mse; }
    double final_mse() const { return curve.back().mse; }
};

/// Standardized per-frame 6-vector predictions [N,6].
inline Tensor<float> toy_predict(const ToyModel& model, const SyntheticVideo& video)
{
    auto in = motion_inputs<float>(video, model.cfg.mode, model.cfg.scale);
    MotionGuide<float> mg(model.mg);
    return mg.forward(in.frames, in.alphas, model.params);
}

/// MSE of the prediction on `video` against `target` standardized with the
/// training statistics. No parameter is touched.
inline double eval_toy(const ToyModel& model, const SyntheticVideo& video, const Trajectory& target)
{
    if (video.size() != target.size())
        throw std::invalid_argument("eval_toy: " + std::to_string(video.size()) + " frames but "
                                    + std::to_string(target.size()) + " poses");
    return toy_loss(toy_predict(model, video), model.stats.standardize<float>(target));
}

/// Full-batch Adam regression of the standardized trajectory from the video.
inline ToyTrainResult train_toy(const SyntheticVideo& video, const Trajectory& target, const ToyConfig& cfg)
{
    cfg.validate();
    if (video.size() != target.size())
        throw std::invalid_argument("train_toy: " + std::to_string(video.size()) + " frames but "
                                    + std::to_string(target.size()) + " poses");
    ToyTrainResult r;
    r.model.cfg = cfg;
    r.model.mg = toy_motionguide_config(cfg);
    r.model.params = motionguide_init<float>(r.model.mg, cfg.seed);
    r.model.stats = TargetStats::of(target);

    const auto in = motion_inputs<float>(video, cfg.mode, cfg.scale);
    const auto y = r.model.stats.standardize<float>(target);
    MotionGuide<float> mg(r.model.mg);
    auto adam = AdamState<float>::init(r.model.params, AdamHyper{cfg.lr});

    for (std::size_t it = 0; it <= cfg.iterations; ++it) {
        auto pred = mg.forward(in.frames, in.alphas, r.model.params);
        const double loss = toy_loss(pred, y);
        if (!std::isfinite(loss))
            throw DivergenceError("toy training diverged at iteration " + std::to_string(it) + " (loss "
                                  + std::to_string(loss) + ")");
        if (it == cfg.iterations) {
            r.curve.push_back({it, loss});
            break;
        }
        if (it % cfg.log_stride == 0) r.curve.push_back({it, loss});
        mg.backward(toy_loss_grad(pred, y), r.model.params);
        adam_step(r.model.params, adam);
    }
    return r;
}

struct InvarianceReport {
    std::vector<LossPoint> train_curve;
    double pos_mse = 0;
    double neg_mse = 0;
    double final_train_mse = 0;
    double K = 3;
    double M = 5;
    bool shape_invariant = false;
    bool motion_sensitive = false;

    bool passed() const { return shape_invariant && motion_sensitive; }
};

inline InvarianceReport invariance_report(std::vector<LossPoint> curve, double pos_mse, double neg_mse,
                                          double K = 3, double M = 5)
{
    if (curve.empty()) throw std::invalid_argument("invariance_report: empty training curve");
    InvarianceReport r;
    r.train_curve = std::move(curve);
    r.final_train_mse = r.train_curve.back().mse;
    r.pos_mse = pos_mse;
    r.neg_mse = neg_mse;
    r.K = K;
    r.M = M;
    r.shape_invariant = pos_mse <= K * r.final_train_mse;
    r.motion_sensitive = neg_mse >= M * r.final_train_mse;
    return r;
}

inline void write_loss_csv(const std::filesystem::path& path, const std::vector<LossPoint>& curve)
{
    auto f = io::open_out(path);
    f << "iter,train_mse\n";
    for (const auto& p : curve) f << p.iter << ',' << io::fmt_real(p.mse) << '\n';
}

inline void write_report_csv(const std::filesystem::path& path, const InvarianceReport& r)
{
    auto f = io::open_out(path);
    f << "pos_mse,neg_mse,final_train_mse,K,M,shape_invariant,motion_sensitive\n";
    f << io::fmt_real(r.pos_mse) << ',' << io::fmt_real(r.neg_mse) << ',' << io::fmt_real(r.final_train_mse) << ','
      << io::fmt_real(r.K) << ',' << io::fmt_real(r.M) << ',' << (r.shape_invariant ? 1 : 0) << ','
      << (r.motion_sensitive ? 1 : 0) << '\n';
}

/// Reads the single data row written by write_report_csv (curve not included).
inline InvarianceReport read_report_csv(const std::filesystem::path& path)
{
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::string header, row;
    std::getline(f, header);
    if (header != "pos_mse,neg_mse,final_train_mse,K,M,shape_invariant,motion_sensitive")
        throw std::runtime_error(path.string() + ": unexpected report header");
    if (!std::getline(f, row)) throw std::runtime_error(path.string() + ": missing data row");
    std::vector<std::string> cells;
    std::stringstream ss(row);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != 7) throw std::runtime_error(path.string() + ": expected 7 fields");
    InvarianceReport r;
    r.pos_mse = std::stod(cells[0]);
    r.neg_mse = std::stod(cells[1]);
    r.final_train_mse = std::stod(cells[2]);
    r.K = std::stod(cells[3]);
    r.M = std::stod(cells[4]);
    r.shape_invariant = cells[5] == "1";
    r.motion_sensitive = cells[6] == "1";
    return r;
}

/// Finite-difference check of the toy loss with respect to the prediction.
inline void register_toy_checks(GradCheckRegistry& reg)
{
    reg.add("toy_loss",
            [](const std::vector<Dims>& shapes, Rng& rng) {
                const Dims d = detail::shape_at(shapes, 0, "toy_loss");
                auto target = random_normal<double>(d, rng);
                GradProblem p;
                p.names = {"pred"};
                p.inputs = {random_normal<double>(d, rng)};
                p.eval = [target](const std::vector<Tensor<double>>& x) { return GradEval{toy_loss(x[0], target), 0}; };
                p.gradient = [target](const std::vector<Tensor<double>>& x) {
                    return std::vector<Tensor<double>>{toy_loss_grad(x[0], target)};
                };
                return p;
            },
            {{16, 6}}, 1e-6);
}

struct ToyExperimentConfig {
    SceneDefaults scene;
    ToyConfig toy;
    double neg_separation = 3.0;
    double K = 3;
    double M = 5;
};

struct ToyExperiment {
    SyntheticVideo base, positive, negative;
    ToyTrainResult train;
    InvarianceReport report;
};

/// Renders the base cube video and its shape-changed and motion-changed
/// counterparts, trains on the base, and scores both counterparts against
/// the base trajectory.
inline ToyExperiment run_toy_experiment(std::uint64_t seed, const ToyExperimentConfig& cfg)
{
    ToyExperiment e;
    const SceneSpec spec = default_scene(seed, cfg.scene);
    e.base = render_video(spec);
    e.positive = make_positive_sample(spec);
    NegativeOptions neg;
    neg.separation = cfg.neg_separation;
    neg.seed = seed;
    e.negative = make_negative_sample(spec, neg);

    ToyConfig tc = cfg.toy;
    tc.seed = seed;
    const Trajectory& target = spec.trajectory;
    e.train = train_toy(e.base, target, tc);
    const double pos = eval_toy(e.train.model, e.positive, target);
    const double negm = eval_toy(e.train.model, e.negative, target);
    e.report = invariance_report(e.train.curve, pos, negm, cfg.K, cfg.M);
    return e;
}

}  // namespace mglab
