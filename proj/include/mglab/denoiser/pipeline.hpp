#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mglab/denoiser/codec.hpp"
#include "mglab/denoiser/model.hpp"
#include "mglab/denoiser/schedule.hpp"
#include "mglab/motionguide/motionguide.hpp"
#include "mglab/numerics/checkpoint.hpp"
#include "mglab/numerics/errors.hpp"
#include "mglab/numerics/gradcheck.hpp"
#include "mglab/scene/samples.hpp"

namespace mglab {

inline constexpr std::size_t kConceptCube = 0;
inline constexpr std::size_t kConceptOctahedron = 1;

inline ShapeSpec concept_shape(std::size_t concept_id)
{
    switch (concept_id) {
    case kConceptCube: return ShapeSpec::cube(0.6);
    case kConceptOctahedron: return {ShapeKind::octahedron, {0.8, 0.8, 0.8}};
    }
    throw std::invalid_argument("no shape for concept id " + std::to_string(concept_id));
}

/// One denoising-loss evaluation: noise z0 at step t with eps, predict the noise and
/// return the mean squared error. With `backward`, gradients land in `p`
/// (through the MotionGuide too when one is given).
template <typename T>
double diffusion_loss(Denoiser<T>& net, MotionGuide<T>* mg, const MotionInputs<T>* mg_in, ParamSet<T>& p,
                      const Tensor<T>& z0, std::size_t concept_id, double lambda, std::size_t t, const Tensor<T>& eps,
                      const NoiseSchedule& s, bool backward)
{
    Tensor<T> M;
    const Tensor<T>* Mp = nullptr;
    if (mg) {
        if (!mg_in) throw std::invalid_argument("diffusion_loss: MotionGuide given without inputs");
        M = mg->forward(mg_in->frames, mg_in->alphas, p);
        Mp = &M;
    }
    const auto zt = add_noise(z0, t, eps, s);
    const auto pred = net.forward(zt, t, concept_id, Mp, lambda, p);
    double loss = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(eps[i]);
        loss += d * d;
    }
    loss /= static_cast<double>(pred.size());
    if (backward) {
        Tensor<T> d(pred.dims());
        const T c = T(2) / static_cast<T>(pred.size());
        for (std::size_t i = 0; i < pred.size(); ++i) d[i] = c * (pred[i] - eps[i]);
        auto dM = net.backward(d, p);
        if (mg) mg->backward(dM, p);
    }
    return loss;
}

struct NoiseDraw {
    std::size_t t;
    Tensor<float> eps;
};

inline NoiseDraw draw_noise(Rng& rng, const Dims& dims, std::size_t T)
{
    std::uniform_int_distribution<std::size_t> ut(1, T);
    const std::size_t t = ut(rng);
    return {t, random_normal<float>(dims, rng)};
}

// ---------------------------------------------------------------- pretrain

struct CorpusItem {
    SyntheticVideo video;
    std::size_t concept_id;
    Tensor<float> latents;
};

struct PretrainConfig {
    std::size_t videos = 32;
    std::size_t iterations = 3000;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::size_t log_stride = 100;  ///< curve points are means over this many iterations
    SceneDefaults scene;
};

/// Videos alternate between the cube and octahedron concepts; trajectories
/// come from the orbit-tumble family, one named substream per video.
inline std::vector<CorpusItem> make_corpus(const PretrainConfig& cfg, const LatentCodec& codec = {})
{
    std::vector<CorpusItem> out;
    for (std::size_t i = 0; i < cfg.videos; ++i) {
        Rng rng = substream(cfg.seed, "corpus/" + std::to_string(i));
        SceneSpec spec;
        spec.shape = concept_shape(i % 2);
        spec.camera.width = spec.camera.height = cfg.scene.resolution;
        spec.camera.focal = cfg.scene.focal;
        for (int attempt = 0;; ++attempt) {
            spec.trajectory =
                make_trajectory(TrajectoryKind::orbit, cfg.scene.frames, sample_orbit_tumble(rng, cfg.scene.depth));
            try {
                auto video = render_video(spec);
                auto z = codec.encode(video);
                out.push_back({std::move(video), i % 2, std::move(z)});
                break;
            } catch (const OutOfView&) {
                if (attempt >= 20) throw;
            }
        }
    }
    return out;
}

struct TrainCurve {
    std::vector<std::size_t> iter;
    std::vector<double> loss;
};

struct PretrainResult {
    ParamSet<float> params;
    TrainCurve curve;
};

/// Trains every denoiser tensor on the corpus without motion guidance.
inline PretrainResult pretrain(const std::vector<CorpusItem>& corpus, const DenoiserConfig& dcfg,
                               const NoiseSchedule& sched, const PretrainConfig& cfg)
{
    if (corpus.empty()) throw std::invalid_argument("pretrain: empty corpus");
    std::vector<bool> seen(dcfg.concepts, false);
    std::size_t distinct = 0;
    for (const auto& c : corpus) {
        if (c.concept_id >= dcfg.concepts) throw std::invalid_argument("pretrain: concept id out of range");
        if (!seen[c.concept_id]) ++distinct, seen[c.concept_id] = true;
    }
    if (distinct < 2) throw std::invalid_argument("pretrain: corpus must contain at least two concepts");
    if (dcfg.timesteps != sched.T) throw std::invalid_argument("pretrain: schedule and model disagree on T");

    PretrainResult r;
    r.params = denoiser_init<float>(dcfg, cfg.seed);
    Denoiser<float> net(dcfg);
    auto adam = AdamState<float>::init(r.params, AdamHyper{cfg.lr});
    Rng rng = substream(cfg.seed, "noise-draws/pretrain");
    std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
    double window = 0;
    std::size_t in_window = 0;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const auto& item = corpus[pick(rng)];
        auto draw = draw_noise(rng, item.latents.dims(), sched.T);
        const double loss = diffusion_loss<float>(net, nullptr, nullptr, r.params, item.latents, item.concept_id, 0.0,
                                                  draw.t, draw.eps, sched, true);
        if (!std::isfinite(loss))
            throw DivergenceError("pretrain diverged at iteration " + std::to_string(it));
        adam_step(r.params, adam);
        window += loss;
        if (++in_window == cfg.log_stride || it + 1 == cfg.iterations) {
            r.curve.iter.push_back(it + 1);
            r.curve.loss.push_back(window / static_cast<double>(in_window));
            window = 0;
            in_window = 0;
        }
    }
    return r;
}

// ---------------------------------------------------------------- finetune

/// Which MotionGuide input feeds the injection; no_guide disables it (λ = 0).
enum class GuideMode { no_guide, corr_only, depth_only, concat, multiply };

inline std::string to_string(GuideMode m)
{
    switch (m) {
    case GuideMode::no_guide: return "no_guide";
    case GuideMode::corr_only: return "corr_only";
    case GuideMode::depth_only: return "depth_only";
    case GuideMode::concat: return "concat";
    case GuideMode::multiply: return "multiply";
    }
    return "?";
}

inline GuideMode guide_mode_from_string(const std::string& s)
{
    if (s == "no_guide") return GuideMode::no_guide;
    if (s == "corr_only") return GuideMode::corr_only;
    if (s == "depth_only") return GuideMode::depth_only;
    if (s == "concat") return GuideMode::concat;
    if (s == "multiply") return GuideMode::multiply;
    throw std::invalid_argument("unknown ablation mode '" + s + "'");
}

inline InputMode input_mode_of(GuideMode m)
{
    switch (m) {
    case GuideMode::corr_only: return InputMode::corr_only;
    case GuideMode::depth_only: return InputMode::depth_only;
    case GuideMode::concat: return InputMode::concat;
    default: return InputMode::multiply;
    }
}

struct FinetuneConfig {
    std::size_t iterations = 100;
    double lr = 5e-4;
    double lambda = 0.1;
    GuideMode mode = GuideMode::multiply;
    std::uint64_t seed = 0;
    std::size_t eval_draws = 8;  ///< fixed (t, eps) draws scored before and after

    bool guided() const { return mode != GuideMode::no_guide && lambda != 0.0; }
    double effective_lambda() const { return guided() ? lambda : 0.0; }
};

/// Denoiser plus (optionally) a MotionGuide, sharing one parameter set.
struct EditModel {
    DenoiserConfig den;
    MotionGuideConfig mg;
    GuideMode mode = GuideMode::no_guide;
    double lambda = 0;
    ParamSet<float> params;

    bool guided() const { return mode != GuideMode::no_guide && lambda != 0.0; }
};

struct FinetuneResult {
    EditModel model;
    std::vector<double> curve;  ///< per-iteration loss on that iteration's draw
    double eval_before = 0;     ///< mean loss over the fixed evaluation draws
    double eval_after = 0;
};

inline MotionGuideConfig edit_motionguide_config(const DenoiserConfig& den, const FinetuneConfig& cfg)
{
    MotionGuideConfig m;
    m.in_channels = input_channels(input_mode_of(cfg.mode));
    m.out_dim = den.width;
    return m;
}

/// Mean denoising loss of `model` over fixed draws, no updates.
inline double mean_diffusion_loss(EditModel& model, const Tensor<float>& z0, std::size_t concept_id,
                                  const MotionInputs<float>* mg_in, const std::vector<NoiseDraw>& draws,
                                  const NoiseSchedule& sched)
{
    Denoiser<float> net(model.den);
    std::optional<MotionGuide<float>> mg;
    if (model.guided()) mg.emplace(model.mg);
    double s = 0;
    for (const auto& d : draws)
        s += diffusion_loss<float>(net, mg ? &*mg : nullptr, mg_in, model.params, z0, concept_id, model.lambda, d.t,
                                   d.eps, sched, false);
    return s / static_cast<double>(draws.size());
}

/// Adapts a pretrained model to one source video. Only the fine-tune split
/// moves; frozen tensors are verified bit-identical afterwards.
inline FinetuneResult finetune(const ParamSet<float>& pretrained, const DenoiserConfig& dcfg,
                               const NoiseSchedule& sched, const SyntheticVideo& source, std::size_t concept_id,
                               const FinetuneConfig& cfg, const LatentCodec& codec = {})
{
    if (!(cfg.lr > 0)) throw std::invalid_argument("finetune: lr must be > 0");
    FinetuneResult r;
    EditModel& m = r.model;
    m.den = dcfg;
    m.mode = cfg.mode;
    m.lambda = cfg.effective_lambda();
    m.mg = edit_motionguide_config(dcfg, cfg);
    m.params = pretrained;
    m.params.merge(motionguide_init<float>(m.mg, cfg.seed));
    apply_finetune_split(m.params);
    m.params.zero_grad();

    ParamSet<float> frozen;
    for (const auto& [name, e] : m.params.entries())
        if (!e.trainable) frozen.add(name, e.value, false);

    const auto z0 = codec.encode(source);
    std::optional<MotionInputs<float>> mg_in;
    std::optional<MotionGuide<float>> mg;
    if (m.guided()) {
        mg_in = motion_inputs<float>(source, input_mode_of(cfg.mode), codec.scale);
        mg.emplace(m.mg);
    }
    Rng eval_rng = substream(cfg.seed, "noise-draws/finetune-eval");
    std::vector<NoiseDraw> eval_draws;
    for (std::size_t i = 0; i < cfg.eval_draws; ++i) eval_draws.push_back(draw_noise(eval_rng, z0.dims(), sched.T));
    if (!eval_draws.empty()) r.eval_before = mean_diffusion_loss(m, z0, concept_id, mg_in ? &*mg_in : nullptr, eval_draws, sched);

    Denoiser<float> net(dcfg);
    auto adam = AdamState<float>::init(m.params, AdamHyper{cfg.lr});
    Rng rng = substream(cfg.seed, "noise-draws/finetune");
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        auto draw = draw_noise(rng, z0.dims(), sched.T);
        const double loss = diffusion_loss<float>(net, mg ? &*mg : nullptr, mg_in ? &*mg_in : nullptr, m.params, z0,
                                                  concept_id, m.lambda, draw.t, draw.eps, sched, true);
        if (!std::isfinite(loss)) throw DivergenceError("finetune diverged at iteration " + std::to_string(it));
        r.curve.push_back(loss);
        adam_step(m.params, adam);
    }
    if (!eval_draws.empty()) r.eval_after = mean_diffusion_loss(m, z0, concept_id, mg_in ? &*mg_in : nullptr, eval_draws, sched);

    for (const auto& [name, e] : frozen.entries())
        if (!e.value.bit_equal(m.params.value(name)))
            throw std::logic_error("finetune: frozen tensor '" + name + "' changed");
    return r;
}

// ---------------------------------------------------------------- DDIM

struct Conditioning {
    std::size_t concept_id = 0;
    const Tensor<float>* motion = nullptr;
    double lambda = 0;
};

/// Motion embedding of `source` under `model` (nullopt when unguided).
inline std::optional<Tensor<float>> motion_embedding(const EditModel& model, const SyntheticVideo& source,
                                                     const LatentCodec& codec = {})
{
    if (!model.guided()) return std::nullopt;
    auto in = motion_inputs<float>(source, input_mode_of(model.mode), codec.scale);
    MotionGuide<float> mg(model.mg);
    return mg.forward(in.frames, in.alphas, model.params);
}

/// Deterministic DDIM inversion. Returns the latents at every visited step,
/// index k holding z at timestep k·T/steps (index 0 is z0 itself).
inline std::vector<Tensor<float>> ddim_invert(const EditModel& model, const NoiseSchedule& sched,
                                              const Tensor<float>& z0, const Conditioning& cond, std::size_t steps)
{
    const auto ts = sched.ddim_steps(steps);
    Denoiser<float> net(model.den);
    std::vector<Tensor<float>> traj{z0};
    Tensor<float> z = z0;
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        const std::size_t t_cur = ts[k], t_next = ts[k + 1];
        const auto eps = net.forward(z, t_next, cond.concept_id, cond.motion, cond.lambda, model.params);
        const double ac = sched.alpha_bar[t_cur], an = sched.alpha_bar[t_next];
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double x0 = (z[i] - std::sqrt(1.0 - ac) * eps[i]) / std::sqrt(ac);
            z[i] = static_cast<float>(std::sqrt(an) * x0 + std::sqrt(1.0 - an) * eps[i]);
        }
        traj.push_back(z);
    }
    return traj;
}

/// Background replacement during sampling: cells where mask is 0 take the
/// source inversion latents of the matching step.
struct Blend {
    const std::vector<Tensor<float>>* source = nullptr;
    Tensor<float> mask;  ///< [h,w], 1 = foreground
};

inline void apply_blend(Tensor<float>& z, const Tensor<float>& src, const Tensor<float>& mask)
{
    const std::size_t N = z.dim(0), C = z.dim(1), P = z.dim(2) * z.dim(3);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t q = 0; q < P; ++q)
                if (mask[q] == 0.0f) z[(n * C + c) * P + q] = src[(n * C + c) * P + q];
}

inline Tensor<float> ddim_sample(const EditModel& model, const NoiseSchedule& sched, const Tensor<float>& zT,
                                 const Conditioning& cond, std::size_t steps, const Blend* blend = nullptr)
{
    const auto ts = sched.ddim_steps(steps);
    if (blend) {
        if (!blend->source || blend->source->size() != ts.size())
            throw std::invalid_argument("ddim_sample: blending needs the source inversion latents of every step");
        if (blend->mask.rank() != 2 || blend->mask.dim(0) != zT.dim(2) || blend->mask.dim(1) != zT.dim(3))
            throw std::invalid_argument("ddim_sample: blend mask " + dims_string(blend->mask.dims())
                                        + " does not match latent grid");
    }
    Denoiser<float> net(model.den);
    Tensor<float> z = zT;
    if (blend) apply_blend(z, blend->source->back(), blend->mask);
    for (std::size_t k = ts.size() - 1; k > 0; --k) {
        const std::size_t t_cur = ts[k], t_prev = ts[k - 1];
        const auto eps = net.forward(z, t_cur, cond.concept_id, cond.motion, cond.lambda, model.params);
        const double ac = sched.alpha_bar[t_cur], ap = sched.alpha_bar[t_prev];
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double x0 = (z[i] - std::sqrt(1.0 - ac) * eps[i]) / std::sqrt(ac);
            z[i] = static_cast<float>(std::sqrt(ap) * x0 + std::sqrt(1.0 - ap) * eps[i]);
        }
        if (blend) apply_blend(z, (*blend->source)[k - 1], blend->mask);
    }
    return z;
}

inline double relative_l2(const Tensor<float>& a, const Tensor<float>& b)
{
    a.require_same_dims(b, "relative_l2");
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        num += d * d;
        den += static_cast<double>(b[i]) * b[i];
    }
    return std::sqrt(num / den);
}

// ---------------------------------------------------------------- edit / ablate

struct EditConfig {
    FinetuneConfig finetune;
    std::size_t steps = 50;
    std::size_t source_concept = kConceptCube;
    std::size_t target_concept = kConceptOctahedron;
    bool blend = false;
};

struct EditResult {
    FinetuneResult tuned;
    Tensor<float> source_latents;
    Tensor<float> edited;
    CentroidTrack source_track, edited_track;
    double centroid_mse = 0;
    double range_ratio = 0;
};

/// Fine-tune on the source, invert it under the source concept, then sample
/// with the target concept and the same motion embedding.
inline EditResult run_edit(const ParamSet<float>& pretrained, const DenoiserConfig& dcfg, const NoiseSchedule& sched,
                           const SyntheticVideo& source, const EditConfig& cfg, const LatentCodec& codec = {})
{
    EditResult r;
    r.tuned = finetune(pretrained, dcfg, sched, source, cfg.source_concept, cfg.finetune, codec);
    const EditModel& m = r.tuned.model;
    r.source_latents = codec.encode(source);
    const auto M = motion_embedding(m, source, codec);
    const Tensor<float>* Mp = M ? &*M : nullptr;
    const auto inv = ddim_invert(m, sched, r.source_latents, {cfg.source_concept, Mp, m.lambda}, cfg.steps);
    std::optional<Blend> blend;
    if (cfg.blend) blend = Blend{&inv, latent_mask(source, codec.scale)};
    r.edited = ddim_sample(m, sched, inv.back(), {cfg.target_concept, Mp, m.lambda}, cfg.steps,
                           blend ? &*blend : nullptr);
    r.source_track = centroid_track(codec, r.source_latents);
    r.edited_track = centroid_track(codec, r.edited);
    r.centroid_mse = track_mse(r.edited_track, r.source_track);
    r.range_ratio = range_ratio(r.edited_track, r.source_track);
    return r;
}

struct AblationRow {
    GuideMode mode;
    double centroid_mse;
    double range_ratio;
    std::uint64_t seed;
};

/// One fine-tune + edit per mode with shared seeds (hence identical noise).
inline std::vector<AblationRow> ablate(const std::vector<GuideMode>& modes, const ParamSet<float>& pretrained,
                                       const DenoiserConfig& dcfg, const NoiseSchedule& sched,
                                       const SyntheticVideo& source, const EditConfig& base,
                                       std::vector<EditResult>* runs = nullptr)
{
    std::vector<AblationRow> rows;
    for (GuideMode mode : modes) {
        EditConfig cfg = base;
        cfg.finetune.mode = mode;
        auto r = run_edit(pretrained, dcfg, sched, source, cfg);
        rows.push_back({mode, r.centroid_mse, r.range_ratio, cfg.finetune.seed});
        if (runs) runs->push_back(std::move(r));
    }
    return rows;
}

// ---------------------------------------------------------------- checkpoints

inline nlohmann::json denoiser_meta(const DenoiserConfig& d, const NoiseSchedule& s)
{
    return {{"latent_channels", d.latent_channels}, {"width", d.width},       {"blocks", d.blocks},
            {"mlp_hidden", d.mlp_hidden},           {"concepts", d.concepts}, {"timesteps", s.T}, {"token_positions", d.token_positions},
            {"beta_start", s.beta_start},           {"beta_end", s.beta_end}};
}

struct Checkpoint {
    DenoiserConfig den;
    NoiseSchedule sched;
    ParamSet<float> params;
};

inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& c)
{
    save_params(dir, c.params, denoiser_meta(c.den, c.sched));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir)
{
    const auto meta = read_manifest(dir).at("meta");
    Checkpoint c;
    c.den.latent_channels = meta.at("latent_channels");
    c.den.width = meta.at("width");
    c.den.blocks = meta.at("blocks");
    c.den.mlp_hidden = meta.at("mlp_hidden");
    c.den.concepts = meta.at("concepts");
    c.den.timesteps = meta.at("timesteps");
    c.den.token_positions = meta.at("token_positions");
    c.sched = NoiseSchedule::linear(c.den.timesteps, meta.at("beta_start"), meta.at("beta_end"));
    c.params = load_params<float>(dir);
    return c;
}

// ---------------------------------------------------------------- gradient check

namespace detail {

inline std::string p_name(const std::string& prefix, std::size_t i)
{
    const char* ws[] = {"q", "k", "v", "o"};
    return prefix + "." + ws[i] + ".weight";
}

inline GradProblem attention_problem(const std::string& prefix, std::size_t N, std::size_t P, std::size_t D, Rng& rng,
                                     bool temporal)
{
    auto h = random_normal<double>({N * P, D}, rng);
    auto M = random_normal<double>({N, D}, rng);
    auto cot = random_uniform<double>({N * P, D}, rng);
    GradProblem p;
    p.names = {"h", "M"};
    p.inputs = {h, M};
    for (std::size_t i = 0; i < 4; ++i) {
        p.names.push_back(p_name(prefix, i));
        p.inputs.push_back(random_uniform<double>({D, D}, rng, -0.5, 0.5));
    }
    auto split = [prefix](const std::vector<Tensor<double>>& v) {
        ParamSet<double> ps;
        for (std::size_t i = 0; i < 4; ++i) ps.add(p_name(prefix, i), v[2 + i]);
        return ps;
    };
    const double lambda = 0.3;
    p.eval = [=](const std::vector<Tensor<double>>& v) {
        auto ps = split(v);
        Tensor<double> out;
        if (temporal) out = TemporalAttention<double>(prefix).forward(v[0], N, P, &v[1], lambda, ps);
        else out = SparseCausalAttention<double>(prefix).forward(v[0], N, P, ps);
        return GradEval{contract(out, cot), 0};
    };
    p.gradient = [=](const std::vector<Tensor<double>>& v) {
        auto ps = split(v);
        Tensor<double> dh, dM(v[1].dims());
        if (temporal) {
            TemporalAttention<double> a(prefix);
            a.forward(v[0], N, P, &v[1], lambda, ps);
            dh = a.backward(cot, ps, &dM);
        } else {
            SparseCausalAttention<double> a(prefix);
            a.forward(v[0], N, P, ps);
            dh = a.backward(cot, ps);
        }
        std::vector<Tensor<double>> g{dh, dM};
        for (std::size_t i = 2; i < v.size(); ++i) g.push_back(ps.grad(p_name(prefix, i - 2)));
        return g;
    };
    return p;
}

}  // namespace detail

/// Sparse-causal spatial attention and motion-injected temporal attention on
/// their own, then the denoising loss on a 2-frame 4x4 latent instance,
/// differentiated with respect to every denoiser and MotionGuide tensor.
inline void register_denoiser_checks(GradCheckRegistry& reg)
{
    reg.add("sparse_causal_attention",
            [](const std::vector<Dims>& shapes, Rng& rng) {
                const Dims d = detail::shape_at(shapes, 0, "sparse_causal_attention");
                return detail::attention_problem("s", d.at(0), d.at(1), d.at(2), rng, false);
            },
            {{4, 3, 4}}, 1e-6);
    reg.add("temporal_attention_inject",
            [](const std::vector<Dims>& shapes, Rng& rng) {
                const Dims d = detail::shape_at(shapes, 0, "temporal_attention_inject");
                return detail::attention_problem("t", d.at(0), d.at(1), d.at(2), rng, true);
            },
            {{4, 3, 4}}, 1e-6);
    reg.add("denoise_loss",
            [](const std::vector<Dims>& shapes, Rng& rng) {
                const Dims zd = detail::shape_at(shapes, 0, "denoise_loss");
                DenoiserConfig dc;
                dc.latent_channels = zd.at(1);
                dc.width = 16;
                dc.mlp_hidden = 32;
                MotionGuideConfig mc;
                mc.out_dim = dc.width;
                mc.zero_init_head = false;
                auto params = denoiser_init<double>(dc, 11);
                params.merge(motionguide_init<double>(mc, 12));
                const auto sched = NoiseSchedule::linear(dc.timesteps);
                auto z0 = random_normal<double>(zd, rng);
                auto eps = random_normal<double>(zd, rng);
                MotionInputs<double> mi{random_uniform<double>({zd[0], mc.in_channels, zd[2], zd[3]}, rng, 0.0, 1.0),
                                        {}};
                for (std::size_t n = 0; n < zd[0]; ++n)
                    mi.alphas.push_back(std::uniform_real_distribution<double>(0.2, 1.0)(rng));
                const std::size_t t = 37, concept_id = 1;
                const double lambda = 0.1;

                GradProblem p;
                p.names = params.names();
                for (const auto& n : p.names) p.inputs.push_back(params.value(n));
                const auto names = p.names;
                auto rebuild = [names](const std::vector<Tensor<double>>& v) {
                    ParamSet<double> ps;
                    for (std::size_t i = 0; i < names.size(); ++i) ps.add(names[i], v[i]);
                    return ps;
                };
                p.eval = [=](const std::vector<Tensor<double>>& v) {
                    auto ps = rebuild(v);
                    Denoiser<double> net(dc);
                    MotionGuide<double> mg(mc);
                    const double l = diffusion_loss<double>(net, &mg, &mi, ps, z0, concept_id, lambda, t, eps, sched,
                                                            false);
                    return GradEval{l, mg.activation_pattern()};
                };
                p.gradient = [=](const std::vector<Tensor<double>>& v) {
                    auto ps = rebuild(v);
                    Denoiser<double> net(dc);
                    MotionGuide<double> mg(mc);
                    diffusion_loss<double>(net, &mg, &mi, ps, z0, concept_id, lambda, t, eps, sched, true);
                    std::vector<Tensor<double>> g;
                    for (const auto& n : names) g.push_back(ps.grad(n));
                    return g;
                };
                return p;
            },
            {{2, 4, 4, 4}}, 1e-5);
}

}  // namespace mglab
