#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "mglab/denoiser/pipeline.hpp"
#include "mglab/toytrack/toytrack.hpp"

namespace mglab::cli {

/// Bad configuration or environment; maps to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Every knob of every command. Parsed from flat `key = value` text; command
/// line flags override file values.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::filesystem::path out = "out";

    SceneDefaults scene;

    ToyConfig toy;
    double neg_separation = 3.0;
    double invariance_k = 3.0;
    double invariance_m = 5.0;

    DenoiserConfig den;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    PretrainConfig pretrain;
    bool run_pretrain = false;
    std::filesystem::path checkpoint;  ///< empty: <out>/checkpoint

    FinetuneConfig finetune;
    std::size_t steps = 50;
    bool blend = false;
    std::size_t source_concept = kConceptCube;
    std::size_t target_concept = kConceptOctahedron;
    std::vector<GuideMode> ablate_modes{GuideMode::no_guide, GuideMode::corr_only, GuideMode::depth_only,
                                        GuideMode::concat, GuideMode::multiply};

    double gradcheck_step = 1e-5;
    std::size_t gradcheck_max_entries = 48;
    std::string gradcheck_corrupt;  ///< test hook: op whose analytic gradient is perturbed

    std::filesystem::path checkpoint_dir() const { return checkpoint.empty() ? out / "checkpoint" : checkpoint; }

    NoiseSchedule schedule() const { return NoiseSchedule::linear(den.timesteps, beta_start, beta_end); }

    ToyExperimentConfig toy_experiment() const
    {
        ToyExperimentConfig c;
        c.scene = scene;
        c.toy = toy;
        c.neg_separation = neg_separation;
        c.K = invariance_k;
        c.M = invariance_m;
        return c;
    }

    EditConfig edit() const
    {
        EditConfig e;
        e.finetune = finetune;
        e.finetune.seed = seed;
        e.steps = steps;
        e.blend = blend;
        e.source_concept = source_concept;
        e.target_concept = target_concept;
        return e;
    }

    PretrainConfig pretrain_config() const
    {
        PretrainConfig p = pretrain;
        p.seed = seed;
        p.scene = scene;
        return p;
    }

    /// Cross-field checks; throws ConfigError.
    void validate() const;
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v)
{
    std::istringstream is(v);
    T x{};
    if constexpr (std::is_unsigned_v<T>) {
        if (!v.empty() && v[0] == '-') throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    is >> x;
    if (!is || !is.eof()) throw ConfigError(key + ": cannot parse '" + v + "'");
    return x;
}

inline bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

}  // namespace detail

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string doc;
    bool is_flag = false;  ///< boolean; given on the command line without a value
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

/// The documented key table. Command-line flags are the keys with '_'
/// replaced by '-'.
inline const std::vector<ConfigKey>& config_keys()
{
    using detail::parse_bool;
    using detail::parse_number;
    using C = ExperimentConfig;
    using S = const std::string&;
    static const std::vector<ConfigKey> keys = {
        {"seed", "0", "experiment seed; every random draw derives from it", false,
         [](C& c, S v) { c.seed = parse_number<std::uint64_t>("seed", v); }},
        {"out", "out", "output directory", false, [](C& c, S v) { c.out = v; }},

        {"frames", "16", "frames per video", false,
         [](C& c, S v) { c.scene.frames = parse_number<std::size_t>("frames", v); }},
        {"resolution", "64", "square frame size in pixels", false,
         [](C& c, S v) { c.scene.resolution = parse_number<std::size_t>("resolution", v); }},
        {"focal", "64", "pinhole focal length in pixels", false,
         [](C& c, S v) { c.scene.focal = parse_number<double>("focal", v); }},
        {"cube_half_extent", "0.6", "half edge length of the cube", false,
         [](C& c, S v) { c.scene.cube_half_extent = parse_number<double>("cube_half_extent", v); }},
        {"depth", "6", "mean object distance from the camera", false,
         [](C& c, S v) { c.scene.depth = parse_number<double>("depth", v); }},

        {"toy_iterations", "500", "toy regressor training iterations", false,
         [](C& c, S v) { c.toy.iterations = parse_number<std::size_t>("toy_iterations", v); }},
        {"toy_lr", "0.0005", "toy Adam learning rate", false,
         [](C& c, S v) { c.toy.lr = parse_number<double>("toy_lr", v); }},
        {"toy_mode", "multiply", "toy MotionGuide input: multiply|corr_only|depth_only|concat", false,
         [](C& c, S v) {
             try {
                 c.toy.mode = input_mode_from_string(v);
             } catch (const std::invalid_argument& e) {
                 throw ConfigError(std::string("toy_mode: ") + e.what());
             }
         }},
        {"toy_log_stride", "1", "iterations between loss-curve points", false,
         [](C& c, S v) { c.toy.log_stride = parse_number<std::size_t>("toy_log_stride", v); }},
        {"neg_separation", "3", "minimum trajectory separation of the negative sample", false,
         [](C& c, S v) { c.neg_separation = parse_number<double>("neg_separation", v); }},
        {"invariance_k", "3", "shape-invariant if pos_mse <= K * final train mse", false,
         [](C& c, S v) { c.invariance_k = parse_number<double>("invariance_k", v); }},
        {"invariance_m", "5", "motion-sensitive if neg_mse >= M * final train mse", false,
         [](C& c, S v) { c.invariance_m = parse_number<double>("invariance_m", v); }},

        {"den_width", "32", "denoiser token width (also the motion embedding width)", false,
         [](C& c, S v) { c.den.width = parse_number<std::size_t>("den_width", v); }},
        {"den_blocks", "2", "denoiser residual blocks", false,
         [](C& c, S v) { c.den.blocks = parse_number<std::size_t>("den_blocks", v); }},
        {"den_mlp_hidden", "64", "hidden width of the pointwise MLP", false,
         [](C& c, S v) { c.den.mlp_hidden = parse_number<std::size_t>("den_mlp_hidden", v); }},
        {"den_token_positions", "true", "add a fixed 2D position code to every token", false,
         [](C& c, S v) { c.den.token_positions = parse_bool("den_token_positions", v); }},
        {"timesteps", "100", "diffusion steps T", false,
         [](C& c, S v) { c.den.timesteps = parse_number<std::size_t>("timesteps", v); }},
        {"beta_start", "0.0001", "first beta of the linear schedule", false,
         [](C& c, S v) { c.beta_start = parse_number<double>("beta_start", v); }},
        {"beta_end", "0.02", "last beta of the linear schedule", false,
         [](C& c, S v) { c.beta_end = parse_number<double>("beta_end", v); }},

        {"pretrain_videos", "32", "videos in the pretraining corpus (concepts alternate)", false,
         [](C& c, S v) { c.pretrain.videos = parse_number<std::size_t>("pretrain_videos", v); }},
        {"pretrain_iterations", "3000", "pretraining iterations, one video per iteration", false,
         [](C& c, S v) { c.pretrain.iterations = parse_number<std::size_t>("pretrain_iterations", v); }},
        {"pretrain_lr", "0.001", "pretraining Adam learning rate", false,
         [](C& c, S v) { c.pretrain.lr = parse_number<double>("pretrain_lr", v); }},
        {"pretrain_log_stride", "100", "iterations averaged per pretraining loss point", false,
         [](C& c, S v) { c.pretrain.log_stride = parse_number<std::size_t>("pretrain_log_stride", v); }},
        {"pretrain", "false", "edit/ablate: pretrain first and write the checkpoint", true,
         [](C& c, S v) { c.run_pretrain = parse_bool("pretrain", v); }},
        {"checkpoint", "", "checkpoint directory (default <out>/checkpoint)", false,
         [](C& c, S v) { c.checkpoint = v; }},

        {"finetune_iterations", "100", "fine-tuning iterations on the source video", false,
         [](C& c, S v) { c.finetune.iterations = parse_number<std::size_t>("finetune_iterations", v); }},
        {"finetune_lr", "0.0005", "fine-tuning Adam learning rate", false,
         [](C& c, S v) { c.finetune.lr = parse_number<double>("finetune_lr", v); }},
        {"lambda", "0.1", "motion injection weight", false,
         [](C& c, S v) { c.finetune.lambda = parse_number<double>("lambda", v); }},
        {"mode", "multiply", "edit guidance: no_guide|corr_only|depth_only|concat|multiply", false,
         [](C& c, S v) {
             try {
                 c.finetune.mode = guide_mode_from_string(v);
             } catch (const std::invalid_argument& e) {
                 throw ConfigError(std::string("mode: ") + e.what());
             }
         }},
        {"steps", "50", "DDIM steps for inversion and sampling (must divide timesteps)", false,
         [](C& c, S v) { c.steps = parse_number<std::size_t>("steps", v); }},
        {"blend", "false", "replace background latents with the source inversion while sampling", true,
         [](C& c, S v) { c.blend = parse_bool("blend", v); }},
        {"source_concept", "0", "concept id of the source video (0 cube, 1 octahedron)", false,
         [](C& c, S v) { c.source_concept = parse_number<std::size_t>("source_concept", v); }},
        {"target_concept", "1", "concept id sampled in the edit", false,
         [](C& c, S v) { c.target_concept = parse_number<std::size_t>("target_concept", v); }},
        {"ablate_modes", "no_guide,corr_only,depth_only,concat,multiply", "comma-separated ablation modes", false,
         [](C& c, S v) {
             c.ablate_modes.clear();
             std::istringstream is(v);
             std::string m;
             while (std::getline(is, m, ',')) {
                 try {
                     c.ablate_modes.push_back(guide_mode_from_string(detail::trim(m)));
                 } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("ablate_modes: ") + e.what());
                 }
             }
         }},

        {"gradcheck_step", "1e-05", "central-difference step", false,
         [](C& c, S v) { c.gradcheck_step = parse_number<double>("gradcheck_step", v); }},
        {"gradcheck_max_entries", "48", "entries probed per tensor", false,
         [](C& c, S v) { c.gradcheck_max_entries = parse_number<std::size_t>("gradcheck_max_entries", v); }},
        {"gradcheck_corrupt", "", "test hook: perturb the analytic gradient of this op", false,
         [](C& c, S v) { c.gradcheck_corrupt = v; }},
    };
    return keys;
}

inline const ConfigKey& config_key(const std::string& name)
{
    for (const auto& k : config_keys())
        if (k.name == name) return k;
    throw ConfigError("unknown config key '" + name + "'");
}

inline void set_key(ExperimentConfig& c, const std::string& key, const std::string& value)
{
    config_key(key).set(c, value);
}

/// Applies `key = value` lines; '#' starts a comment.
inline void apply_config_text(ExperimentConfig& c, const std::string& text, const std::string& origin = "config")
{
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        try {
            set_key(c, key, detail::trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline void apply_config_file(ExperimentConfig& c, const std::filesystem::path& path)
{
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    apply_config_text(c, ss.str(), path.string());
}

/// Default config with every key spelled out, one documented line each.
inline std::string default_config_text()
{
    std::ostringstream os;
    for (const auto& k : config_keys()) os << "# " << k.doc << "\n" << k.name << " = " << k.default_value << "\n";
    return os.str();
}

inline void ExperimentConfig::validate() const
{
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (scene.frames < 2) fail("frames must be >= 2");
    if (scene.resolution < 8 || scene.resolution % 8) fail("resolution must be a positive multiple of 8");
    if (!(scene.focal > 0)) fail("focal must be > 0");
    if (!(scene.cube_half_extent > 0)) fail("cube_half_extent must be > 0");
    if (!(scene.depth > 0)) fail("depth must be > 0");
    if (!(neg_separation > 0)) fail("neg_separation must be > 0");
    if (!(invariance_k > 0) || !(invariance_m > 0)) fail("invariance_k and invariance_m must be > 0");
    if (!(finetune.lambda >= 0)) fail("lambda must be >= 0");
    if (!(finetune.lr > 0) || !(pretrain.lr > 0)) fail("learning rates must be > 0");
    if (finetune.iterations < 1 || pretrain.iterations < 1) fail("iteration counts must be >= 1");
    if (pretrain.log_stride < 1) fail("pretrain_log_stride must be >= 1");
    if (source_concept >= den.concepts || target_concept >= den.concepts)
        fail("concept ids must be < " + std::to_string(den.concepts));
    if (ablate_modes.empty()) fail("ablate_modes must name at least one mode");
    if (!(gradcheck_step > 0)) fail("gradcheck_step must be > 0");
    try {
        toy.validate();
        den.validate();
        schedule().ddim_steps(steps);
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
}

}  // namespace mglab::cli
