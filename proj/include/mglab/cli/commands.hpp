#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mglab/cli/config.hpp"
#include "mglab/numerics/mt1.hpp"
#include "mglab/scene/io.hpp"

namespace mglab::cli {

enum ExitCode : int { kOk = 0, kVerdictFail = 1, kConfigError = 2, kDivergence = 3 };

namespace detail {

inline std::string numbered(const std::string& stem, std::size_t k, const char* ext)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "_%03zu", k);
    return stem + buf + ext;
}

inline std::filesystem::path prepare_dir(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw ConfigError("cannot create output directory " + dir.string());
    return dir;
}

template <typename Get>
Tensor<float> stack_frames(const SyntheticVideo& v, Get get)
{
    const auto& f0 = get(v.frames.at(0));
    Tensor<float> out({v.size(), f0.dim(0), f0.dim(1), f0.dim(2)});
    for (std::size_t k = 0; k < v.size(); ++k) {
        const auto& f = get(v.frames[k]);
        std::copy(f.data().begin(), f.data().end(), out.ptr() + k * f.size());
    }
    return out;
}

inline void write_centroids(const std::filesystem::path& path, const CentroidTrack& t)
{
    auto f = io::open_out(path);
    f << "frame,cx,cy\n";
    for (std::size_t k = 0; k < t.size(); ++k) f << k << ',' << io::fmt_real(t[k][0]) << ',' << io::fmt_real(t[k][1]) << '\n';
}

inline void write_frames(const std::filesystem::path& dir, const std::string& stem, const std::vector<Tensor<float>>& fr)
{
    for (std::size_t k = 0; k < fr.size(); ++k) io::write_ppm(dir / numbered(stem, k, ".ppm"), fr[k]);
}

}  // namespace detail

/// Frames as PPM (rgb, corr) and 16-bit PGM (depth, mask), the pose CSV, and
/// every map stacked into MT1 tensors.
inline int cmd_render(const ExperimentConfig& cfg)
{
    const auto dir = detail::prepare_dir(cfg.out);
    const auto video = render_video(default_scene(cfg.seed, cfg.scene));
    for (std::size_t k = 0; k < video.size(); ++k) {
        const auto& f = video.frames[k];
        io::write_ppm(dir / detail::numbered("rgb", k, ".ppm"), f.rgb);
        io::write_ppm(dir / detail::numbered("corr", k, ".ppm"), f.corr);
        io::write_pgm16(dir / detail::numbered("depth", k, ".pgm"), f.depth);
        io::write_pgm16(dir / detail::numbered("mask", k, ".pgm"), f.mask);
    }
    io::write_trajectory_csv(dir / "trajectory.csv", video);
    mt1::save(dir / "rgb.mt1", detail::stack_frames(video, [](const FrameMaps& f) -> const Tensor<float>& { return f.rgb; }));
    mt1::save(dir / "corr.mt1", detail::stack_frames(video, [](const FrameMaps& f) -> const Tensor<float>& { return f.corr; }));
    mt1::save(dir / "depth.mt1", detail::stack_frames(video, [](const FrameMaps& f) -> const Tensor<float>& { return f.depth; }));
    mt1::save(dir / "mask.mt1", detail::stack_frames(video, [](const FrameMaps& f) -> const Tensor<float>& { return f.mask; }));
    std::cout << "render: " << video.size() << " frames -> " << dir.string() << "\n";
    return kOk;
}

/// Trains the toy regressor on the base video and scores the positive and
/// negative samples; exit 0 iff both verdicts hold.
inline int cmd_toy(const ExperimentConfig& cfg)
{
    const auto dir = detail::prepare_dir(cfg.out);
    const auto e = run_toy_experiment(cfg.seed, cfg.toy_experiment());
    write_loss_csv(dir / "loss.csv", e.train.curve);
    write_report_csv(dir / "report.csv", e.report);
    io::write_trajectory_csv(dir / "base_trajectory.csv", e.base);
    io::write_trajectory_csv(dir / "positive_trajectory.csv", e.positive);
    io::write_trajectory_csv(dir / "negative_trajectory.csv", e.negative);
    save_params(dir / "params", e.train.model.params, {{"kind", "toy"}, {"seed", cfg.seed}});
    const auto& r = e.report;
    std::cout << "toy: train " << r.final_train_mse << " pos " << r.pos_mse << " neg " << r.neg_mse
              << " shape_invariant=" << r.shape_invariant << " motion_sensitive=" << r.motion_sensitive << "\n";
    return r.passed() ? kOk : kVerdictFail;
}

inline GradCheckRegistry full_registry()
{
    GradCheckRegistry reg;
    register_layer_checks(reg);
    register_motionguide_checks(reg);
    register_toy_checks(reg);
    register_denoiser_checks(reg);
    return reg;
}

/// One report row per registered op; exit 0 iff every op is within its tolerance.
inline int cmd_gradcheck(const ExperimentConfig& cfg)
{
    const auto dir = detail::prepare_dir(cfg.out);
    auto reg = full_registry();
    if (!cfg.gradcheck_corrupt.empty()) {
        if (!reg.contains(cfg.gradcheck_corrupt))
            throw ConfigError("gradcheck_corrupt: no registered op '" + cfg.gradcheck_corrupt + "'");
        reg.corrupt(cfg.gradcheck_corrupt);
    }
    GradCheckOptions opt;
    opt.step = cfg.gradcheck_step;
    opt.max_entries = cfg.gradcheck_max_entries;
    opt.seed = cfg.seed;
    auto f = io::open_out(dir / "gradcheck.csv");
    f << "op,max_rel_error,tolerance,tensors,passed\n";
    bool all = true;
    for (const auto& name : reg.names()) {
        const auto r = reg.run(name, std::nullopt, opt);
        const double tol = reg.op(name).tolerance;
        const bool ok = r.passed(tol);
        all = all && ok;
        f << name << ',' << io::fmt_real(r.max_rel_error()) << ',' << io::fmt_real(tol) << ',' << r.tensors.size()
          << ',' << (ok ? "true" : "false") << '\n';
        if (!ok) std::cout << "gradcheck: FAIL " << name << " max_rel_error " << r.max_rel_error() << "\n";
    }
    std::cout << "gradcheck: " << reg.names().size() << " ops, " << (all ? "all passed" : "failures") << "\n";
    return all ? kOk : kVerdictFail;
}

namespace detail {

inline void write_pretrain_curve(const std::filesystem::path& path, const TrainCurve& c)
{
    auto f = io::open_out(path);
    f << "iter,loss\n";
    for (std::size_t i = 0; i < c.iter.size(); ++i) f << c.iter[i] << ',' << io::fmt_real(c.loss[i]) << '\n';
}

inline Checkpoint run_pretrain(const ExperimentConfig& cfg)
{
    const auto pc = cfg.pretrain_config();
    const auto sched = cfg.schedule();
    auto r = pretrain(make_corpus(pc), cfg.den, sched, pc);
    Checkpoint c{cfg.den, sched, std::move(r.params)};
    const auto dir = cfg.checkpoint_dir();
    prepare_dir(dir);
    save_checkpoint(dir, c);
    write_pretrain_curve(prepare_dir(cfg.out) / "pretrain_loss.csv", r.curve);
    std::cout << "pretrain: loss " << r.curve.loss.front() << " -> " << r.curve.loss.back() << ", checkpoint "
              << dir.string() << "\n";
    return c;
}

/// Pretrains when asked, otherwise loads the checkpoint (missing → ConfigError).
inline Checkpoint obtain_checkpoint(const ExperimentConfig& cfg)
{
    if (cfg.run_pretrain) return run_pretrain(cfg);
    const auto dir = cfg.checkpoint_dir();
    if (!std::filesystem::exists(dir / "manifest.json"))
        throw ConfigError("no checkpoint at " + dir.string() + " (run `pretrain` first or pass --pretrain)");
    try {
        return load_checkpoint(dir);
    } catch (const std::exception& e) {
        throw ConfigError("cannot load checkpoint " + dir.string() + ": " + e.what());
    }
}

inline SyntheticVideo source_video(const ExperimentConfig& cfg)
{
    auto spec = default_scene(cfg.seed, cfg.scene);
    spec.shape = concept_shape(cfg.source_concept);
    return render_video(spec);
}

}  // namespace detail

inline int cmd_pretrain(const ExperimentConfig& cfg)
{
    detail::run_pretrain(cfg);
    return kOk;
}

/// Fine-tune on the source, invert, sample with the target concept; writes
/// decoded frames and centroid tracks.
inline int cmd_edit(const ExperimentConfig& cfg)
{
    const auto ck = detail::obtain_checkpoint(cfg);
    const auto dir = detail::prepare_dir(cfg.out);
    const auto source = detail::source_video(cfg);
    const LatentCodec codec;
    const auto r = run_edit(ck.params, ck.den, ck.sched, source, cfg.edit(), codec);
    const auto frames = detail::prepare_dir(dir / "frames");
    detail::write_frames(frames, "edit", codec.decode(r.edited));
    detail::write_frames(frames, "source", codec.decode(r.source_latents));
    detail::write_centroids(dir / "centroids.csv", r.edited_track);
    detail::write_centroids(dir / "source_centroids.csv", r.source_track);
    {
        auto f = io::open_out(dir / "finetune_loss.csv");
        f << "iter,loss\n";
        for (std::size_t i = 0; i < r.tuned.curve.size(); ++i) f << i << ',' << io::fmt_real(r.tuned.curve[i]) << '\n';
    }
    {
        auto f = io::open_out(dir / "edit_report.csv");
        f << "mode,lambda,centroid_mse,range_ratio,eval_before,eval_after\n";
        f << to_string(r.tuned.model.mode) << ',' << io::fmt_real(r.tuned.model.lambda) << ','
          << io::fmt_real(r.centroid_mse) << ',' << io::fmt_real(r.range_ratio) << ','
          << io::fmt_real(r.tuned.eval_before) << ',' << io::fmt_real(r.tuned.eval_after) << '\n';
    }
    std::cout << "edit: centroid_mse " << r.centroid_mse << " range_ratio " << r.range_ratio << "\n";
    return kOk;
}

/// True when multiply beats no_guide on both metrics; nullopt when either
/// row is missing.
inline std::optional<bool> ablation_direction(const std::vector<AblationRow>& rows)
{
    const AblationRow *plain = nullptr, *mult = nullptr;
    for (const auto& r : rows) {
        if (r.mode == GuideMode::no_guide) plain = &r;
        if (r.mode == GuideMode::multiply) mult = &r;
    }
    if (!plain || !mult) return std::nullopt;
    return mult->centroid_mse < plain->centroid_mse
           && std::abs(mult->range_ratio - 1.0) < std::abs(plain->range_ratio - 1.0);
}

inline void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows)
{
    auto f = io::open_out(path);
    f << "mode,centroid_mse,range_ratio,seed\n";
    for (const auto& r : rows)
        f << to_string(r.mode) << ',' << io::fmt_real(r.centroid_mse) << ',' << io::fmt_real(r.range_ratio) << ','
          << r.seed << '\n';
}

/// Runs every requested mode with shared seeds; exit 1 when multiply does not
/// beat no_guide on both metrics.
inline int cmd_ablate(const ExperimentConfig& cfg)
{
    const auto ck = detail::obtain_checkpoint(cfg);
    const auto dir = detail::prepare_dir(cfg.out);
    const auto rows = ablate(cfg.ablate_modes, ck.params, ck.den, ck.sched, detail::source_video(cfg), cfg.edit());
    write_ablation_csv(dir / "ablation.csv", rows);
    for (const auto& r : rows)
        std::cout << "ablate: " << to_string(r.mode) << " centroid_mse " << r.centroid_mse << " range_ratio "
                  << r.range_ratio << "\n";
    const auto dirn = ablation_direction(rows);
    return dirn.value_or(true) ? kOk : kVerdictFail;
}

/// Parses argv-style arguments and runs one command; returns the exit code.
inline int run(const std::vector<std::string>& args)
{
    CLI::App app{"mglab: motion-guided video editing toy lab"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every command");

    struct Cmd {
        const char* name;
        const char* help;
        int (*fn)(const ExperimentConfig&);
    };
    const std::vector<Cmd> cmds = {
        {"render", "render the default scene to frames, CSV and MT1", cmd_render},
        {"toy", "trajectory-regression invariance experiment", cmd_toy},
        {"gradcheck", "finite-difference check of every differentiable op", cmd_gradcheck},
        {"pretrain", "pretrain the denoiser on the two-concept corpus", cmd_pretrain},
        {"edit", "fine-tune, invert and sample a concept swap", cmd_edit},
        {"ablate", "compare MotionGuide input modes on the concept swap", cmd_ablate},
    };

    std::string config_path;
    std::map<std::string, std::string> values;
    std::map<std::string, bool> flags;
    std::vector<std::pair<CLI::App*, std::vector<std::pair<std::string, CLI::Option*>>>> subs;
    bool print_config = false;
    app.add_flag("--print-config", print_config, "print the default config file and exit");

    for (const auto& c : cmds) {
        auto* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", config_path, "flat key = value config file")
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        std::vector<std::pair<std::string, CLI::Option*>> opts;
        for (const auto& k : config_keys()) {
            std::string flag = "--" + k.name;
            for (auto& ch : flag)
                if (ch == '_') ch = '-';
            CLI::Option* o = k.is_flag ? sub->add_flag(flag, flags[k.name], k.doc)
                                       : sub->add_option(flag, values[k.name], k.doc + " [" + k.default_value + "]")
                                             ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
            opts.emplace_back(k.name, o);
        }
        subs.emplace_back(sub, std::move(opts));
    }

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        if (std::find(args.begin(), args.end(), "--print-config") != args.end()) {
            std::cout << default_config_text();
            return kOk;
        }
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e) == 0 ? kOk : kConfigError;
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e) == 0 ? kOk : kConfigError;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        ExperimentConfig cfg;
        if (!config_path.empty()) apply_config_file(cfg, config_path);
        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (!subs[i].first->parsed()) continue;
            for (const auto& [key, opt] : subs[i].second) {
                if (opt->count() == 0) continue;
                set_key(cfg, key, config_key(key).is_flag ? (flags[key] ? "true" : "false") : values[key]);
            }
            cfg.validate();
            return cmds[i].fn(cfg);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << "\n";
        return kDivergence;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::runtime_error& e) {
        // unwritable outputs and similar environment failures
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    }
    return kConfigError;
}

}  // namespace mglab::cli
