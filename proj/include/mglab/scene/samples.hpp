#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>

#include "mglab/numerics/rng.hpp"
#include "mglab/scene/render.hpp"
#include "mglab/scene/trajectory.hpp"

namespace mglab {

struct SceneDefaults {
    std::size_t frames = 16;
    std::size_t resolution = 64;
    double focal = 64.0;
    double cube_half_extent = 0.6;
    double depth = 6.0;
};

/// Orbit-with-tumble parameters drawn from the default scene family.
inline TrajectoryParams sample_orbit_tumble(Rng& rng, double depth)
{
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
    auto sign = [&] { return u01(rng) < 0.5 ? -1.0 : 1.0; };
    TrajectoryParams p;
    p.centre = {0.0, 0.0, depth};
    p.radius = uni(0.9, 1.3);
    p.phase = uni(0.0, 2.0 * std::numbers::pi);
    p.revolutions = sign() * uni(0.6, 0.9);
    for (int a = 0; a < 3; ++a) {
        p.rotation0[a] = uni(-0.5, 0.5);
        p.rotation_rate[a] = sign() * uni(0.05, 0.2);
    }
    return p;
}

/// The scene used by the invariance experiment: a cube on an orbit-tumble
/// trajectory whose parameters are drawn from `seed`.
inline SceneSpec default_scene(std::uint64_t seed, const SceneDefaults& d = {})
{
    Rng rng = substream(seed, "scene");
    SceneSpec s;
    s.shape = ShapeSpec::cube(d.cube_half_extent);
    s.camera.width = s.camera.height = d.resolution;
    s.camera.focal = d.focal;
    s.trajectory = make_trajectory(TrajectoryKind::orbit, d.frames, sample_orbit_tumble(rng, d.depth));
    return s;
}

inline ShapeSpec positive_shape(const ShapeSpec& base)
{
    return {ShapeKind::cuboid, {base.half_extents.x * 1.5, base.half_extents.y * 0.6, base.half_extents.z * 1.0}};
}

/// Same trajectory and camera, different shape.
inline SyntheticVideo make_positive_sample(const SceneSpec& base)
{
    SceneSpec s = base;
    s.shape = positive_shape(base.shape);
    return render_video(s);
}

inline SyntheticVideo make_positive_sample(const SceneSpec& base, const ShapeSpec& shape)
{
    SceneSpec s = base;
    s.shape = shape;
    return render_video(s);
}

struct NegativeOptions {
    double separation = 3.0;  ///< minimum pose-sequence L2 distance
    std::uint64_t seed = 1;
    int max_attempts = 100;
};

/// Resamples the trajectory parameters of `base` from a range disjoint from
/// the base: phase shifted by [π/2, 3π/2], orbit direction and per-axis spin
/// direction reversed. Linear and tumble bases get reversed velocities/spins.
inline Trajectory sample_negative_trajectory(const Trajectory& base, Rng& rng)
{
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
    TrajectoryParams p = base.params;
    const double pi = std::numbers::pi;
    switch (base.kind) {
    case TrajectoryKind::orbit:
        p.phase = base.params.phase + uni(0.5 * pi, 1.5 * pi);
        p.revolutions = (base.params.revolutions >= 0 ? -1.0 : 1.0) * uni(0.6, 0.9);
        p.radius = uni(0.9, 1.3);
        break;
    case TrajectoryKind::linear:
        for (int a = 0; a < 2; ++a) p.velocity[a] = -base.params.velocity[a] + uni(-0.05, 0.05);
        break;
    case TrajectoryKind::tumble:
    case TrajectoryKind::custom:
        break;
    }
    if (base.kind == TrajectoryKind::custom)
        throw std::invalid_argument("make_negative_sample: custom trajectories have no parameter family");
    for (int a = 0; a < 3; ++a) {
        const double s = base.params.rotation_rate[a] >= 0 ? -1.0 : 1.0;
        p.rotation_rate[a] = s * uni(0.05, 0.2);
        p.rotation0[a] = uni(-0.5, 0.5);
    }
    return make_trajectory(base.kind, base.size(), p);
}

/// Same shape and camera, a different motion at least `separation` away.
inline SyntheticVideo make_negative_sample(const SceneSpec& base, const NegativeOptions& opt = {})
{
    if (!(opt.separation > 0)) throw std::invalid_argument("make_negative_sample: separation must be > 0");
    Rng rng = substream(opt.seed, "negative");
    for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
        Trajectory t = sample_negative_trajectory(base.trajectory, rng);
        if (pose_distance(t, base.trajectory) < opt.separation) continue;
        SceneSpec s = base;
        s.trajectory = std::move(t);
        return render_video(s);
    }
    throw std::runtime_error("make_negative_sample: no trajectory at separation "
                             + std::to_string(opt.separation) + " after "
                             + std::to_string(opt.max_attempts) + " attempts");
}

}  // namespace mglab
