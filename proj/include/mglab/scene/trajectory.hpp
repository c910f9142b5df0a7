#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "mglab/scene/geometry.hpp"

namespace mglab {

/// 6-DOF pose: translation in world units, intrinsic XYZ Euler angles in radians.
struct Pose {
    double tx = 0, ty = 0, tz = 0;
    double rx = 0, ry = 0, rz = 0;

    Vec3 translation() const { return {tx, ty, tz}; }
    Mat3 rotation() const { return euler_xyz(rx, ry, rz); }
    std::array<double, 6> values() const { return {tx, ty, tz, rx, ry, rz}; }
    friend bool operator==(const Pose&, const Pose&) = default;
};

enum class TrajectoryKind { orbit, linear, tumble, custom };

inline std::string to_string(TrajectoryKind k)
{
    switch (k) {
    case TrajectoryKind::orbit: return "orbit";
    case TrajectoryKind::linear: return "linear";
    case TrajectoryKind::tumble: return "tumble";
    case TrajectoryKind::custom: return "custom";
    }
    return "?";
}

inline TrajectoryKind trajectory_kind_from_string(const std::string& s)
{
    if (s == "orbit") return TrajectoryKind::orbit;
    if (s == "linear") return TrajectoryKind::linear;
    if (s == "tumble") return TrajectoryKind::tumble;
    if (s == "custom") return TrajectoryKind::custom;
    throw std::invalid_argument("unknown trajectory kind '" + s + "'");
}

/// Parameters of the trajectory families. Which fields are read depends on the kind:
///  - orbit:  centre + radius·(cos θ_k, sin θ_k, 0), θ_k = phase + 2π·revolutions·k/N
///  - linear: centre + k·velocity
///  - tumble: fixed centre
/// Every kind adds rotation = rotation0 + k·rotation_rate; custom uses `poses` verbatim.
struct TrajectoryParams {
    Vec3 centre{0, 0, 6};
    double radius = 1.0;
    double phase = 0.0;
    double revolutions = 1.0;
    Vec3 velocity{0, 0, 0};
    Vec3 rotation0{0, 0, 0};
    Vec3 rotation_rate{0, 0, 0};
    std::vector<Pose> poses;
};

struct Trajectory {
    TrajectoryKind kind = TrajectoryKind::custom;
    TrajectoryParams params;
    std::vector<Pose> poses;

    std::size_t size() const { return poses.size(); }
};

inline Trajectory make_trajectory(TrajectoryKind kind, std::size_t frames, const TrajectoryParams& p)
{
    if (kind == TrajectoryKind::custom) {
        if (p.poses.size() < 2) throw std::invalid_argument("make_trajectory: need at least 2 poses");
        frames = p.poses.size();
    }
    if (frames < 2) throw std::invalid_argument("make_trajectory: need at least 2 frames");

    Trajectory t{kind, p, {}};
    if (kind == TrajectoryKind::custom) {
        t.poses = p.poses;
    } else {
        t.poses.resize(frames);
        for (std::size_t k = 0; k < frames; ++k) {
            const double kf = static_cast<double>(k);
            Vec3 pos = p.centre;
            if (kind == TrajectoryKind::orbit) {
                const double th = p.phase + 2.0 * std::numbers::pi * p.revolutions * kf / static_cast<double>(frames);
                pos = p.centre + Vec3{p.radius * std::cos(th), p.radius * std::sin(th), 0.0};
            } else if (kind == TrajectoryKind::linear) {
                pos = p.centre + p.velocity * kf;
            }
            const Vec3 rot = p.rotation0 + p.rotation_rate * kf;
            t.poses[k] = Pose{pos.x, pos.y, pos.z, rot.x, rot.y, rot.z};
        }
    }
    for (const auto& pose : t.poses)
        for (double v : pose.values())
            if (!std::isfinite(v)) throw std::invalid_argument("make_trajectory: non-finite pose value");
    return t;
}

/// L2 distance between two pose sequences of equal length, over all 6·N values.
inline double pose_distance(const Trajectory& a, const Trajectory& b)
{
    if (a.size() != b.size()) throw std::invalid_argument("pose_distance: frame counts differ");
    double s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const auto va = a.poses[k].values(), vb = b.poses[k].values();
        for (int i = 0; i < 6; ++i) s += (va[i] - vb[i]) * (va[i] - vb[i]);
    }
    return std::sqrt(s);
}

}  // namespace mglab
