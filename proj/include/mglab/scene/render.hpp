#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mglab/numerics/tensor.hpp"
#include "mglab/scene/geometry.hpp"
#include "mglab/scene/trajectory.hpp"

namespace mglab {

enum class ShapeKind { cube, cuboid, octahedron };

inline std::string to_string(ShapeKind k)
{
    switch (k) {
    case ShapeKind::cube: return "cube";
    case ShapeKind::cuboid: return "cuboid";
    case ShapeKind::octahedron: return "octahedron";
    }
    return "?";
}

inline ShapeKind shape_kind_from_string(const std::string& s)
{
    if (s == "cube") return ShapeKind::cube;
    if (s == "cuboid") return ShapeKind::cuboid;
    if (s == "octahedron") return ShapeKind::octahedron;
    throw std::invalid_argument("unknown shape kind '" + s + "'");
}

struct ShapeSpec {
    ShapeKind kind = ShapeKind::cube;
    Vec3 half_extents{0.6, 0.6, 0.6};

    static ShapeSpec cube(double h) { return {ShapeKind::cube, {h, h, h}}; }

    void validate() const
    {
        if (!(half_extents.x > 0 && half_extents.y > 0 && half_extents.z > 0))
            throw std::invalid_argument("ShapeSpec: half-extents must be positive");
    }
    friend bool operator==(const ShapeSpec&, const ShapeSpec&) = default;
};

/// Pinhole camera at the origin looking down +z, x right, y down. Pixel (u,v)
/// samples the ray through (u+0.5, v+0.5).
struct Camera {
    std::size_t width = 64;
    std::size_t height = 64;
    double focal = 64.0;
    double z_near = 3.0;
    double z_far = 9.0;

    double cx() const { return 0.5 * static_cast<double>(width); }
    double cy() const { return 0.5 * static_cast<double>(height); }

    /// Image-plane projection of a camera-space point.
    std::array<double, 2> project(Vec3 p) const { return {focal * p.x / p.z + cx(), focal * p.y / p.z + cy()}; }
};

struct FrameMaps {
    Tensor<float> corr;   ///< [3,H,W] normalized object coordinates, 0 off-object
    Tensor<float> depth;  ///< [1,H,W] normalized inverse depth, 0 off-object
    Tensor<float> mask;   ///< [1,H,W] in {0,1}
    Tensor<float> rgb;    ///< [3,H,W] flat-shaded colour
    std::size_t pixels = 0;
    double alpha = 0.0;   ///< pixels / (H·W)
};

class OutOfView : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Plane {
    Vec3 n;  ///< unit outward normal
    double c;  ///< n·p <= c inside
};

/// Bounding half-spaces of a convex shape in object space.
inline std::vector<Plane> shape_planes(const ShapeSpec& s)
{
    s.validate();
    const Vec3 h = s.half_extents;
    std::vector<Plane> planes;
    if (s.kind == ShapeKind::octahedron) {
        for (int sx : {-1, 1})
            for (int sy : {-1, 1})
                for (int sz : {-1, 1}) {
                    const Vec3 raw{sx / h.x, sy / h.y, sz / h.z};
                    const double len = norm(raw);
                    planes.push_back({raw * (1.0 / len), 1.0 / len});
                }
    } else {
        for (int axis = 0; axis < 3; ++axis)
            for (int sgn : {-1, 1}) {
                Vec3 n;
                n[axis] = sgn;
                planes.push_back({n, h[axis]});
            }
    }
    return planes;
}

inline Vec3 base_colour(ShapeKind k)
{
    return k == ShapeKind::octahedron ? Vec3{0.25, 0.55, 0.95} : Vec3{0.95, 0.45, 0.2};
}

struct RayHit {
    double depth;    ///< camera-space z of the hit
    Vec3 object;     ///< hit point in object coordinates
    Vec3 normal;     ///< world-space unit normal of the hit face
};

/// Casts the camera ray through continuous image coordinates (x, y) against
/// every face of the shape and keeps the nearest hit.
inline std::optional<RayHit> trace_ray(const std::vector<Plane>& planes, const Pose& pose, const Camera& cam, double x,
                                       double y)
{
    const Mat3 R = pose.rotation();
    const Mat3 Rt = R.transposed();
    const Vec3 dir_cam{(x - cam.cx()) / cam.focal, (y - cam.cy()) / cam.focal, 1.0};
    const Vec3 origin = Rt * (Vec3{} - pose.translation());
    const Vec3 dir = Rt * dir_cam;
    constexpr double tol = 1e-9;

    double zbuf = std::numeric_limits<double>::infinity();
    std::optional<RayHit> best;
    for (std::size_t i = 0; i < planes.size(); ++i) {
        const double denom = dot(planes[i].n, dir);
        if (denom >= 0.0) continue;  // back face
        const double t = (planes[i].c - dot(planes[i].n, origin)) / denom;
        if (t <= 0.0 || t >= zbuf) continue;
        const Vec3 p = origin + dir * t;
        bool inside = true;
        for (std::size_t j = 0; j < planes.size() && inside; ++j)
            if (j != i && dot(planes[j].n, p) > planes[j].c + tol) inside = false;
        if (!inside) continue;
        zbuf = t;  // dir_cam.z == 1, so the ray parameter is camera depth
        best = RayHit{t, p, R * planes[i].n};
    }
    return best;
}

/// NOCS colour (p + h) / 2h per axis, clamped to [0,1].
inline Vec3 nocs_colour(const ShapeSpec& shape, Vec3 p)
{
    Vec3 c;
    for (int a = 0; a < 3; ++a)
        c[a] = std::clamp((p[a] + shape.half_extents[a]) / (2.0 * shape.half_extents[a]), 0.0, 1.0);
    return c;
}

inline double encode_depth(const Camera& cam, double z)
{
    const double zc = std::clamp(z, cam.z_near, cam.z_far);
    const double inv = (1.0 / zc - 1.0 / cam.z_far) / (1.0 / cam.z_near - 1.0 / cam.z_far);
    return 0.1 + 0.9 * inv;
}

inline FrameMaps render_frame(const ShapeSpec& shape, const Pose& pose, const Camera& cam)
{
    const auto planes = shape_planes(shape);
    const std::size_t H = cam.height, W = cam.width;
    FrameMaps f{Tensor<float>({3, H, W}), Tensor<float>({1, H, W}), Tensor<float>({1, H, W}),
                Tensor<float>({3, H, W}), 0, 0.0};
    const Vec3 light = normalized({0.35, -0.5, -1.0});
    const Vec3 base = base_colour(shape.kind);
    for (std::size_t v = 0; v < H; ++v)
        for (std::size_t u = 0; u < W; ++u) {
            const auto hit = trace_ray(planes, pose, cam, u + 0.5, v + 0.5);
            if (!hit) continue;
            const Vec3 c = nocs_colour(shape, hit->object);
            const double shade = 0.3 + 0.7 * std::max(0.0, dot(hit->normal, light));
            for (std::size_t ch = 0; ch < 3; ++ch) {
                f.corr.at(ch, v, u) = static_cast<float>(c[static_cast<int>(ch)]);
                f.rgb.at(ch, v, u) = static_cast<float>(base[static_cast<int>(ch)] * shade);
            }
            f.depth.at(0, v, u) = static_cast<float>(encode_depth(cam, hit->depth));
            f.mask.at(0, v, u) = 1.0f;
            ++f.pixels;
        }
    if (f.pixels == 0) throw OutOfView("object out of view");
    f.alpha = static_cast<double>(f.pixels) / static_cast<double>(H * W);
    return f;
}

/// Mean pixel coordinate (x, y) of a binary mask; image centre if empty.
inline std::array<double, 2> mask_centroid(const Tensor<float>& mask)
{
    const std::size_t H = mask.dim(mask.rank() - 2), W = mask.dim(mask.rank() - 1);
    double sx = 0, sy = 0, n = 0;
    for (std::size_t v = 0; v < H; ++v)
        for (std::size_t u = 0; u < W; ++u)
            if (mask[v * W + u] > 0.5f) {
                sx += u + 0.5;
                sy += v + 0.5;
                n += 1;
            }
    if (n == 0) return {0.5 * W, 0.5 * H};
    return {sx / n, sy / n};
}

struct SceneSpec {
    ShapeSpec shape;
    Trajectory trajectory;
    Camera camera;
};

struct SyntheticVideo {
    SceneSpec spec;
    std::vector<FrameMaps> frames;

    std::size_t size() const { return frames.size(); }
};

inline SyntheticVideo render_video(const SceneSpec& spec)
{
    SyntheticVideo video{spec, {}};
    video.frames.reserve(spec.trajectory.size());
    for (std::size_t k = 0; k < spec.trajectory.size(); ++k) {
        try {
            video.frames.push_back(render_frame(spec.shape, spec.trajectory.poses[k], spec.camera));
        } catch (const OutOfView& e) {
            throw OutOfView(std::string(e.what()) + " at frame " + std::to_string(k));
        }
    }
    return video;
}

}  // namespace mglab
