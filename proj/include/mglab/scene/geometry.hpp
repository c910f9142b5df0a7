#pragma once

#include <array>
#include <cmath>

namespace mglab {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
    friend Vec3 operator*(double s, Vec3 a) { return a * s; }
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(Vec3 a) { return a * (1.0 / norm(a)); }

/// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    double operator()(int r, int c) const { return m[r * 3 + c]; }
    double& operator()(int r, int c) { return m[r * 3 + c]; }

    friend Mat3 operator*(const Mat3& a, const Mat3& b)
    {
        Mat3 o;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += a(r, k) * b(k, c);
                o(r, c) = s;
            }
        return o;
    }

    friend Vec3 operator*(const Mat3& a, Vec3 v)
    {
        return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z, a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z,
                a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z};
    }

    Mat3 transposed() const
    {
        Mat3 o;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) o(r, c) = (*this)(c, r);
        return o;
    }

    double det() const
    {
        const Mat3& a = *this;
        return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
               + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
    }
};

inline Mat3 rot_x(double a)
{
    const double c = std::cos(a), s = std::sin(a);
    return Mat3{{1, 0, 0, 0, c, -s, 0, s, c}};
}

inline Mat3 rot_y(double a)
{
    const double c = std::cos(a), s = std::sin(a);
    return Mat3{{c, 0, s, 0, 1, 0, -s, 0, c}};
}

inline Mat3 rot_z(double a)
{
    const double c = std::cos(a), s = std::sin(a);
    return Mat3{{c, -s, 0, s, c, 0, 0, 0, 1}};
}

/// Intrinsic rotation about X, then the new Y, then the new Z.
inline Mat3 euler_xyz(double rx, double ry, double rz) { return rot_x(rx) * rot_y(ry) * rot_z(rz); }

}  // namespace mglab
