#pragma once

#include <array>
#include <cmath>

namespace planenav {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3 operator-() const { return {-x, -y, -z}; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline Vec3 normalized(const Vec3& v) { return v / norm(v); }

// Row-major 3x3 matrix; m[r][c].
struct Mat3 {
    std::array<std::array<double, 3>, 3> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m[0][0] = r.m[1][1] = r.m[2][2] = 1.0;
        return r;
    }

    Vec3 operator*(const Vec3& v) const {
        return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
                m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
                m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += m[i][k] * o.m[k][j];
                r.m[i][j] = s;
            }
        return r;
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
        return r;
    }
};

// Rodrigues rotation of v about unit axis k by angle_rad.
inline Vec3 rotate_about_axis(const Vec3& v, const Vec3& k, double angle_rad) {
    const double c = std::cos(angle_rad), s = std::sin(angle_rad);
    return v * c + cross(k, v) * s + k * (dot(k, v) * (1.0 - c));
}

inline Mat3 rotation_about_axis(const Vec3& k, double angle_rad) {
    Mat3 r;
    const Vec3 ex = rotate_about_axis({1, 0, 0}, k, angle_rad);
    const Vec3 ey = rotate_about_axis({0, 1, 0}, k, angle_rad);
    const Vec3 ez = rotate_about_axis({0, 0, 1}, k, angle_rad);
    r.m[0] = {ex.x, ey.x, ez.x};
    r.m[1] = {ex.y, ey.y, ez.y};
    r.m[2] = {ex.z, ey.z, ez.z};
    return r;
}

constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

// Extrinsic x-y-z Euler rotation, angles in degrees: R = Rz * Ry * Rx.
inline Mat3 rotation_euler_xyz_deg(double ax, double ay, double az) {
    const Mat3 rx = rotation_about_axis({1, 0, 0}, deg_to_rad(ax));
    const Mat3 ry = rotation_about_axis({0, 1, 0}, deg_to_rad(ay));
    const Mat3 rz = rotation_about_axis({0, 0, 1}, deg_to_rad(az));
    return rz * (ry * rx);
}

}  // namespace planenav
