#include "planenav/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace planenav {

namespace {

constexpr double kBasisDriftTol = 1e-9;

// Shared 8-corner kernel. Returns false when p falls outside the node hull.
struct TrilinearCell {
    int x0, y0, z0, x1, y1, z1;
    double fx, fy, fz;
};

bool locate_cell(const Dims3& dims, const Vec3& spacing, const Vec3& p, TrilinearCell& c) {
    const double gx = p.x / spacing.x, gy = p.y / spacing.y, gz = p.z / spacing.z;
    if (gx < 0.0 || gy < 0.0 || gz < 0.0) return false;
    if (gx > dims.x - 1 || gy > dims.y - 1 || gz > dims.z - 1) return false;
    auto split = [](double g, int n, int& i0, int& i1, double& f) {
        i0 = std::min(static_cast<int>(g), n - 1);
        i1 = std::min(i0 + 1, n - 1);
        f = g - i0;
    };
    split(gx, dims.x, c.x0, c.x1, c.fx);
    split(gy, dims.y, c.y0, c.y1, c.fy);
    split(gz, dims.z, c.z0, c.z1, c.fz);
    return true;
}

template <typename Fetch>
double lerp_cell(const TrilinearCell& c, Fetch fetch) {
    const double c00 = fetch(c.z0, c.y0, c.x0) * (1 - c.fx) + fetch(c.z0, c.y0, c.x1) * c.fx;
    const double c01 = fetch(c.z0, c.y1, c.x0) * (1 - c.fx) + fetch(c.z0, c.y1, c.x1) * c.fx;
    const double c10 = fetch(c.z1, c.y0, c.x0) * (1 - c.fx) + fetch(c.z1, c.y0, c.x1) * c.fx;
    const double c11 = fetch(c.z1, c.y1, c.x0) * (1 - c.fx) + fetch(c.z1, c.y1, c.x1) * c.fx;
    const double c0 = c00 * (1 - c.fy) + c01 * c.fy;
    const double c1 = c10 * (1 - c.fy) + c11 * c.fy;
    return c0 * (1 - c.fz) + c1 * c.fz;
}

}  // namespace

double orthonormality_error(const PlaneState& s) {
    double e = 0.0;
    e = std::max(e, std::abs(norm(s.n) - 1.0));
    e = std::max(e, std::abs(norm(s.w1) - 1.0));
    e = std::max(e, std::abs(norm(s.w2) - 1.0));
    e = std::max(e, std::abs(dot(s.n, s.w1)));
    e = std::max(e, std::abs(dot(s.n, s.w2)));
    e = std::max(e, std::abs(dot(s.w1, s.w2)));
    return e;
}

void renormalize_basis(PlaneState& s) {
    s.n = normalized(s.n);
    s.w1 = normalized(s.w1 - s.n * dot(s.w1, s.n));
    s.w2 = cross(s.n, s.w1);
}

PlaneState make_plane(const Vec3& p, const Vec3& normal) {
    PlaneState s;
    s.P = p;
    s.n = normalized(normal);
    Vec3 w1 = Vec3{0, 1, 0} - s.n * s.n.y;
    if (norm(w1) < 1e-9) w1 = Vec3{0, 0, 1} - s.n * s.n.z;
    s.w1 = normalized(w1);
    s.w2 = cross(s.n, s.w1);
    return s;
}

PlaneState rotate_in_plane(const PlaneState& s, PlaneAxis axis, double angle_deg,
                           double max_deg) {
    if (std::abs(angle_deg) > max_deg + 1e-12)
        throw std::runtime_error("rotate_in_plane: angle exceeds limit");
    const Vec3 k = (axis == PlaneAxis::w1) ? s.w1 : s.w2;
    const double a = deg_to_rad(angle_deg);
    PlaneState out = s;
    out.n = rotate_about_axis(s.n, k, a);
    out.w1 = rotate_about_axis(s.w1, k, a);
    out.w2 = rotate_about_axis(s.w2, k, a);
    if (orthonormality_error(out) > kBasisDriftTol) renormalize_basis(out);
    return out;
}

PlaneState translate_plane(const PlaneState& s, double d1, double d2, double dn,
                           double max_mm) {
    if (std::abs(d1) > max_mm + 1e-12 || std::abs(d2) > max_mm + 1e-12 ||
        std::abs(dn) > max_mm + 1e-12)
        throw std::runtime_error("translate_plane: displacement exceeds limit");
    PlaneState out = s;
    out.P = s.P + s.w1 * d1 + s.w2 * d2 + s.n * dn;
    return out;
}

double trilinear(const ScalarVolume3D& vol, const Vec3& p) {
    TrilinearCell c;
    if (!locate_cell(vol.dims, vol.spacing, p, c)) return 0.0;
    return lerp_cell(c, [&](int z, int y, int x) { return vol.at(z, y, x); });
}

Vec3 trilinear_vec(const VectorVolume3D& vol, const Vec3& p) {
    TrilinearCell c;
    if (!locate_cell(vol.dims, vol.spacing, p, c)) return {0, 0, 0};
    Vec3 out;
    out.x = lerp_cell(c, [&](int z, int y, int x) { return vol.at(0, z, y, x); });
    out.y = lerp_cell(c, [&](int z, int y, int x) { return vol.at(1, z, y, x); });
    out.z = lerp_cell(c, [&](int z, int y, int x) { return vol.at(2, z, y, x); });
    return out;
}

StateTensor sample_state(const EnvVolumes& env, const PlaneState& s, Dims3 sub_dims,
                         double grid_mm) {
    const int d = sub_dims.z, h = sub_dims.y, w = sub_dims.x;
    StateTensor t;
    t.d = d;
    t.h = h;
    t.w = w;
    t.plane = s;
    t.v.assign(2 * static_cast<std::size_t>(d) * h * w, 0.0);

    const double ci = (d - 1) / 2.0, cj = (h - 1) / 2.0, ck = (w - 1) / 2.0;
    for (int i = 0; i < d; ++i) {
        const Vec3 base_i = s.P + s.n * ((i - ci) * grid_mm);
        for (int j = 0; j < h; ++j) {
            const Vec3 base_j = base_i + s.w1 * ((j - cj) * grid_mm);
            for (int k = 0; k < w; ++k) {
                const Vec3 p = base_j + s.w2 * ((k - ck) * grid_mm);
                t.at(0, i, j, k) = trilinear(env.pcmra, p);
                const double vn = std::abs(dot(s.n, trilinear_vec(env.v_sys, p)));
                t.at(1, i, j, k) = std::min(vn / env.venc, 1.0);
            }
        }
    }
    // Sentinel axes: the agent sees where its own w1/w2 axes run.
    const int jc = (h - 1) / 2, kc = (w - 1) / 2;
    for (int i = 0; i < d; ++i) {
        for (int k = 0; k < w; ++k) t.at(0, i, jc, k) = 1.0;
        for (int j = 0; j < h; ++j) t.at(0, i, j, kc) = 1.0;
    }
    return t;
}

PlaneImage sample_plane_image(const EnvVolumes& env, const PlaneState& s, int h, int w,
                              double grid_mm) {
    PlaneImage img;
    img.h = h;
    img.w = w;
    img.pixel_mm = grid_mm;
    img.intensity.assign(static_cast<std::size_t>(h) * w, 0.0);
    img.v_through.assign(static_cast<std::size_t>(h) * w, 0.0);
    const double cj = (h - 1) / 2.0, ck = (w - 1) / 2.0;
    for (int j = 0; j < h; ++j) {
        for (int k = 0; k < w; ++k) {
            const Vec3 p = s.P + s.w1 * ((j - cj) * grid_mm) + s.w2 * ((k - ck) * grid_mm);
            img.intensity[static_cast<std::size_t>(j) * w + k] = trilinear(env.pcmra, p);
            img.v_through[static_cast<std::size_t>(j) * w + k] =
                dot(s.n, trilinear_vec(env.v_sys, p));
        }
    }
    return img;
}

namespace {

template <typename Vol, typename Sample>
Vol rigid_resample_impl(const Vol& vol, const Mat3& rot, const Vec3& t, Sample sample) {
    Vol out = vol;
    const Vec3 c = {(vol.dims.x - 1) * vol.spacing.x * 0.5, (vol.dims.y - 1) * vol.spacing.y * 0.5,
                    (vol.dims.z - 1) * vol.spacing.z * 0.5};
    const Mat3 rinv = rot.transposed();
    for (int z = 0; z < vol.dims.z; ++z)
        for (int y = 0; y < vol.dims.y; ++y)
            for (int x = 0; x < vol.dims.x; ++x) {
                const Vec3 dst = {x * vol.spacing.x, y * vol.spacing.y, z * vol.spacing.z};
                const Vec3 src = rinv * (dst - c - t) + c;
                sample(out, z, y, x, src);
            }
    return out;
}

}  // namespace

ScalarVolume3D rigid_resample(const ScalarVolume3D& vol, const Mat3& rot, const Vec3& t) {
    return rigid_resample_impl(vol, rot, t,
                               [&](ScalarVolume3D& out, int z, int y, int x, const Vec3& src) {
                                   out.at(z, y, x) = trilinear(vol, src);
                               });
}

VectorVolume3D rigid_resample(const VectorVolume3D& vol, const Mat3& rot, const Vec3& t) {
    return rigid_resample_impl(vol, rot, t,
                               [&](VectorVolume3D& out, int z, int y, int x, const Vec3& src) {
                                   const Vec3 v = rot * trilinear_vec(vol, src);
                                   out.at(0, z, y, x) = v.x;
                                   out.at(1, z, y, x) = v.y;
                                   out.at(2, z, y, x) = v.z;
                               });
}

EnvVolumes rigid_transform_env(const EnvVolumes& env, const Mat3& rot, const Vec3& t) {
    EnvVolumes out;
    out.pcmra = rigid_resample(env.pcmra, rot, t);
    out.v_sys = rigid_resample(env.v_sys, rot, t);
    out.sys_index = env.sys_index;
    out.venc = env.venc;
    return out;
}

PlaneState rigid_transform_plane(const PlaneState& s, const Mat3& rot, const Vec3& t,
                                 const Vec3& center) {
    PlaneState out;
    out.P = rot * (s.P - center) + center + t;
    out.n = rot * s.n;
    out.w1 = rot * s.w1;
    out.w2 = rot * s.w2;
    if (orthonormality_error(out) > kBasisDriftTol) renormalize_basis(out);
    return out;
}

}  // namespace planenav
