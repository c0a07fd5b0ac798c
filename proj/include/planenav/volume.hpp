#pragma once

#include <cstddef>
#include <vector>

#include "planenav/vec3.hpp"

namespace planenav {

struct Dims3 {
    int z = 0, y = 0, x = 0;

    std::size_t count() const {
        return static_cast<std::size_t>(z) * static_cast<std::size_t>(y) *
               static_cast<std::size_t>(x);
    }
    bool operator==(const Dims3&) const = default;
};

// Grid-node convention throughout: voxel (z,y,x) sits at physical
// (x*spacing.x, y*spacing.y, z*spacing.z) mm, so the physical extent of an
// axis is (n-1)*spacing.
struct ScalarVolume3D {
    Dims3 dims;
    Vec3 spacing{1, 1, 1};  // (sx, sy, sz) mm
    std::vector<double> v;  // [Z][Y][X] row-major

    double& at(int z, int y, int x) {
        return v[(static_cast<std::size_t>(z) * dims.y + y) * dims.x + x];
    }
    double at(int z, int y, int x) const {
        return v[(static_cast<std::size_t>(z) * dims.y + y) * dims.x + x];
    }

    Vec3 physical_extent() const {
        return {(dims.x - 1) * spacing.x, (dims.y - 1) * spacing.y, (dims.z - 1) * spacing.z};
    }
    Vec3 center() const { return physical_extent() * 0.5; }

    static ScalarVolume3D zeros(Dims3 d, Vec3 s) {
        ScalarVolume3D out;
        out.dims = d;
        out.spacing = s;
        out.v.assign(d.count(), 0.0);
        return out;
    }
};

// Per-voxel 3-vector field (velocity), components stored as separate planes.
struct VectorVolume3D {
    Dims3 dims;
    Vec3 spacing{1, 1, 1};
    std::vector<double> v;  // [3][Z][Y][X]; component order (x, y, z)

    double& at(int c, int z, int y, int x) {
        return v[((static_cast<std::size_t>(c) * dims.z + z) * dims.y + y) * dims.x + x];
    }
    double at(int c, int z, int y, int x) const {
        return v[((static_cast<std::size_t>(c) * dims.z + z) * dims.y + y) * dims.x + x];
    }

    Vec3 vec_at(int z, int y, int x) const { return {at(0, z, y, x), at(1, z, y, x), at(2, z, y, x)}; }

    static VectorVolume3D zeros(Dims3 d, Vec3 s) {
        VectorVolume3D out;
        out.dims = d;
        out.spacing = s;
        out.v.assign(3 * d.count(), 0.0);
        return out;
    }
};

// Time-resolved velocity-encoded acquisition: magnitude plus a velocity
// vector per voxel per timeframe. Values live in memory as doubles; the file
// format quantizes to float32.
struct FlowVolume4D {
    int frames = 0;
    Dims3 dims;
    Vec3 spacing{1, 1, 1};
    double venc = 0.0;  // mm/s

    std::vector<double> magnitude;  // [T][Z][Y][X]
    std::vector<double> velocity;   // [T][3][Z][Y][X]

    std::size_t voxels() const { return dims.count(); }

    double& mag(int t, int z, int y, int x) {
        return magnitude[(static_cast<std::size_t>(t) * dims.z + z) * dims.y * dims.x +
                         static_cast<std::size_t>(y) * dims.x + x];
    }
    double mag(int t, int z, int y, int x) const {
        return magnitude[(static_cast<std::size_t>(t) * dims.z + z) * dims.y * dims.x +
                         static_cast<std::size_t>(y) * dims.x + x];
    }

    double& vel(int t, int c, int z, int y, int x) {
        return velocity[(((static_cast<std::size_t>(t) * 3 + c) * dims.z + z) * dims.y + y) *
                            dims.x + x];
    }
    double vel(int t, int c, int z, int y, int x) const {
        return velocity[(((static_cast<std::size_t>(t) * 3 + c) * dims.z + z) * dims.y + y) *
                            dims.x + x];
    }

    Vec3 vel_at(int t, int z, int y, int x) const {
        return {vel(t, 0, z, y, x), vel(t, 1, z, y, x), vel(t, 2, z, y, x)};
    }

    Vec3 physical_extent() const {
        return {(dims.x - 1) * spacing.x, (dims.y - 1) * spacing.y, (dims.z - 1) * spacing.z};
    }
    Vec3 center() const { return physical_extent() * 0.5; }

    static FlowVolume4D zeros(int frames, Dims3 d, Vec3 s, double venc) {
        FlowVolume4D out;
        out.frames = frames;
        out.dims = d;
        out.spacing = s;
        out.venc = venc;
        out.magnitude.assign(static_cast<std::size_t>(frames) * d.count(), 0.0);
        out.velocity.assign(static_cast<std::size_t>(frames) * 3 * d.count(), 0.0);
        return out;
    }

    // One timeframe's velocity field as a standalone vector volume.
    VectorVolume3D velocity_frame(int t) const {
        VectorVolume3D out = VectorVolume3D::zeros(dims, spacing);
        const std::size_t n = 3 * dims.count();
        const std::size_t base = static_cast<std::size_t>(t) * n;
        for (std::size_t i = 0; i < n; ++i) out.v[i] = velocity[base + i];
        return out;
    }
};

}  // namespace planenav
