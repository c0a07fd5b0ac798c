#pragma once

#include <vector>

#include "planenav/preproc.hpp"
#include "planenav/vec3.hpp"
#include "planenav/volume.hpp"

namespace planenav {

// Oriented plane carried by the agent: center point P (mm, world frame),
// unit normal n and in-plane unit axes w1, w2 with w2 = n x w1 (right-handed).
struct PlaneState {
    Vec3 P;
    Vec3 n{1, 0, 0};
    Vec3 w1{0, 1, 0};
    Vec3 w2{0, 0, 1};
};

// Largest deviation from unit length / pairwise orthogonality.
double orthonormality_error(const PlaneState& s);

// Gram-Schmidt repair: n kept (normalized), w1 projected off n, w2 = n x w1.
void renormalize_basis(PlaneState& s);

// Deterministic basis for a given normal: w1 from Gram-Schmidt of world y
// against n (world z if n is parallel to y), w2 = n x w1.
PlaneState make_plane(const Vec3& p, const Vec3& normal);

enum class PlaneAxis { w1, w2 };

// Rodrigues rotation of the whole basis about the chosen in-plane axis.
// Throws if |angle_deg| exceeds max_deg.
PlaneState rotate_in_plane(const PlaneState& s, PlaneAxis axis, double angle_deg,
                           double max_deg = 5.0);

// In-plane/through-plane translation by (d1 along w1, d2 along w2, dn along n)
// mm. Throws if any magnitude exceeds max_mm.
PlaneState translate_plane(const PlaneState& s, double d1, double d2, double dn,
                           double max_mm = 5.0);

// Trilinear interpolation at physical point p (grid-node convention: voxel
// (z,y,x) sits at (x*sx, y*sy, z*sz)). Points outside the node hull read 0.
double trilinear(const ScalarVolume3D& vol, const Vec3& p);
Vec3 trilinear_vec(const VectorVolume3D& vol, const Vec3& p);

// Two-channel observation sampled on the plane-local lattice. Channel 0 is
// the angiogram, channel 1 the normalized through-plane systolic speed.
struct StateTensor {
    int d = 0, h = 0, w = 0;  // sub-volume extents along n, w1, w2
    std::vector<double> v;    // [2][D][H][W]
    PlaneState plane;

    double& at(int c, int i, int j, int k) {
        return v[((static_cast<std::size_t>(c) * d + i) * h + j) * w + k];
    }
    double at(int c, int i, int j, int k) const {
        return v[((static_cast<std::size_t>(c) * d + i) * h + j) * w + k];
    }
};

// Samples the sub-volume around s.P on a grid_mm lattice: lattice point
// (i,j,k) sits at P + (i-(D-1)/2)*grid_mm*n + (j-(H-1)/2)*grid_mm*w1 +
// (k-(W-1)/2)*grid_mm*w2. Channel 0 gets the center row ((H-1)/2, integer
// division, along w2) and center column ((W-1)/2, along w1) of every slice
// overwritten with sentinel 1.0 so the agent can see its own axes.
// Channel 1 is min(|n . v_sys| / venc, 1).
StateTensor sample_state(const EnvVolumes& env, const PlaneState& s, Dims3 sub_dims,
                         double grid_mm = 2.0);

// Plane image without the sentinel axes, for segmentation and inspection:
// channel-0-style angiogram values plus the signed through-plane velocity.
struct PlaneImage {
    int h = 0, w = 0;
    double pixel_mm = 0.0;
    std::vector<double> intensity;  // [H][W]
    std::vector<double> v_through;  // [H][W], signed, mm/s
};
PlaneImage sample_plane_image(const EnvVolumes& env, const PlaneState& s, int h, int w,
                              double grid_mm = 2.0);

// Rigid motion of volume content: output voxel at x' reads the input at
// R^-1 (x' - c - t) + c where c is the volume's physical center. Vector
// fields additionally get their vectors rotated by R.
ScalarVolume3D rigid_resample(const ScalarVolume3D& vol, const Mat3& rot, const Vec3& t);
VectorVolume3D rigid_resample(const VectorVolume3D& vol, const Mat3& rot, const Vec3& t);
EnvVolumes rigid_transform_env(const EnvVolumes& env, const Mat3& rot, const Vec3& t);

// The matching motion of a plane: P' = R (P - c) + c + t, axes rotated.
PlaneState rigid_transform_plane(const PlaneState& s, const Mat3& rot, const Vec3& t,
                                 const Vec3& center);

}  // namespace planenav
