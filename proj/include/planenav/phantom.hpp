#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "planenav/rng.hpp"
#include "planenav/vec3.hpp"
#include "planenav/volume.hpp"

namespace planenav {

enum class PhantomKind { straight_tube, torus_arc };

// Parabolic (Poiseuille) flow inside a tube of radius `radius` whose
// centerline is either a straight line through `origin` along `direction`,
// or a circular arc of `major_radius` around torus center `origin` in the
// plane normal to `direction`. Speeds scale with a periodic waveform;
// outside the vessel the velocity is white Gaussian noise.
struct PhantomSpec {
    PhantomKind kind = PhantomKind::straight_tube;
    int frames = 8;
    Dims3 dims{64, 64, 64};
    Vec3 spacing{2, 2, 2};
    double venc = 1500.0;  // mm/s

    double radius = 10.0;   // vessel radius, mm
    double v_max = 1000.0;  // peak centerline speed, mm/s
    Vec3 origin;            // tube: point on the axis; torus: circle center
    Vec3 direction{0, 0, 1};
    double major_radius = 28.0;   // torus only
    double arc_span_deg = 180.0;  // torus only

    double noise_sigma = 30.0;  // background velocity noise, mm/s
    double mag_inside = 1.0, mag_outside = 0.1;
    std::vector<double> waveform;  // empty -> default_waveform(frames)
};

// Raised-cosine cardiac-like cycle, peak value 1 at index floor(frames/3).
std::vector<double> default_waveform(int frames);

// Target plane P_T/n_T plus the analytic flow per timeframe,
// Q(t) = waveform(t) * v_max * pi * R^2 / 2 (mm^3/s).
struct GroundTruth {
    Vec3 p_t;
    Vec3 n_t;
    std::vector<double> q_mm3s;
    double radius = 0.0;
    std::string kind;
};

GroundTruth phantom_ground_truth(const PhantomSpec& spec);

// True when the vessel plus a 2-voxel margin fits laterally inside the grid.
bool phantom_fits(const PhantomSpec& spec);

// Rasterizes the phantom. Throws "tube exits volume" when phantom_fits is
// false.
FlowVolume4D make_phantom(const PhantomSpec& spec, std::uint64_t seed);

// Rigid motion of the acquisition: content rotated by `rot` about the volume
// center then shifted by `translation`; velocity vectors rotated alongside.
FlowVolume4D perturb_pose(const FlowVolume4D& vol, const Mat3& rot, const Vec3& translation);
FlowVolume4D perturb_pose(const FlowVolume4D& vol, const Vec3& euler_deg,
                          const Vec3& translation);

// The matching motion of the annotation.
GroundTruth transform_ground_truth(const GroundTruth& gt, const Mat3& rot,
                                   const Vec3& translation, const Vec3& center);

// JSON sidecar next to each phantom file.
void save_ground_truth(const std::string& path, const GroundTruth& gt);
GroundTruth load_ground_truth(const std::string& path);

// Places the vessel through the volume center (tube origin at the center;
// torus center offset so the arc midpoint sits there). Reads direction and
// major_radius, so set those first.
void center_spec(PhantomSpec& spec);

// Deterministic centered instance: a tube through the volume center along +z,
// or an arc whose midpoint sits at the center.
PhantomSpec canonical_spec(PhantomKind kind, Dims3 dims, Vec3 spacing);

// Randomized family member for building train/validation sets. Vessel size,
// speed, pose and (for arcs) curvature vary; everything stays inside the
// volume with margin by construction.
PhantomSpec sample_family_spec(PhantomKind kind, Dims3 dims, Vec3 spacing, Rng& rng);

}  // namespace planenav
