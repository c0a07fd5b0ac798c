#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "planenav/environment.hpp"
#include "planenav/phantom.hpp"
#include "planenav/policy_net.hpp"

namespace planenav {

struct PlaneMetrics {
    double angular_deg = 0.0;  // arccos of the signed normal dot product
    double distance_mm = 0.0;
};

PlaneMetrics plane_metrics(const PlaneState& s, const GroundTruth& gt);

struct EvalTraceRow {
    int t = 0;
    double cost = 0.0;
    double angular_deg = 0.0;
    double distance_mm = 0.0;
};

struct EvalEpisode {
    PlaneState final_plane;
    PlaneMetrics metrics;
    double final_cost = 0.0;
    std::vector<EvalTraceRow> trace;  // one row per step, t = 1..t_max
};

// Deterministic evaluation rollout: reset at the volume center with the +x
// normal, follow the scaled policy mean for exactly t_max steps.
EvalEpisode run_eval_episode(const Network& net, const EnvVolumes& env, const GroundTruth& gt,
                             const EpisodeConfig& episode);

struct InvarianceCell {
    double rot_deg = 0.0;  // applied to all three Euler angles
    double off_mm = 0.0;   // applied to all three translation axes
    PlaneMetrics metrics;
};

struct InvarianceTable {
    PlaneMetrics baseline;  // unperturbed volume
    std::vector<InvarianceCell> cells;
    double mean_angular = 0.0, std_angular = 0.0;
    double mean_distance = 0.0, std_distance = 0.0;
};

// -15..15 in steps of 5 (degrees or mm).
std::vector<double> invariance_levels();

// Rigidly moves the acquisition and its annotation over the rot x offset
// grid, re-runs preprocessing and a deterministic episode per cell, and
// summarizes the metrics with mean and sample std.
InvarianceTable invariance_grid(const Network& net, const FlowVolume4D& vol,
                                const GroundTruth& gt, const EpisodeConfig& episode,
                                const std::vector<double>& rot_deg = invariance_levels(),
                                const std::vector<double>& off_mm = invariance_levels());

struct ChanVeseParams {
    int iterations = 200;
    double smoothness = 0.2;  // contour-length weight
    double lambda_in = 1.0;   // inside data weight
    double lambda_out = 25.0;  // outside data weight; high because vessel
                               // intensity fades parabolically toward the wall
    double dt = 0.5;
    double epsilon = 1.0;  // smoothed-delta width
};

struct VesselMask {
    int h = 0, w = 0;
    std::vector<std::uint8_t> mask;  // 1 inside, row-major [H][W]
    bool fallback = false;           // disk fallback engaged
    int center_row = 0, center_col = 0;
    double area_mm2 = 0.0;

    bool at(int r, int c) const { return mask[static_cast<std::size_t>(r) * w + c] != 0; }
};

// Vessel lumen on a reformatted plane: a radius-3 disk at the image center
// hill-climbs (8-neighborhood, at most 20 moves) to maximize the magnitude of
// flow through it, then seeds a two-phase Chan-Vese contour on the intensity
// image; the mask is the connected component containing the disk center.
// Degenerate contours (uniform image, empty phase, center outside) fall back
// to the disk and set the flag.
VesselMask segment_vessel(const PlaneImage& img, const ChanVeseParams& params = {});
VesselMask segment_vessel(const EnvVolumes& env, const PlaneState& plane, int h = 64, int w = 64,
                          double pixel_mm = 2.0, const ChanVeseParams& params = {});

// Flow through the mask in L/min: sum of signed through-plane velocity times
// pixel area (mm^3/s), scaled by 6e-5; the sign follows the majority of the
// in-mask pixels. Throws on an empty mask.
double compute_flow_l_min(const VesselMask& mask, const PlaneImage& img);

struct Agreement {
    double r2 = 0.0;      // least-squares regression of b on a
    double bias = 0.0;    // mean(a - b)
    double loa_lo = 0.0;  // bias - 1.96 * std(a - b)
    double loa_hi = 0.0;
    double dice = 0.0;           // mean Dice after center-of-mass alignment
    double area_diff_pct = 0.0;  // mean |A_a - A_b| / A_a * 100
    bool has_masks = false;
};

// Flow and mask agreement between two measurement series. Throws on length
// mismatch, fewer than two pairs, or zero variance in a.
Agreement agreement_stats(const std::vector<double>& a, const std::vector<double>& b,
                          const std::vector<VesselMask>* masks_a = nullptr,
                          const std::vector<VesselMask>* masks_b = nullptr);

}  // namespace planenav
