#pragma once

#include <vector>

#include "planenav/volume.hpp"

namespace planenav {

// Everything the navigation environment needs from an acquisition: the
// angiographic scalar volume (noise-suppressed, contrast-equalized, in [0,1])
// and the systolic-frame velocity field, both on a 2 mm isotropic grid.
struct EnvVolumes {
    ScalarVolume3D pcmra;
    VectorVolume3D v_sys;  // mm/s
    int sys_index = 0;
    double venc = 0.0;  // mm/s
};

// Angiographic intensity per voxel: sqrt((1/N) * sum_t M^2 * sum_j V_j^2).
ScalarVolume3D pcmra_basic(const FlowVolume4D& vol);

// Per-voxel mass-conservation weight in [0,1]. d = temporal std of |div V|
// (central differences, one-sided at the faces, physical spacing);
// K = clamp(1 - log(eps + d) / max_r log(eps + d), 0, 1). A field whose
// divergence never varies in time (d == 0 everywhere) gets K == 1 everywhere.
// Requires >= 2 timeframes.
ScalarVolume3D divergence_mask(const FlowVolume4D& vol, double eps = 1e-6);

// Same as pcmra_basic but with each velocity component scaled by K first,
// which suppresses voxels that violate mass conservation (noise).
ScalarVolume3D pcmra_masked(const FlowVolume4D& vol, const ScalarVolume3D& k_mask);

// Per-tile histogram state exposed for tests.
struct ClaheDebug {
    std::vector<std::vector<double>> clipped_hist;  // [tile][bin]
    std::vector<std::vector<double>> mapping;       // [tile][bin], each non-decreasing
    double clip_limit = 0.0;                        // counts, per tile of nominal size
};

// Contrast-limited adaptive histogram equalization on a 3D grid: the volume
// is partitioned into tiles_per_axis^3 tiles, each tile's histogram is
// clipped at clip * tile_voxels with the excess spread uniformly over all
// bins, and every voxel blends the 8 surrounding tile mappings trilinearly.
// Output is rescaled to [0,1]. Requires dims >= tiles_per_axis on every axis.
ScalarVolume3D clahe3d(const ScalarVolume3D& vol, int tiles_per_axis = 6, double clip = 0.01,
                       int bins = 256, ClaheDebug* debug = nullptr);

// Trilinear resample of all grids onto an isotropic target_mm lattice that
// spans the same physical extent (within one voxel). Velocity vectors keep
// their orientation; only sample positions change.
FlowVolume4D resample_isotropic(const FlowVolume4D& vol, double target_mm = 2.0);

// Picks the systolic timeframe: vessel mask = pcmra >= its 0.9 quantile,
// systole = frame with the highest mean in-mask speed (ties -> lowest index).
struct SystolicFrame {
    int index = 0;
    VectorVolume3D v_sys;
};
SystolicFrame extract_systolic(const FlowVolume4D& vol, const ScalarVolume3D& pcmra);

// Full pipeline: resample to 2 mm, divergence-mask the angiogram, equalize,
// extract the systolic frame.
EnvVolumes build_env(const FlowVolume4D& vol);

}  // namespace planenav
