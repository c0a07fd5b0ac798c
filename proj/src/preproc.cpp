#include "planenav/preproc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "planenav/geometry.hpp"

namespace planenav {

namespace {

double central_diff(double prev, double next, double h2) { return (next - prev) / h2; }

// Per-axis derivative with one-sided stencils at the faces.
double ddx(const FlowVolume4D& vol, int t, int c, int z, int y, int x) {
    const int n = vol.dims.x;
    if (n < 2) return 0.0;
    if (x == 0) return (vol.vel(t, c, z, y, 1) - vol.vel(t, c, z, y, 0)) / vol.spacing.x;
    if (x == n - 1)
        return (vol.vel(t, c, z, y, n - 1) - vol.vel(t, c, z, y, n - 2)) / vol.spacing.x;
    return central_diff(vol.vel(t, c, z, y, x - 1), vol.vel(t, c, z, y, x + 1),
                        2.0 * vol.spacing.x);
}

double ddy(const FlowVolume4D& vol, int t, int c, int z, int y, int x) {
    const int n = vol.dims.y;
    if (n < 2) return 0.0;
    if (y == 0) return (vol.vel(t, c, z, 1, x) - vol.vel(t, c, z, 0, x)) / vol.spacing.y;
    if (y == n - 1)
        return (vol.vel(t, c, z, n - 1, x) - vol.vel(t, c, z, n - 2, x)) / vol.spacing.y;
    return central_diff(vol.vel(t, c, z, y - 1, x), vol.vel(t, c, z, y + 1, x),
                        2.0 * vol.spacing.y);
}

double ddz(const FlowVolume4D& vol, int t, int c, int z, int y, int x) {
    const int n = vol.dims.z;
    if (n < 2) return 0.0;
    if (z == 0) return (vol.vel(t, c, 1, y, x) - vol.vel(t, c, 0, y, x)) / vol.spacing.z;
    if (z == n - 1)
        return (vol.vel(t, c, n - 1, y, x) - vol.vel(t, c, n - 2, y, x)) / vol.spacing.z;
    return central_diff(vol.vel(t, c, z - 1, y, x), vol.vel(t, c, z + 1, y, x),
                        2.0 * vol.spacing.z);
}

}  // namespace

ScalarVolume3D pcmra_basic(const FlowVolume4D& vol) {
    ScalarVolume3D out = ScalarVolume3D::zeros(vol.dims, vol.spacing);
    const std::size_t n = vol.voxels();
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int t = 0; t < vol.frames; ++t) {
            const double m = vol.magnitude[static_cast<std::size_t>(t) * n + i];
            double v2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double v = vol.velocity[(static_cast<std::size_t>(t) * 3 + c) * n + i];
                v2 += v * v;
            }
            acc += m * m * v2;
        }
        out.v[i] = std::sqrt(acc / vol.frames);
    }
    return out;
}

ScalarVolume3D divergence_mask(const FlowVolume4D& vol, double eps) {
    if (vol.frames < 2) throw std::runtime_error("divergence_mask: needs >= 2 timeframes");
    ScalarVolume3D d = ScalarVolume3D::zeros(vol.dims, vol.spacing);

    // Temporal (population) std of |div V| per voxel.
    std::vector<double> absdiv(vol.frames);
    for (int z = 0; z < vol.dims.z; ++z)
        for (int y = 0; y < vol.dims.y; ++y)
            for (int x = 0; x < vol.dims.x; ++x) {
                double mean = 0.0;
                for (int t = 0; t < vol.frames; ++t) {
                    const double div = ddx(vol, t, 0, z, y, x) + ddy(vol, t, 1, z, y, x) +
                                       ddz(vol, t, 2, z, y, x);
                    absdiv[t] = std::abs(div);
                    mean += absdiv[t];
                }
                mean /= vol.frames;
                double var = 0.0;
                for (int t = 0; t < vol.frames; ++t)
                    var += (absdiv[t] - mean) * (absdiv[t] - mean);
                d.at(z, y, x) = std::sqrt(var / vol.frames);
            }

    const double dmax = *std::max_element(d.v.begin(), d.v.end());
    ScalarVolume3D k = ScalarVolume3D::zeros(vol.dims, vol.spacing);
    if (dmax == 0.0) {
        std::fill(k.v.begin(), k.v.end(), 1.0);
        return k;
    }
    const double lmax = std::log(eps + dmax);
    for (std::size_t i = 0; i < d.v.size(); ++i) {
        double val;
        if (lmax == 0.0)
            val = (d.v[i] == dmax) ? 0.0 : 1.0;
        else
            val = 1.0 - std::log(eps + d.v[i]) / lmax;
        k.v[i] = std::clamp(val, 0.0, 1.0);
    }
    return k;
}

ScalarVolume3D pcmra_masked(const FlowVolume4D& vol, const ScalarVolume3D& k_mask) {
    if (!(k_mask.dims == vol.dims))
        throw std::runtime_error("pcmra_masked: mask dims mismatch");
    ScalarVolume3D out = ScalarVolume3D::zeros(vol.dims, vol.spacing);
    const std::size_t n = vol.voxels();
    for (std::size_t i = 0; i < n; ++i) {
        const double kw = k_mask.v[i];
        double acc = 0.0;
        for (int t = 0; t < vol.frames; ++t) {
            const double m = vol.magnitude[static_cast<std::size_t>(t) * n + i];
            double v2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double v =
                    vol.velocity[(static_cast<std::size_t>(t) * 3 + c) * n + i] * kw;
                v2 += v * v;
            }
            acc += m * m * v2;
        }
        out.v[i] = std::sqrt(acc / vol.frames);
    }
    return out;
}

namespace {

// Tile boundaries: axis split into `tiles` spans at round(a*n/tiles).
std::vector<int> tile_bounds(int n, int tiles) {
    std::vector<int> b(tiles + 1);
    for (int a = 0; a <= tiles; ++a)
        b[a] = static_cast<int>(std::lround(static_cast<double>(a) * n / tiles));
    return b;
}

// Continuous tile coordinate for blending: which pair of tile centers
// brackets this voxel, and how far between them it sits.
void tile_blend(double pos, const std::vector<int>& bounds, int& t0, double& frac) {
    const int tiles = static_cast<int>(bounds.size()) - 1;
    auto center = [&](int t) { return (bounds[t] + bounds[t + 1] - 1) / 2.0; };
    if (pos <= center(0)) {
        t0 = 0;
        frac = 0.0;
        return;
    }
    if (pos >= center(tiles - 1)) {
        t0 = tiles - 1;
        frac = 0.0;
        return;
    }
    for (int t = 0; t < tiles - 1; ++t) {
        if (pos < center(t + 1)) {
            t0 = t;
            frac = (pos - center(t)) / (center(t + 1) - center(t));
            return;
        }
    }
    t0 = tiles - 1;
    frac = 0.0;
}

}  // namespace

ScalarVolume3D clahe3d(const ScalarVolume3D& vol, int tiles_per_axis, double clip, int bins,
                       ClaheDebug* debug) {
    const int nt = tiles_per_axis;
    if (vol.dims.z < nt || vol.dims.y < nt || vol.dims.x < nt)
        throw std::runtime_error("clahe3d: volume smaller than tile grid");
    if (bins < 2 || clip <= 0.0) throw std::runtime_error("clahe3d: bad parameters");

    const double vmin = *std::min_element(vol.v.begin(), vol.v.end());
    const double vmax = *std::max_element(vol.v.begin(), vol.v.end());
    ScalarVolume3D out = ScalarVolume3D::zeros(vol.dims, vol.spacing);
    if (vmax == vmin) return out;  // flat input stays flat

    const double scale = bins / (vmax - vmin);
    auto bin_of = [&](double v) {
        return std::min(bins - 1, static_cast<int>((v - vmin) * scale));
    };

    const std::vector<int> bz = tile_bounds(vol.dims.z, nt);
    const std::vector<int> by = tile_bounds(vol.dims.y, nt);
    const std::vector<int> bx = tile_bounds(vol.dims.x, nt);

    // Histogram, clip, redistribute, cumulative map per tile.
    const int ntiles = nt * nt * nt;
    std::vector<std::vector<double>> mapping(ntiles);
    std::vector<std::vector<double>> clipped(debug ? ntiles : 0);
    auto tile_id = [&](int tz, int ty, int tx) { return (tz * nt + ty) * nt + tx; };

    for (int tz = 0; tz < nt; ++tz)
        for (int ty = 0; ty < nt; ++ty)
            for (int tx = 0; tx < nt; ++tx) {
                std::vector<double> hist(bins, 0.0);
                double total = 0.0;
                for (int z = bz[tz]; z < bz[tz + 1]; ++z)
                    for (int y = by[ty]; y < by[ty + 1]; ++y)
                        for (int x = bx[tx]; x < bx[tx + 1]; ++x) {
                            hist[bin_of(vol.at(z, y, x))] += 1.0;
                            total += 1.0;
                        }
                const double limit = clip * total;
                double excess = 0.0;
                for (double& hb : hist)
                    if (hb > limit) {
                        excess += hb - limit;
                        hb = limit;
                    }
                const double share = excess / bins;
                for (double& hb : hist) hb += share;

                if (debug) clipped[tile_id(tz, ty, tx)] = hist;
                std::vector<double> map(bins);
                double cum = 0.0;
                for (int b = 0; b < bins; ++b) {
                    cum += hist[b];
                    map[b] = cum / total;
                }
                mapping[tile_id(tz, ty, tx)] = std::move(map);
            }

    // Blend the 8 surrounding tile mappings per voxel.
    for (int z = 0; z < vol.dims.z; ++z) {
        int tz0;
        double fz;
        tile_blend(z, bz, tz0, fz);
        const int tz1 = std::min(tz0 + 1, nt - 1);
        for (int y = 0; y < vol.dims.y; ++y) {
            int ty0;
            double fy;
            tile_blend(y, by, ty0, fy);
            const int ty1 = std::min(ty0 + 1, nt - 1);
            for (int x = 0; x < vol.dims.x; ++x) {
                int tx0;
                double fx;
                tile_blend(x, bx, tx0, fx);
                const int tx1 = std::min(tx0 + 1, nt - 1);
                const int b = bin_of(vol.at(z, y, x));
                const double m000 = mapping[tile_id(tz0, ty0, tx0)][b];
                const double m001 = mapping[tile_id(tz0, ty0, tx1)][b];
                const double m010 = mapping[tile_id(tz0, ty1, tx0)][b];
                const double m011 = mapping[tile_id(tz0, ty1, tx1)][b];
                const double m100 = mapping[tile_id(tz1, ty0, tx0)][b];
                const double m101 = mapping[tile_id(tz1, ty0, tx1)][b];
                const double m110 = mapping[tile_id(tz1, ty1, tx0)][b];
                const double m111 = mapping[tile_id(tz1, ty1, tx1)][b];
                const double m00 = m000 * (1 - fx) + m001 * fx;
                const double m01 = m010 * (1 - fx) + m011 * fx;
                const double m10 = m100 * (1 - fx) + m101 * fx;
                const double m11 = m110 * (1 - fx) + m111 * fx;
                const double m0 = m00 * (1 - fy) + m01 * fy;
                const double m1 = m10 * (1 - fy) + m11 * fy;
                out.at(z, y, x) = m0 * (1 - fz) + m1 * fz;
            }
        }
    }

    // Rescale to [0,1].
    const double omin = *std::min_element(out.v.begin(), out.v.end());
    const double omax = *std::max_element(out.v.begin(), out.v.end());
    if (omax > omin)
        for (double& v : out.v) v = (v - omin) / (omax - omin);
    else
        std::fill(out.v.begin(), out.v.end(), 0.0);

    if (debug) {
        debug->clipped_hist = std::move(clipped);
        debug->mapping = std::move(mapping);
        debug->clip_limit =
            clip * (static_cast<double>(vol.dims.count()) / ntiles);
    }
    return out;
}

FlowVolume4D resample_isotropic(const FlowVolume4D& vol, double target_mm) {
    if (target_mm <= 0.0) throw std::runtime_error("resample_isotropic: bad target spacing");
    Dims3 nd;
    nd.x = static_cast<int>(std::floor((vol.dims.x - 1) * vol.spacing.x / target_mm)) + 1;
    nd.y = static_cast<int>(std::floor((vol.dims.y - 1) * vol.spacing.y / target_mm)) + 1;
    nd.z = static_cast<int>(std::floor((vol.dims.z - 1) * vol.spacing.z / target_mm)) + 1;

    FlowVolume4D out = FlowVolume4D::zeros(vol.frames, nd, {target_mm, target_mm, target_mm},
                                           vol.venc);
    ScalarVolume3D frame = ScalarVolume3D::zeros(vol.dims, vol.spacing);
    const std::size_t n_in = vol.voxels(), n_out = out.voxels();

    auto resample_plane = [&](const double* src, double* dst) {
        std::copy(src, src + n_in, frame.v.begin());
        std::size_t o = 0;
        for (int z = 0; z < nd.z; ++z)
            for (int y = 0; y < nd.y; ++y)
                for (int x = 0; x < nd.x; ++x, ++o)
                    dst[o] = trilinear(frame, {x * target_mm, y * target_mm, z * target_mm});
    };

    for (int t = 0; t < vol.frames; ++t) {
        resample_plane(&vol.magnitude[static_cast<std::size_t>(t) * n_in],
                       &out.magnitude[static_cast<std::size_t>(t) * n_out]);
        for (int c = 0; c < 3; ++c)
            resample_plane(&vol.velocity[(static_cast<std::size_t>(t) * 3 + c) * n_in],
                           &out.velocity[(static_cast<std::size_t>(t) * 3 + c) * n_out]);
    }
    return out;
}

SystolicFrame extract_systolic(const FlowVolume4D& vol, const ScalarVolume3D& pcmra) {
    if (!(pcmra.dims == vol.dims))
        throw std::runtime_error("extract_systolic: pcmra dims mismatch");
    std::vector<double> sorted = pcmra.v;
    std::sort(sorted.begin(), sorted.end());
    const double thresh = sorted[static_cast<std::size_t>(0.9 * (sorted.size() - 1))];

    int best = 0;
    double best_speed = -1.0;
    const std::size_t n = vol.voxels();
    for (int t = 0; t < vol.frames; ++t) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (pcmra.v[i] < thresh) continue;
            double v2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double v = vol.velocity[(static_cast<std::size_t>(t) * 3 + c) * n + i];
                v2 += v * v;
            }
            sum += std::sqrt(v2);
            ++count;
        }
        const double mean = count ? sum / count : 0.0;
        if (mean > best_speed) {
            best_speed = mean;
            best = t;
        }
    }
    SystolicFrame out;
    out.index = best;
    out.v_sys = vol.velocity_frame(best);
    return out;
}

EnvVolumes build_env(const FlowVolume4D& vol) {
    const FlowVolume4D iso = resample_isotropic(vol, 2.0);
    const ScalarVolume3D k = divergence_mask(iso);
    const ScalarVolume3D masked = pcmra_masked(iso, k);
    EnvVolumes env;
    env.pcmra = clahe3d(masked);
    SystolicFrame sys = extract_systolic(iso, env.pcmra);
    env.sys_index = sys.index;
    env.v_sys = std::move(sys.v_sys);
    env.venc = iso.venc;
    return env;
}

}  // namespace planenav
