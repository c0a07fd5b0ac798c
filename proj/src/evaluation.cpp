#include "planenav/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "planenav/preproc.hpp"

namespace planenav {

PlaneMetrics plane_metrics(const PlaneState& s, const GroundTruth& gt) {
    const double c =
        std::clamp(dot(s.n, gt.n_t) / (norm(s.n) * norm(gt.n_t)), -1.0, 1.0);
    return {rad_to_deg(std::acos(c)), norm(s.P - gt.p_t)};
}

EvalEpisode run_eval_episode(const Network& net, const EnvVolumes& env, const GroundTruth& gt,
                             const EpisodeConfig& episode) {
    Rng unused(0);  // eval resets draw nothing
    Environment world(env, gt, episode);
    StateTensor obs = world.reset(EnvMode::eval, unused);
    LstmState lstm = LstmState::zeros(net.config().lstm_hidden);

    EvalEpisode out;
    for (int t = 0; t < episode.t_max; ++t) {
        PolicyOutput policy = net.forward(obs, lstm);
        lstm = policy.state;
        auto act = deterministic_action(policy, episode.omega_max, episode.d_max);
        auto res = world.step(Action::from_array(act));
        obs = std::move(res.state);
        const PlaneMetrics m = plane_metrics(world.plane(), gt);
        out.trace.push_back({res.t, res.cost_after, m.angular_deg, m.distance_mm});
    }
    out.final_plane = world.plane();
    out.metrics = plane_metrics(out.final_plane, gt);
    out.final_cost = world.cost(out.final_plane);
    return out;
}

std::vector<double> invariance_levels() { return {-15, -10, -5, 0, 5, 10, 15}; }

namespace {

struct RunningStats {
    double sum = 0.0, sumsq = 0.0;
    std::int64_t n = 0;
    void add(double x) {
        sum += x;
        sumsq += x * x;
        ++n;
    }
    double mean() const { return sum / static_cast<double>(n); }
    double sample_std() const {
        if (n < 2) return 0.0;
        const double m = mean();
        return std::sqrt(std::max(0.0, (sumsq - static_cast<double>(n) * m * m) /
                                           static_cast<double>(n - 1)));
    }
};

}  // namespace

InvarianceTable invariance_grid(const Network& net, const FlowVolume4D& vol,
                                const GroundTruth& gt, const EpisodeConfig& episode,
                                const std::vector<double>& rot_deg,
                                const std::vector<double>& off_mm) {
    InvarianceTable table;
    {
        const EnvVolumes env = build_env(vol);
        table.baseline = run_eval_episode(net, env, gt, episode).metrics;
    }
    const Vec3 center = vol.center();
    RunningStats ang, dist;
    for (double r : rot_deg) {
        const Mat3 rot = rotation_euler_xyz_deg(r, r, r);
        for (double o : off_mm) {
            const Vec3 t{o, o, o};
            const FlowVolume4D moved = perturb_pose(vol, rot, t);
            const GroundTruth moved_gt = transform_ground_truth(gt, rot, t, center);
            const EnvVolumes env = build_env(moved);
            const PlaneMetrics m = run_eval_episode(net, env, moved_gt, episode).metrics;
            table.cells.push_back({r, o, m});
            ang.add(m.angular_deg);
            dist.add(m.distance_mm);
        }
    }
    table.mean_angular = ang.mean();
    table.std_angular = ang.sample_std();
    table.mean_distance = dist.mean();
    table.std_distance = dist.sample_std();
    return table;
}

namespace {

constexpr double kDiskRadiusPx = 3.0;

double disk_flow(const PlaneImage& img, int r0, int c0) {
    double flow = 0.0;
    const int rr = static_cast<int>(kDiskRadiusPx);
    for (int r = r0 - rr; r <= r0 + rr; ++r) {
        for (int c = c0 - rr; c <= c0 + rr; ++c) {
            if (r < 0 || r >= img.h || c < 0 || c >= img.w) continue;
            const double dr = r - r0, dc = c - c0;
            if (dr * dr + dc * dc > kDiskRadiusPx * kDiskRadiusPx) continue;
            flow += img.v_through[static_cast<std::size_t>(r) * img.w + c];
        }
    }
    return flow * img.pixel_mm * img.pixel_mm;
}

std::vector<std::uint8_t> disk_mask(int h, int w, int r0, int c0) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(h) * w, 0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double dr = r - r0, dc = c - c0;
            if (dr * dr + dc * dc <= kDiskRadiusPx * kDiskRadiusPx)
                mask[static_cast<std::size_t>(r) * w + c] = 1;
        }
    }
    return mask;
}

// Connected component (4-neighborhood) of seed within set pixels.
std::vector<std::uint8_t> connected_component(const std::vector<std::uint8_t>& set, int h, int w,
                                              int seed_r, int seed_c) {
    std::vector<std::uint8_t> out(set.size(), 0);
    if (seed_r < 0 || seed_r >= h || seed_c < 0 || seed_c >= w) return out;
    if (!set[static_cast<std::size_t>(seed_r) * w + seed_c]) return out;
    std::vector<std::pair<int, int>> stack{{seed_r, seed_c}};
    out[static_cast<std::size_t>(seed_r) * w + seed_c] = 1;
    while (!stack.empty()) {
        auto [r, c] = stack.back();
        stack.pop_back();
        const int nr[4] = {r - 1, r + 1, r, r};
        const int nc[4] = {c, c, c - 1, c + 1};
        for (int i = 0; i < 4; ++i) {
            if (nr[i] < 0 || nr[i] >= h || nc[i] < 0 || nc[i] >= w) continue;
            const std::size_t idx = static_cast<std::size_t>(nr[i]) * w + nc[i];
            if (set[idx] && !out[idx]) {
                out[idx] = 1;
                stack.push_back({nr[i], nc[i]});
            }
        }
    }
    return out;
}

}  // namespace

VesselMask segment_vessel(const PlaneImage& img, const ChanVeseParams& params) {
    const int h = img.h, w = img.w;
    VesselMask out;
    out.h = h;
    out.w = w;

    // Step 1: disk at the plane center (the plane is centered on P).
    int r0 = (h - 1) / 2, c0 = (w - 1) / 2;

    // Step 2: hill-climb on |flow through the disk|, 8-neighborhood.
    const int margin = static_cast<int>(kDiskRadiusPx);
    double best = std::abs(disk_flow(img, r0, c0));
    for (int move = 0; move < 20; ++move) {
        int br = r0, bc = c0;
        double best_here = best;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const int r = r0 + dr, c = c0 + dc;
                if (r < margin || r >= h - margin || c < margin || c >= w - margin) continue;
                const double f = std::abs(disk_flow(img, r, c));
                if (f > best_here) {
                    best_here = f;
                    br = r;
                    bc = c;
                }
            }
        }
        if (br == r0 && bc == c0) break;
        r0 = br;
        c0 = bc;
        best = best_here;
    }
    out.center_row = r0;
    out.center_col = c0;

    auto fall_back = [&] {
        out.mask = disk_mask(h, w, r0, c0);
        out.fallback = true;
        double area = 0.0;
        for (std::uint8_t m : out.mask) area += m;
        out.area_mm2 = area * img.pixel_mm * img.pixel_mm;
        return out;
    };

    // Step 3: two-phase Chan-Vese level set seeded by the disk.
    std::vector<double> phi(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double dr = r - r0, dc = c - c0;
            phi[static_cast<std::size_t>(r) * w + c] =
                kDiskRadiusPx - std::sqrt(dr * dr + dc * dc);
        }
    const std::vector<double>& img_i = img.intensity;
    auto region_means = [&](double& c1, double& c2) {
        double s1 = 0, s2 = 0;
        std::int64_t n1 = 0, n2 = 0;
        for (std::size_t i = 0; i < phi.size(); ++i) {
            if (phi[i] > 0) {
                s1 += img_i[i];
                ++n1;
            } else {
                s2 += img_i[i];
                ++n2;
            }
        }
        if (n1 == 0 || n2 == 0) return false;
        c1 = s1 / static_cast<double>(n1);
        c2 = s2 / static_cast<double>(n2);
        return true;
    };

    double c1 = 0, c2 = 0;
    if (!region_means(c1, c2) || std::abs(c1 - c2) < 1e-6) return fall_back();

    auto at = [&](const std::vector<double>& f, int r, int c) {
        r = std::clamp(r, 0, h - 1);
        c = std::clamp(c, 0, w - 1);
        return f[static_cast<std::size_t>(r) * w + c];
    };
    std::vector<double> next(phi.size());
    for (int it = 0; it < params.iterations; ++it) {
        if (!region_means(c1, c2)) break;
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                const std::size_t idx = static_cast<std::size_t>(r) * w + c;
                const double fx = (at(phi, r, c + 1) - at(phi, r, c - 1)) / 2.0;
                const double fy = (at(phi, r + 1, c) - at(phi, r - 1, c)) / 2.0;
                const double fxx = at(phi, r, c + 1) - 2.0 * phi[idx] + at(phi, r, c - 1);
                const double fyy = at(phi, r + 1, c) - 2.0 * phi[idx] + at(phi, r - 1, c);
                const double fxy = (at(phi, r + 1, c + 1) - at(phi, r + 1, c - 1) -
                                    at(phi, r - 1, c + 1) + at(phi, r - 1, c - 1)) /
                                   4.0;
                const double g2 = fx * fx + fy * fy;
                const double kappa =
                    (fxx * fy * fy - 2.0 * fx * fy * fxy + fyy * fx * fx) /
                    (g2 * std::sqrt(g2) + 1e-8);
                const double din = img_i[idx] - c1;
                const double dout = img_i[idx] - c2;
                const double delta =
                    params.epsilon / (kPi * (params.epsilon * params.epsilon + phi[idx] * phi[idx]));
                next[idx] = phi[idx] + params.dt * delta *
                                           (params.smoothness * kappa -
                                            params.lambda_in * din * din +
                                            params.lambda_out * dout * dout);
            }
        }
        phi.swap(next);
    }

    std::vector<std::uint8_t> inside(phi.size(), 0);
    for (std::size_t i = 0; i < phi.size(); ++i) inside[i] = phi[i] > 0 ? 1 : 0;
    std::vector<std::uint8_t> component = connected_component(inside, h, w, r0, c0);
    double area = 0.0;
    for (std::uint8_t m : component) area += m;
    if (area == 0.0) return fall_back();

    out.mask = std::move(component);
    out.area_mm2 = area * img.pixel_mm * img.pixel_mm;
    return out;
}

VesselMask segment_vessel(const EnvVolumes& env, const PlaneState& plane, int h, int w,
                          double pixel_mm, const ChanVeseParams& params) {
    return segment_vessel(sample_plane_image(env, plane, h, w, pixel_mm), params);
}

double compute_flow_l_min(const VesselMask& mask, const PlaneImage& img) {
    if (mask.h != img.h || mask.w != img.w)
        throw std::runtime_error("compute_flow: mask and image dimensions differ");
    double flow = 0.0;
    std::int64_t pos = 0, neg = 0, any = 0;
    for (int r = 0; r < mask.h; ++r) {
        for (int c = 0; c < mask.w; ++c) {
            if (!mask.at(r, c)) continue;
            ++any;
            const double v = img.v_through[static_cast<std::size_t>(r) * img.w + c];
            flow += v;
            if (v > 0) ++pos;
            if (v < 0) ++neg;
        }
    }
    if (any == 0) throw std::runtime_error("compute_flow: empty mask");
    flow *= img.pixel_mm * img.pixel_mm;  // mm^3/s
    const int majority = pos > neg ? 1 : (neg > pos ? -1 : 0);
    if (majority != 0 && (flow > 0) != (majority > 0)) flow = -flow;
    return flow * 6e-5;
}

namespace {

std::pair<double, double> center_of_mass(const VesselMask& m) {
    double sr = 0, sc = 0, n = 0;
    for (int r = 0; r < m.h; ++r)
        for (int c = 0; c < m.w; ++c)
            if (m.at(r, c)) {
                sr += r;
                sc += c;
                n += 1;
            }
    if (n == 0) return {0.0, 0.0};
    return {sr / n, sc / n};
}

double aligned_dice(const VesselMask& a, const VesselMask& b) {
    const auto [ar, ac] = center_of_mass(a);
    const auto [br, bc] = center_of_mass(b);
    const int dr = static_cast<int>(std::lround(ar - br));
    const int dc = static_cast<int>(std::lround(ac - bc));
    double inter = 0, na = 0, nb = 0;
    for (int r = 0; r < a.h; ++r)
        for (int c = 0; c < a.w; ++c) {
            const bool in_a = a.at(r, c);
            const int r2 = r - dr, c2 = c - dc;
            const bool in_b =
                r2 >= 0 && r2 < b.h && c2 >= 0 && c2 < b.w && b.at(r2, c2);
            na += in_a;
            inter += in_a && in_b;
        }
    for (int r = 0; r < b.h; ++r)
        for (int c = 0; c < b.w; ++c) nb += b.at(r, c);
    if (na + nb == 0) return 0.0;
    return 2.0 * inter / (na + nb);
}

}  // namespace

Agreement agreement_stats(const std::vector<double>& a, const std::vector<double>& b,
                          const std::vector<VesselMask>* masks_a,
                          const std::vector<VesselMask>* masks_b) {
    if (a.size() != b.size()) throw std::runtime_error("agreement: length mismatch");
    const std::size_t n = a.size();
    if (n < 2) throw std::runtime_error("agreement: need at least two pairs");

    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sxx = 0, sxy = 0, sst = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (a[i] - ma) * (a[i] - ma);
        sxy += (a[i] - ma) * (b[i] - mb);
        sst += (b[i] - mb) * (b[i] - mb);
    }
    if (sxx == 0.0) throw std::runtime_error("agreement: zero variance in the reference series");

    Agreement out;
    if (sst == 0.0) {
        // b is constant: the regression of b on a explains it exactly.
        out.r2 = 1.0;
    } else {
        const double slope = sxy / sxx;
        const double intercept = mb - slope * ma;
        double ssr = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = b[i] - (slope * a[i] + intercept);
            ssr += e * e;
        }
        out.r2 = 1.0 - ssr / sst;
    }

    double dsum = 0;
    for (std::size_t i = 0; i < n; ++i) dsum += a[i] - b[i];
    out.bias = dsum / static_cast<double>(n);
    double dvar = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = (a[i] - b[i]) - out.bias;
        dvar += e * e;
    }
    const double dstd = std::sqrt(dvar / static_cast<double>(n - 1));
    out.loa_lo = out.bias - 1.96 * dstd;
    out.loa_hi = out.bias + 1.96 * dstd;

    if (masks_a && masks_b) {
        if (masks_a->size() != n || masks_b->size() != n)
            throw std::runtime_error("agreement: mask list length mismatch");
        out.has_masks = true;
        double dice = 0, area = 0;
        for (std::size_t i = 0; i < n; ++i) {
            dice += aligned_dice((*masks_a)[i], (*masks_b)[i]);
            const double aa = (*masks_a)[i].area_mm2, ab = (*masks_b)[i].area_mm2;
            area += aa > 0 ? std::abs(aa - ab) / aa * 100.0 : 0.0;
        }
        out.dice = dice / static_cast<double>(n);
        out.area_diff_pct = area / static_cast<double>(n);
    }
    return out;
}

}  // namespace planenav
