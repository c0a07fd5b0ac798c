#include "planenav/environment.hpp"

#include <algorithm>
#include <cmath>

namespace planenav {

Environment::Environment(const EnvVolumes& env, const GroundTruth& gt, EpisodeConfig cfg)
    : env_(env), gt_(gt), cfg_(cfg) {
    plane_ = make_plane(env_.pcmra.center(), {1, 0, 0});
}

double Environment::cost(const PlaneState& s) const {
    const double cosang = dot(s.n, gt_.n_t) / (norm(s.n) * norm(gt_.n_t));
    return (1.0 - cosang) + cfg_.lambda * norm(s.P - gt_.p_t);
}

double Environment::angle_error_deg(const PlaneState& s) const {
    const double c = std::clamp(dot(s.n, gt_.n_t) / (norm(s.n) * norm(gt_.n_t)), -1.0, 1.0);
    return rad_to_deg(std::acos(c));
}

double Environment::dist_error_mm(const PlaneState& s) const { return norm(s.P - gt_.p_t); }

StateTensor Environment::reset(EnvMode mode, Rng& rng) {
    mode_ = mode;
    t_ = 0;
    const Vec3 center = env_.pcmra.center();
    if (mode == EnvMode::eval) {
        plane_ = make_plane(center, {1, 0, 0});
    } else {
        const Vec3 ext = env_.pcmra.physical_extent();
        const Vec3 p = {center.x + rng.uniform(-0.1, 0.1) * ext.x,
                        center.y + rng.uniform(-0.1, 0.1) * ext.y,
                        center.z + rng.uniform(-0.1, 0.1) * ext.z};
        const Mat3 r = rng.rotation();
        plane_.P = p;
        plane_.n = r * Vec3{1, 0, 0};
        plane_.w1 = r * Vec3{0, 1, 0};
        plane_.w2 = r * Vec3{0, 0, 1};
        if (orthonormality_error(plane_) > 1e-9) renormalize_basis(plane_);
    }
    return sample_state(env_, plane_, cfg_.sub_dims, cfg_.grid_mm);
}

Environment::StepResult Environment::step(const Action& a) {
    const double w = cfg_.omega_max, d = cfg_.d_max;
    const double r1 = std::clamp(a.r1, -w, w);
    const double r2 = std::clamp(a.r2, -w, w);
    const double m1 = std::clamp(a.m1, -d, d);
    const double m2 = std::clamp(a.m2, -d, d);
    const double mn = std::clamp(a.mn, -d, d);

    StepResult res;
    res.cost_before = cost(plane_);

    // Fixed order: rotate about w1, then about the updated w2, then translate
    // in the post-rotation basis.
    PlaneState s = rotate_in_plane(plane_, PlaneAxis::w1, r1, w);
    s = rotate_in_plane(s, PlaneAxis::w2, r2, w);
    s = translate_plane(s, m1, m2, mn, d);

    res.cost_after = cost(s);
    res.reward = res.cost_before - res.cost_after;

    const double ang = angle_error_deg(s);
    const double dist = dist_error_mm(s);
    if (ang < cfg_.bonus_angle_deg && dist < cfg_.bonus_dist_mm) {
        res.reward += cfg_.bonus;
        res.bonus = true;
        if (mode_ == EnvMode::train) res.done = true;
    }

    plane_ = s;
    ++t_;
    res.t = t_;
    if (t_ >= cfg_.t_max) res.done = true;

    res.state = sample_state(env_, plane_, cfg_.sub_dims, cfg_.grid_mm);
    return res;
}

}  // namespace planenav
