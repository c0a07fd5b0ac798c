#pragma once

#include <array>

#include "planenav/geometry.hpp"
#include "planenav/phantom.hpp"
#include "planenav/preproc.hpp"
#include "planenav/rng.hpp"

namespace planenav {

// One agent step: two in-plane-axis rotations (deg) and three translations
// (mm along w1, w2, n). Values are clamped to the configured limits on entry.
struct Action {
    double r1 = 0, r2 = 0;
    double m1 = 0, m2 = 0, mn = 0;

    static Action from_array(const std::array<double, 5>& a) {
        return {a[0], a[1], a[2], a[3], a[4]};
    }
};

enum class EnvMode { train, eval };

struct EpisodeConfig {
    Dims3 sub_dims{31, 84, 84};  // z=D, y=H, x=W
    double grid_mm = 2.0;
    double omega_max = 5.0;  // deg per rotation component
    double d_max = 5.0;      // mm per translation component
    int t_max = 100;
    double lambda = 0.025;  // mm^-1 weight on the distance term
    double bonus = 3.0;
    double bonus_angle_deg = 3.0;
    double bonus_dist_mm = 2.0;
};

// Navigation task over a preprocessed acquisition: the agent carries a plane
// and is rewarded for decreasing
//   C(s) = (1 - n.n_T / (|n||n_T|)) + lambda * |P - P_T|
// step by step (r_t = C(t-1) - C(t)), with a one-off bonus when it parks
// within the near-optimal tolerance. Training episodes stop there; eval
// episodes always run to t_max.
class Environment {
  public:
    Environment(const EnvVolumes& env, const GroundTruth& gt, EpisodeConfig cfg);

    StateTensor reset(EnvMode mode, Rng& rng);

    struct StepResult {
        StateTensor state;
        double reward = 0.0;
        bool done = false;
        double cost_before = 0.0;
        double cost_after = 0.0;
        bool bonus = false;
        int t = 0;
    };
    StepResult step(const Action& a);

    double cost(const PlaneState& s) const;
    double angle_error_deg(const PlaneState& s) const;
    double dist_error_mm(const PlaneState& s) const;

    const PlaneState& plane() const { return plane_; }
    const EnvVolumes& volumes() const { return env_; }
    const GroundTruth& ground_truth() const { return gt_; }
    const EpisodeConfig& config() const { return cfg_; }
    int t() const { return t_; }
    EnvMode mode() const { return mode_; }

  private:
    const EnvVolumes& env_;
    GroundTruth gt_;
    EpisodeConfig cfg_;
    PlaneState plane_;
    EnvMode mode_ = EnvMode::train;
    int t_ = 0;
};

}  // namespace planenav
