#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "planenav/autodiff.hpp"
#include "planenav/geometry.hpp"
#include "planenav/rng.hpp"
#include "planenav/volume_io.hpp"

namespace planenav {

// Actor-critic tower: four stride-2 residual conv stages, a fully connected
// layer to the latent, one LSTM cell, then three linear heads (mu via
// softsign, sigma via softplus with a small floor, scalar value).
struct NetworkConfig {
    int in_channels = 2;
    Dims3 sub_dims{31, 84, 84};  // z=D (along n), y=H (along w1), x=W (along w2)
    std::array<int, 4> conv_channels{16, 32, 32, 64};
    int latent = 1024;
    int lstm_hidden = 256;
    int n_actions = 5;
    double sigma_floor = 1e-6;

    bool operator==(const NetworkConfig&) const = default;
};

struct LstmState {
    std::vector<double> h, c;
    static LstmState zeros(int hidden) {
        LstmState s;
        s.h.assign(hidden, 0.0);
        s.c.assign(hidden, 0.0);
        return s;
    }
};

struct PolicyOutput {
    std::vector<double> mu;     // each in (-1, 1)
    std::vector<double> sigma;  // > 0
    double value = 0.0;
    LstmState state;
};

class Network {
  public:
    explicit Network(NetworkConfig cfg);

    const NetworkConfig& config() const { return cfg_; }
    void init_params(Rng& rng);

    // Named parameter arrays in canonical (checkpoint) order.
    std::vector<std::pair<std::string, std::vector<double>>>& params() { return params_; }
    const std::vector<std::pair<std::string, std::vector<double>>>& params() const {
        return params_;
    }
    std::size_t param_count() const;

    // Includes a "net.config" architecture fingerprint alongside the params.
    Checkpoint to_checkpoint(std::uint64_t step, double score) const;
    // Throws on missing array name, element-count mismatch, or a fingerprint
    // that does not match this network's configuration.
    void load(const Checkpoint& ckpt);

    // Inference-only forward.
    PolicyOutput forward(const StateTensor& obs, const LstmState& in) const;

    // Graph-building forward for training. param_ids must come from
    // register_params on the same tape; h/c are tape node ids.
    struct TapeForward {
        int mu = -1, sigma = -1, value = -1;
        int h = -1, c = -1;
    };
    std::vector<int> register_params(ad::Tape& tape) const;
    TapeForward forward_on_tape(ad::Tape& tape, const std::vector<int>& param_ids,
                                const StateTensor& obs, int h_id, int c_id) const;

    // Layer-by-layer parameter summary for the describe command.
    std::string describe() const;

  private:
    NetworkConfig cfg_;
    std::vector<std::pair<std::string, std::vector<double>>> params_;
    int stage_in_ch(int stage) const;
    int flat_size_ = 0;

    int param_index(const std::string& name) const;
};

// Reads the architecture fingerprint a checkpoint was written with.
NetworkConfig config_from_checkpoint(const Checkpoint& ckpt);

// One environment step as seen by the learner.
struct StepRecord {
    StateTensor obs;
    std::vector<double> z;  // pre-clamp Gaussian sample
    double reward = 0.0;
};

// k-step advantages F_t and return targets R_t from recorded rewards and
// value estimates. values has length rewards.size()+1: trailing entry is the
// bootstrap (0 when the episode terminated). Windows truncate at the end:
// F_t = sum_{i<L} gamma^i r_{t+i} + gamma^L values[t+L] - values[t] with
// L = min(k_a, T-t), and R_t = F_t + values[t].
struct WindowTargets {
    std::vector<double> f, r;
};
WindowTargets a3c_targets(const std::vector<double>& rewards, const std::vector<double>& values,
                          double gamma, int k_a);

// Total loss over a window: per step -log pi(z_t) * F_t - eta * H(sigma_t)
// plus value_coef * 0.5 * (R_t - G_t)^2. F_t and R_t enter as constants.
// Gradient flows through the LSTM across all steps of the window; h0/c0 are
// constants (truncation at the window boundary).
struct A3cResult {
    double loss = 0.0;
    std::vector<std::pair<std::string, std::vector<double>>> grads;  // canonical order
};
A3cResult a3c_backward(const Network& net, const std::vector<StepRecord>& window,
                       const LstmState& h0, const WindowTargets& targets, double eta,
                       double value_coef);
// Forward-only evaluation of the same loss (finite-difference oracle hook).
double a3c_loss(const Network& net, const std::vector<StepRecord>& window, const LstmState& h0,
                const WindowTargets& targets, double eta, double value_coef);

// Gaussian policy helpers.
double gaussian_entropy(const std::vector<double>& sigma);
double gaussian_log_prob(const std::vector<double>& mu, const std::vector<double>& sigma,
                         const std::vector<double>& z);

// Draws z ~ N(mu, sigma) per component; the physical action scales z by
// omega_max (components 0,1) or d_max (components 2,3,4) and clamps.
struct SampledAction {
    std::vector<double> z;
    std::array<double, 5> action;  // r1 deg, r2 deg, m1 mm, m2 mm, mn mm
};
SampledAction sample_action(const PolicyOutput& out, Rng& rng, double omega_max, double d_max);
std::array<double, 5> deterministic_action(const PolicyOutput& out, double omega_max,
                                           double d_max);

}  // namespace planenav
