#include "planenav/policy_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace planenav {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

int half(int n) { return ad::Tape::out_size(n, 2); }

}  // namespace

Network::Network(NetworkConfig cfg) : cfg_(cfg) {
    int d = cfg_.sub_dims.z, h = cfg_.sub_dims.y, w = cfg_.sub_dims.x;
    int ci = cfg_.in_channels;
    auto add_param = [&](const std::string& name, std::size_t count) {
        params_.emplace_back(name, std::vector<double>(count, 0.0));
    };
    for (int s = 0; s < 4; ++s) {
        const int co = cfg_.conv_channels[s];
        add_param("conv" + std::to_string(s + 1) + ".weight",
                  static_cast<std::size_t>(co) * ci * 27);
        add_param("conv" + std::to_string(s + 1) + ".bias", co);
        if (ci != co) {
            add_param("proj" + std::to_string(s + 1) + ".weight",
                      static_cast<std::size_t>(co) * ci);
            add_param("proj" + std::to_string(s + 1) + ".bias", co);
        }
        ci = co;
        d = half(d);
        h = half(h);
        w = half(w);
    }
    flat_size_ = ci * d * h * w;
    add_param("fc.weight", static_cast<std::size_t>(cfg_.latent) * flat_size_);
    add_param("fc.bias", cfg_.latent);
    const int hh = cfg_.lstm_hidden;
    add_param("lstm.w_ih", static_cast<std::size_t>(4 * hh) * cfg_.latent);
    add_param("lstm.w_hh", static_cast<std::size_t>(4 * hh) * hh);
    add_param("lstm.b_ih", 4 * hh);
    add_param("lstm.b_hh", 4 * hh);
    add_param("mu.weight", static_cast<std::size_t>(cfg_.n_actions) * hh);
    add_param("mu.bias", cfg_.n_actions);
    add_param("sigma.weight", static_cast<std::size_t>(cfg_.n_actions) * hh);
    add_param("sigma.bias", cfg_.n_actions);
    add_param("value.weight", hh);
    add_param("value.bias", 1);
}

int Network::param_index(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].first == name) return static_cast<int>(i);
    throw std::runtime_error("network: unknown parameter '" + name + "'");
}

int Network::stage_in_ch(int stage) const {
    return stage == 0 ? cfg_.in_channels : cfg_.conv_channels[stage - 1];
}

std::size_t Network::param_count() const {
    std::size_t n = 0;
    for (const auto& [name, arr] : params_) n += arr.size();
    return n;
}

void Network::init_params(Rng& rng) {
    // Gains are chosen to keep activation variance roughly constant through
    // the trunk. With plain 1/sqrt(fan_in) bounds every layer shrinks the
    // signal by ~1/sqrt(3), and across conv stages + fc + LSTM the
    // observation reaches the heads three orders of magnitude below the
    // bias floor — the net starts effectively blind to its input and small
    // update budgets never recover from that.
    auto uniform_gain = [&](std::vector<double>& arr, int fan_in, double gain_sq) {
        const double bound = std::sqrt(3.0 * gain_sq / static_cast<double>(fan_in));
        for (double& v : arr) v = rng.uniform(-bound, bound);
    };
    // Each output unit's weight row is a random direction of fixed length:
    // `scale` sets the head's initial sensitivity independent of fan-in.
    auto row_normalized = [&](std::vector<double>& arr, int rows, int cols, double scale) {
        for (int r = 0; r < rows; ++r) {
            double* row = arr.data() + static_cast<std::size_t>(r) * cols;
            double nrm = 0.0;
            for (int i = 0; i < cols; ++i) {
                row[i] = rng.gaussian(0.0, 1.0);
                nrm += row[i] * row[i];
            }
            nrm = std::sqrt(std::max(nrm, 1e-30));
            for (int i = 0; i < cols; ++i) row[i] *= scale / nrm;
        }
    };
    // Gram-Schmidt orthogonalization of an m x m block of Gaussian rows.
    auto orthogonal_block = [&](double* block, int m) {
        for (int i = 0; i < m * m; ++i) block[i] = rng.gaussian(0.0, 1.0);
        for (int r = 0; r < m; ++r) {
            double* row = block + static_cast<std::size_t>(r) * m;
            for (int p = 0; p < r; ++p) {
                const double* prev = block + static_cast<std::size_t>(p) * m;
                double d = 0.0;
                for (int i = 0; i < m; ++i) d += row[i] * prev[i];
                for (int i = 0; i < m; ++i) row[i] -= d * prev[i];
            }
            double nrm = 0.0;
            for (int i = 0; i < m; ++i) nrm += row[i] * row[i];
            nrm = std::sqrt(std::max(nrm, 1e-30));
            for (int i = 0; i < m; ++i) row[i] /= nrm;
        }
    };

    const int hh = cfg_.lstm_hidden;
    for (auto& [name, arr] : params_) {
        const bool is_bias = name.size() > 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
        if (is_bias) {
            // Zero biases keep the signal path honest at the start; the
            // conv/fc biases would otherwise drown the input contribution.
            std::fill(arr.begin(), arr.end(), 0.0);
        } else if (name.rfind("conv", 0) == 0) {
            const int stage = name[4] - '1';
            uniform_gain(arr, stage_in_ch(stage) * 27, 2.0);  // ReLU follows
        } else if (name.rfind("proj", 0) == 0) {
            const int stage = name[4] - '1';
            uniform_gain(arr, stage_in_ch(stage), 1.0);  // linear skip branch
        } else if (name == "fc.weight") {
            uniform_gain(arr, flat_size_, 2.0);  // ReLU follows
        } else if (name == "lstm.w_ih") {
            uniform_gain(arr, cfg_.latent, 1.0);  // sigmoid/tanh gates
        } else if (name == "lstm.w_hh") {
            for (int gate = 0; gate < 4; ++gate)
                orthogonal_block(arr.data() + static_cast<std::size_t>(gate) * hh * hh, hh);
        } else if (name == "lstm.b_ih" || name == "lstm.b_hh") {
            std::fill(arr.begin(), arr.end(), 0.0);
        } else if (name == "mu.weight") {
            // Input-responsive action mean from the start; the row norm keeps
            // initial |mu| modest so exploration still covers the bounds.
            row_normalized(arr, cfg_.n_actions, hh, 0.1);
        } else if (name == "sigma.weight") {
            // Near-uniform starting spread ~softplus(0) across states.
            row_normalized(arr, cfg_.n_actions, hh, 0.01);
        } else if (name == "value.weight") {
            row_normalized(arr, 1, hh, 1.0);
        } else {
            uniform_gain(arr, hh, 1.0);
        }
    }
}

Checkpoint Network::to_checkpoint(std::uint64_t step, double score) const {
    Checkpoint ckpt;
    ckpt.step = step;
    ckpt.score = score;
    ckpt.arrays = params_;
    // Architecture fingerprint so a file is self-describing.
    ckpt.arrays.emplace_back(
        "net.config",
        std::vector<double>{
            static_cast<double>(cfg_.in_channels), static_cast<double>(cfg_.sub_dims.z),
            static_cast<double>(cfg_.sub_dims.y), static_cast<double>(cfg_.sub_dims.x),
            static_cast<double>(cfg_.conv_channels[0]), static_cast<double>(cfg_.conv_channels[1]),
            static_cast<double>(cfg_.conv_channels[2]), static_cast<double>(cfg_.conv_channels[3]),
            static_cast<double>(cfg_.latent), static_cast<double>(cfg_.lstm_hidden),
            static_cast<double>(cfg_.n_actions), cfg_.sigma_floor});
    return ckpt;
}

NetworkConfig config_from_checkpoint(const Checkpoint& ckpt) {
    const std::vector<double>* c = ckpt.find("net.config");
    if (!c) throw std::runtime_error("checkpoint: missing array 'net.config'");
    if (c->size() != 12) throw std::runtime_error("checkpoint: malformed 'net.config'");
    NetworkConfig cfg;
    cfg.in_channels = static_cast<int>((*c)[0]);
    cfg.sub_dims = {static_cast<int>((*c)[1]), static_cast<int>((*c)[2]),
                    static_cast<int>((*c)[3])};
    cfg.conv_channels = {static_cast<int>((*c)[4]), static_cast<int>((*c)[5]),
                         static_cast<int>((*c)[6]), static_cast<int>((*c)[7])};
    cfg.latent = static_cast<int>((*c)[8]);
    cfg.lstm_hidden = static_cast<int>((*c)[9]);
    cfg.n_actions = static_cast<int>((*c)[10]);
    cfg.sigma_floor = (*c)[11];
    return cfg;
}

void Network::load(const Checkpoint& ckpt) {
    if (ckpt.find("net.config") && !(config_from_checkpoint(ckpt) == cfg_))
        throw std::runtime_error("checkpoint: network configuration mismatch");
    for (auto& [name, arr] : params_) {
        const std::vector<double>* src = ckpt.find(name);
        if (!src) throw std::runtime_error("checkpoint: missing array '" + name + "'");
        if (src->size() != arr.size())
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        arr = *src;
    }
}

std::vector<int> Network::register_params(ad::Tape& tape) const {
    std::vector<int> ids;
    ids.reserve(params_.size());
    for (const auto& [name, arr] : params_) ids.push_back(tape.leaf(arr, true));
    return ids;
}

Network::TapeForward Network::forward_on_tape(ad::Tape& tape, const std::vector<int>& ids,
                                              const StateTensor& obs, int h_id,
                                              int c_id) const {
    if (obs.d != cfg_.sub_dims.z || obs.h != cfg_.sub_dims.y || obs.w != cfg_.sub_dims.x)
        throw std::runtime_error("forward: observation dims mismatch");

    auto pid = [&](const std::string& name) { return ids[param_index(name)]; };

    int x = tape.leaf(obs.v, false);
    int ci = cfg_.in_channels;
    int d = cfg_.sub_dims.z, h = cfg_.sub_dims.y, w = cfg_.sub_dims.x;
    for (int s = 0; s < 4; ++s) {
        const int co = cfg_.conv_channels[s];
        const std::string tag = std::to_string(s + 1);
        const int conv = tape.conv3d(x, pid("conv" + tag + ".weight"),
                                     pid("conv" + tag + ".bias"), ci, co, d, h, w, 2);
        const int skip = (ci == co)
                             ? tape.subsample2(x, ci, d, h, w)
                             : tape.proj3d(x, pid("proj" + tag + ".weight"),
                                           pid("proj" + tag + ".bias"), ci, co, d, h, w, 2);
        x = tape.relu(tape.add(conv, skip));
        ci = co;
        d = half(d);
        h = half(h);
        w = half(w);
    }

    const int latent =
        tape.relu(tape.linear(x, pid("fc.weight"), pid("fc.bias"), flat_size_, cfg_.latent));

    // LSTM cell, gate order i, f, g, o.
    const int hh = cfg_.lstm_hidden;
    const int gates = tape.add(
        tape.linear(latent, pid("lstm.w_ih"), pid("lstm.b_ih"), cfg_.latent, 4 * hh),
        tape.linear(h_id, pid("lstm.w_hh"), pid("lstm.b_hh"), hh, 4 * hh));
    const int gi = tape.sigmoid(tape.slice(gates, 0, hh));
    const int gf = tape.sigmoid(tape.slice(gates, hh, hh));
    const int gg = tape.tanh_op(tape.slice(gates, 2 * hh, hh));
    const int go = tape.sigmoid(tape.slice(gates, 3 * hh, hh));
    const int c_new = tape.add(tape.mul(gf, c_id), tape.mul(gi, gg));
    const int h_new = tape.mul(go, tape.tanh_op(c_new));

    TapeForward out;
    out.mu = tape.softsign(
        tape.linear(h_new, pid("mu.weight"), pid("mu.bias"), hh, cfg_.n_actions));
    out.sigma = tape.softplus_shift(
        tape.linear(h_new, pid("sigma.weight"), pid("sigma.bias"), hh, cfg_.n_actions),
        cfg_.sigma_floor);
    out.value = tape.linear(h_new, pid("value.weight"), pid("value.bias"), hh, 1);
    out.h = h_new;
    out.c = c_new;
    return out;
}

PolicyOutput Network::forward(const StateTensor& obs, const LstmState& in) const {
    ad::Tape tape;
    const std::vector<int> ids = register_params(tape);
    const int h0 = tape.leaf(in.h, false);
    const int c0 = tape.leaf(in.c, false);
    const TapeForward f = forward_on_tape(tape, ids, obs, h0, c0);
    PolicyOutput out;
    out.mu = tape.val(f.mu);
    out.sigma = tape.val(f.sigma);
    out.value = tape.val(f.value)[0];
    out.state.h = tape.val(f.h);
    out.state.c = tape.val(f.c);
    return out;
}

std::string Network::describe() const {
    std::ostringstream os;
    os << "input: " << cfg_.in_channels << "x" << cfg_.sub_dims.z << "x" << cfg_.sub_dims.y
       << "x" << cfg_.sub_dims.x << "\n";
    for (const auto& [name, arr] : params_) os << name << ": " << arr.size() << "\n";
    os << "total parameters: " << param_count() << "\n";
    return os.str();
}

WindowTargets a3c_targets(const std::vector<double>& rewards, const std::vector<double>& values,
                          double gamma, int k_a) {
    const int t_len = static_cast<int>(rewards.size());
    if (static_cast<int>(values.size()) != t_len + 1)
        throw std::runtime_error("a3c_targets: values must have length rewards+1");
    WindowTargets out;
    out.f.resize(t_len);
    out.r.resize(t_len);
    for (int t = 0; t < t_len; ++t) {
        const int l = std::min(k_a, t_len - t);
        double acc = 0.0, g = 1.0;
        for (int i = 0; i < l; ++i) {
            acc += g * rewards[t + i];
            g *= gamma;
        }
        acc += g * values[t + l];
        out.r[t] = acc;
        out.f[t] = acc - values[t];
    }
    return out;
}

namespace {

// Shared graph construction for loss and gradient paths.
int build_window_loss(const Network& net, ad::Tape& tape, const std::vector<int>& ids,
                      const std::vector<StepRecord>& window, const LstmState& h0,
                      const WindowTargets& targets, double eta, double value_coef) {
    int h = tape.leaf(h0.h, false);
    int c = tape.leaf(h0.c, false);
    std::vector<int> pieces;
    for (std::size_t t = 0; t < window.size(); ++t) {
        const Network::TapeForward f = net.forward_on_tape(tape, ids, window[t].obs, h, c);
        pieces.push_back(tape.gaussian_nll(f.mu, f.sigma, window[t].z, targets.f[t]));
        pieces.push_back(tape.neg_entropy(f.sigma, eta));
        pieces.push_back(tape.squared_value_error(f.value, targets.r[t], value_coef));
        h = f.h;
        c = f.c;
    }
    return tape.add_scalars(pieces);
}

}  // namespace

A3cResult a3c_backward(const Network& net, const std::vector<StepRecord>& window,
                       const LstmState& h0, const WindowTargets& targets, double eta,
                       double value_coef) {
    if (window.empty()) throw std::runtime_error("a3c_backward: empty window");
    if (targets.f.size() != window.size() || targets.r.size() != window.size())
        throw std::runtime_error("a3c_backward: target length mismatch");
    ad::Tape tape;
    const std::vector<int> ids = net.register_params(tape);
    const int loss = build_window_loss(net, tape, ids, window, h0, targets, eta, value_coef);
    tape.backward(loss);

    A3cResult out;
    out.loss = tape.val(loss)[0];
    const auto& params = net.params();
    out.grads.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        out.grads.emplace_back(params[i].first, tape.grad(ids[i]));
    return out;
}

double a3c_loss(const Network& net, const std::vector<StepRecord>& window, const LstmState& h0,
                const WindowTargets& targets, double eta, double value_coef) {
    ad::Tape tape;
    const std::vector<int> ids = net.register_params(tape);
    const int loss = build_window_loss(net, tape, ids, window, h0, targets, eta, value_coef);
    return tape.val(loss)[0];
}

double gaussian_entropy(const std::vector<double>& sigma) {
    double h = 0.0;
    for (double s : sigma) h += 0.5 * std::log(kTwoPi * s * s) + 0.5;
    return h;
}

double gaussian_log_prob(const std::vector<double>& mu, const std::vector<double>& sigma,
                         const std::vector<double>& z) {
    double lp = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double d = z[i] - mu[i];
        lp += -0.5 * std::log(kTwoPi * sigma[i] * sigma[i]) -
              d * d / (2.0 * sigma[i] * sigma[i]);
    }
    return lp;
}

SampledAction sample_action(const PolicyOutput& out, Rng& rng, double omega_max, double d_max) {
    SampledAction sa;
    sa.z.resize(out.mu.size());
    for (std::size_t i = 0; i < sa.z.size(); ++i)
        sa.z[i] = rng.gaussian(out.mu[i], out.sigma[i]);
    for (int i = 0; i < 5; ++i) {
        const double scale = i < 2 ? omega_max : d_max;
        sa.action[i] = std::clamp(sa.z[i] * scale, -scale, scale);
    }
    return sa;
}

std::array<double, 5> deterministic_action(const PolicyOutput& out, double omega_max,
                                           double d_max) {
    std::array<double, 5> a{};
    for (int i = 0; i < 5; ++i) {
        const double scale = i < 2 ? omega_max : d_max;
        a[i] = std::clamp(out.mu[i] * scale, -scale, scale);
    }
    return a;
}

}  // namespace planenav
