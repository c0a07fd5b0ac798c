#include <cmath>
#include <map>

#include "doctest.h"
#include "planenav/policy_net.hpp"
#include "planenav/rng.hpp"

using namespace planenav;

namespace {

NetworkConfig tiny_config() {
    NetworkConfig cfg;
    cfg.in_channels = 2;
    cfg.sub_dims = {5, 8, 8};
    cfg.conv_channels = {2, 3, 3, 4};
    cfg.latent = 16;
    cfg.lstm_hidden = 8;
    return cfg;
}

StateTensor random_obs(const NetworkConfig& cfg, Rng& rng) {
    StateTensor st;
    st.d = cfg.sub_dims.z;
    st.h = cfg.sub_dims.y;
    st.w = cfg.sub_dims.x;
    st.v.resize(static_cast<std::size_t>(cfg.in_channels) * st.d * st.h * st.w);
    for (auto& v : st.v) v = rng.uniform(0, 1);
    return st;
}

}  // namespace

TEST_CASE("zero parameters give neutral heads") {
    NetworkConfig cfg = tiny_config();
    Network net(cfg);  // parameters start at zero
    Rng rng(31);
    StateTensor obs = random_obs(cfg, rng);
    PolicyOutput out = net.forward(obs, LstmState::zeros(cfg.lstm_hidden));
    REQUIRE(out.mu.size() == 5);
    REQUIRE(out.sigma.size() == 5);
    for (double m : out.mu) CHECK(m == 0.0);
    // softplus(0) + floor = ln 2 + 1e-6
    for (double s : out.sigma) CHECK(s == doctest::Approx(std::log(2.0) + 1e-6).epsilon(1e-12));
    CHECK(out.value == 0.0);
    for (double h : out.state.h) CHECK(h == 0.0);
}

TEST_CASE("initialized forward is deterministic and bounded") {
    NetworkConfig cfg = tiny_config();
    Network net(cfg);
    Rng rng(32);
    net.init_params(rng);
    Rng orng(33);
    StateTensor obs = random_obs(cfg, orng);
    PolicyOutput a = net.forward(obs, LstmState::zeros(cfg.lstm_hidden));
    PolicyOutput b = net.forward(obs, LstmState::zeros(cfg.lstm_hidden));
    REQUIRE(a.mu.size() == 5);
    for (int i = 0; i < 5; ++i) {
        CHECK(a.mu[i] == b.mu[i]);
        CHECK(std::abs(a.mu[i]) < 1.0);
        CHECK(a.sigma[i] > 0.0);
    }
    CHECK(a.value == b.value);
    // Hidden state feeds back: a second step with a.state differs.
    PolicyOutput c = net.forward(obs, a.state);
    bool changed = false;
    for (int i = 0; i < 5; ++i) changed = changed || c.mu[i] != a.mu[i];
    CHECK(changed);
}

TEST_CASE("param count matches architecture arithmetic") {
    NetworkConfig cfg = tiny_config();
    Network net(cfg);
    // conv stages: 3x3x3 kernels + bias + 1x1x1 projection + bias when the
    // channel count changes; fc to latent; lstm (4 gates on [x,h]); heads.
    std::size_t total = 0;
    int ci = cfg.in_channels;
    int d = cfg.sub_dims.z, h = cfg.sub_dims.y, w = cfg.sub_dims.x;
    for (int stage = 0; stage < 4; ++stage) {
        int co = cfg.conv_channels[stage];
        total += static_cast<std::size_t>(co) * ci * 27 + co;  // conv w + b
        if (ci != co) total += static_cast<std::size_t>(co) * ci + co;  // projection
        ci = co;
        d = ad::Tape::out_size(d, 2);
        h = ad::Tape::out_size(h, 2);
        w = ad::Tape::out_size(w, 2);
    }
    std::size_t flat = static_cast<std::size_t>(ci) * d * h * w;
    total += flat * cfg.latent + cfg.latent;
    total += 4u * cfg.lstm_hidden * (cfg.latent + cfg.lstm_hidden) + 2u * 4u * cfg.lstm_hidden;
    total += static_cast<std::size_t>(cfg.lstm_hidden) * 5 + 5;  // mu
    total += static_cast<std::size_t>(cfg.lstm_hidden) * 5 + 5;  // sigma
    total += static_cast<std::size_t>(cfg.lstm_hidden) * 1 + 1;  // value
    CHECK(net.param_count() == total);
}

TEST_CASE("checkpoint round trip preserves behavior and config") {
    NetworkConfig cfg = tiny_config();
    Network net(cfg);
    Rng rng(34);
    net.init_params(rng);
    Checkpoint ck = net.to_checkpoint(77, 1.25);
    CHECK(ck.step == 77);
    CHECK(ck.score == 1.25);
    NetworkConfig from = config_from_checkpoint(ck);
    CHECK(from == cfg);

    Network other(cfg);
    other.load(ck);
    Rng orng(35);
    StateTensor obs = random_obs(cfg, orng);
    PolicyOutput a = net.forward(obs, LstmState::zeros(cfg.lstm_hidden));
    PolicyOutput b = other.forward(obs, LstmState::zeros(cfg.lstm_hidden));
    for (int i = 0; i < 5; ++i) {
        CHECK(a.mu[i] == b.mu[i]);
        CHECK(a.sigma[i] == b.sigma[i]);
    }
    CHECK(a.value == b.value);

    // Mismatched architecture is rejected.
    NetworkConfig wrong = cfg;
    wrong.lstm_hidden = 16;
    Network bad(wrong);
    CHECK_THROWS(bad.load(ck));
}

TEST_CASE("a3c_targets frozen hand-worked examples") {
    // Single step, k_a = 1, gamma = 0.9: F = r + 0.9*V(next) - V(cur).
    {
        WindowTargets t = a3c_targets({1.0}, {2.0, 2.0}, 0.9, 1);
        REQUIRE(t.f.size() == 1);
        CHECK(t.f[0] == doctest::Approx(1.0 + 0.9 * 2.0 - 2.0).epsilon(1e-15));  // 0.8
        CHECK(t.r[0] == doctest::Approx(0.8 + 2.0).epsilon(1e-15));
    }
    // Two steps, gamma = 1, rewards 1,-1, values 0,1,0, k_a = 2:
    // F_0 = 1 + (-1) + 0 - 0 = 0; F_1 = -1 + 0 - 1 = -2.
    {
        WindowTargets t = a3c_targets({1.0, -1.0}, {0.0, 1.0, 0.0}, 1.0, 2);
        REQUIRE(t.f.size() == 2);
        CHECK(t.f[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
        CHECK(t.f[1] == doctest::Approx(-2.0).epsilon(1e-15));
        CHECK(t.r[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
        CHECK(t.r[1] == doctest::Approx(-1.0).epsilon(1e-15));
    }
    // Truncation: T=3, k_a=2. F_0 uses 2 rewards + gamma^2 V_2.
    {
        std::vector<double> r{0.5, -0.25, 1.0};
        std::vector<double> v{0.1, 0.2, 0.3, 0.4};
        double g = 0.99;
        WindowTargets t = a3c_targets(r, v, g, 2);
        REQUIRE(t.f.size() == 3);
        CHECK(t.f[0] ==
              doctest::Approx(0.5 + g * -0.25 + g * g * 0.3 - 0.1).epsilon(1e-14));
        CHECK(t.f[1] == doctest::Approx(-0.25 + g * 1.0 + g * g * 0.4 - 0.2).epsilon(1e-14));
        // Tail truncates to L = 1.
        CHECK(t.f[2] == doctest::Approx(1.0 + g * 0.4 - 0.3).epsilon(1e-14));
        for (int i = 0; i < 3; ++i)
            CHECK(t.r[i] == doctest::Approx(t.f[i] + v[i]).epsilon(1e-14));
    }
}

TEST_CASE("gaussian helpers match closed forms") {
    std::vector<double> mu{0.1, -0.3};
    std::vector<double> sigma{0.5, 1.5};
    std::vector<double> z{0.4, -0.1};
    double lp = 0.0;
    for (int i = 0; i < 2; ++i)
        lp += -0.5 * std::log(2 * kPi * sigma[i] * sigma[i]) -
              (z[i] - mu[i]) * (z[i] - mu[i]) / (2 * sigma[i] * sigma[i]);
    CHECK(gaussian_log_prob(mu, sigma, z) == doctest::Approx(lp).epsilon(1e-14));

    double ent = 0.0;
    for (double s : sigma) ent += 0.5 * std::log(2 * kPi * s * s) + 0.5;
    CHECK(gaussian_entropy(sigma) == doctest::Approx(ent).epsilon(1e-14));

    // Monte Carlo cross-check of the entropy at unit sigma: E[-log p].
    std::vector<double> unit(5, 1.0);
    std::vector<double> zero(5, 0.0);
    Rng rng(36);
    double acc = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        std::vector<double> zs(5);
        for (auto& v : zs) v = rng.gaussian(0.0, 1.0);
        acc += -gaussian_log_prob(zero, unit, zs);
    }
    acc /= n;
    CHECK(acc == doctest::Approx(gaussian_entropy(unit)).epsilon(0.01));
    CHECK(gaussian_entropy(unit) == doctest::Approx(7.0946926660233635).epsilon(1e-9));
}

TEST_CASE("sample_action scales and clamps") {
    PolicyOutput out;
    out.mu = {0.9, -0.9, 0.5, 0.0, -0.5};
    out.sigma = {1e-9, 1e-9, 1e-9, 1e-9, 1e-9};  // effectively deterministic
    Rng rng(37);
    SampledAction sa = sample_action(out, rng, 5.0, 5.0);
    REQUIRE(sa.z.size() == 5);
    CHECK(sa.action[0] == doctest::Approx(4.5).epsilon(1e-6));
    CHECK(sa.action[1] == doctest::Approx(-4.5).epsilon(1e-6));
    CHECK(sa.action[2] == doctest::Approx(2.5).epsilon(1e-6));

    // Large z clamps to the physical bound but z itself is recorded raw.
    PolicyOutput wide;
    wide.mu = {0, 0, 0, 0, 0};
    wide.sigma = {50, 50, 50, 50, 50};
    bool clamped = false, raw_exceeds = false;
    for (int i = 0; i < 50; ++i) {
        SampledAction s2 = sample_action(wide, rng, 5.0, 5.0);
        for (int a = 0; a < 5; ++a) {
            CHECK(std::abs(s2.action[a]) <= 5.0);
            if (std::abs(s2.action[a]) == 5.0) clamped = true;
            if (std::abs(s2.z[a]) > 1.0) raw_exceeds = true;
        }
    }
    CHECK(clamped);
    CHECK(raw_exceeds);

    std::array<double, 5> det = deterministic_action(out, 5.0, 5.0);
    CHECK(det[0] == doctest::Approx(4.5).epsilon(1e-12));
    CHECK(det[4] == doctest::Approx(-2.5).epsilon(1e-12));
}

TEST_CASE("a3c_backward gradients match finite differences of a3c_loss") {
    NetworkConfig cfg = tiny_config();
    Network net(cfg);
    Rng rng(38);
    net.init_params(rng);

    // Three-step window with nonzero initial LSTM state.
    std::vector<StepRecord> window;
    Rng orng(39);
    for (int t = 0; t < 3; ++t) {
        StepRecord rec;
        rec.obs = random_obs(cfg, orng);
        rec.z = {orng.uniform(-1, 1), orng.uniform(-1, 1), orng.uniform(-1, 1),
                 orng.uniform(-1, 1), orng.uniform(-1, 1)};
        rec.reward = orng.uniform(-1, 1);
        window.push_back(std::move(rec));
    }
    LstmState h0 = LstmState::zeros(cfg.lstm_hidden);
    for (auto& v : h0.h) v = orng.uniform(-0.5, 0.5);
    for (auto& v : h0.c) v = orng.uniform(-0.5, 0.5);
    WindowTargets targets;
    targets.f = {0.3, -0.6, 0.2};
    targets.r = {0.5, -0.1, 0.4};

    const double eta = 0.01, vc = 0.5;
    A3cResult res = a3c_backward(net, window, h0, targets, eta, vc);
    CHECK(res.loss == doctest::Approx(a3c_loss(net, window, h0, targets, eta, vc)).epsilon(1e-12));

    std::map<std::string, std::vector<double>> gmap;
    for (auto& [name, g] : res.grads) gmap[name] = g;

    // Probe a spread of parameters in every array (full sweep is too slow).
    Rng pick(40);
    const double eps = 1e-5;
    int checked = 0;
    for (auto& [name, values] : net.params()) {
        REQUIRE(gmap.count(name) == 1);
        REQUIRE(gmap[name].size() == values.size());
        const int probes = values.size() < 4 ? static_cast<int>(values.size()) : 4;
        for (int p = 0; p < probes; ++p) {
            const std::size_t idx = pick.integer(values.size());
            const double keep = values[idx];
            values[idx] = keep + eps;
            const double fp = a3c_loss(net, window, h0, targets, eta, vc);
            values[idx] = keep - eps;
            const double fm = a3c_loss(net, window, h0, targets, eta, vc);
            values[idx] = keep;
            const double fd = (fp - fm) / (2 * eps);
            CHECK(gmap[name][idx] == doctest::Approx(fd).epsilon(5e-5).scale(1.0));
            ++checked;
        }
    }
    CHECK(checked >= 40);
}

TEST_CASE("describe lists every parameter array") {
    NetworkConfig cfg = tiny_config();
    Network net(cfg);
    std::string d = net.describe();
    for (auto& [name, values] : net.params()) {
        CAPTURE(name);
        CHECK(d.find(name) != std::string::npos);
    }
    CHECK(d.find("total") != std::string::npos);
}
