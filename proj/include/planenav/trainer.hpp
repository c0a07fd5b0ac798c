#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "planenav/environment.hpp"
#include "planenav/policy_net.hpp"
#include "planenav/volume_io.hpp"

namespace planenav {

// One prepared acquisition: preprocessed volumes plus the target pose.
struct TrainCase {
    EnvVolumes env;
    GroundTruth gt;
};

struct TrainConfig {
    int workers = 4;
    double lr = 1e-5;
    int k_a = 8;        // advantage window length
    double eta = 0.01;  // entropy bonus weight
    double gamma = 0.99;
    double value_coef = 0.5;
    double grad_clip = 40.0;            // global gradient-norm ceiling
    std::int64_t total_steps = 200000;  // environment-step budget over all workers
    std::int64_t val_interval = 10000;  // validate every this many global steps
    int val_count = 1;                  // trailing cases held out for validation
    std::uint64_t seed = 0;
    NetworkConfig net;
    EpisodeConfig episode;
};

// Shared parameter store. Each array lives in an immutable buffer that an
// update replaces wholesale (copy-on-write), so a reader holding the buffer
// pointer can never see a half-written array; all pointers swap under one
// short lock, so a snapshot is additionally consistent across arrays. The
// paired version stamps let snapshot() assert both properties at runtime and
// count violations instead of trusting the design silently. Adam moments sit
// behind a second mutex that serializes whole updates, which makes moment
// sharing across workers exact.
class SharedParams {
  public:
    explicit SharedParams(const std::vector<std::pair<std::string, std::vector<double>>>& init);

    // Complete copy of every array, canonical order. Never blocks on an
    // in-flight Adam compute, only on the pointer swap.
    std::vector<std::vector<double>> snapshot() const;

    // Adam with bias correction; moments and the step count are shared state.
    // Any non-finite gradient value skips the whole update and counts it.
    void adam_update(const std::vector<std::pair<std::string, std::vector<double>>>& grads,
                     double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    std::int64_t updates() const { return updates_.load(); }
    std::int64_t skipped_nan() const { return skipped_.load(); }
    std::int64_t torn_reads() const { return torn_.load(); }
    const std::vector<std::string>& names() const { return names_; }

  private:
    struct Buffer {
        std::uint64_t version_head = 0;
        std::vector<double> data;
        std::uint64_t version_tail = 0;
    };

    mutable std::mutex slot_mutex_;  // guards the pointer table only
    std::vector<std::shared_ptr<const Buffer>> slots_;
    std::vector<std::string> names_;

    std::mutex update_mutex_;  // serializes Adam applies
    std::vector<std::vector<double>> m_, v_;
    std::int64_t adam_t_ = 0;

    std::atomic<std::int64_t> updates_{0};
    std::atomic<std::int64_t> skipped_{0};
    mutable std::atomic<std::int64_t> torn_{0};
};

struct CurveRow {
    std::int64_t step = 0;
    double mean_return = 0.0;  // mean episode return since the previous row (nan if none)
    double val_cost = 0.0;     // mean final C over validation episodes
};

struct TrainResult {
    Checkpoint best;  // lowest validation cost (sentinel score if never validated)
    double best_score = std::numeric_limits<double>::infinity();
    std::int64_t best_step = -1;
    std::int64_t env_steps = 0;
    std::int64_t updates = 0;
    std::int64_t skipped_nan = 0;
    std::int64_t torn_reads = 0;  // must stay 0; see SharedParams
    bool collapsed = false;       // a whole validation interval applied no update
    std::vector<CurveRow> curve;
};

// W workers each loop {snapshot -> at most k_a environment steps -> k-step
// targets -> backward -> clipped Adam update}; a validator thread re-runs
// full-length deterministic episodes on the held-out cases at fixed global
// step milestones and persists the best checkpoint. With workers=1 the whole
// run, including emitted files, is bitwise reproducible from the seed.
// Requires at least one training and one validation case. When out_dir is
// non-empty, writes best.ckpt, last.ckpt and curve.csv there.
TrainResult train(const TrainConfig& cfg, const std::vector<TrainCase>& cases,
                  const std::string& out_dir);

// Mean final cost C over one deterministic full-length episode per case.
double validation_cost(const Network& net, const std::vector<const TrainCase*>& cases,
                       const EpisodeConfig& episode);

}  // namespace planenav
