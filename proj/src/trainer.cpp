#include "planenav/trainer.hpp"

#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <exception>
#include <filesystem>
#include <stdexcept>
#include <thread>

namespace planenav {

SharedParams::SharedParams(const std::vector<std::pair<std::string, std::vector<double>>>& init) {
    slots_.reserve(init.size());
    for (const auto& [name, data] : init) {
        names_.push_back(name);
        auto buf = std::make_shared<Buffer>();
        buf->data = data;
        slots_.push_back(std::move(buf));
        m_.emplace_back(data.size(), 0.0);
        v_.emplace_back(data.size(), 0.0);
    }
}

std::vector<std::vector<double>> SharedParams::snapshot() const {
    std::vector<std::shared_ptr<const Buffer>> held;
    {
        std::lock_guard<std::mutex> lock(slot_mutex_);
        held = slots_;
    }
    std::vector<std::vector<double>> out;
    out.reserve(held.size());
    std::uint64_t epoch = held.empty() ? 0 : held[0]->version_head;
    for (const auto& buf : held) {
        const std::uint64_t head = buf->version_head;
        out.push_back(buf->data);
        const std::uint64_t tail = buf->version_tail;
        // Buffers are immutable once published and the pointer table swaps
        // under one lock, so neither check can fire; counting keeps that an
        // observable fact rather than an assumption.
        if (head != tail || head != epoch) torn_.fetch_add(1);
    }
    return out;
}

void SharedParams::adam_update(
    const std::vector<std::pair<std::string, std::vector<double>>>& grads, double lr, double beta1,
    double beta2, double eps) {
    // names_ is immutable after construction; slots_ is move-assigned by
    // concurrent updates and may only be touched under slot_mutex_.
    if (grads.size() != names_.size())
        throw std::runtime_error("adam_update: array count mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].first != names_[i])
            throw std::runtime_error("adam_update: array order mismatch at " + grads[i].first);
        if (grads[i].second.size() != m_[i].size())
            throw std::runtime_error("adam_update: size mismatch at " + grads[i].first);
        for (double g : grads[i].second) {
            if (!std::isfinite(g)) {
                skipped_.fetch_add(1);
                return;
            }
        }
    }

    std::lock_guard<std::mutex> update_lock(update_mutex_);
    ++adam_t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t_));
    const std::uint64_t epoch = static_cast<std::uint64_t>(adam_t_);

    std::vector<std::shared_ptr<const Buffer>> current;
    {
        std::lock_guard<std::mutex> lock(slot_mutex_);
        current = slots_;
    }
    std::vector<std::shared_ptr<const Buffer>> next(current.size());
    for (std::size_t i = 0; i < current.size(); ++i) {
        auto buf = std::make_shared<Buffer>();
        buf->version_head = buf->version_tail = epoch;
        buf->data = current[i]->data;
        const std::vector<double>& g = grads[i].second;
        for (std::size_t j = 0; j < g.size(); ++j) {
            m_[i][j] = beta1 * m_[i][j] + (1.0 - beta1) * g[j];
            v_[i][j] = beta2 * v_[i][j] + (1.0 - beta2) * g[j] * g[j];
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            buf->data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        next[i] = std::move(buf);
    }
    {
        std::lock_guard<std::mutex> lock(slot_mutex_);
        slots_ = std::move(next);
    }
    updates_.fetch_add(1);
}

namespace {

void load_snapshot(Network& net, const std::vector<std::vector<double>>& snap) {
    auto& params = net.params();
    if (snap.size() != params.size()) throw std::runtime_error("snapshot: array count mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) {
        if (snap[i].size() != params[i].second.size())
            throw std::runtime_error("snapshot: size mismatch at " + params[i].first);
        params[i].second = snap[i];
    }
}

void clip_grad_norm(std::vector<std::pair<std::string, std::vector<double>>>& grads,
                    double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads)
        for (double x : g) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads)
        for (double& x : g) x *= scale;
}

struct ValidationJob {
    std::int64_t step = 0;
    std::vector<std::vector<double>> snap;
    double return_sum = 0.0;
    std::int64_t return_count = 0;
    std::int64_t updates_at = 0;  // applied-update count when the job was queued
    std::int64_t skipped_at = 0;  // NaN-skip count when the job was queued
};

struct ReturnTally {
    std::mutex mutex;
    double sum = 0.0;
    std::int64_t count = 0;

    void add(double episode_return) {
        std::lock_guard<std::mutex> lock(mutex);
        sum += episode_return;
        ++count;
    }
    std::pair<double, std::int64_t> drain() {
        std::lock_guard<std::mutex> lock(mutex);
        auto out = std::make_pair(sum, count);
        sum = 0.0;
        count = 0;
        return out;
    }
};

struct JobQueue {
    std::mutex mutex;
    std::condition_variable cv;
    std::deque<ValidationJob> jobs;
    bool closed = false;

    void push(ValidationJob job) {
        {
            std::lock_guard<std::mutex> lock(mutex);
            jobs.push_back(std::move(job));
        }
        cv.notify_one();
    }
    void close() {
        {
            std::lock_guard<std::mutex> lock(mutex);
            closed = true;
        }
        cv.notify_one();
    }
    bool pop(ValidationJob& out) {
        std::unique_lock<std::mutex> lock(mutex);
        cv.wait(lock, [&] { return !jobs.empty() || closed; });
        if (jobs.empty()) return false;
        out = std::move(jobs.front());
        jobs.pop_front();
        return true;
    }
};

}  // namespace

double validation_cost(const Network& net, const std::vector<const TrainCase*>& cases,
                       const EpisodeConfig& episode) {
    Rng unused(0);  // eval resets draw nothing
    double total = 0.0;
    for (const TrainCase* c : cases) {
        Environment env(c->env, c->gt, episode);
        StateTensor obs = env.reset(EnvMode::eval, unused);
        LstmState lstm = LstmState::zeros(net.config().lstm_hidden);
        for (int t = 0; t < episode.t_max; ++t) {
            PolicyOutput out = net.forward(obs, lstm);
            lstm = out.state;
            auto act = deterministic_action(out, episode.omega_max, episode.d_max);
            auto res = env.step(Action::from_array(act));
            obs = std::move(res.state);
        }
        total += env.cost(env.plane());
    }
    return total / static_cast<double>(cases.size());
}

TrainResult train(const TrainConfig& cfg, const std::vector<TrainCase>& cases,
                  const std::string& out_dir) {
    if (cfg.workers < 1) throw std::runtime_error("train: workers must be >= 1");
    if (cfg.lr <= 0) throw std::runtime_error("train: lr must be > 0");
    const int n_val = cfg.val_count;
    const int n_train = static_cast<int>(cases.size()) - n_val;
    if (n_val < 1 || n_train < 1)
        throw std::runtime_error("train: need at least one training and one validation case");

    std::vector<const TrainCase*> val_cases;
    for (int i = n_train; i < static_cast<int>(cases.size()); ++i) val_cases.push_back(&cases[i]);

    Network proto(cfg.net);
    {
        Rng init_rng(cfg.seed);
        proto.init_params(init_rng);
    }
    SharedParams shared(proto.params());

    TrainResult result;
    std::atomic<std::int64_t> steps{0};
    std::atomic<bool> stop{false};
    ReturnTally tally;
    JobQueue queue;

    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto record_error = [&](std::exception_ptr e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = e;
        stop.store(true);
        queue.close();
    };

    const bool persist = !out_dir.empty();
    if (persist) std::filesystem::create_directories(out_dir);

    // Validator: consumes snapshots in queue order, so with one worker both
    // the curve and the persisted best are reproducible byte for byte.
    std::mutex result_mutex;
    std::thread validator([&] {
        try {
            Network net(cfg.net);
            ValidationJob job;
            std::int64_t last_step = -1, last_updates = 0, last_skipped = 0;
            while (queue.pop(job)) {
                if (job.step == last_step) continue;
                load_snapshot(net, job.snap);
                const double cost = validation_cost(net, val_cases, cfg.episode);
                CurveRow row;
                row.step = job.step;
                row.mean_return = job.return_count > 0
                                      ? job.return_sum / static_cast<double>(job.return_count)
                                      : std::numeric_limits<double>::quiet_NaN();
                row.val_cost = cost;
                std::lock_guard<std::mutex> lock(result_mutex);
                result.curve.push_back(row);
                // Collapse: the interval attempted updates but every one was
                // skipped for non-finite gradients.
                if (job.updates_at == last_updates && job.skipped_at > last_skipped)
                    result.collapsed = true;
                last_updates = job.updates_at;
                last_skipped = job.skipped_at;
                last_step = job.step;
                if (cost < result.best_score) {
                    result.best_score = cost;
                    result.best_step = job.step;
                    result.best = net.to_checkpoint(static_cast<std::uint64_t>(job.step), cost);
                    if (persist) save_checkpoint(out_dir + "/best.ckpt", result.best);
                }
            }
        } catch (...) {
            record_error(std::current_exception());
        }
    });

    auto worker_fn = [&](int w) {
        try {
            Rng rng = Rng(cfg.seed).fork(static_cast<std::uint64_t>(w) + 1);
            Network net(cfg.net);
            std::int64_t episode_idx = 0;
            bool need_reset = true;
            std::unique_ptr<Environment> env;
            StateTensor obs;
            LstmState lstm = LstmState::zeros(cfg.net.lstm_hidden);
            double episode_return = 0.0;

            while (!stop.load()) {
                if (steps.load() >= cfg.total_steps) break;
                load_snapshot(net, shared.snapshot());

                if (need_reset) {
                    const TrainCase& c =
                        cases[static_cast<std::size_t>((w + episode_idx) % n_train)];
                    ++episode_idx;
                    env = std::make_unique<Environment>(c.env, c.gt, cfg.episode);
                    obs = env->reset(EnvMode::train, rng);
                    lstm = LstmState::zeros(cfg.net.lstm_hidden);
                    episode_return = 0.0;
                    need_reset = false;
                }

                std::vector<StepRecord> window;
                std::vector<double> rewards, values;
                std::vector<std::int64_t> milestones;
                const LstmState h0 = lstm;
                bool terminal = false;
                for (int i = 0; i < cfg.k_a; ++i) {
                    const std::int64_t s = steps.fetch_add(1);
                    if (s >= cfg.total_steps) break;
                    PolicyOutput out = net.forward(obs, lstm);
                    SampledAction act =
                        sample_action(out, rng, cfg.episode.omega_max, cfg.episode.d_max);
                    auto res = env->step(Action::from_array(act.action));
                    window.push_back({std::move(obs), act.z, res.reward});
                    rewards.push_back(res.reward);
                    values.push_back(out.value);
                    lstm = out.state;
                    obs = std::move(res.state);
                    episode_return += res.reward;
                    if (cfg.val_interval > 0 && (s + 1) % cfg.val_interval == 0)
                        milestones.push_back(s + 1);
                    if (res.done) {
                        terminal = true;
                        break;
                    }
                }
                if (!window.empty()) {
                    if (terminal) {
                        values.push_back(0.0);
                        tally.add(episode_return);
                        need_reset = true;
                    } else {
                        values.push_back(net.forward(obs, lstm).value);
                    }
                    WindowTargets targets = a3c_targets(rewards, values, cfg.gamma, cfg.k_a);
                    A3cResult back =
                        a3c_backward(net, window, h0, targets, cfg.eta, cfg.value_coef);
                    clip_grad_norm(back.grads, cfg.grad_clip);
                    shared.adam_update(back.grads, cfg.lr);
                }
                for (std::int64_t milestone : milestones) {
                    ValidationJob job;
                    job.step = milestone;
                    job.snap = shared.snapshot();
                    std::tie(job.return_sum, job.return_count) = tally.drain();
                    job.updates_at = shared.updates();
                    job.skipped_at = shared.skipped_nan();
                    queue.push(std::move(job));
                }
            }
        } catch (...) {
            record_error(std::current_exception());
        }
    };

    std::vector<std::thread> workers;
    for (int w = 0; w < cfg.workers; ++w) workers.emplace_back(worker_fn, w);
    for (auto& t : workers) t.join();

    // Final milestone at the true step count, if training advanced past the
    // last periodic one.
    const std::int64_t final_steps = std::min(steps.load(), cfg.total_steps);
    if (!stop.load() && final_steps > 0) {
        ValidationJob job;
        job.step = final_steps;
        job.snap = shared.snapshot();
        std::tie(job.return_sum, job.return_count) = tally.drain();
        job.updates_at = shared.updates();
        job.skipped_at = shared.skipped_nan();
        queue.push(std::move(job));
    }
    queue.close();
    validator.join();
    if (first_error) std::rethrow_exception(first_error);

    result.env_steps = final_steps;
    result.updates = shared.updates();
    result.skipped_nan = shared.skipped_nan();
    result.torn_reads = shared.torn_reads();
    if (result.best_step < 0) {
        // Never validated (zero budget or interval beyond it): sentinel score.
        Network net(cfg.net);
        load_snapshot(net, shared.snapshot());
        result.best = net.to_checkpoint(0, std::numeric_limits<double>::infinity());
        result.best_score = std::numeric_limits<double>::infinity();
        if (persist) save_checkpoint(out_dir + "/best.ckpt", result.best);
    }

    if (persist) {
        Network net(cfg.net);
        load_snapshot(net, shared.snapshot());
        save_checkpoint(out_dir + "/last.ckpt",
                        net.to_checkpoint(static_cast<std::uint64_t>(final_steps),
                                          std::numeric_limits<double>::infinity()));
        std::FILE* f = std::fopen((out_dir + "/curve.csv").c_str(), "wb");
        if (!f) throw std::runtime_error(out_dir + "/curve.csv: cannot open for writing");
        std::fputs("step,mean_return,val_cost\n", f);
        for (const CurveRow& row : result.curve) {
            char line[128];
            std::snprintf(line, sizeof(line), "%lld,%.17g,%.17g\n",
                          static_cast<long long>(row.step), row.mean_return, row.val_cost);
            std::fputs(line, f);
        }
        std::fclose(f);
    }
    return result;
}

}  // namespace planenav
