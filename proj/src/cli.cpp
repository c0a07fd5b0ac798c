#include "planenav/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "planenav/evaluation.hpp"
#include "planenav/phantom.hpp"
#include "planenav/preproc.hpp"
#include "planenav/trainer.hpp"
#include "planenav/volume_io.hpp"

namespace planenav::cli {
namespace {

using nlohmann::json;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_file(const std::string& path, const std::string& content) {
    const std::filesystem::path parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    if (!content.empty() && std::fwrite(content.data(), 1, content.size(), f) != content.size()) {
        std::fclose(f);
        throw std::runtime_error(path + ": short write");
    }
    std::fclose(f);
}

// Relative output paths land under --out-dir (or $PLANENAV_OUT).
std::string resolve_out(const std::string& out_dir, const std::string& path) {
    if (path.empty()) return path;
    const std::filesystem::path p(path);
    if (p.is_absolute() || out_dir.empty() || out_dir == ".") return path;
    return (std::filesystem::path(out_dir) / p).string();
}

Dims3 parse_triple(const std::string& s, const char* flag) {
    Dims3 d;
    char extra;
    if (std::sscanf(s.c_str(), "%d,%d,%d%c", &d.z, &d.y, &d.x, &extra) != 3 || d.z < 1 ||
        d.y < 1 || d.x < 1)
        throw std::runtime_error(std::string(flag) + ": expected three positive integers d,h,w");
    return d;
}

std::array<int, 4> parse_quad(const std::string& s, const char* flag) {
    std::array<int, 4> q{};
    char extra;
    if (std::sscanf(s.c_str(), "%d,%d,%d,%d%c", &q[0], &q[1], &q[2], &q[3], &extra) != 4 ||
        q[0] < 1 || q[1] < 1 || q[2] < 1 || q[3] < 1)
        throw std::runtime_error(std::string(flag) + ": expected four positive integers");
    return q;
}

PhantomKind parse_kind(const std::string& s) {
    if (s == "straight_tube") return PhantomKind::straight_tube;
    if (s == "torus_arc") return PhantomKind::torus_arc;
    throw std::runtime_error("--kind: unknown phantom kind '" + s + "'");
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n == 0) return 0.0;
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

struct LoadedCase {
    std::string name;
    FlowVolume4D vol;
    GroundTruth gt;
};

// Cases come either from repeated --vol flags or from every *.f4d in a
// directory (sorted by name); each file needs a <file>.json annotation.
std::vector<LoadedCase> load_cases(std::vector<std::string> paths, const std::string& dir) {
    if (!dir.empty()) {
        if (!std::filesystem::is_directory(dir))
            throw std::runtime_error(dir + ": not a directory");
        for (const auto& entry : std::filesystem::directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().extension() == ".f4d")
                paths.push_back(entry.path().string());
        std::sort(paths.begin(), paths.end());
    }
    if (paths.empty()) throw std::runtime_error("no input volumes: pass --vol or --phantoms");
    std::vector<LoadedCase> cases;
    for (const std::string& p : paths) {
        LoadedCase c;
        c.name = std::filesystem::path(p).stem().string();
        c.vol = load_f4d(p);
        c.gt = load_ground_truth(p + ".json");
        cases.push_back(std::move(c));
    }
    return cases;
}

Network load_model(const std::string& path, Checkpoint* meta = nullptr) {
    const Checkpoint ckpt = load_checkpoint(path);
    Network net(config_from_checkpoint(ckpt));
    net.load(ckpt);
    if (meta) {
        meta->step = ckpt.step;
        meta->score = ckpt.score;
    }
    return net;
}

EpisodeConfig episode_for(const Network& net, double omega_max, double d_max, int t_max,
                          double lambda, double grid_mm) {
    EpisodeConfig e;
    e.sub_dims = net.config().sub_dims;
    e.omega_max = omega_max;
    e.d_max = d_max;
    e.t_max = t_max;
    e.lambda = lambda;
    e.grid_mm = grid_mm;
    return e;
}

ScalarVolume3D component_volume(const VectorVolume3D& v, int c) {
    ScalarVolume3D out = ScalarVolume3D::zeros(v.dims, v.spacing);
    const std::size_t n = v.dims.count();
    for (std::size_t i = 0; i < n; ++i) out.v[i] = v.v[static_cast<std::size_t>(c) * n + i];
    return out;
}

json agreement_json(const Agreement& g) {
    json j;
    j["r2"] = g.r2;
    j["bias"] = g.bias;
    j["loa_lo"] = g.loa_lo;
    j["loa_hi"] = g.loa_hi;
    if (g.has_masks) {
        j["dice"] = g.dice;
        j["area_diff_pct"] = g.area_diff_pct;
    }
    return j;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Volumetric plane navigation on 4D flow acquisitions"};
    app.require_subcommand(1);
    std::string out_dir = ".";
    app.add_option("--out-dir", out_dir,
                   "directory for relative output paths (env PLANENAV_OUT)")
        ->envname("PLANENAV_OUT")
        ->capture_default_str();

    // phantom
    auto* cmd_phantom = app.add_subcommand("phantom", "Generate synthetic acquisitions");
    std::string ph_kind = "straight_tube", ph_out, ph_dir;
    int ph_count = 0, ph_frames = 8, ph_size = 64;
    double ph_spacing = 2.0, ph_venc = 1500.0, ph_radius = 10.0, ph_vmax = 1000.0;
    double ph_noise = 30.0, ph_major = 28.0, ph_span = 180.0;
    std::uint64_t ph_seed = 0;
    cmd_phantom->add_option("--kind", ph_kind, "straight_tube | torus_arc | mixed")
        ->capture_default_str();
    cmd_phantom->add_option("--out", ph_out, "output .f4d (single instance)");
    cmd_phantom->add_option("--count", ph_count, "number of family instances");
    cmd_phantom->add_option("--dir", ph_dir, "output directory (family mode)");
    cmd_phantom->add_option("--seed", ph_seed, "RNG seed")->capture_default_str();
    cmd_phantom->add_option("--frames", ph_frames, "timeframes")->capture_default_str();
    cmd_phantom->add_option("--size", ph_size, "cubic grid size")->capture_default_str();
    cmd_phantom->add_option("--spacing", ph_spacing, "voxel spacing mm")->capture_default_str();
    cmd_phantom->add_option("--venc", ph_venc, "velocity encoding mm/s")->capture_default_str();
    cmd_phantom->add_option("--radius", ph_radius, "vessel radius mm")->capture_default_str();
    cmd_phantom->add_option("--vmax", ph_vmax, "peak speed mm/s")->capture_default_str();
    cmd_phantom->add_option("--noise-sigma", ph_noise, "background noise mm/s")
        ->capture_default_str();
    cmd_phantom->add_option("--major-radius", ph_major, "arc radius mm")->capture_default_str();
    cmd_phantom->add_option("--arc-span", ph_span, "arc span deg")->capture_default_str();

    // preprocess
    auto* cmd_pre = app.add_subcommand("preprocess", "Angiogram + systolic-frame extraction");
    std::string pre_in, pre_prefix;
    cmd_pre->add_option("--in", pre_in, "input .f4d")->required();
    cmd_pre->add_option("--out-prefix", pre_prefix, "output path prefix")->required();

    // train
    auto* cmd_train = app.add_subcommand("train", "Asynchronous actor-critic training");
    cmd_train->set_config("--config", "", "TOML-style config file; flags win");
    std::string tr_phantoms, tr_out;
    int tr_workers = 4, tr_k_a = 8, tr_val_count = 1, tr_latent = 1024, tr_lstm = 256;
    int tr_t_max = 100;
    double tr_lr = 1e-5, tr_eta = 0.01, tr_gamma = 0.99, tr_value_coef = 0.5, tr_clip = 40.0;
    double tr_omega = 5.0, tr_dmax = 5.0, tr_lambda = 0.025, tr_bonus = 3.0, tr_grid = 2.0;
    std::int64_t tr_steps = 200000, tr_val_interval = 10000;
    std::string tr_sub_dims = "31,84,84", tr_conv = "16,32,32,64";
    std::uint64_t tr_seed = 0;
    cmd_train->add_option("--phantoms", tr_phantoms, "directory of .f4d + .json cases")
        ->required();
    cmd_train->add_option("--out", tr_out, "output directory")->required();
    cmd_train->add_option("--workers", tr_workers, "worker threads")->capture_default_str();
    cmd_train->add_option("--lr", tr_lr, "learning rate")->capture_default_str();
    cmd_train->add_option("--steps", tr_steps, "environment-step budget")->capture_default_str();
    cmd_train->add_option("--val-interval", tr_val_interval, "steps between validations")
        ->capture_default_str();
    cmd_train->add_option("--val-count", tr_val_count, "trailing cases held out")
        ->capture_default_str();
    cmd_train->add_option("--k-a", tr_k_a, "advantage window")->capture_default_str();
    cmd_train->add_option("--eta", tr_eta, "entropy weight")->capture_default_str();
    cmd_train->add_option("--gamma", tr_gamma, "discount")->capture_default_str();
    cmd_train->add_option("--value-coef", tr_value_coef, "critic loss weight")
        ->capture_default_str();
    cmd_train->add_option("--grad-clip", tr_clip, "gradient-norm ceiling")->capture_default_str();
    cmd_train->add_option("--sub-dims", tr_sub_dims, "observation d,h,w")->capture_default_str();
    cmd_train->add_option("--conv-channels", tr_conv, "stage widths")->capture_default_str();
    cmd_train->add_option("--latent", tr_latent, "fully connected width")->capture_default_str();
    cmd_train->add_option("--lstm-hidden", tr_lstm, "LSTM width")->capture_default_str();
    cmd_train->add_option("--t-max", tr_t_max, "episode length")->capture_default_str();
    cmd_train->add_option("--omega-max", tr_omega, "max rotation deg/step")
        ->capture_default_str();
    cmd_train->add_option("--d-max", tr_dmax, "max translation mm/step")->capture_default_str();
    cmd_train->add_option("--lambda", tr_lambda, "distance weight in the cost")
        ->capture_default_str();
    cmd_train->add_option("--bonus", tr_bonus, "terminal bonus reward")->capture_default_str();
    cmd_train->add_option("--grid-mm", tr_grid, "observation lattice pitch")
        ->capture_default_str();
    cmd_train->add_option("--seed", tr_seed, "RNG seed")->capture_default_str();

    // shared evaluation-style flags
    struct EvalFlags {
        std::vector<std::string> vols;
        std::string phantoms, model, csv_path, json_path;
        double omega = 5.0, dmax = 5.0, lambda = 0.025, grid = 2.0;
        int t_max = 100;
    };
    auto add_eval_options = [](CLI::App* cmd, EvalFlags& f, bool multi_case) {
        cmd->add_option("--model", f.model, "checkpoint file")->required();
        cmd->add_option("--vol", f.vols, multi_case ? "input .f4d (repeatable)" : "input .f4d");
        if (multi_case) cmd->add_option("--phantoms", f.phantoms, "directory of cases");
        cmd->add_option("--omega-max", f.omega, "max rotation deg/step")->capture_default_str();
        cmd->add_option("--d-max", f.dmax, "max translation mm/step")->capture_default_str();
        cmd->add_option("--t-max", f.t_max, "episode length")->capture_default_str();
        cmd->add_option("--lambda", f.lambda, "distance weight in the cost")
            ->capture_default_str();
        cmd->add_option("--grid-mm", f.grid, "observation lattice pitch")->capture_default_str();
    };

    auto* cmd_eval = app.add_subcommand("eval", "Deterministic episodes + pose metrics");
    EvalFlags ev;
    std::string ev_trace;
    add_eval_options(cmd_eval, ev, true);
    cmd_eval->add_option("--csv", ev.csv_path, "per-case metrics CSV");
    cmd_eval->add_option("--json", ev.json_path, "summary JSON");
    cmd_eval->add_option("--trace", ev_trace, "per-step trace CSV");

    auto* cmd_reformat = app.add_subcommand("reformat", "Extract the navigated plane");
    EvalFlags rf;
    std::string rf_prefix;
    int rf_size = 64;
    double rf_pixel = 2.0;
    add_eval_options(cmd_reformat, rf, false);
    cmd_reformat->add_option("--out-prefix", rf_prefix, "output path prefix")->required();
    cmd_reformat->add_option("--size", rf_size, "plane image side, px")->capture_default_str();
    cmd_reformat->add_option("--pixel-mm", rf_pixel, "plane pixel size")->capture_default_str();

    auto* cmd_inv = app.add_subcommand("invariance", "Pose-perturbation grid experiment");
    EvalFlags iv;
    add_eval_options(cmd_inv, iv, false);
    cmd_inv->add_option("--csv", iv.csv_path, "per-cell metrics CSV");
    cmd_inv->add_option("--json", iv.json_path, "summary JSON");

    auto* cmd_flow = app.add_subcommand("flow", "Segmentation + flow quantification");
    EvalFlags fl;
    int fl_size = 64;
    double fl_pixel = 2.0, fl_lambda_out = 25.0;
    add_eval_options(cmd_flow, fl, true);
    cmd_flow->add_option("--csv", fl.csv_path, "per-case flow CSV");
    cmd_flow->add_option("--json", fl.json_path, "agreement JSON");
    cmd_flow->add_option("--size", fl_size, "plane image side, px")->capture_default_str();
    cmd_flow->add_option("--pixel-mm", fl_pixel, "plane pixel size")->capture_default_str();
    cmd_flow->add_option("--lambda-out", fl_lambda_out, "contour outside-data weight")
        ->capture_default_str();

    auto* cmd_describe = app.add_subcommand("describe", "Inspect checkpoints and volumes");
    std::string de_model, de_vol;
    cmd_describe->add_option("--model", de_model, "checkpoint file");
    cmd_describe->add_option("--vol", de_vol, "volume file");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (app.got_subcommand(cmd_phantom)) {
            const bool family = ph_count > 0;
            if (family == !ph_out.empty() || (family && ph_dir.empty()))
                throw std::runtime_error("phantom: pass either --out, or --count with --dir");
            const Dims3 dims{ph_size, ph_size, ph_size};
            const Vec3 spacing{ph_spacing, ph_spacing, ph_spacing};
            auto apply_overrides = [&](PhantomSpec& spec) {
                spec.frames = ph_frames;
                spec.venc = ph_venc;
                spec.noise_sigma = ph_noise;
            };
            if (family) {
                Rng rng(ph_seed);
                for (int i = 0; i < ph_count; ++i) {
                    PhantomKind kind = ph_kind == "mixed"
                                           ? (i % 2 ? PhantomKind::torus_arc
                                                    : PhantomKind::straight_tube)
                                           : parse_kind(ph_kind);
                    PhantomSpec spec = sample_family_spec(kind, dims, spacing, rng);
                    apply_overrides(spec);
                    const std::uint64_t noise_seed =
                        (ph_seed + 1) * 1000003ULL + static_cast<std::uint64_t>(i);
                    const FlowVolume4D vol = make_phantom(spec, noise_seed);
                    char name[32];
                    std::snprintf(name, sizeof(name), "phantom_%03d.f4d", i);
                    const std::string path = resolve_out(out_dir, ph_dir) + "/" + name;
                    std::filesystem::create_directories(resolve_out(out_dir, ph_dir));
                    save_f4d(path, vol);
                    save_ground_truth(path + ".json", phantom_ground_truth(spec));
                }
            } else {
                PhantomSpec spec = canonical_spec(parse_kind(ph_kind), dims, spacing);
                spec.radius = ph_radius;
                spec.v_max = ph_vmax;
                spec.major_radius = ph_major;
                spec.arc_span_deg = ph_span;
                apply_overrides(spec);
                center_spec(spec);
                const std::string path = resolve_out(out_dir, ph_out);
                const std::filesystem::path parent = std::filesystem::path(path).parent_path();
                if (!parent.empty()) std::filesystem::create_directories(parent);
                save_f4d(path, make_phantom(spec, ph_seed));
                save_ground_truth(path + ".json", phantom_ground_truth(spec));
            }
            return 0;
        }

        if (app.got_subcommand(cmd_pre)) {
            const FlowVolume4D vol = load_f4d(pre_in);
            const EnvVolumes env = build_env(vol);
            const std::string prefix = resolve_out(out_dir, pre_prefix);
            const std::filesystem::path parent = std::filesystem::path(prefix).parent_path();
            if (!parent.empty()) std::filesystem::create_directories(parent);
            save_s3d(prefix + ".pcmra.s3d", env.pcmra);
            save_s3d(prefix + ".vsysx.s3d", component_volume(env.v_sys, 0));
            save_s3d(prefix + ".vsysy.s3d", component_volume(env.v_sys, 1));
            save_s3d(prefix + ".vsysz.s3d", component_volume(env.v_sys, 2));
            json meta;
            meta["dims"] = json::array({env.pcmra.dims.z, env.pcmra.dims.y, env.pcmra.dims.x});
            meta["spacing"] = vec3_json(env.pcmra.spacing);
            meta["sys_index"] = env.sys_index;
            meta["venc"] = env.venc;
            write_file(prefix + ".meta.json", meta.dump(2) + "\n");
            return 0;
        }

        if (app.got_subcommand(cmd_train)) {
            TrainConfig cfg;
            cfg.workers = tr_workers;
            cfg.lr = tr_lr;
            cfg.k_a = tr_k_a;
            cfg.eta = tr_eta;
            cfg.gamma = tr_gamma;
            cfg.value_coef = tr_value_coef;
            cfg.grad_clip = tr_clip;
            cfg.total_steps = tr_steps;
            cfg.val_interval = tr_val_interval;
            cfg.val_count = tr_val_count;
            cfg.seed = tr_seed;
            cfg.net.sub_dims = parse_triple(tr_sub_dims, "--sub-dims");
            cfg.net.conv_channels = parse_quad(tr_conv, "--conv-channels");
            cfg.net.latent = tr_latent;
            cfg.net.lstm_hidden = tr_lstm;
            cfg.episode.sub_dims = cfg.net.sub_dims;
            cfg.episode.grid_mm = tr_grid;
            cfg.episode.omega_max = tr_omega;
            cfg.episode.d_max = tr_dmax;
            cfg.episode.t_max = tr_t_max;
            cfg.episode.lambda = tr_lambda;
            cfg.episode.bonus = tr_bonus;

            const std::vector<LoadedCase> loaded = load_cases({}, tr_phantoms);
            std::vector<TrainCase> cases;
            cases.reserve(loaded.size());
            for (const LoadedCase& c : loaded) cases.push_back({build_env(c.vol), c.gt});

            const std::string out = resolve_out(out_dir, tr_out);
            std::filesystem::create_directories(out);
            json cfg_dump;
            cfg_dump["workers"] = cfg.workers;
            cfg_dump["lr"] = cfg.lr;
            cfg_dump["k_a"] = cfg.k_a;
            cfg_dump["eta"] = cfg.eta;
            cfg_dump["gamma"] = cfg.gamma;
            cfg_dump["value_coef"] = cfg.value_coef;
            cfg_dump["grad_clip"] = cfg.grad_clip;
            cfg_dump["total_steps"] = cfg.total_steps;
            cfg_dump["val_interval"] = cfg.val_interval;
            cfg_dump["val_count"] = cfg.val_count;
            cfg_dump["seed"] = cfg.seed;
            cfg_dump["sub_dims"] = json::array(
                {cfg.net.sub_dims.z, cfg.net.sub_dims.y, cfg.net.sub_dims.x});
            cfg_dump["conv_channels"] =
                json::array({cfg.net.conv_channels[0], cfg.net.conv_channels[1],
                             cfg.net.conv_channels[2], cfg.net.conv_channels[3]});
            cfg_dump["latent"] = cfg.net.latent;
            cfg_dump["lstm_hidden"] = cfg.net.lstm_hidden;
            cfg_dump["t_max"] = cfg.episode.t_max;
            cfg_dump["omega_max"] = cfg.episode.omega_max;
            cfg_dump["d_max"] = cfg.episode.d_max;
            cfg_dump["lambda"] = cfg.episode.lambda;
            cfg_dump["bonus"] = cfg.episode.bonus;
            cfg_dump["grid_mm"] = cfg.episode.grid_mm;
            cfg_dump["cases"] = static_cast<int>(cases.size());
            write_file(out + "/config.json", cfg_dump.dump(2) + "\n");

            const TrainResult result = train(cfg, cases, out);

            json res;
            res["env_steps"] = result.env_steps;
            res["updates"] = result.updates;
            res["skipped_nan"] = result.skipped_nan;
            res["torn_reads"] = result.torn_reads;
            res["best_step"] = result.best_step;
            res["best_score"] =
                std::isfinite(result.best_score) ? json(result.best_score) : json("inf");
            res["collapsed"] = result.collapsed;
            write_file(out + "/result.json", res.dump(2) + "\n");
            if (result.collapsed) {
                std::fprintf(stderr,
                             "training collapse: an entire validation interval applied no "
                             "update (%lld skipped so far)\n",
                             static_cast<long long>(result.skipped_nan));
                return 3;
            }
            return 0;
        }

        if (app.got_subcommand(cmd_eval)) {
            const Network net = load_model(ev.model);
            const EpisodeConfig episode =
                episode_for(net, ev.omega, ev.dmax, ev.t_max, ev.lambda, ev.grid);
            const std::vector<LoadedCase> cases = load_cases(ev.vols, ev.phantoms);
            std::string csv = "case,angular_deg,distance_mm,final_cost\n";
            std::string trace_csv = "case,t,cost,angular_deg,distance_mm\n";
            std::vector<double> angulars, distances;
            double cost_sum = 0.0;
            json case_list = json::array();
            for (const LoadedCase& c : cases) {
                const EnvVolumes env = build_env(c.vol);
                const EvalEpisode ep = run_eval_episode(net, env, c.gt, episode);
                angulars.push_back(ep.metrics.angular_deg);
                distances.push_back(ep.metrics.distance_mm);
                cost_sum += ep.final_cost;
                csv += c.name + "," + fmt(ep.metrics.angular_deg) + "," +
                       fmt(ep.metrics.distance_mm) + "," + fmt(ep.final_cost) + "\n";
                for (const EvalTraceRow& row : ep.trace)
                    trace_csv += c.name + "," + std::to_string(row.t) + "," + fmt(row.cost) +
                                 "," + fmt(row.angular_deg) + "," + fmt(row.distance_mm) + "\n";
                json jc;
                jc["case"] = c.name;
                jc["angular_deg"] = ep.metrics.angular_deg;
                jc["distance_mm"] = ep.metrics.distance_mm;
                jc["final_cost"] = ep.final_cost;
                case_list.push_back(jc);
            }
            if (!ev.csv_path.empty()) write_file(resolve_out(out_dir, ev.csv_path), csv);
            if (!ev_trace.empty()) write_file(resolve_out(out_dir, ev_trace), trace_csv);
            if (!ev.json_path.empty()) {
                const double n = static_cast<double>(cases.size());
                json j;
                j["cases"] = case_list;
                double asum = 0, dsum = 0;
                for (double a : angulars) asum += a;
                for (double d : distances) dsum += d;
                j["mean_angular_deg"] = asum / n;
                j["median_angular_deg"] = median(angulars);
                j["mean_distance_mm"] = dsum / n;
                j["median_distance_mm"] = median(distances);
                j["mean_final_cost"] = cost_sum / n;
                write_file(resolve_out(out_dir, ev.json_path), j.dump(2) + "\n");
            }
            if (ev.csv_path.empty() && ev.json_path.empty()) std::fputs(csv.c_str(), stdout);
            return 0;
        }

        if (app.got_subcommand(cmd_reformat)) {
            const Network net = load_model(rf.model);
            const EpisodeConfig episode =
                episode_for(net, rf.omega, rf.dmax, rf.t_max, rf.lambda, rf.grid);
            const std::vector<LoadedCase> cases = load_cases(rf.vols, "");
            if (cases.size() != 1) throw std::runtime_error("reformat: pass exactly one --vol");
            const EnvVolumes env = build_env(cases[0].vol);
            const EvalEpisode ep = run_eval_episode(net, env, cases[0].gt, episode);
            const PlaneImage img =
                sample_plane_image(env, ep.final_plane, rf_size, rf_size, rf_pixel);

            ScalarVolume3D intensity =
                ScalarVolume3D::zeros({1, rf_size, rf_size}, {rf_pixel, rf_pixel, rf_pixel});
            ScalarVolume3D vthrough = intensity;
            for (std::size_t i = 0; i < img.intensity.size(); ++i) {
                intensity.v[i] = img.intensity[i];
                vthrough.v[i] = img.v_through[i];
            }
            const std::string prefix = resolve_out(out_dir, rf_prefix);
            const std::filesystem::path parent = std::filesystem::path(prefix).parent_path();
            if (!parent.empty()) std::filesystem::create_directories(parent);
            save_s3d(prefix + ".intensity.s3d", intensity);
            save_s3d(prefix + ".vthrough.s3d", vthrough);
            json j;
            j["P"] = vec3_json(ep.final_plane.P);
            j["n"] = vec3_json(ep.final_plane.n);
            j["w1"] = vec3_json(ep.final_plane.w1);
            j["w2"] = vec3_json(ep.final_plane.w2);
            j["angular_deg"] = ep.metrics.angular_deg;
            j["distance_mm"] = ep.metrics.distance_mm;
            j["final_cost"] = ep.final_cost;
            j["sys_index"] = env.sys_index;
            write_file(prefix + ".plane.json", j.dump(2) + "\n");
            return 0;
        }

        if (app.got_subcommand(cmd_inv)) {
            const Network net = load_model(iv.model);
            const EpisodeConfig episode =
                episode_for(net, iv.omega, iv.dmax, iv.t_max, iv.lambda, iv.grid);
            const std::vector<LoadedCase> cases = load_cases(iv.vols, "");
            if (cases.size() != 1) throw std::runtime_error("invariance: pass exactly one --vol");
            const InvarianceTable table =
                invariance_grid(net, cases[0].vol, cases[0].gt, episode);
            std::string csv = "rot_deg,off_mm,angular_deg,distance_mm\n";
            for (const InvarianceCell& cell : table.cells)
                csv += fmt(cell.rot_deg) + "," + fmt(cell.off_mm) + "," +
                       fmt(cell.metrics.angular_deg) + "," + fmt(cell.metrics.distance_mm) + "\n";
            if (!iv.csv_path.empty()) write_file(resolve_out(out_dir, iv.csv_path), csv);
            if (!iv.json_path.empty()) {
                json j;
                j["baseline_angular_deg"] = table.baseline.angular_deg;
                j["baseline_distance_mm"] = table.baseline.distance_mm;
                j["mean_angular_deg"] = table.mean_angular;
                j["std_angular_deg"] = table.std_angular;
                j["mean_distance_mm"] = table.mean_distance;
                j["std_distance_mm"] = table.std_distance;
                j["cells"] = static_cast<int>(table.cells.size());
                write_file(resolve_out(out_dir, iv.json_path), j.dump(2) + "\n");
            }
            if (iv.csv_path.empty() && iv.json_path.empty()) std::fputs(csv.c_str(), stdout);
            return 0;
        }

        if (app.got_subcommand(cmd_flow)) {
            const Network net = load_model(fl.model);
            const EpisodeConfig episode =
                episode_for(net, fl.omega, fl.dmax, fl.t_max, fl.lambda, fl.grid);
            ChanVeseParams cv;
            cv.lambda_out = fl_lambda_out;
            const std::vector<LoadedCase> cases = load_cases(fl.vols, fl.phantoms);
            std::string csv =
                "case,flow_pred_l_min,flow_ref_l_min,flow_gt_l_min,area_pred_mm2,area_ref_mm2,"
                "fallback_pred,fallback_ref,angular_deg,distance_mm\n";
            std::vector<double> flows_pred, flows_ref, flows_gt;
            std::vector<VesselMask> masks_pred, masks_ref;
            json case_list = json::array();
            for (const LoadedCase& c : cases) {
                const EnvVolumes env = build_env(c.vol);
                const EvalEpisode ep = run_eval_episode(net, env, c.gt, episode);
                const PlaneImage img_pred =
                    sample_plane_image(env, ep.final_plane, fl_size, fl_size, fl_pixel);
                const PlaneState ref_plane = make_plane(c.gt.p_t, c.gt.n_t);
                const PlaneImage img_ref =
                    sample_plane_image(env, ref_plane, fl_size, fl_size, fl_pixel);
                const VesselMask mask_pred = segment_vessel(img_pred, cv);
                const VesselMask mask_ref = segment_vessel(img_ref, cv);
                const double flow_pred = compute_flow_l_min(mask_pred, img_pred);
                const double flow_ref = compute_flow_l_min(mask_ref, img_ref);
                const double flow_gt =
                    c.gt.q_mm3s.empty()
                        ? 0.0
                        : c.gt.q_mm3s[static_cast<std::size_t>(env.sys_index)] * 6e-5;
                flows_pred.push_back(flow_pred);
                flows_ref.push_back(flow_ref);
                flows_gt.push_back(flow_gt);
                masks_pred.push_back(mask_pred);
                masks_ref.push_back(mask_ref);
                csv += c.name + "," + fmt(flow_pred) + "," + fmt(flow_ref) + "," + fmt(flow_gt) +
                       "," + fmt(mask_pred.area_mm2) + "," + fmt(mask_ref.area_mm2) + "," +
                       std::to_string(mask_pred.fallback ? 1 : 0) + "," +
                       std::to_string(mask_ref.fallback ? 1 : 0) + "," +
                       fmt(ep.metrics.angular_deg) + "," + fmt(ep.metrics.distance_mm) + "\n";
                json jc;
                jc["case"] = c.name;
                jc["flow_pred_l_min"] = flow_pred;
                jc["flow_ref_l_min"] = flow_ref;
                jc["flow_gt_l_min"] = flow_gt;
                jc["area_pred_mm2"] = mask_pred.area_mm2;
                jc["area_ref_mm2"] = mask_ref.area_mm2;
                jc["fallback_pred"] = mask_pred.fallback;
                jc["fallback_ref"] = mask_ref.fallback;
                case_list.push_back(jc);
            }
            if (!fl.csv_path.empty()) write_file(resolve_out(out_dir, fl.csv_path), csv);
            if (!fl.json_path.empty()) {
                json j;
                j["cases"] = case_list;
                if (cases.size() >= 2) {
                    j["agreement_ref_vs_pred"] = agreement_json(
                        agreement_stats(flows_ref, flows_pred, &masks_ref, &masks_pred));
                    j["agreement_analytic_vs_pred"] =
                        agreement_json(agreement_stats(flows_gt, flows_pred));
                }
                write_file(resolve_out(out_dir, fl.json_path), j.dump(2) + "\n");
            }
            if (fl.csv_path.empty() && fl.json_path.empty()) std::fputs(csv.c_str(), stdout);
            return 0;
        }

        if (app.got_subcommand(cmd_describe)) {
            std::string text;
            if (!de_model.empty()) {
                Checkpoint meta;
                const Network net = load_model(de_model, &meta);
                text += "checkpoint: step " + std::to_string(meta.step) + ", score " +
                        (std::isfinite(meta.score) ? fmt(meta.score) : "inf") + "\n";
                text += net.describe();
            }
            if (!de_vol.empty()) {
                const FlowVolume4D vol = load_f4d(de_vol);
                text += "volume: " + std::to_string(vol.frames) + " frames, grid " +
                        std::to_string(vol.dims.z) + "x" + std::to_string(vol.dims.y) + "x" +
                        std::to_string(vol.dims.x) + ", spacing " + fmt(vol.spacing.x) + "/" +
                        fmt(vol.spacing.y) + "/" + fmt(vol.spacing.z) + " mm, venc " +
                        fmt(vol.venc) + " mm/s\n";
            }
            if (de_model.empty() && de_vol.empty()) {
                text += "default configuration\n";
                text += Network(NetworkConfig{}).describe();
            }
            std::fputs(text.c_str(), stdout);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

}  // namespace planenav::cli
