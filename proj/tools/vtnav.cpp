#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vtnav/config.hpp"
#include "vtnav/globalpath.hpp"
#include "vtnav/net.hpp"
#include "vtnav/perception.hpp"
#include "vtnav/plant.hpp"
#include "vtnav/sim.hpp"

namespace fs = std::filesystem;
using namespace vtnav;

namespace {

ScenarioConfig resolve_config(const std::string& config_path, std::uint64_t seed_override,
                              bool seed_set) {
    ScenarioConfig config =
        config_path.empty() ? default_config() : load_config(config_path);
    if (seed_set) config.seed = seed_override;
    validate_config(config);
    return config;
}

std::vector<PlantConfig> collect_plant_configs(const ScenarioConfig& config) {
    std::vector<PlantConfig> out;
    for (const CollectVariant& v : config.collect.variants) {
        PlantConfig pc = config.plant;
        pc.geom = config.geometry;
        pc.trailer_kind = v.kind;
        pc.payload_mass = v.payload;
        out.push_back(pc);
    }
    return out;
}

int cmd_collect(const ScenarioConfig& config, const std::string& out_dir) {
    const auto configs = collect_plant_configs(config);
    const auto dataset =
        generate_dataset(configs, config.collect.episodes_per_variant, config.collect.steps,
                         config.dt, config.seed, config.collect.min_steps);
    save_dataset(dataset, out_dir);
    std::cout << "collect: wrote " << dataset.size() << " trajectories ("
              << config.collect.steps << " steps each) to " << out_dir << "\n";
    return 0;
}

int cmd_train_nominal(const ScenarioConfig& config, const std::string& data_dir,
                      const std::string& out_path, const std::string& init_path) {
    const auto dataset = load_dataset(data_dir);
    if (dataset.empty()) throw std::runtime_error("train-nominal: empty dataset in " + data_dir);

    std::mt19937_64 rng(config.seed);
    HybridModel model = make_model(config, rng);
    if (!init_path.empty()) model.nominal_net = load_network(init_path);

    const TrainReport report = train_nominal(dataset, config, model);
    save_network(model.nominal_net, out_path);

    std::ofstream curve(out_path + ".curve.txt");
    curve.precision(17);
    curve << "# epoch train_loss val_loss\n";
    for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
        curve << e << ' ' << report.train_loss[e] << ' ' << report.val_loss[e] << '\n';
    }
    std::cout << "train-nominal: " << report.train_loss.size() << " epochs, best val "
              << report.best_val << " at epoch " << report.best_epoch << ", weights -> "
              << out_path << "\n";
    return 0;
}

int cmd_eval_model(const ScenarioConfig& config, const std::string& weights,
                   const std::string& out_path, const std::string& kind, double payload,
                   int steps) {
    std::mt19937_64 rng(config.seed);
    HybridModel model = make_model(config, rng);
    model.nominal_net = load_network(weights);
    model.residual_net.norm_mean = model.nominal_net.norm_mean;
    model.residual_net.norm_scale = model.nominal_net.norm_scale;

    PlantConfig pc = config.plant;
    pc.geom = config.geometry;
    if (!kind.empty()) pc.trailer_kind = trailer_kind_from_string(kind);
    pc.payload_mass = payload;

    const auto rows = evaluate_rolling_rmse(config, model, pc, steps, config.seed);
    std::ofstream f(out_path);
    if (!f) throw std::runtime_error("eval-model: cannot open " + out_path);
    f.precision(17);
    f << "# step rmse_nominal rmse_unweighted rmse_weighted\n";
    for (const EvalRow& r : rows) {
        f << r.step << ' ' << r.rmse_nominal << ' ' << r.rmse_unweighted << ' '
          << r.rmse_weighted << '\n';
    }
    std::cout << "eval-model: wrote " << rows.size() << " rows to " << out_path << "\n";
    return 0;
}

int cmd_track(const ScenarioConfig& config, const std::string& weights,
              const std::string& out_path, const std::string& mode, const std::string& kind,
              double payload, const LemniscateSpec& shape, double duration) {
    std::mt19937_64 rng(config.seed);
    HybridModel model = make_model(config, rng);
    model.nominal_net = load_network(weights);
    model.residual_net.norm_mean = model.nominal_net.norm_mean;
    model.residual_net.norm_scale = model.nominal_net.norm_scale;

    PlantConfig pc = config.plant;
    pc.geom = config.geometry;
    if (!kind.empty()) pc.trailer_kind = trailer_kind_from_string(kind);
    pc.payload_mass = payload;

    const bool use_residual = mode == "weighted";
    if (!use_residual && mode != "nominal") {
        throw std::runtime_error("track: mode must be 'nominal' or 'weighted'");
    }
    const TrackingReport report =
        run_tracking(config, model, pc, shape, use_residual, duration, config.seed);

    std::ofstream f(out_path);
    if (!f) throw std::runtime_error("track: cannot open " + out_path);
    f.precision(17);
    f << "# mode mean_error std_error max_error cycles\n";
    f << mode << ' ' << report.mean_error << ' ' << report.std_error << ' '
      << report.max_error << ' ' << report.cycles << '\n';
    f << "# per-cycle errors\n";
    for (double e : report.errors) f << e << '\n';
    std::cout << "track (" << mode << "): mean " << report.mean_error << " m, max "
              << report.max_error << " m over " << report.cycles << " cycles\n";
    return 0;
}

int cmd_navigate(const ScenarioConfig& config, const std::string& weights,
                 const std::string& out_dir, const std::string& residual_path,
                 bool reset_residual) {
    if (config.navigation.world_file.empty()) {
        throw std::runtime_error("navigate: config has no navigation.world_file");
    }
    const World world = load_world(config.navigation.world_file);

    std::mt19937_64 rng(config.seed);
    HybridModel model = make_model(config, rng);
    model.nominal_net = load_network(weights);
    model.residual_net.norm_mean = model.nominal_net.norm_mean;
    model.residual_net.norm_scale = model.nominal_net.norm_scale;
    if (!residual_path.empty() && !reset_residual && fs::exists(residual_path)) {
        model.residual_net = load_network(residual_path);
    }

    fs::create_directories(out_dir);
    const NavigationResult result = run_navigation(
        config, world, model, (fs::path(out_dir) / "diagnostics.jsonl").string());

    save_trajectory(result.trajectory, (fs::path(out_dir) / "trajectory.txt").string());
    if (!residual_path.empty()) save_network(model.residual_net, residual_path);

    std::ofstream ev(fs::path(out_dir) / "events.txt");
    ev << "reached_goal " << result.reached_goal << '\n'
       << "collided " << result.collided << '\n'
       << "timed_out " << result.timed_out << '\n'
       << "no_path " << result.no_path << '\n'
       << "cycles " << result.cycles << '\n'
       << "sim_time " << result.sim_time << '\n'
       << "distance_traveled " << result.distance_traveled << '\n'
       << "min_true_clearance " << result.min_true_clearance << '\n'
       << "min_planned_dfr " << result.min_planned_dfr << '\n'
       << "mean_solve_time " << result.mean_solve_time << '\n'
       << "max_solve_time " << result.max_solve_time << '\n'
       << "se_activations " << result.se_activations << '\n'
       << "se_active_cycles " << result.se_active_cycles << '\n'
       << "replans " << result.replans << '\n'
       << "failsafe_cycles " << result.failsafe_cycles << '\n';

    std::cout << "navigate: " << (result.reached_goal ? "reached goal" : "FAILED") << " in "
              << result.sim_time << " s, min clearance " << result.min_true_clearance
              << " m, artifacts -> " << out_dir << "\n";
    return result.reached_goal ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vehicle-trailer navigation harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    bool reset_residual = false;
    app.add_option("--config", config_path, "scenario config JSON");
    app.add_option("--seed", seed, "seed override")->each([&](const std::string&) {
        seed_set = true;
    });
    app.add_option("--out", out, "output file or directory");
    app.add_flag("--reset-residual", reset_residual, "discard persisted residual weights");

    auto* collect = app.add_subcommand("collect", "generate plant trajectories");

    auto* train = app.add_subcommand("train-nominal", "offline rolling-prediction training");
    std::string data_dir, init_path;
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--init", init_path, "resume from saved weights");

    auto* eval = app.add_subcommand("eval-model", "multi-step rolling RMSE table");
    std::string weights, kind;
    double payload = 0.0;
    int eval_steps = 1200;
    eval->add_option("--weights", weights, "nominal weights")->required();
    eval->add_option("--kind", kind, "plant trailer kind override");
    eval->add_option("--payload", payload, "plant payload mass");
    eval->add_option("--steps", eval_steps, "evaluation trajectory length");

    auto* track = app.add_subcommand("track", "8-shape tracking benchmark");
    std::string track_mode = "weighted";
    LemniscateSpec shape;
    double duration = 60.0;
    track->add_option("--weights", weights, "nominal weights")->required();
    track->add_option("--mode", track_mode, "nominal | weighted");
    track->add_option("--kind", kind, "plant trailer kind override");
    track->add_option("--payload", payload, "plant payload mass");
    track->add_option("--a", shape.a, "lemniscate half-width [m]");
    track->add_option("--b", shape.b, "lemniscate half-height [m]");
    track->add_option("--period", shape.period, "lemniscate period [s]");
    track->add_option("--duration", duration, "run length [s]");

    auto* navigate = app.add_subcommand("navigate", "closed-loop navigation run");
    std::string residual_path;
    navigate->add_option("--weights", weights, "nominal weights")->required();
    navigate->add_option("--residual-weights", residual_path,
                         "persisted residual weights (loaded and saved)");

    CLI11_PARSE(app, argc, argv);

    try {
        const ScenarioConfig config = resolve_config(config_path, seed, seed_set);
        if (collect->parsed()) {
            return cmd_collect(config, out.empty() ? "dataset" : out);
        }
        if (train->parsed()) {
            return cmd_train_nominal(config, data_dir,
                                     out.empty() ? "nominal_weights.txt" : out, init_path);
        }
        if (eval->parsed()) {
            return cmd_eval_model(config, weights, out.empty() ? "eval_rmse.txt" : out, kind,
                                  payload, eval_steps);
        }
        if (track->parsed()) {
            return cmd_track(config, weights, out.empty() ? "tracking_report.txt" : out,
                             track_mode, kind, payload, shape, duration);
        }
        if (navigate->parsed()) {
            return cmd_navigate(config, weights, out.empty() ? "nav_run" : out, residual_path,
                                reset_residual);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
