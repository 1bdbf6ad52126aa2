#include "vtnav/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace vtnav {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw std::runtime_error("config: " + path + ": " + msg);
}

/// Rejects keys outside the allowed set so typos never pass silently.
void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& item : obj.items()) {
        if (allowed.count(item.key()) == 0) fail(path + "." + item.key(), "unknown key");
    }
}

double get_num(const json& obj, const std::string& path, const std::string& key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) fail(path + "." + key, "expected a number");
    return obj[key].get<double>();
}

int get_int(const json& obj, const std::string& path, const std::string& key, int fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer()) fail(path + "." + key, "expected an integer");
    return obj[key].get<int>();
}

std::string get_str(const json& obj, const std::string& path, const std::string& key,
                    const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string()) fail(path + "." + key, "expected a string");
    return obj[key].get<std::string>();
}

template <std::size_t n>
void get_arr(const json& obj, const std::string& path, const std::string& key,
             std::array<double, n>& out) {
    if (!obj.contains(key)) return;
    const json& a = obj[key];
    if (!a.is_array() || a.size() != n) {
        fail(path + "." + key, "expected an array of " + std::to_string(n) + " numbers");
    }
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i].get<double>();
}

void get_vec(const json& obj, const std::string& path, const std::string& key,
             std::vector<double>& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_array()) fail(path + "." + key, "expected an array");
    out = obj[key].get<std::vector<double>>();
}

void get_layers(const json& obj, const std::string& path, const std::string& key,
                std::vector<int>& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_array()) fail(path + "." + key, "expected an array of integers");
    out = obj[key].get<std::vector<int>>();
}

void parse_geometry(const json& j, const std::string& path, SystemGeometry& g) {
    check_keys(j, path,
               {"l", "l_fh", "l_hr", "r_f", "r_r", "vehicle_circle_offsets",
                "trailer_circle_offsets"});
    g.l = get_num(j, path, "l", g.l);
    g.l_fh = get_num(j, path, "l_fh", g.l_fh);
    g.l_hr = get_num(j, path, "l_hr", g.l_hr);
    g.r_f = get_num(j, path, "r_f", g.r_f);
    g.r_r = get_num(j, path, "r_r", g.r_r);
    get_vec(j, path, "vehicle_circle_offsets", g.vehicle_circle_offsets);
    get_vec(j, path, "trailer_circle_offsets", g.trailer_circle_offsets);
}

void parse_plant(const json& j, const std::string& path, PlantConfig& p) {
    check_keys(j, path,
               {"trailer_kind", "payload_mass", "yaw_time_constant", "slip_gain",
                "actuator_time_constant", "process_noise_std", "terrain_pulses"});
    p.trailer_kind = trailer_kind_from_string(
        get_str(j, path, "trailer_kind", to_string(p.trailer_kind)));
    p.payload_mass = get_num(j, path, "payload_mass", p.payload_mass);
    p.yaw_time_constant = get_num(j, path, "yaw_time_constant", p.yaw_time_constant);
    p.slip_gain = get_num(j, path, "slip_gain", p.slip_gain);
    p.actuator_time_constant =
        get_num(j, path, "actuator_time_constant", p.actuator_time_constant);
    get_arr(j, path, "process_noise_std", p.disturbance.process_noise_std);
    if (j.contains("terrain_pulses")) {
        if (!j["terrain_pulses"].is_array()) fail(path + ".terrain_pulses", "expected an array");
        p.disturbance.terrain_pulses.clear();
        int i = 0;
        for (const json& pj : j["terrain_pulses"]) {
            const std::string pp = path + ".terrain_pulses[" + std::to_string(i++) + "]";
            check_keys(pj, pp, {"start", "duration", "amplitude"});
            TerrainPulse pulse;
            pulse.start = get_num(pj, pp, "start", 0.0);
            pulse.duration = get_num(pj, pp, "duration", 0.0);
            pulse.amplitude = get_num(pj, pp, "amplitude", 0.0);
            p.disturbance.terrain_pulses.push_back(pulse);
        }
    }
}

void parse_bounds(const json& j, const std::string& path, Bounds& b) {
    check_keys(j, path,
               {"state_lo", "state_hi", "input_lo", "input_hi", "theta_lo", "theta_hi",
                "omega_psi_lo", "omega_psi_hi"});
    get_arr(j, path, "state_lo", b.state_lo);
    get_arr(j, path, "state_hi", b.state_hi);
    get_arr(j, path, "input_lo", b.input_lo);
    get_arr(j, path, "input_hi", b.input_hi);
    b.theta_lo = get_num(j, path, "theta_lo", b.theta_lo);
    b.theta_hi = get_num(j, path, "theta_hi", b.theta_hi);
    b.omega_psi_lo = get_num(j, path, "omega_psi_lo", b.omega_psi_lo);
    b.omega_psi_hi = get_num(j, path, "omega_psi_hi", b.omega_psi_hi);
}

void parse_weights(const json& j, const std::string& path, MpcWeights& w) {
    check_keys(j, path,
               {"q_t", "q_ref", "q_u_base", "q_du_base", "kappa_u", "lambda_f", "lambda_r",
                "gamma_f", "gamma_r", "d_safe"});
    get_arr(j, path, "q_t", w.q_t);
    get_arr(j, path, "q_ref", w.q_ref);
    get_arr(j, path, "q_u_base", w.q_u_base);
    get_arr(j, path, "q_du_base", w.q_du_base);
    w.kappa_u = get_num(j, path, "kappa_u", w.kappa_u);
    w.lambda_f = get_num(j, path, "lambda_f", w.lambda_f);
    w.lambda_r = get_num(j, path, "lambda_r", w.lambda_r);
    w.gamma_f = get_num(j, path, "gamma_f", w.gamma_f);
    w.gamma_r = get_num(j, path, "gamma_r", w.gamma_r);
    w.d_safe = get_num(j, path, "d_safe", w.d_safe);
}

void parse_model(const json& j, const std::string& path, ModelConfig& m) {
    check_keys(j, path,
               {"n_f", "N", "n_c", "n_e", "n_t", "epsilon", "nominal_layers",
                "residual_layers"});
    m.n_f = get_int(j, path, "n_f", m.n_f);
    m.N = get_int(j, path, "N", m.N);
    m.n_c = get_int(j, path, "n_c", m.n_c);
    m.n_e = get_int(j, path, "n_e", m.n_e);
    m.n_t = get_int(j, path, "n_t", m.n_t);
    m.epsilon = get_num(j, path, "epsilon", m.epsilon);
    get_layers(j, path, "nominal_layers", m.nominal_layers);
    get_layers(j, path, "residual_layers", m.residual_layers);
}

void parse_training(const json& j, const std::string& path, TrainingConfig& t) {
    check_keys(j, path,
               {"batch_size", "lr_initial", "lr_final", "epochs", "decay_epochs",
                "sample_stride", "residual_budget", "residual_horizon"});
    t.batch_size = get_int(j, path, "batch_size", t.batch_size);
    t.lr_initial = get_num(j, path, "lr_initial", t.lr_initial);
    t.lr_final = get_num(j, path, "lr_final", t.lr_final);
    t.epochs = get_int(j, path, "epochs", t.epochs);
    t.decay_epochs = get_int(j, path, "decay_epochs", t.decay_epochs);
    t.sample_stride = get_int(j, path, "sample_stride", t.sample_stride);
    t.residual_budget = get_int(j, path, "residual_budget", t.residual_budget);
    t.residual_horizon = get_int(j, path, "residual_horizon", t.residual_horizon);
}

void parse_collect(const json& j, const std::string& path, CollectConfig& c) {
    check_keys(j, path, {"variants", "episodes_per_variant", "steps", "min_steps"});
    if (j.contains("variants")) {
        if (!j["variants"].is_array()) fail(path + ".variants", "expected an array");
        c.variants.clear();
        int i = 0;
        for (const json& vj : j["variants"]) {
            const std::string vp = path + ".variants[" + std::to_string(i++) + "]";
            check_keys(vj, vp, {"kind", "payload"});
            CollectVariant v;
            v.kind = trailer_kind_from_string(get_str(vj, vp, "kind", to_string(v.kind)));
            v.payload = get_num(vj, vp, "payload", 0.0);
            c.variants.push_back(v);
        }
    }
    c.episodes_per_variant = get_int(j, path, "episodes_per_variant", c.episodes_per_variant);
    c.steps = get_int(j, path, "steps", c.steps);
    c.min_steps = get_int(j, path, "min_steps", c.min_steps);
}

void parse_perception(const json& j, const std::string& path, PerceptionConfig& p) {
    check_keys(j, path,
               {"beams", "max_range", "eps", "min_pts", "grid_resolution", "grid_extent"});
    p.beams = get_int(j, path, "beams", p.beams);
    p.max_range = get_num(j, path, "max_range", p.max_range);
    p.eps = get_num(j, path, "eps", p.eps);
    p.min_pts = get_int(j, path, "min_pts", p.min_pts);
    p.grid_resolution = get_num(j, path, "grid_resolution", p.grid_resolution);
    p.grid_extent = get_num(j, path, "grid_extent", p.grid_extent);
}

void parse_navigation(const json& j, const std::string& path, NavigationConfig& n) {
    check_keys(j, path,
               {"world_file", "start", "goal", "v_ref", "timeout", "goal_pos_tol",
                "goal_ang_tol"});
    n.world_file = get_str(j, path, "world_file", n.world_file);
    get_arr(j, path, "start", n.start);
    get_arr(j, path, "goal", n.goal);
    n.v_ref = get_num(j, path, "v_ref", n.v_ref);
    n.timeout = get_num(j, path, "timeout", n.timeout);
    n.goal_pos_tol = get_num(j, path, "goal_pos_tol", n.goal_pos_tol);
    n.goal_ang_tol = get_num(j, path, "goal_ang_tol", n.goal_ang_tol);
}

}  // namespace

ScenarioConfig default_config() { return ScenarioConfig{}; }

void validate_config(const ScenarioConfig& c) {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw std::runtime_error("config: " + msg);
    };
    require(c.dt > 0.0 && c.dt <= 1.0, "dt must be in (0, 1]");
    require(c.model.n_f >= 1, "model.n_f must be >= 1");
    require(c.model.N >= 2, "model.N must be >= 2");
    require(c.model.n_c >= 1, "model.n_c must be >= 1");
    require(c.model.n_e >= 2, "model.n_e must be >= 2");
    require(c.model.n_t > c.model.n_f + 1, "model.n_t too small for the history depth");
    require(c.model.epsilon > 0.0 && c.model.epsilon < 1.0, "model.epsilon must be in (0, 1)");
    require(!c.model.nominal_layers.empty(), "model.nominal_layers must not be empty");
    require(!c.model.residual_layers.empty(), "model.residual_layers must not be empty");
    for (int h : c.model.nominal_layers) require(h >= 1, "model.nominal_layers entries >= 1");
    for (int h : c.model.residual_layers) require(h >= 1, "model.residual_layers entries >= 1");
    require(c.training.batch_size >= 1, "training.batch_size must be >= 1");
    require(c.training.lr_initial > 0.0 && c.training.lr_final > 0.0 &&
                c.training.lr_final <= c.training.lr_initial,
            "training learning rates must satisfy 0 < lr_final <= lr_initial");
    require(c.training.epochs >= 0, "training.epochs must be >= 0");
    require(c.training.decay_epochs >= 1, "training.decay_epochs must be >= 1");
    require(c.training.sample_stride >= 1, "training.sample_stride must be >= 1");
    require(c.training.residual_budget >= 0, "training.residual_budget must be >= 0");
    require(c.training.residual_horizon >= 1, "training.residual_horizon must be >= 1");
    require(!c.collect.variants.empty(), "collect.variants must not be empty");
    require(c.collect.episodes_per_variant >= 1, "collect.episodes_per_variant must be >= 1");
    require(c.collect.min_steps >= c.model.n_f + c.model.N + 1,
            "collect.min_steps must cover one training sample");
    require(c.collect.steps >= c.collect.min_steps, "collect.steps below collect.min_steps");
    require(c.perception.beams >= 1, "perception.beams must be >= 1");
    require(c.perception.max_range > 0.0, "perception.max_range must be > 0");
    require(c.perception.eps > 0.0, "perception.eps must be > 0");
    require(c.perception.min_pts >= 1, "perception.min_pts must be >= 1");
    require(c.perception.grid_resolution > 0.0, "perception.grid_resolution must be > 0");
    require(c.perception.grid_extent > 1.0, "perception.grid_extent must be > 1");
    require(c.navigation.v_ref > 0.0, "navigation.v_ref must be > 0");
    require(c.navigation.timeout > 0.0, "navigation.timeout must be > 0");
    require(c.navigation.goal_pos_tol > 0.0, "navigation.goal_pos_tol must be > 0");
    require(c.navigation.goal_ang_tol > 0.0, "navigation.goal_ang_tol must be > 0");
    require(c.geometry.l > 0.0 && c.geometry.l_fh >= 0.0 && c.geometry.l_hr > 0.0,
            "geometry lengths must be positive");
    require(c.plant.yaw_time_constant >= 0.0, "plant.yaw_time_constant must be >= 0");
    require(c.plant.slip_gain >= 0.0 && c.plant.slip_gain <= 1.0,
            "plant.slip_gain must be in [0, 1]");
    require(c.bounds.input_hi[0] > c.bounds.input_lo[0] &&
                c.bounds.input_hi[1] > c.bounds.input_lo[1],
            "bounds.input box must be non-degenerate");
    if (!c.navigation.world_file.empty()) {
        require(std::filesystem::exists(c.navigation.world_file),
                "navigation.world_file does not exist: " + c.navigation.world_file);
    }
}

ScenarioConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config: " + path + ": " + e.what());
    }

    ScenarioConfig c = default_config();
    check_keys(j, "$",
               {"seed", "dt", "plant", "geometry", "bounds", "weights", "model", "training",
                "collect", "perception", "navigation"});
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) fail("$.seed", "expected a non-negative integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    c.dt = get_num(j, "$", "dt", c.dt);
    if (j.contains("geometry")) parse_geometry(j["geometry"], "$.geometry", c.geometry);
    c.plant.geom = c.geometry;
    if (j.contains("plant")) parse_plant(j["plant"], "$.plant", c.plant);
    if (j.contains("bounds")) parse_bounds(j["bounds"], "$.bounds", c.bounds);
    if (j.contains("weights")) parse_weights(j["weights"], "$.weights", c.weights);
    if (j.contains("model")) parse_model(j["model"], "$.model", c.model);
    if (j.contains("training")) parse_training(j["training"], "$.training", c.training);
    if (j.contains("collect")) parse_collect(j["collect"], "$.collect", c.collect);
    if (j.contains("perception")) parse_perception(j["perception"], "$.perception", c.perception);
    if (j.contains("navigation")) parse_navigation(j["navigation"], "$.navigation", c.navigation);
    validate_config(c);
    return c;
}

}  // namespace vtnav
