#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "vtnav/config.hpp"

using namespace vtnav;

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / name).string();
    std::ofstream f(path);
    f << body;
    return path;
}

}  // namespace

TEST_CASE("default configuration snapshot") {
    const ScenarioConfig c = default_config();
    CHECK(c.seed == 1);
    CHECK(c.dt == doctest::Approx(0.1));

    CHECK(c.model.n_f == 3);
    CHECK(c.model.N == 30);
    CHECK(c.model.n_c == 15);
    CHECK(c.model.n_e == 15);
    CHECK(c.model.n_t == 200);
    CHECK(c.model.epsilon == doctest::Approx(0.5));
    CHECK(c.model.nominal_layers == std::vector<int>{64, 32, 16});
    CHECK(c.model.residual_layers == std::vector<int>{32, 16});

    CHECK(c.training.batch_size == 256);
    CHECK(c.training.lr_initial == doctest::Approx(1e-2));
    CHECK(c.training.lr_final == doctest::Approx(1e-5));
    CHECK(c.training.epochs == 30);
    CHECK(c.training.sample_stride == 5);
    CHECK(c.training.residual_budget == 20);
    CHECK(c.training.residual_horizon == 5);

    CHECK(c.collect.variants.size() == 4);
    CHECK(c.collect.episodes_per_variant == 10);
    CHECK(c.collect.steps == 1500);

    CHECK(c.weights.kappa_u == doctest::Approx(10.0));
    CHECK(c.weights.d_safe == doctest::Approx(0.1));
    CHECK(c.bounds.input_hi[0] == doctest::Approx(1.2));
    CHECK(c.bounds.theta_hi == doctest::Approx(1.2));

    CHECK(c.perception.beams == 360);
    CHECK(c.perception.eps == doctest::Approx(0.35));
    CHECK(c.perception.min_pts == 3);

    CHECK(c.navigation.v_ref == doctest::Approx(0.5));
    CHECK(c.navigation.goal_pos_tol == doctest::Approx(0.2));

    CHECK(c.geometry.l == doctest::Approx(0.65));
    CHECK(c.plant.geom.l == doctest::Approx(c.geometry.l));
    CHECK_NOTHROW(validate_config(c));
}

TEST_CASE("empty json equals defaults") {
    const std::string path = write_temp("vtnav_cfg_empty.json", "{}\n");
    const ScenarioConfig c = load_config(path);
    const ScenarioConfig d = default_config();
    CHECK(c.model.N == d.model.N);
    CHECK(c.training.batch_size == d.training.batch_size);
    CHECK(c.dt == d.dt);
    std::filesystem::remove(path);
}

TEST_CASE("overrides reach every section") {
    const std::string path = write_temp("vtnav_cfg_full.json", R"({
        "seed": 77,
        "dt": 0.05,
        "geometry": {"l": 0.8, "l_fh": 1.0, "l_hr": 1.4},
        "plant": {"trailer_kind": "all_castor", "payload_mass": 25.0,
                  "yaw_time_constant": 0.3,
                  "terrain_pulses": [{"start": 2.0, "duration": 1.0, "amplitude": 0.2}]},
        "bounds": {"input_hi": [1.0, 0.4], "theta_hi": 0.9},
        "weights": {"kappa_u": 5.0, "q_ref": [3.0, 3.0]},
        "model": {"n_f": 2, "N": 20, "nominal_layers": [8, 8]},
        "training": {"epochs": 3, "batch_size": 16},
        "collect": {"variants": [{"kind": "wheelless_drag", "payload": 5.0}],
                    "episodes_per_variant": 2, "steps": 400, "min_steps": 100},
        "perception": {"beams": 90, "eps": 0.5},
        "navigation": {"start": [0.0, 0.0, 0.0, 0.0], "goal": [3.0, 1.0, 0.0],
                       "v_ref": 0.4}
    })");
    const ScenarioConfig c = load_config(path);
    CHECK(c.seed == 77);
    CHECK(c.dt == doctest::Approx(0.05));
    CHECK(c.geometry.l == doctest::Approx(0.8));
    CHECK(c.plant.geom.l == doctest::Approx(0.8));  // geometry propagates to the plant
    CHECK(c.plant.trailer_kind == TrailerKind::all_castor);
    CHECK(c.plant.payload_mass == doctest::Approx(25.0));
    REQUIRE(c.plant.disturbance.terrain_pulses.size() == 1);
    CHECK(c.plant.disturbance.terrain_pulses[0].amplitude == doctest::Approx(0.2));
    CHECK(c.bounds.input_hi[0] == doctest::Approx(1.0));
    CHECK(c.bounds.theta_hi == doctest::Approx(0.9));
    CHECK(c.weights.kappa_u == doctest::Approx(5.0));
    CHECK(c.weights.q_ref[0] == doctest::Approx(3.0));
    CHECK(c.model.n_f == 2);
    CHECK(c.model.N == 20);
    CHECK(c.model.nominal_layers == std::vector<int>{8, 8});
    CHECK(c.model.residual_layers == std::vector<int>{32, 16});  // untouched
    CHECK(c.training.epochs == 3);
    REQUIRE(c.collect.variants.size() == 1);
    CHECK(c.collect.variants[0].kind == TrailerKind::wheelless_drag);
    CHECK(c.collect.variants[0].payload == doctest::Approx(5.0));
    CHECK(c.perception.beams == 90);
    CHECK(c.navigation.goal[1] == doctest::Approx(1.0));
    CHECK(c.navigation.v_ref == doctest::Approx(0.4));
    std::filesystem::remove(path);
}

TEST_CASE("unknown keys are rejected with their path") {
    const std::string path =
        write_temp("vtnav_cfg_unknown.json", R"({"model": {"horizon": 30}})");
    try {
        load_config(path);
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("$.model") != std::string::npos);
        CHECK(msg.find("horizon") != std::string::npos);
    }
    std::filesystem::remove(path);

    const std::string top = write_temp("vtnav_cfg_top.json", R"({"solver": {}})");
    CHECK_THROWS_AS(load_config(top), std::runtime_error);
    std::filesystem::remove(top);
}

TEST_CASE("type and parse errors") {
    const std::string bad_type =
        write_temp("vtnav_cfg_type.json", R"({"model": {"N": "thirty"}})");
    CHECK_THROWS_AS(load_config(bad_type), std::runtime_error);
    std::filesystem::remove(bad_type);

    const std::string bad_seed = write_temp("vtnav_cfg_seed.json", R"({"seed": -4})");
    CHECK_THROWS_AS(load_config(bad_seed), std::runtime_error);
    std::filesystem::remove(bad_seed);

    const std::string bad_json = write_temp("vtnav_cfg_parse.json", "{ not json");
    CHECK_THROWS_AS(load_config(bad_json), std::runtime_error);
    std::filesystem::remove(bad_json);

    CHECK_THROWS_AS(load_config("/nonexistent/vtnav.json"), std::runtime_error);
}

TEST_CASE("range validation") {
    ScenarioConfig c = default_config();
    c.dt = 0.0;
    CHECK_THROWS_AS(validate_config(c), std::runtime_error);

    c = default_config();
    c.model.epsilon = 1.5;
    CHECK_THROWS_AS(validate_config(c), std::runtime_error);

    c = default_config();
    c.training.lr_final = 1.0;  // above lr_initial
    CHECK_THROWS_AS(validate_config(c), std::runtime_error);

    c = default_config();
    c.collect.min_steps = c.model.n_f + c.model.N;  // one short of a sample
    CHECK_THROWS_AS(validate_config(c), std::runtime_error);

    c = default_config();
    c.bounds.input_hi[0] = c.bounds.input_lo[0];
    CHECK_THROWS_AS(validate_config(c), std::runtime_error);

    c = default_config();
    c.navigation.world_file = "/nonexistent/world.txt";
    CHECK_THROWS_AS(validate_config(c), std::runtime_error);

    // A config file whose values are individually parseable but out of range.
    const std::string path =
        write_temp("vtnav_cfg_range.json", R"({"model": {"epsilon": 2.0}})");
    CHECK_THROWS_AS(load_config(path), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("existing world file passes validation") {
    const std::string world =
        write_temp("vtnav_cfg_world.txt", "# vtnav-world 1\ndisc 2 0 0.3\n");
    ScenarioConfig c = default_config();
    c.navigation.world_file = world;
    CHECK_NOTHROW(validate_config(c));
    std::filesystem::remove(world);
}
