#ifndef VTNAV_CONFIG_HPP
#define VTNAV_CONFIG_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vtnav/core.hpp"
#include "vtnav/mpc.hpp"
#include "vtnav/plant.hpp"

namespace vtnav {

struct ModelConfig {
    int n_f{3};
    int N{30};
    int n_c{15};
    int n_e{15};
    int n_t{200};  // sliding-window length for the online residual trainer
    double epsilon{0.5};
    std::vector<int> nominal_layers{64, 32, 16};
    std::vector<int> residual_layers{32, 16};
};

struct TrainingConfig {
    int batch_size{256};
    double lr_initial{1e-2};
    double lr_final{1e-5};
    int epochs{30};
    int decay_epochs{30};
    int sample_stride{5};
    int residual_budget{20};  // Adam steps per control cycle
    int residual_horizon{5};  // rolling horizon of the online loss
};

/// One plant variant for data collection.
struct CollectVariant {
    TrailerKind kind{TrailerKind::rigid_rear_castor_front};
    double payload{0.0};
};

struct CollectConfig {
    std::vector<CollectVariant> variants{
        {TrailerKind::rigid_rear_castor_front, 0.0},
        {TrailerKind::rigid_rear_castor_front, 10.0},
        {TrailerKind::all_castor, 0.0},
        {TrailerKind::all_castor, 10.0},
    };
    int episodes_per_variant{10};
    int steps{1500};
    int min_steps{200};
};

struct PerceptionConfig {
    int beams{360};
    double max_range{12.0};
    double eps{0.35};
    int min_pts{3};
    double grid_resolution{0.1};
    double grid_extent{14.0};  // [m] half-width of the local grid
};

struct NavigationConfig {
    std::string world_file;
    std::array<double, 4> start{0.0, 0.0, 0.0, 0.0};  // x, y, psi, zeta
    std::array<double, 3> goal{5.0, 0.0, 0.0};        // x, y, psi
    double v_ref{0.5};
    double timeout{120.0};     // [s] simulated time
    double goal_pos_tol{0.2};  // [m]
    double goal_ang_tol{0.2};  // [rad]
};

struct ScenarioConfig {
    std::uint64_t seed{1};
    double dt{0.1};
    PlantConfig plant;
    SystemGeometry geometry;
    Bounds bounds;
    MpcWeights weights;
    ModelConfig model;
    TrainingConfig training;
    CollectConfig collect;
    PerceptionConfig perception;
    NavigationConfig navigation;
};

/// All defaults; identical to load_config on an empty object.
ScenarioConfig default_config();

/// Parses a JSON file over the defaults. Unknown keys and out-of-range values
/// raise std::runtime_error with the offending path. A referenced world file
/// must exist.
ScenarioConfig load_config(const std::string& path);

/// Range/consistency checks shared by load_config and programmatic configs.
void validate_config(const ScenarioConfig& config);

}  // namespace vtnav

#endif  // VTNAV_CONFIG_HPP
