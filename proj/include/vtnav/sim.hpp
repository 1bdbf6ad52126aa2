#ifndef VTNAV_SIM_HPP
#define VTNAV_SIM_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "vtnav/config.hpp"
#include "vtnav/kinmodel.hpp"
#include "vtnav/mpc.hpp"
#include "vtnav/plant.hpp"

namespace vtnav {

/// Fresh hybrid model with config-sized nets (input width 4*(n_f+1)).
HybridModel make_model(const ScenarioConfig& config, std::mt19937_64& rng);

/// Trajectory files plus a split manifest under dir.
void save_dataset(const std::vector<DatasetEntry>& dataset, const std::string& dir);
std::vector<DatasetEntry> load_dataset(const std::string& dir);

struct TrainReport {
    std::vector<double> train_loss;  // per epoch
    std::vector<double> val_loss;    // per epoch
    int best_epoch{-1};
    double best_val{0.0};
};

/// Mean rolling loss per (sample, step), no parameter updates.
double rolling_validation_loss(const std::vector<TrainingSample>& samples,
                               const HybridModel& model, int N, bool parallel = true);

/// Offline nominal training: fits the normalizer, runs rolling-prediction
/// epochs, and leaves the best-validation parameters in the model.
TrainReport train_nominal(const std::vector<DatasetEntry>& dataset,
                          const ScenarioConfig& config, HybridModel& model,
                          bool parallel = true);

struct EvalRow {
    int step{0};
    double rmse_nominal{0.0};
    double rmse_unweighted{0.0};
    double rmse_weighted{0.0};
};

/// Fig.5-style evaluation: drives the plant on an excitation trajectory while
/// adapting the residual online, then rolls 1..N steps from every start index
/// under the three modes. s_e is held at 1 so the weighted mode is exercised.
std::vector<EvalRow> evaluate_rolling_rmse(const ScenarioConfig& config,
                                           const HybridModel& trained,
                                           const PlantConfig& plant_config,
                                           int eval_steps, std::uint64_t seed);

struct TrackingReport {
    double mean_error{0.0};  // [m] trailer position error
    double std_error{0.0};
    double max_error{0.0};
    int cycles{0};
    std::vector<double> errors;  // per cycle, after the startup transient
};

struct LemniscateSpec {
    double a{6.0};        // [m] half-width along x
    double b{2.0};        // [m] half-height along y
    double period{52.0};  // [s] full figure-eight (roughly 0.6 m/s)
};

/// Trailer reference point of the Gerono figure-eight at time t, traversed at
/// constant speed (arc length L / period). The default shape keeps the tightest
/// turn radius at 1.5 m, within the towing vehicle's steering envelope.
Vec2 lemniscate_point(const LemniscateSpec& shape, double t);

/// Closed-loop 8-shape tracking with the simplified trailer-position cost and
/// obstacle terms removed. use_residual=false pins s_e=0 and skips the online
/// trainer, giving the nominal-model baseline.
TrackingReport run_tracking(const ScenarioConfig& config, const HybridModel& trained,
                            const PlantConfig& plant_config, const LemniscateSpec& shape,
                            bool use_residual, double duration, std::uint64_t seed);

struct NavigationResult {
    bool reached_goal{false};
    bool collided{false};
    bool timed_out{false};
    bool no_path{false};
    int cycles{0};
    double sim_time{0.0};          // [s]
    double distance_traveled{0.0};  // [m] vehicle path length
    double min_true_clearance{0.0};  // [m] against ground-truth shapes
    double min_planned_dfr{0.0};     // [m] min d_fr over all planned horizons
    double mean_solve_time{0.0};     // [s] plan_cycle wall time
    double max_solve_time{0.0};
    int se_active_cycles{0};
    int se_activations{0};  // rising edges of s_e
    int replans{0};
    int failsafe_cycles{0};
    Trajectory trajectory;
    std::vector<int> se_trace;
};

/// Full closed loop at 1/dt Hz simulated time: scan -> cluster -> monitor ->
/// online residual update -> hybrid A* (on demand) -> plan_cycle -> plant
/// step. Aborts on true-world collision. Writes one JSON object per cycle to
/// diagnostics_path when non-empty.
NavigationResult run_navigation(const ScenarioConfig& config, const World& world,
                                HybridModel model,
                                const std::string& diagnostics_path = "");

}  // namespace vtnav

#endif  // VTNAV_SIM_HPP
