#ifndef VTNAV_PLANT_HPP
#define VTNAV_PLANT_HPP

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "vtnav/core.hpp"

namespace vtnav {

enum class TrailerKind {
    rigid_rear_castor_front,
    all_castor,
    wheelless_drag,
};

TrailerKind trailer_kind_from_string(const std::string& s);
std::string to_string(TrailerKind k);

/// Square yaw-rate bias pulse, models a terrain patch.
struct TerrainPulse {
    double start{0.0};      // [s]
    double duration{0.0};   // [s], > 0
    double amplitude{0.0};  // [rad/s] shift of the trailer yaw-rate equilibrium
};

struct DisturbanceSpec {
    std::array<double, 5> process_noise_std{};  // per state component
    std::vector<TerrainPulse> terrain_pulses;
};

struct PlantConfig {
    SystemGeometry geom;
    TrailerKind trailer_kind{TrailerKind::rigid_rear_castor_front};
    double payload_mass{0.0};            // [kg]
    double yaw_time_constant{0.15};      // [s] first-order lag of trailer yaw response
    double slip_gain{0.0};               // [0,1] lateral-slip coupling
    double actuator_time_constant{0.05}; // [s] lag on commanded (v, delta)
    DisturbanceSpec disturbance;
};

/// Ground-truth vehicle-trailer simulator.
///
/// Vehicle pose follows the nonholonomic Ackermann rows with actuator-lagged
/// inputs. Trailer yaw rate relaxes toward the ideal nonholonomic rate with a
/// payload-scaled time constant, slip attenuation, kind-specific drag, and
/// terrain-pulse bias. Deterministic given (config, seed, input sequence).
class Plant {
  public:
    Plant(const PlantConfig& config, std::uint64_t seed);

    void reset(const SystemState& state, double v_act = 0.0, double delta_act = 0.0);

    /// Advance by dt (RK4 with stiffness-limited inner substeps, then process noise).
    void step(const ControlInput& u, double dt);

    const SystemState& state() const { return state_; }
    double time() const { return time_; }
    double actuator_v() const { return v_act_; }
    double actuator_delta() const { return delta_act_; }

    /// Ideal nonholonomic trailer yaw rate at the current internal state.
    double ideal_trailer_yaw_rate() const;

    /// Measurement with optional additive Gaussian noise on zeta and omega_zeta.
    SystemState observe(double zeta_noise_std = 0.0, double omega_noise_std = 0.0);

    const PlantConfig& config() const { return config_; }

  private:
    PlantConfig config_;
    SystemState state_;
    double v_act_{0.0};
    double delta_act_{0.0};
    double time_{0.0};
    std::mt19937_64 rng_;
};

/// Piecewise excitation signal segment; value clamped to the configured box.
struct SignalSegment {
    enum class Kind { constant, ramp, sine, chirp };
    Kind kind{Kind::constant};
    double t0{0.0};
    double t1{1.0};
    double a{0.0};    // constant value / ramp start / oscillation center
    double b{0.0};    // ramp end
    double amp{0.0};  // oscillation amplitude
    double f0{0.0};   // [Hz]
    double f1{0.0};   // [Hz], chirp end frequency
};

struct ExcitationSpec {
    std::vector<SignalSegment> v_segments;
    std::vector<SignalSegment> delta_segments;
    double v_lo{-0.3}, v_hi{1.2};
    double delta_lo{-0.55}, delta_hi{0.55};
};

ControlInput excitation_controller(double t, const ExcitationSpec& spec);

/// Randomized persistently exciting schedule over [0, duration].
ExcitationSpec make_excitation(const Bounds& bounds, double duration, std::mt19937_64& rng);

struct Trajectory {
    double dt{0.1};
    std::vector<SystemState> states;
    std::vector<ControlInput> inputs;  // states.size() - 1 entries
};

enum class SplitTag { train, val, test };
std::string to_string(SplitTag tag);

struct DatasetEntry {
    Trajectory trajectory;
    SplitTag split{SplitTag::train};
    int config_index{0};
    int episode{0};
};

/// One trajectory per (config, episode); episodes split 8:1:1 per config.
/// Episodes run in parallel, each from an independently derived seed.
std::vector<DatasetEntry> generate_dataset(const std::vector<PlantConfig>& configs,
                                           int episodes, int steps, double dt,
                                           std::uint64_t seed, int min_steps,
                                           bool parallel = true);

/// Tabular text persistence: t x_f y_f psi zeta omega_zeta v delta.
void save_trajectory(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory(const std::string& path);

/// Derived per-episode seed, stable across thread counts.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

}  // namespace vtnav

#endif  // VTNAV_PLANT_HPP
