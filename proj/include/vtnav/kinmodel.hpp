#ifndef VTNAV_KINMODEL_HPP
#define VTNAV_KINMODEL_HPP

#include <cstdint>
#include <deque>
#include <random>
#include <vector>

#include "vtnav/core.hpp"
#include "vtnav/net.hpp"
#include "vtnav/plant.hpp"

namespace vtnav {

/// Hybrid kinematic model: closed-form vehicle rows, learned trailer yaw rate,
/// plus an online-trained residual correction on omega_zeta only.
struct HybridModel {
    MlpNetwork nominal_net;   // f_omega
    MlpNetwork residual_net;  // e_omega
    SystemGeometry geom;
    double dt{0.1};
    int n_f{3};   // history depth
    int n_c{15};  // residual cutoff step
    int s_e{0};   // binary residual switch

    int feature_size() const { return 4 * (n_f + 1); }
};

/// Feature layout: [theta_{-n_f..0}, omega_{-n_f..0}, (v, delta)_{-n_f..0}].
std::vector<double> feature_vector(const HistoryWindow& window);

enum class RolloutMode { nominal, unweighted, weighted };

/// One explicit-Euler step of the nominal model (network fills omega_zeta).
SystemState nominal_step(const HistoryWindow& window, const HybridModel& model);

/// Scalar residual-net output; the full residual state correction is
/// [0, 0, 0, 0, residual_delta].
double residual_delta(const HistoryWindow& window, const HybridModel& model);

/// lambda_e(k) = s_e * max(1 - k/n_c, 0).
double lambda_e(int k, const HybridModel& model);

/// nominal_step with omega_zeta shifted by lambda_e(k) * residual_delta.
SystemState weighted_step(const HistoryWindow& window, const HybridModel& model, int k);

/// Iterates the chosen step function, feeding predictions back into the window.
/// controls[j] becomes the input held at the (j+1)-th predicted state; with the
/// window's own last input driving step 0, controls.back() is never consumed by
/// the model (it only matters for cost terms downstream).
std::vector<SystemState> rollout(const HistoryWindow& window,
                                 const std::vector<ControlInput>& controls,
                                 const HybridModel& model, RolloutMode mode);

/// One training window: n_f+1 seed frames plus N future frames, inputs aligned.
struct TrainingSample {
    std::vector<SystemState> states;  // n_f + N + 1
    std::vector<ControlInput> inputs;  // n_f + N + 1
};

/// Slices overlapping samples out of a trajectory.
std::vector<TrainingSample> extract_samples(const Trajectory& traj, int n_f, int N,
                                            int stride = 1);

/// Which network receives gradients in the rolling loss.
enum class TrainTarget {
    nominal,            // rollout under f alone, grads into f
    residual_combined,  // rollout under f + e (unweighted), grads into e only
};

/// N-step rolling-prediction squared error for one sample; accumulates
/// weight * d(loss)/d(params) of the target net into grad (exact BPTT through
/// the fed-back omega and zeta histories). Returns the summed squared error.
double rolling_loss_and_grad(const TrainingSample& sample, const HybridModel& model,
                             int N, TrainTarget target, double weight,
                             std::vector<double>* grad);

/// One epoch of rolling-prediction training: per batch, a single optimizer
/// step on the mean per-(sample,step) squared error. Per-sample gradients may
/// be computed in parallel; the reduction order is fixed, so results are
/// bit-identical to the serial path. Returns the epoch mean loss.
double train_nominal_epoch(const std::vector<TrainingSample>& samples,
                           HybridModel& model, AdamState& adam, int N,
                           int batch_size, bool parallel = true);

/// Online residual training on a sliding window of recent measurements:
/// short-horizon (H_e) rolling loss through the combined model, at most
/// `budget` Adam steps on minibatches drawn from the window. Never touches
/// the nominal net.
void online_residual_update(const std::vector<SystemState>& recent_states,
                            const std::vector<ControlInput>& recent_inputs,
                            HybridModel& model, AdamState& adam, int budget,
                            int horizon, std::mt19937_64& rng,
                            int minibatch = 32);

/// Rolling-prediction error monitor over the last n_e steps.
struct PerformanceMonitor {
    int n_e{15};
    double epsilon{0.5};
    double sigma_f{0.0};
    double sigma_fe{0.0};
    double sigma_w{0.0};
    bool valid{false};
    std::deque<SystemState> states;
    std::deque<ControlInput> inputs;

    void push(const SystemState& s, const ControlInput& u, int n_f);
};

struct MonitorResult {
    double sigma_f{0.0};
    double sigma_fe{0.0};
    double sigma_w{0.0};
    int s_e{0};
    bool valid{false};
};

/// Replays an n_e-step rollout from n_e steps in the past under the nominal,
/// unweighted, and weighted modes against measured omega_zeta; sets
/// s_e = 1 iff sigma_fe / sigma_f < epsilon. Insufficient buffer yields
/// s_e = 0 with the sigmas flagged invalid.
MonitorResult update_monitor(PerformanceMonitor& monitor, const HybridModel& model);

/// Fits per-feature standardization on training samples (in place).
void fit_normalizer(MlpNetwork& net, const std::vector<TrainingSample>& samples,
                    int n_f);

}  // namespace vtnav

#endif  // VTNAV_KINMODEL_HPP
