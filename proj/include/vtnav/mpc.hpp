#ifndef VTNAV_MPC_HPP
#define VTNAV_MPC_HPP

#include <array>
#include <vector>

#include "vtnav/core.hpp"
#include "vtnav/globalpath.hpp"
#include "vtnav/kinmodel.hpp"
#include "vtnav/perception.hpp"

namespace vtnav {

/// Cost weights. All Q matrices are diagonal.
struct MpcWeights {
    std::array<double, 5> q_t{1.0, 1.0, 0.5, 0.5, 0.1};   // terminal
    std::array<double, 2> q_ref{2.0, 2.0};                 // reference position
    std::array<double, 2> q_u_base{0.02, 0.05};            // input magnitude
    // Weak vehicle-position guide used only by the tracking benchmark. The
    // trailer-position term alone is ambiguous about the vehicle heading and
    // admits stop-and-steer or reversing local minima.
    double q_track_vehicle{0.25};
    std::array<double, 2> q_du_base{0.2, 1.0};             // input rate
    double kappa_u{10.0};    // sigma_w scaling gain for Q_u / Q_du
    double lambda_f{1.0};    // vehicle obstacle-cost gain
    double lambda_r{1.0};    // trailer obstacle-cost gain
    double gamma_f{0.5};     // [m] vehicle obstacle-cost decay length
    double gamma_r{0.5};     // [m] trailer obstacle-cost decay length
    double d_safe{0.1};      // [m] safety margin
};

/// One receding-horizon problem; everything here is frozen for the solve
/// (s_e lives inside the model snapshot, sigma_w and obstacles are copies).
struct MpcProblem {
    HistoryWindow history;
    HybridModel model;  // snapshot, s_e frozen
    double sigma_w{0.0};
    ObstacleSet obstacles;
    std::vector<Vec2> reference;  // N+1 positions for the state cost
    std::array<double, 5> x_ter{};  // [x, y, psi, zeta, 0]
    Bounds bounds;
    MpcWeights weights;
    int N{30};

    // Tracking-benchmark variant: simplified trailer-position objective,
    // obstacle terms removed.
    bool trailer_tracking{false};
    std::vector<Vec2> trailer_reference;
};

struct MpcSolution {
    std::vector<ControlInput> inputs;  // u_{1:N}
    std::vector<SystemState> states;   // x_{1:N}, exact weighted rollout of inputs
    double cost_terminal{0.0};
    double cost_state{0.0};
    double cost_input{0.0};
    double cost_obstacle{0.0};
    double max_violation{0.0};
    double min_dfr{0.0};
    int iterations{0};
    bool converged{false};
    double solve_time{0.0};  // [s]
};

struct SolverOptions {
    double tol_con{1e-3};
    double penalty_initial{10.0};
    double penalty_scale{10.0};
    int penalty_rounds{5};
    int max_iterations{30};  // per penalty round
    double armijo_c{1e-4};
    double armijo_factor{0.5};
    double grad_tol{1e-8};
};

/// Signed clearance: center distance minus both radii minus d_safe.
double distance_circle(const Vec2& pred_center, const ObstacleCircle& obstacle,
                       double body_radius, double d_safe);

/// min over all covering-circle x obstacle pairs; +infinity with no obstacles.
double min_separation(const SystemState& state, const SystemGeometry& geom,
                      const ObstacleSet& obstacles, double d_safe);

double cost_terminal(const SystemState& x_n, const std::array<double, 5>& x_ter,
                     const std::array<double, 5>& q_t);
double cost_state(const SystemState& x_k, const Vec2& ref, const std::array<double, 2>& q_ref);
double cost_input(const ControlInput& u_k, const ControlInput& u_next, double sigma_w,
                  const MpcWeights& weights);
double cost_obstacle(const SystemState& x_k, const ObstacleSet& obstacles, double sigma_w,
                     const MpcWeights& weights, const SystemGeometry& geom);

/// sigma_w clamp used inside l_i and l_o (safety terms must never vanish).
double clamp_sigma_w(double sigma_w);

/// Single-shooting solve: decision variables u_{1:N}, states eliminated via
/// the weighted-model rollout, inequality constraints via squared-hinge
/// exterior penalties with geometric escalation, Armijo line search.
MpcSolution solve(const MpcProblem& problem, const MpcSolution* warm_start = nullptr,
                  const SolverOptions& options = {});

/// Objective + penalty value and gradient at the given decision inputs;
/// exposed for gradient verification.
double objective_with_gradient(const MpcProblem& problem,
                               const std::vector<ControlInput>& inputs, double penalty_mu,
                               std::vector<double>* grad);

/// Maximum constraint violation of a rollout (obstacles + all bounds).
double constraint_violation(const MpcProblem& problem,
                            const std::vector<SystemState>& states,
                            const std::vector<ControlInput>& inputs);

struct PlanCycleResult {
    ControlInput input;  // u_1, the applied command
    MpcSolution solution;
    MonitorResult monitor;
    double lambda0{0.0};  // lambda_e(0) frozen for this cycle
};

/// Full cycle: update_monitor -> freeze (s_e, sigma_w) -> resample reference
/// -> build problem -> solve -> emit u_1. Model s_e is updated in place
/// before the freeze.
PlanCycleResult plan_cycle(PerformanceMonitor& monitor, HybridModel& model,
                           const ObstacleSet& obstacles, const ReferencePath& path,
                           const std::array<double, 5>& x_ter, const Bounds& bounds,
                           const MpcWeights& weights, const HistoryWindow& history,
                           int N, double v_ref, const MpcSolution* warm_start,
                           const SolverOptions& options = {});

}  // namespace vtnav

#endif  // VTNAV_MPC_HPP
