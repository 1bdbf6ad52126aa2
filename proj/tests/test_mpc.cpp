#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "vtnav/mpc.hpp"

using namespace vtnav;

namespace {

HybridModel small_model(int n_f, unsigned seed, bool zero_nets = false) {
    HybridModel m;
    m.n_f = n_f;
    std::mt19937_64 rng(seed);
    m.nominal_net = make_network({m.feature_size(), 4, 1}, rng);
    m.residual_net = make_network({m.feature_size(), 4, 1}, rng);
    if (zero_nets) {
        for (auto* net : {&m.nominal_net, &m.residual_net}) {
            for (auto& w : net->weights) std::fill(w.begin(), w.end(), 0.0);
            for (auto& b : net->biases) std::fill(b.begin(), b.end(), 0.0);
        }
    }
    return m;
}

HistoryWindow rest_history(int n_f) {
    HistoryWindow w;
    w.states.assign(n_f + 1, SystemState{});
    w.inputs.assign(n_f + 1, ControlInput{});
    return w;
}

HistoryWindow random_history(int n_f, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    HistoryWindow w;
    for (int i = 0; i <= n_f; ++i) {
        w.states.push_back(SystemState{{u(rng), u(rng)}, u(rng), u(rng), u(rng)});
        w.inputs.push_back(ControlInput{0.5 + 0.4 * u(rng), 0.5 * u(rng)});
    }
    return w;
}

}  // namespace

TEST_CASE("sigma_w clamp keeps safety terms alive") {
    CHECK(clamp_sigma_w(0.0) == doctest::Approx(1e-4));
    CHECK(clamp_sigma_w(-2.0) == doctest::Approx(1e-4));
    CHECK(clamp_sigma_w(0.3) == doctest::Approx(0.3));
    CHECK(clamp_sigma_w(5.0) == doctest::Approx(1.0));
}

TEST_CASE("distance_circle hand values") {
    const ObstacleCircle o{{3.0, 0.0}, 0.5};
    CHECK(distance_circle({0.0, 0.0}, o, 0.45, 0.1) == doctest::Approx(1.95));
    CHECK(distance_circle({3.0, 0.0}, o, 0.45, 0.1) == doctest::Approx(-1.05));
    CHECK(distance_circle({0.0, 0.0}, o, 2.4, 0.1) == doctest::Approx(0.0));
}

TEST_CASE("min_separation matches a brute-force scan") {
    SystemGeometry geom;
    SystemState s;
    s.xf = {1.0, 0.5};
    s.psi = 0.4;
    s.zeta = 0.2;
    ObstacleSet obs;
    obs.circles = {{{2.0, 1.0}, 0.3}, {{-1.5, 0.0}, 0.6}, {{0.0, 3.0}, 0.2}};
    const double d_safe = 0.1;

    const CoveringCircles circles = covering_circles(s, geom);
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& c : circles.vehicle) {
        for (const auto& o : obs.circles) {
            best = std::min(best, (c - o.center).norm() - geom.r_f - o.radius - d_safe);
        }
    }
    for (const Vec2& c : circles.trailer) {
        for (const auto& o : obs.circles) {
            best = std::min(best, (c - o.center).norm() - geom.r_r - o.radius - d_safe);
        }
    }
    CHECK(min_separation(s, geom, obs, d_safe) == doctest::Approx(best));
    CHECK(min_separation(s, geom, ObstacleSet{}, d_safe) ==
          std::numeric_limits<double>::infinity());
}

TEST_CASE("terminal cost wraps heading errors") {
    std::array<double, 5> x_ter{1.0, 2.0, M_PI - 0.1, 0.0, 0.0};
    std::array<double, 5> q{1.0, 1.0, 0.5, 0.5, 0.1};
    SystemState s;
    s.xf = {2.0, 2.0};
    s.psi = -M_PI + 0.1;  // wrapped error is 0.2, not ~2 pi
    s.zeta = 0.3;
    s.omega_zeta = 0.5;
    const double expected = 1.0 * 1.0 + 0.5 * 0.2 * 0.2 + 0.5 * 0.09 + 0.1 * 0.25;
    CHECK(cost_terminal(s, x_ter, q) == doctest::Approx(expected));
}

TEST_CASE("state cost hand value") {
    SystemState s;
    s.xf = {1.5, -0.5};
    CHECK(cost_state(s, {1.0, 0.5}, {2.0, 3.0}) ==
          doctest::Approx(2.0 * 0.25 + 3.0 * 1.0));
}

TEST_CASE("input cost scales with sigma_w but has no lower clamp") {
    MpcWeights w;
    const ControlInput u{0.5, 0.2};
    const ControlInput un{0.6, 0.1};
    const double base = w.q_u_base[0] * 0.25 + w.q_u_base[1] * 0.04 +
                        w.q_du_base[0] * 0.01 + w.q_du_base[1] * 0.01;
    CHECK(cost_input(u, un, 0.0, w) == doctest::Approx(base));     // exactly base weights
    CHECK(cost_input(u, un, -1.0, w) == doctest::Approx(base));    // clamped below at 0
    CHECK(cost_input(u, un, 1.0, w) == doctest::Approx(11.0 * base));
    CHECK(cost_input(u, un, 0.5, w) == doctest::Approx(6.0 * base));
}

TEST_CASE("obstacle cost hand value with a single covering circle") {
    SystemGeometry geom;
    geom.vehicle_circle_offsets = {0.0};
    geom.trailer_circle_offsets = {};
    MpcWeights w;
    w.lambda_f = 2.0;
    w.gamma_f = 0.5;
    w.d_safe = 0.1;
    SystemState s;  // circle at the origin
    ObstacleSet obs;
    obs.circles = {{{1.55, 0.0}, 0.5}};
    // d = 1.55 - 0.45 - 0.5 - 0.1 = 0.5 -> exp(-1)
    const double expected = 2.0 * clamp_sigma_w(0.4) * std::exp(-1.0);
    CHECK(cost_obstacle(s, obs, 0.4, w, geom) == doctest::Approx(expected));
    // sigma_w = 0 still leaves the clamped floor active.
    CHECK(cost_obstacle(s, obs, 0.0, w, geom) ==
          doctest::Approx(2.0 * 1e-4 * std::exp(-1.0)));
    CHECK(cost_obstacle(s, ObstacleSet{}, 0.4, w, geom) == 0.0);
}

TEST_CASE("objective gradient matches finite differences") {
    const int n_f = 2, N = 5;
    MpcProblem p;
    p.model = small_model(n_f, 31);
    p.model.dt = 0.1;
    p.model.s_e = 1;
    p.history = random_history(n_f, 32);
    p.N = N;
    p.sigma_w = 0.3;
    p.obstacles.circles = {{{0.6, 0.2}, 0.2}, {{-0.5, -0.8}, 0.3}};
    p.x_ter = {0.8, 0.4, 0.2, 0.1, 0.0};
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (int k = 0; k <= N; ++k) p.reference.push_back({0.1 * k + u(rng), u(rng)});
    // Tight bounds so several hinge penalties are active at the test point.
    p.bounds.input_hi = {0.6, 0.25};
    p.bounds.theta_hi = 0.2;
    p.bounds.theta_lo = -0.2;
    p.bounds.omega_psi_hi = 0.4;
    p.bounds.omega_psi_lo = -0.4;

    std::vector<ControlInput> inputs;
    for (int k = 0; k < N; ++k) inputs.push_back({0.7 + u(rng), 0.3 + 0.5 * u(rng)});

    for (bool tracking : {false, true}) {
        p.trailer_tracking = tracking;
        if (tracking) {
            p.trailer_reference.clear();
            for (int k = 0; k <= N; ++k) p.trailer_reference.push_back({-1.0 + 0.05 * k, 0.1});
        }
        const double mu = 7.0;
        std::vector<double> grad;
        const double value = objective_with_gradient(p, inputs, mu, &grad);
        REQUIRE(grad.size() == 2u * N);
        CHECK(std::isfinite(value));

        for (int i = 0; i < 2 * N; ++i) {
            const double h = 1e-6;
            std::vector<ControlInput> up = inputs, dn = inputs;
            double* uv = (i % 2 == 0) ? &up[i / 2].v : &up[i / 2].delta;
            double* dv = (i % 2 == 0) ? &dn[i / 2].v : &dn[i / 2].delta;
            *uv += h;
            *dv -= h;
            const double fu = objective_with_gradient(p, up, mu, nullptr);
            const double fd = objective_with_gradient(p, dn, mu, nullptr);
            const double num = (fu - fd) / (2 * h);
            CHECK(grad[i] == doctest::Approx(num).epsilon(1e-4).scale(std::abs(num) + 1e-2));
        }
    }
}

TEST_CASE("zero input is optimal at rest with a zero target") {
    const int n_f = 2, N = 8;
    MpcProblem p;
    p.model = small_model(n_f, 34, true);  // zero networks
    p.model.dt = 0.1;
    p.history = rest_history(n_f);
    p.N = N;
    p.x_ter = {0.0, 0.0, 0.0, 0.0, 0.0};

    const MpcSolution sol = solve(p);
    CHECK(sol.converged);
    for (const ControlInput& u : sol.inputs) {
        CHECK(std::abs(u.v) <= 1e-4);
        CHECK(std::abs(u.delta) <= 1e-4);
    }
    CHECK(sol.cost_terminal <= 1e-6);
}

TEST_CASE("solver states are the weighted rollout of its inputs") {
    const int n_f = 2, N = 6;
    MpcProblem p;
    p.model = small_model(n_f, 35);
    p.model.dt = 0.1;
    p.model.s_e = 1;
    p.history = random_history(n_f, 36);
    p.N = N;
    p.sigma_w = 0.2;
    p.x_ter = {1.0, 0.5, 0.0, 0.0, 0.0};
    for (int k = 0; k <= N; ++k) p.reference.push_back({0.15 * k, 0.05 * k});

    const MpcSolution sol = solve(p);
    REQUIRE(sol.inputs.size() == static_cast<std::size_t>(N));
    REQUIRE(sol.states.size() == static_cast<std::size_t>(N));
    const auto replay = rollout(p.history, sol.inputs, p.model, RolloutMode::weighted);
    for (int k = 0; k < N; ++k) {
        CHECK(sol.states[k].xf.x == doctest::Approx(replay[k].xf.x).epsilon(1e-12));
        CHECK(sol.states[k].psi == doctest::Approx(replay[k].psi).epsilon(1e-12));
        CHECK(sol.states[k].zeta == doctest::Approx(replay[k].zeta).epsilon(1e-12));
        CHECK(sol.states[k].omega_zeta ==
              doctest::Approx(replay[k].omega_zeta).epsilon(1e-12));
    }
    // Cost breakdown is consistent with the public cost functions.
    double ct = cost_terminal(sol.states.back(), p.x_ter, p.weights.q_t);
    CHECK(sol.cost_terminal == doctest::Approx(ct).epsilon(1e-12));
    double cs = 0.0, ci = 0.0;
    {
        // First-step rate term against the last applied input.
        const double scale = 1.0 + p.weights.kappa_u * std::clamp(p.sigma_w, 0.0, 1.0);
        const ControlInput& u0 = p.history.inputs.back();
        const double dv = sol.inputs[0].v - u0.v;
        const double dd = sol.inputs[0].delta - u0.delta;
        ci += scale * (p.weights.q_du_base[0] * dv * dv + p.weights.q_du_base[1] * dd * dd);
    }
    for (int k = 1; k < N; ++k) {
        cs += cost_state(sol.states[k - 1], p.reference[k], p.weights.q_ref);
        ci += cost_input(sol.inputs[k - 1], sol.inputs[k], p.sigma_w, p.weights);
    }
    CHECK(sol.cost_state == doctest::Approx(cs).epsilon(1e-9));
    CHECK(sol.cost_input == doctest::Approx(ci).epsilon(1e-9));
}

TEST_CASE("stronger penalties do not increase the constraint violation") {
    const int n_f = 2, N = 10;
    MpcProblem p;
    p.model = small_model(n_f, 37, true);
    p.model.dt = 0.1;
    p.history = rest_history(n_f);
    for (auto& u : p.history.inputs) u = {0.8, 0.0};  // moving start
    p.N = N;
    // Terminal target and reference drive straight into an obstacle; braking
    // short of it is feasible, so high penalties can reach zero violation.
    p.obstacles.circles = {{{1.5, 0.0}, 0.25}};
    for (int k = 0; k <= N; ++k) p.reference.push_back({0.08 + 0.8 * 0.1 * k, 0.0});
    p.x_ter = {1.5, 0.0, 0.0, 0.0, 0.0};

    SolverOptions opts;
    opts.penalty_rounds = 1;
    double prev = std::numeric_limits<double>::infinity();
    for (double mu : {1.0, 10.0, 100.0, 1000.0}) {
        opts.penalty_initial = mu;
        const MpcSolution sol = solve(p, nullptr, opts);
        CHECK(sol.max_violation <= prev + 1e-6);
        prev = sol.max_violation;
    }
    // The full escalation schedule ends feasible.
    const MpcSolution full = solve(p);
    CHECK(full.max_violation <= SolverOptions{}.tol_con);
    CHECK(full.converged);
    // min_dfr reports the clearance of the decision-dependent states; the
    // first state is fixed by history and excluded.
    double dfr = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < full.states.size(); ++k) {
        dfr = std::min(dfr, min_separation(full.states[k], p.model.geom, p.obstacles,
                                           p.weights.d_safe));
    }
    CHECK(full.min_dfr == doctest::Approx(dfr));
}

TEST_CASE("warm starting does not hurt") {
    const int n_f = 2, N = 8;
    MpcProblem p;
    p.model = small_model(n_f, 38, true);
    p.model.dt = 0.1;
    p.history = rest_history(n_f);
    p.N = N;
    for (int k = 0; k <= N; ++k) p.reference.push_back({0.05 * k, 0.0});
    p.x_ter = {0.4, 0.0, 0.0, 0.0, 0.0};

    const MpcSolution cold = solve(p);
    const MpcSolution warm = solve(p, &cold);
    CHECK(warm.converged);
    const double cold_total =
        cold.cost_terminal + cold.cost_state + cold.cost_input + cold.cost_obstacle;
    const double warm_total =
        warm.cost_terminal + warm.cost_state + warm.cost_input + warm.cost_obstacle;
    CHECK(warm_total <= cold_total + 1e-6);
}

TEST_CASE("plan_cycle with an empty monitor runs the pure nominal problem") {
    const int n_f = 3, N = 10;
    HybridModel model = small_model(n_f, 39, true);
    model.dt = 0.1;
    model.s_e = 1;  // must be overwritten by the invalid monitor

    PerformanceMonitor monitor;
    monitor.n_e = 15;

    ReferencePath path;
    for (int i = 0; i <= 100; ++i) {
        path.poses.push_back(PathPose{{0.1 * i, 0.0}, 0.0});
        path.arc_length.push_back(0.1 * i);
    }
    HistoryWindow history = rest_history(n_f);
    Bounds bounds;
    MpcWeights weights;
    ObstacleSet obstacles;
    const std::array<double, 5> x_ter{10.0, 0.0, 0.0, 0.0, 0.0};

    const PlanCycleResult r = plan_cycle(monitor, model, obstacles, path, x_ter, bounds,
                                         weights, history, N, 0.5, nullptr);
    CHECK(!r.monitor.valid);
    CHECK(r.lambda0 == 0.0);
    CHECK(model.s_e == 0);
    CHECK(r.solution.converged);
    // The plan starts moving toward the goal within the input bounds.
    CHECK(r.input.v > 0.0);
    // Exterior penalties allow overshoot up to the constraint tolerance.
    CHECK(r.input.v <= bounds.input_hi[0] + SolverOptions{}.tol_con);
    CHECK(std::abs(r.input.delta) <= bounds.input_hi[1] + SolverOptions{}.tol_con);
    CHECK(r.input.v == r.solution.inputs.front().v);
}
