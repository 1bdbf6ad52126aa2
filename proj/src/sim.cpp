#include "vtnav/sim.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "vtnav/globalpath.hpp"
#include "vtnav/perception.hpp"

namespace vtnav {

namespace fs = std::filesystem;

HybridModel make_model(const ScenarioConfig& config, std::mt19937_64& rng) {
    HybridModel model;
    model.geom = config.geometry;
    model.dt = config.dt;
    model.n_f = config.model.n_f;
    model.n_c = config.model.n_c;
    model.s_e = 0;

    std::vector<int> nominal{model.feature_size()};
    nominal.insert(nominal.end(), config.model.nominal_layers.begin(),
                   config.model.nominal_layers.end());
    nominal.push_back(1);
    model.nominal_net = make_network(nominal, rng);

    std::vector<int> residual{model.feature_size()};
    residual.insert(residual.end(), config.model.residual_layers.begin(),
                    config.model.residual_layers.end());
    residual.push_back(1);
    model.residual_net = make_network(residual, rng);
    return model;
}

void save_dataset(const std::vector<DatasetEntry>& dataset, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw std::runtime_error("save_dataset: cannot write manifest in " + dir);
    manifest << "# vtnav-dataset 1\n";
    for (const DatasetEntry& e : dataset) {
        std::ostringstream name;
        name << "traj_" << e.config_index << '_' << e.episode << ".txt";
        save_trajectory(e.trajectory, (fs::path(dir) / name.str()).string());
        manifest << name.str() << ' ' << to_string(e.split) << ' ' << e.config_index << ' '
                 << e.episode << '\n';
    }
}

std::vector<DatasetEntry> load_dataset(const std::string& dir) {
    std::ifstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw std::runtime_error("load_dataset: cannot open manifest in " + dir);
    std::string line;
    if (!std::getline(manifest, line) || line.rfind("# vtnav-dataset 1", 0) != 0) {
        throw std::runtime_error("load_dataset: bad manifest header in " + dir);
    }
    std::vector<DatasetEntry> out;
    while (std::getline(manifest, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string file, split;
        DatasetEntry e;
        if (!(is >> file >> split >> e.config_index >> e.episode)) {
            throw std::runtime_error("load_dataset: malformed manifest line: " + line);
        }
        if (split == "train") e.split = SplitTag::train;
        else if (split == "val") e.split = SplitTag::val;
        else if (split == "test") e.split = SplitTag::test;
        else throw std::runtime_error("load_dataset: unknown split tag: " + split);
        e.trajectory = load_trajectory((fs::path(dir) / file).string());
        out.push_back(std::move(e));
    }
    return out;
}

double rolling_validation_loss(const std::vector<TrainingSample>& samples,
                               const HybridModel& model, int N, bool parallel) {
    if (samples.empty()) return 0.0;
    std::vector<double> per_sample(samples.size(), 0.0);
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(samples.size()); ++i) {
        per_sample[i] = rolling_loss_and_grad(samples[i], model, N, TrainTarget::nominal,
                                              0.0, nullptr);
    }
    double total = 0.0;
    for (double v : per_sample) total += v;  // fixed order
    return total / (static_cast<double>(samples.size()) * N);
}

TrainReport train_nominal(const std::vector<DatasetEntry>& dataset,
                          const ScenarioConfig& config, HybridModel& model,
                          bool parallel) {
    const int n_f = config.model.n_f;
    const int N = config.model.N;
    std::vector<TrainingSample> train_samples, val_samples;
    for (const DatasetEntry& e : dataset) {
        auto s = extract_samples(e.trajectory, n_f, N, config.training.sample_stride);
        auto& dst = e.split == SplitTag::val ? val_samples : train_samples;
        if (e.split == SplitTag::test) continue;
        dst.insert(dst.end(), s.begin(), s.end());
    }
    if (train_samples.empty()) throw std::runtime_error("train_nominal: empty training set");

    fit_normalizer(model.nominal_net, train_samples, n_f);
    model.residual_net.norm_mean = model.nominal_net.norm_mean;
    model.residual_net.norm_scale = model.nominal_net.norm_scale;

    AdamState adam(model.nominal_net.param_count());
    adam.lr_initial = config.training.lr_initial;
    adam.lr_final = config.training.lr_final;
    adam.decay_epochs = config.training.decay_epochs;

    TrainReport report;
    std::vector<double> best_params;
    model.nominal_net.params_to(best_params);
    report.best_val = val_samples.empty()
                          ? std::numeric_limits<double>::infinity()
                          : rolling_validation_loss(val_samples, model, N, parallel);

    for (int epoch = 0; epoch < config.training.epochs; ++epoch) {
        std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0x7261696e, epoch));
        std::shuffle(train_samples.begin(), train_samples.end(), shuffle_rng);
        adam.set_epoch(epoch);
        const double train_loss = train_nominal_epoch(train_samples, model, adam, N,
                                                      config.training.batch_size, parallel);
        const double val_loss =
            val_samples.empty() ? train_loss
                                : rolling_validation_loss(val_samples, model, N, parallel);
        report.train_loss.push_back(train_loss);
        report.val_loss.push_back(val_loss);
        if (val_loss < report.best_val) {
            report.best_val = val_loss;
            report.best_epoch = epoch;
            model.nominal_net.params_to(best_params);
        }
    }
    model.nominal_net.params_from(best_params);
    return report;
}

namespace {

/// Fixed-depth ring of (state, input) pairs feeding the model.
void push_history(HistoryWindow& window, const SystemState& s, const ControlInput& u,
                  int n_f) {
    window.states.push_back(s);
    window.inputs.push_back(u);
    while (static_cast<int>(window.states.size()) > n_f + 1) {
        window.states.erase(window.states.begin());
        window.inputs.erase(window.inputs.begin());
    }
}

void push_recent(std::vector<SystemState>& states, std::vector<ControlInput>& inputs,
                 const SystemState& s, const ControlInput& u, int n_t) {
    states.push_back(s);
    inputs.push_back(u);
    if (static_cast<int>(states.size()) > n_t) {
        states.erase(states.begin());
        inputs.erase(inputs.begin());
    }
}

}  // namespace

std::vector<EvalRow> evaluate_rolling_rmse(const ScenarioConfig& config,
                                           const HybridModel& trained,
                                           const PlantConfig& plant_config,
                                           int eval_steps, std::uint64_t seed) {
    const int n_f = config.model.n_f;
    const int N = config.model.N;
    const double dt = config.dt;

    std::mt19937_64 rng(mix_seed(seed, 0x6576616c, 0));
    // Multi-turn evaluation drive: smooth incommensurate sinusoids sweeping
    // both turn directions and the speed range. Step excitation is the wrong
    // probe here; its transients dominate the per-step RMSE for every model.
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    const double ph1 = phase(rng), ph2 = phase(rng), ph3 = phase(rng);
    auto drive = [&](double t) {
        return ControlInput{0.55 + 0.25 * std::sin(2.0 * M_PI * t / 11.0 + ph1),
                            0.40 * std::sin(2.0 * M_PI * t / 7.0 + ph2) +
                                0.25 * std::sin(2.0 * M_PI * t / 3.7 + ph3)};
    };
    Plant plant(plant_config, mix_seed(seed, 0x6576616c, 1));
    plant.reset(SystemState{});

    HybridModel model = trained;
    model.s_e = 1;
    AdamState adam(model.residual_net.param_count());
    adam.lr = 1e-3;
    std::mt19937_64 train_rng(mix_seed(seed, 0x6576616c, 2));

    std::vector<SystemState> states{plant.state()};
    std::vector<ControlInput> inputs;
    std::vector<SystemState> recent_states;
    std::vector<ControlInput> recent_inputs;
    // The residual adapts online over the first half of the episode only; the
    // second half is held out so the comparison measures generalization rather
    // than a fit to the very windows being scored.
    const int split = eval_steps / 2;
    for (int t = 0; t < eval_steps; ++t) {
        const ControlInput u = drive(t * dt);
        push_recent(recent_states, recent_inputs, states.back(), u, config.model.n_t);
        plant.step(u, dt);
        inputs.push_back(u);
        states.push_back(plant.state());
        if (t < split && static_cast<int>(recent_states.size()) >
                             n_f + config.training.residual_horizon + 1) {
            online_residual_update(recent_states, recent_inputs, model, adam,
                                   config.training.residual_budget,
                                   config.training.residual_horizon, train_rng);
        }
    }

    const int T = static_cast<int>(states.size()) - 1;
    std::vector<double> sq_nom(N, 0.0), sq_unw(N, 0.0), sq_wgt(N, 0.0);
    std::vector<int> counts(N, 0);
    for (int i = std::max(n_f, split); i + N <= T; ++i) {
        HistoryWindow window;
        for (int j = i - n_f; j <= i; ++j) {
            window.states.push_back(states[j]);
            window.inputs.push_back(inputs[j]);  // applied at states[j]
        }
        std::vector<ControlInput> controls(inputs.begin() + i + 1, inputs.begin() + i + N);
        controls.push_back(inputs[i + N - 1]);  // last entry never consumed
        const auto roll_n = rollout(window, controls, model, RolloutMode::nominal);
        const auto roll_u = rollout(window, controls, model, RolloutMode::unweighted);
        const auto roll_w = rollout(window, controls, model, RolloutMode::weighted);
        for (int k = 0; k < N; ++k) {
            const double truth = states[i + 1 + k].omega_zeta;
            const double en = roll_n[k].omega_zeta - truth;
            const double eu = roll_u[k].omega_zeta - truth;
            const double ew = roll_w[k].omega_zeta - truth;
            sq_nom[k] += en * en;
            sq_unw[k] += eu * eu;
            sq_wgt[k] += ew * ew;
            counts[k] += 1;
        }
    }

    std::vector<EvalRow> rows;
    for (int k = 0; k < N; ++k) {
        EvalRow r;
        r.step = k + 1;
        if (counts[k] > 0) {
            r.rmse_nominal = std::sqrt(sq_nom[k] / counts[k]);
            r.rmse_unweighted = std::sqrt(sq_unw[k] / counts[k]);
            r.rmse_weighted = std::sqrt(sq_wgt[k] / counts[k]);
        }
        rows.push_back(r);
    }
    return rows;
}

Vec2 lemniscate_point(const LemniscateSpec& shape, double t) {
    // Constant-speed traversal. With the natural parameterization the speed
    // drops sharply near the folds, which pushes the trailer's nonminimum-phase
    // timescale l_t / v beyond the MPC horizon and destabilizes tracking.
    constexpr int kSamples = 2048;
    static thread_local LemniscateSpec cached{0.0, 0.0, 0.0};
    static thread_local std::array<double, kSamples + 1> arc{};
    if (cached.a != shape.a || cached.b != shape.b) {
        arc[0] = 0.0;
        for (int i = 1; i <= kSamples; ++i) {
            const double u = 2.0 * M_PI * (i - 0.5) / kSamples;
            const double dx = shape.a * std::cos(u);
            const double dy = 2.0 * shape.b * std::cos(2.0 * u);
            arc[i] = arc[i - 1] + std::hypot(dx, dy) * 2.0 * M_PI / kSamples;
        }
        cached = shape;
    }
    const double total = arc[kSamples];
    double s = total * t / shape.period;
    s -= total * std::floor(s / total);
    // Invert the monotone cumulative arc length with a binary search.
    int lo = 0, hi = kSamples;
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        (arc[mid] <= s ? lo : hi) = mid;
    }
    const double frac = (s - arc[lo]) / std::max(arc[hi] - arc[lo], 1e-12);
    const double u = 2.0 * M_PI * (lo + frac) / kSamples;
    return {shape.a * std::sin(u), shape.b * std::sin(2.0 * u)};
}

TrackingReport run_tracking(const ScenarioConfig& config, const HybridModel& trained,
                            const PlantConfig& plant_config, const LemniscateSpec& shape,
                            bool use_residual, double duration, std::uint64_t seed) {
    const int n_f = config.model.n_f;
    const int N = config.model.N;
    const double dt = config.dt;
    const SystemGeometry& geom = config.geometry;

    // Start with the trailer on the curve, both bodies along the initial tangent.
    const double heading0 =
        shape.a == 0.0 && shape.b == 0.0 ? 0.0 : std::atan2(2.0 * shape.b, shape.a);
    SystemState start;
    start.psi = heading0;
    start.zeta = heading0;
    const Vec2 trailer0 = lemniscate_point(shape, 0.0);
    start.xf = trailer0 + geom.l_hr * unit_vector(start.zeta) +
               geom.l_fh * unit_vector(start.psi);

    Plant plant(plant_config, mix_seed(seed, 0x747261636b, 0));
    plant.reset(start);

    HybridModel model = trained;
    model.s_e = 0;
    AdamState adam(model.residual_net.param_count());
    adam.lr = 1e-3;
    std::mt19937_64 train_rng(mix_seed(seed, 0x747261636b, 1));

    PerformanceMonitor monitor;
    monitor.n_e = config.model.n_e;
    monitor.epsilon = config.model.epsilon;

    HistoryWindow history;
    ControlInput u_current{0.0, 0.0};
    for (int i = 0; i <= n_f; ++i) push_history(history, start, u_current, n_f);

    std::vector<SystemState> recent_states;
    std::vector<ControlInput> recent_inputs;

    SolverOptions options;
    MpcSolution prev;
    bool have_prev = false;

    // Forward-only driving: the position-only trailer objective on a folded
    // figure-eight otherwise admits a reversing shuttle solution that tracks
    // the model but jackknifes the real trailer.
    Bounds bounds = config.bounds;
    bounds.input_lo[0] = std::max(0.0, bounds.input_lo[0]);

    TrackingReport report;
    const int cycles = static_cast<int>(std::llround(duration / dt));
    const double transient = 5.0;  // [s] settle before scoring
    double sum = 0.0, sum_sq = 0.0;
    for (int cycle = 0; cycle < cycles; ++cycle) {
        const double t = cycle * dt;
        const SystemState s_t = plant.state();
        monitor.push(s_t, u_current, n_f);
        push_recent(recent_states, recent_inputs, s_t, u_current, config.model.n_t);

        if (use_residual &&
            static_cast<int>(recent_states.size()) > n_f + config.training.residual_horizon + 1) {
            online_residual_update(recent_states, recent_inputs, model, adam,
                                   config.training.residual_budget,
                                   config.training.residual_horizon, train_rng);
        }

        MonitorResult mon = update_monitor(monitor, model);
        model.s_e = use_residual && mon.valid ? mon.s_e : 0;

        MpcProblem problem;
        problem.history = history;
        problem.model = model;
        problem.sigma_w = mon.valid ? mon.sigma_w : 0.0;
        problem.bounds = bounds;
        problem.weights = config.weights;
        problem.N = N;
        problem.trailer_tracking = true;
        problem.trailer_reference.resize(N + 1);
        problem.reference.resize(N + 1);
        for (int k = 0; k <= N; ++k) {
            const double tk = t + k * dt;
            const Vec2 ref = lemniscate_point(shape, tk);
            problem.trailer_reference[k] = ref;
            // Vehicle guide: hitch offset ahead of the trailer along the tangent.
            const Vec2 ahead = lemniscate_point(shape, tk + 0.25);
            Vec2 tangent = ahead - ref;
            const double norm = tangent.norm();
            tangent = norm > 1e-9 ? Vec2{tangent.x / norm, tangent.y / norm}
                                  : unit_vector(plant.state().zeta);
            problem.reference[k] = ref + (geom.l_fh + geom.l_hr) * tangent;
        }

        const MpcSolution sol = solve(problem, have_prev ? &prev : nullptr, options);
        prev = sol;
        have_prev = true;

        const double err = (trailer_position(s_t, geom) - lemniscate_point(shape, t)).norm();
        if (t >= transient) {
            report.errors.push_back(err);
            sum += err;
            sum_sq += err * err;
            report.max_error = std::max(report.max_error, err);
        }

        plant.step(u_current, dt);
        push_history(history, s_t, u_current, n_f);
        u_current = sol.inputs.front();
        ++report.cycles;
    }
    if (!report.errors.empty()) {
        const double n = static_cast<double>(report.errors.size());
        report.mean_error = sum / n;
        report.std_error = std::sqrt(std::max(0.0, sum_sq / n - report.mean_error * report.mean_error));
    }
    return report;
}

namespace {

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.dot(ab);
    if (len2 < 1e-18) return (p - a).norm();
    const double s = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + s * ab)).norm();
}

/// Signed clearance against ground-truth shapes (negative means intersection).
double true_clearance(const SystemState& s, const SystemGeometry& geom, const World& world,
                      double t) {
    double best = std::numeric_limits<double>::infinity();
    const CoveringCircles circles = covering_circles(s, geom);
    auto scan_body = [&](const std::vector<Vec2>& centers, double r_body) {
        for (const Vec2& c : centers) {
            for (const WorldSegment& seg : world.segments) {
                best = std::min(best, point_segment_distance(c, seg.a, seg.b) - r_body);
            }
            for (const WorldDisc& d : world.discs) {
                best = std::min(best, (c - d.center).norm() - r_body - d.radius);
            }
            for (const MovingDisc& m : world.moving) {
                best = std::min(best, (c - m.position(t)).norm() - r_body - m.radius);
            }
        }
    };
    scan_body(circles.vehicle, geom.r_f);
    scan_body(circles.trailer, geom.r_r);
    return best;
}

/// Path pose a fixed arc length ahead of the projection of `current`.
PathPose pose_along_path(const ReferencePath& path, const Vec2& current, double lookahead) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < path.poses.size(); ++i) {
        const double d = (path.poses[i].position - current).norm();
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    const double s = path.arc_length[best] + lookahead;
    if (s >= path.length()) return path.poses.back();
    const auto it = std::upper_bound(path.arc_length.begin(), path.arc_length.end(), s);
    const std::size_t hi = static_cast<std::size_t>(it - path.arc_length.begin());
    const std::size_t lo = hi - 1;
    const double span = std::max(1e-12, path.arc_length[hi] - path.arc_length[lo]);
    const double a = (s - path.arc_length[lo]) / span;
    PathPose out;
    out.position =
        path.poses[lo].position + a * (path.poses[hi].position - path.poses[lo].position);
    out.heading = path.poses[lo].heading +
                  a * wrap_angle(path.poses[hi].heading - path.poses[lo].heading);
    return out;
}

bool path_blocked(const ReferencePath& path, const Vec2& current, const ObstacleSet& obstacles,
                  const SystemGeometry& geom, double v_ref, double dt, int N) {
    if (obstacles.circles.empty() || path.poses.empty()) return false;
    const std::vector<Vec2> ahead = resample_reference(path, current, v_ref, dt, N);
    for (const Vec2& p : ahead) {
        for (const ObstacleCircle& o : obstacles.circles) {
            if ((p - o.center).norm() < o.radius + geom.r_f) return true;
        }
    }
    return false;
}

}  // namespace

NavigationResult run_navigation(const ScenarioConfig& config, const World& world,
                                HybridModel model, const std::string& diagnostics_path) {
    const int n_f = config.model.n_f;
    const int N = config.model.N;
    const double dt = config.dt;
    const SystemGeometry& geom = config.geometry;
    const NavigationConfig& nav = config.navigation;

    NavigationResult result;
    result.min_true_clearance = std::numeric_limits<double>::infinity();
    result.min_planned_dfr = std::numeric_limits<double>::infinity();

    SystemState start;
    start.xf = {nav.start[0], nav.start[1]};
    start.psi = nav.start[2];
    start.zeta = nav.start[3];
    const Vec2 goal_pos{nav.goal[0], nav.goal[1]};
    const double goal_psi = nav.goal[2];
    const std::array<double, 5> x_ter{goal_pos.x, goal_pos.y, goal_psi, goal_psi, 0.0};

    std::ofstream diag;
    if (!diagnostics_path.empty()) {
        diag.open(diagnostics_path);
        if (!diag) throw std::runtime_error("run_navigation: cannot open " + diagnostics_path);
    }

    result.trajectory.dt = dt;
    result.trajectory.states.push_back(start);

    auto at_goal = [&](const SystemState& s) {
        return (s.xf - goal_pos).norm() <= nav.goal_pos_tol &&
               std::abs(wrap_angle(s.psi - goal_psi)) <= nav.goal_ang_tol;
    };
    if (at_goal(start)) {
        result.reached_goal = true;
        return result;
    }

    Plant plant(config.plant, mix_seed(config.seed, 0x6e617669, 0));
    plant.reset(start);

    AdamState adam(model.residual_net.param_count());
    adam.lr = 1e-3;
    std::mt19937_64 train_rng(mix_seed(config.seed, 0x6e617669, 1));

    PerformanceMonitor monitor;
    monitor.n_e = config.model.n_e;
    monitor.epsilon = config.model.epsilon;

    HistoryWindow history;
    ControlInput u_current{0.0, 0.0};
    for (int i = 0; i <= n_f; ++i) push_history(history, start, u_current, n_f);
    std::vector<SystemState> recent_states;
    std::vector<ControlInput> recent_inputs;

    // Local grid sized to cover start and goal with margin.
    GridSpec grid_spec;
    grid_spec.resolution = config.perception.grid_resolution;
    const double margin = config.perception.grid_extent;
    grid_spec.origin = {std::min(start.xf.x, goal_pos.x) - margin,
                        std::min(start.xf.y, goal_pos.y) - margin};
    grid_spec.width = static_cast<int>(
        std::ceil((std::abs(goal_pos.x - start.xf.x) + 2.0 * margin) / grid_spec.resolution));
    grid_spec.height = static_cast<int>(
        std::ceil((std::abs(goal_pos.y - start.xf.y) + 2.0 * margin) / grid_spec.resolution));

    ScanSpec scan_spec;
    scan_spec.beams = config.perception.beams;
    scan_spec.max_range = config.perception.max_range;

    ReferencePath path;
    bool have_path = false;
    int no_path_streak = 0;

    SolverOptions options;
    MpcSolution prev_solution;
    bool have_prev = false;
    MpcSolution last_good;
    bool have_good = false;
    int failsafe_shift = 0;
    int prev_se = 0;
    double solve_time_sum = 0.0;

    const int max_cycles = static_cast<int>(std::llround(nav.timeout / dt));
    for (int cycle = 0; cycle < max_cycles; ++cycle) {
        const double t = cycle * dt;
        const SystemState s_t = plant.state();

        const std::vector<Vec2> hits = simulate_scan(world, s_t, scan_spec, t);
        const std::vector<int> labels =
            dbscan(hits, config.perception.eps, config.perception.min_pts);
        const ObstacleSet obstacles = clusters_to_circles(hits, labels);
        const OccupancyGrid grid = rasterize(hits, grid_spec);

        monitor.push(s_t, u_current, n_f);
        push_recent(recent_states, recent_inputs, s_t, u_current, config.model.n_t);
        if (static_cast<int>(recent_states.size()) >
            n_f + config.training.residual_horizon + 1) {
            online_residual_update(recent_states, recent_inputs, model, adam,
                                   config.training.residual_budget,
                                   config.training.residual_horizon, train_rng);
        }

        bool replanned = false;
        const bool blocked =
            have_path &&
            path_blocked(path, s_t.xf, obstacles, geom, nav.v_ref, dt, N);
        if (!have_path || blocked) {
            try {
                path = hybrid_astar(grid, PathPose{s_t.xf, s_t.psi},
                                    PathPose{goal_pos, goal_psi}, geom, HybridAStarParams{});
                have_path = true;
                replanned = true;
                ++result.replans;
                no_path_streak = 0;
            } catch (const std::exception&) {
                ++no_path_streak;
                if (!have_path && no_path_streak > 50) {
                    result.no_path = true;
                    break;
                }
            }
        }

        ControlInput u_next{0.0, 0.0};
        PlanCycleResult plan;
        bool planned = false;
        double cycle_solve_time = 0.0;
        if (have_path) {
            // During transit the terminal target is the path pose one horizon
            // ahead; a faraway goal as terminal target makes the solver race
            // past v_ref and arrive misaligned. Within reach of the goal the
            // true goal pose takes over, the speed bound tapers with the
            // remaining distance, and the terminal pose weights are boosted so
            // the end-game behaves like a parking problem.
            const double dist_goal = (s_t.xf - goal_pos).norm();
            const double reach = N * dt * nav.v_ref;
            std::array<double, 5> x_ter_cycle = x_ter;
            Bounds bounds_cycle = config.bounds;
            MpcWeights weights_cycle = config.weights;
            if (dist_goal > reach) {
                const PathPose ahead = pose_along_path(path, s_t.xf, reach);
                x_ter_cycle = {ahead.position.x, ahead.position.y, ahead.heading,
                               ahead.heading, 0.0};
            } else {
                const double v_cap =
                    std::clamp(0.5 * dist_goal + 0.1, 0.15, bounds_cycle.input_hi[0]);
                bounds_cycle.input_hi[0] = v_cap;
                bounds_cycle.input_lo[0] = std::max(bounds_cycle.input_lo[0], -v_cap);
                weights_cycle.q_t = {5.0 * config.weights.q_t[0], 5.0 * config.weights.q_t[1],
                                     5.0 * config.weights.q_t[2], config.weights.q_t[3],
                                     config.weights.q_t[4]};
            }
            const auto t0 = std::chrono::steady_clock::now();
            plan = plan_cycle(monitor, model, obstacles, path, x_ter_cycle, bounds_cycle,
                              weights_cycle, history, N, nav.v_ref,
                              have_prev ? &prev_solution : nullptr, options);
            cycle_solve_time =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            planned = true;
            if (plan.solution.converged) {
                // Only executed plans count toward the planned-clearance record;
                // non-converged solutions are discarded by the fail-safe below.
                // Warm starts likewise come only from converged solutions, so a
                // single bad local minimum cannot poison the following cycles.
                result.min_planned_dfr = std::min(result.min_planned_dfr, plan.solution.min_dfr);
                prev_solution = plan.solution;
                have_prev = true;
                last_good = plan.solution;
                have_good = true;
                failsafe_shift = 0;
                u_next = plan.solution.inputs.front();
            } else if (have_good &&
                       ++failsafe_shift < static_cast<int>(last_good.inputs.size())) {
                // Fail-safe: continue along the last converged plan.
                ++result.failsafe_cycles;
                u_next = last_good.inputs[failsafe_shift];
            } else {
                // No trustworthy plan left: brake and wait for a feasible solve.
                ++result.failsafe_cycles;
                u_next = {0.0, 0.0};
            }
            solve_time_sum += cycle_solve_time;
            result.max_solve_time = std::max(result.max_solve_time, cycle_solve_time);
        }

        const int se_now = planned ? plan.monitor.s_e : 0;
        if (se_now == 1) ++result.se_active_cycles;
        if (se_now == 1 && prev_se == 0) ++result.se_activations;
        prev_se = se_now;
        result.se_trace.push_back(se_now);

        if (diag.is_open()) {
            nlohmann::json j{
                {"cycle", cycle},
                {"t", t},
                {"x", s_t.xf.x},
                {"y", s_t.xf.y},
                {"psi", s_t.psi},
                {"zeta", s_t.zeta},
                {"omega_zeta", s_t.omega_zeta},
                {"v", u_current.v},
                {"delta", u_current.delta},
                {"s_e", se_now},
                {"sigma_f", planned ? plan.monitor.sigma_f : 0.0},
                {"sigma_fe", planned ? plan.monitor.sigma_fe : 0.0},
                {"sigma_w", planned ? plan.monitor.sigma_w : 0.0},
                {"lambda0", planned ? plan.lambda0 : 0.0},
                {"n_obstacles", obstacles.count()},
                {"replanned", replanned},
                {"planned", planned},
                {"converged", planned && plan.solution.converged},
                {"iterations", planned ? plan.solution.iterations : 0},
                {"solve_time", cycle_solve_time},
                {"cost_terminal", planned ? plan.solution.cost_terminal : 0.0},
                {"cost_state", planned ? plan.solution.cost_state : 0.0},
                {"cost_input", planned ? plan.solution.cost_input : 0.0},
                {"cost_obstacle", planned ? plan.solution.cost_obstacle : 0.0},
                {"min_dfr", planned && std::isfinite(plan.solution.min_dfr)
                                ? plan.solution.min_dfr
                                : 1e9},
                {"max_violation", planned ? plan.solution.max_violation : 0.0},
            };
            diag << j.dump() << '\n';
        }

        plant.step(u_current, dt);
        const SystemState s_next = plant.state();
        result.trajectory.inputs.push_back(u_current);
        result.trajectory.states.push_back(s_next);
        result.distance_traveled += (s_next.xf - s_t.xf).norm();
        push_history(history, s_t, u_current, n_f);
        u_current = u_next;
        ++result.cycles;
        result.sim_time = (cycle + 1) * dt;

        const double clearance = true_clearance(s_next, geom, world, (cycle + 1) * dt);
        result.min_true_clearance = std::min(result.min_true_clearance, clearance);
        if (clearance < 0.0) {
            result.collided = true;
            break;
        }
        if (at_goal(s_next)) {
            result.reached_goal = true;
            break;
        }
    }
    if (!result.reached_goal && !result.collided && !result.no_path) result.timed_out = true;
    if (result.cycles > 0) result.mean_solve_time = solve_time_sum / result.cycles;
    return result;
}

}  // namespace vtnav
