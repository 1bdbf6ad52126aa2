#include "vtnav/plant.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vtnav {

TrailerKind trailer_kind_from_string(const std::string& s) {
    if (s == "rigid_rear_castor_front") return TrailerKind::rigid_rear_castor_front;
    if (s == "all_castor") return TrailerKind::all_castor;
    if (s == "wheelless_drag") return TrailerKind::wheelless_drag;
    throw std::invalid_argument("unknown trailer kind: " + s);
}

std::string to_string(TrailerKind k) {
    switch (k) {
        case TrailerKind::rigid_rear_castor_front: return "rigid_rear_castor_front";
        case TrailerKind::all_castor: return "all_castor";
        case TrailerKind::wheelless_drag: return "wheelless_drag";
    }
    return "?";
}

std::string to_string(SplitTag tag) {
    switch (tag) {
        case SplitTag::train: return "train";
        case SplitTag::val: return "val";
        case SplitTag::test: return "test";
    }
    return "?";
}

Plant::Plant(const PlantConfig& config, std::uint64_t seed)
    : config_(config), rng_(seed) {
    if (config.yaw_time_constant <= 0.0 || config.actuator_time_constant <= 0.0) {
        throw std::invalid_argument("plant time constants must be > 0");
    }
    if (config.payload_mass < 0.0 || config.slip_gain < 0.0 || config.slip_gain > 1.0) {
        throw std::invalid_argument("plant payload/slip out of range");
    }
}

void Plant::reset(const SystemState& state, double v_act, double delta_act) {
    state_ = state;
    v_act_ = v_act;
    delta_act_ = delta_act;
    time_ = 0.0;
}

namespace {

struct PlantDeriv {
    double x, y, psi, zeta, omega, v_act, delta_act;
};

struct PlantPoint {
    double x, y, psi, zeta, omega, v_act, delta_act;
};

double kinematic_trailer_rate(const PlantConfig& cfg, double psi, double zeta,
                              double v_act, double delta_act) {
    const double theta = psi - zeta;
    const double omega_psi = v_act * std::tan(delta_act) / cfg.geom.l;
    return (v_act * std::sin(theta) - cfg.geom.l_fh * omega_psi * std::cos(theta)) /
           cfg.geom.l_hr;
}

double pulse_bias(const DisturbanceSpec& dist, double t) {
    double bias = 0.0;
    for (const TerrainPulse& p : dist.terrain_pulses) {
        if (t >= p.start && t < p.start + p.duration) bias += p.amplitude;
    }
    return bias;
}

PlantDeriv plant_deriv(const PlantConfig& cfg, const PlantPoint& s, double v_cmd,
                       double delta_cmd, double bias) {
    PlantDeriv d{};
    d.v_act = (v_cmd - s.v_act) / cfg.actuator_time_constant;
    d.delta_act = (delta_cmd - s.delta_act) / cfg.actuator_time_constant;
    d.x = s.v_act * std::cos(s.psi);
    d.y = s.v_act * std::sin(s.psi);
    d.psi = s.v_act * std::tan(s.delta_act) / cfg.geom.l;
    d.zeta = s.omega;

    const double omega_kin =
        kinematic_trailer_rate(cfg, s.psi, s.zeta, s.v_act, s.delta_act);

    double tau = cfg.yaw_time_constant * (1.0 + 0.02 * cfg.payload_mass);
    double slip = cfg.slip_gain;
    double drag = 0.0;
    switch (cfg.trailer_kind) {
        case TrailerKind::rigid_rear_castor_front:
            break;
        case TrailerKind::all_castor:
            tau *= 1.5;
            slip = std::min(1.0, slip * (1.0 + 0.01 * cfg.payload_mass));
            break;
        case TrailerKind::wheelless_drag:
            drag = 0.25 * (1.0 + 0.01 * cfg.payload_mass);
            break;
    }
    const double target = (1.0 - slip) * omega_kin + bias;
    d.omega = (target - s.omega) / tau - drag * std::tanh(s.omega / 0.05);
    return d;
}

}  // namespace

double Plant::ideal_trailer_yaw_rate() const {
    return kinematic_trailer_rate(config_, state_.psi, state_.zeta, v_act_, delta_act_);
}

void Plant::step(const ControlInput& u, double dt) {
    if (dt <= 0.0) throw std::invalid_argument("plant step: dt must be > 0");

    double tau = config_.yaw_time_constant * (1.0 + 0.02 * config_.payload_mass);
    const double h_max =
        std::min({dt / 10.0, tau / 5.0, config_.actuator_time_constant / 5.0});
    const int n_sub = std::max(1, static_cast<int>(std::ceil(dt / h_max)));
    const double h = dt / n_sub;

    PlantPoint s{state_.xf.x, state_.xf.y, state_.psi, state_.zeta,
                 state_.omega_zeta, v_act_, delta_act_};
    double t = time_;
    for (int i = 0; i < n_sub; ++i) {
        const double bias = pulse_bias(config_.disturbance, t);
        auto add = [](const PlantPoint& p, const PlantDeriv& d, double a) {
            return PlantPoint{p.x + a * d.x, p.y + a * d.y, p.psi + a * d.psi,
                              p.zeta + a * d.zeta, p.omega + a * d.omega,
                              p.v_act + a * d.v_act, p.delta_act + a * d.delta_act};
        };
        const PlantDeriv k1 = plant_deriv(config_, s, u.v, u.delta, bias);
        const PlantDeriv k2 = plant_deriv(config_, add(s, k1, h / 2), u.v, u.delta, bias);
        const PlantDeriv k3 = plant_deriv(config_, add(s, k2, h / 2), u.v, u.delta, bias);
        const PlantDeriv k4 = plant_deriv(config_, add(s, k3, h), u.v, u.delta, bias);
        s.x += h / 6 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x);
        s.y += h / 6 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y);
        s.psi += h / 6 * (k1.psi + 2 * k2.psi + 2 * k3.psi + k4.psi);
        s.zeta += h / 6 * (k1.zeta + 2 * k2.zeta + 2 * k3.zeta + k4.zeta);
        s.omega += h / 6 * (k1.omega + 2 * k2.omega + 2 * k3.omega + k4.omega);
        s.v_act += h / 6 * (k1.v_act + 2 * k2.v_act + 2 * k3.v_act + k4.v_act);
        s.delta_act +=
            h / 6 * (k1.delta_act + 2 * k2.delta_act + 2 * k3.delta_act + k4.delta_act);
        t += h;
    }

    const auto& std_dev = config_.disturbance.process_noise_std;
    bool any_noise = false;
    for (double v : std_dev) any_noise = any_noise || v > 0.0;
    if (any_noise) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double sq = std::sqrt(dt);
        s.x += std_dev[0] * sq * gauss(rng_);
        s.y += std_dev[1] * sq * gauss(rng_);
        s.psi += std_dev[2] * sq * gauss(rng_);
        s.zeta += std_dev[3] * sq * gauss(rng_);
        s.omega += std_dev[4] * sq * gauss(rng_);
    }

    state_ = SystemState{{s.x, s.y}, s.psi, s.zeta, s.omega};
    v_act_ = s.v_act;
    delta_act_ = s.delta_act;
    time_ += dt;
}

SystemState Plant::observe(double zeta_noise_std, double omega_noise_std) {
    SystemState obs = state_;
    if (zeta_noise_std > 0.0 || omega_noise_std > 0.0) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        if (zeta_noise_std > 0.0) obs.zeta += zeta_noise_std * gauss(rng_);
        if (omega_noise_std > 0.0) obs.omega_zeta += omega_noise_std * gauss(rng_);
    }
    return obs;
}

namespace {

double segment_value(const SignalSegment& seg, double t) {
    const double tl = t - seg.t0;
    const double span = std::max(1e-9, seg.t1 - seg.t0);
    switch (seg.kind) {
        case SignalSegment::Kind::constant:
            return seg.a;
        case SignalSegment::Kind::ramp:
            return seg.a + (seg.b - seg.a) * tl / span;
        case SignalSegment::Kind::sine:
            return seg.a + seg.amp * std::sin(2.0 * M_PI * seg.f0 * tl);
        case SignalSegment::Kind::chirp: {
            const double f_inst = seg.f0 + (seg.f1 - seg.f0) * tl / (2.0 * span);
            return seg.a + seg.amp * std::sin(2.0 * M_PI * f_inst * tl);
        }
    }
    return seg.a;
}

double eval_segments(const std::vector<SignalSegment>& segs, double t, double lo, double hi) {
    double value = 0.0;
    bool found = false;
    for (const SignalSegment& seg : segs) {
        if (t >= seg.t0 && t < seg.t1) {
            value = segment_value(seg, t);
            found = true;
            break;
        }
    }
    if (!found && !segs.empty()) {
        // hold the last segment's end value
        const SignalSegment& last = segs.back();
        value = segment_value(last, std::min(t, last.t1));
    }
    return std::clamp(value, lo, hi);
}

}  // namespace

ControlInput excitation_controller(double t, const ExcitationSpec& spec) {
    ControlInput u;
    u.v = eval_segments(spec.v_segments, t, spec.v_lo, spec.v_hi);
    u.delta = eval_segments(spec.delta_segments, t, spec.delta_lo, spec.delta_hi);
    return u;
}

ExcitationSpec make_excitation(const Bounds& bounds, double duration, std::mt19937_64& rng) {
    ExcitationSpec spec;
    spec.v_lo = bounds.input_lo[0];
    spec.v_hi = bounds.input_hi[0];
    spec.delta_lo = bounds.input_lo[1];
    spec.delta_hi = bounds.input_hi[1];

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    // Velocity: forward segments of varying speed, occasional ramps.
    double t = 0.0;
    while (t < duration) {
        SignalSegment seg;
        seg.t0 = t;
        seg.t1 = std::min(duration, t + 4.0 + 8.0 * unif(rng));
        const double v_a = 0.2 + 0.8 * (spec.v_hi - 0.2) * unif(rng);
        if (unif(rng) < 0.3) {
            seg.kind = SignalSegment::Kind::ramp;
            seg.a = v_a;
            seg.b = 0.2 + 0.8 * (spec.v_hi - 0.2) * unif(rng);
        } else {
            seg.kind = SignalSegment::Kind::constant;
            seg.a = v_a;
        }
        spec.v_segments.push_back(seg);
        t = seg.t1;
    }
    // Steering: sweeps and constant-turn segments covering the steering range.
    t = 0.0;
    const double d_amp = 0.95 * std::min(std::abs(spec.delta_lo), spec.delta_hi);
    while (t < duration) {
        SignalSegment seg;
        seg.t0 = t;
        seg.t1 = std::min(duration, t + 6.0 + 10.0 * unif(rng));
        const double r = unif(rng);
        if (r < 0.45) {
            seg.kind = SignalSegment::Kind::chirp;
            seg.a = 0.0;
            seg.amp = d_amp * (0.6 + 0.4 * unif(rng));
            seg.f0 = 0.03 + 0.05 * unif(rng);
            seg.f1 = 0.15 + 0.25 * unif(rng);
        } else if (r < 0.8) {
            seg.kind = SignalSegment::Kind::sine;
            seg.a = 0.0;
            seg.amp = d_amp * (0.5 + 0.5 * unif(rng));
            seg.f0 = 0.05 + 0.15 * unif(rng);
        } else {
            seg.kind = SignalSegment::Kind::constant;
            seg.a = d_amp * (2.0 * unif(rng) - 1.0);
        }
        spec.delta_segments.push_back(seg);
        t = seg.t1;
    }
    return spec;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    // splitmix64 over the packed triple
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::vector<DatasetEntry> generate_dataset(const std::vector<PlantConfig>& configs,
                                           int episodes, int steps, double dt,
                                           std::uint64_t seed, int min_steps,
                                           bool parallel) {
    if (steps <= min_steps) {
        throw std::invalid_argument("generate_dataset: steps must exceed " +
                                    std::to_string(min_steps));
    }
    if (configs.empty() || episodes <= 0) {
        throw std::invalid_argument("generate_dataset: empty config or episode count");
    }

    const int n_cfg = static_cast<int>(configs.size());
    std::vector<DatasetEntry> out(static_cast<std::size_t>(n_cfg) * episodes);

    // 8:1:1 split over shuffled episode indices, per config.
    const int n_test = std::max(1, episodes / 10);
    const int n_val = std::max(1, episodes / 10);
    std::vector<std::vector<SplitTag>> split_of(n_cfg, std::vector<SplitTag>(episodes));
    for (int ci = 0; ci < n_cfg; ++ci) {
        std::vector<int> order(episodes);
        for (int i = 0; i < episodes; ++i) order[i] = i;
        std::mt19937_64 split_rng(mix_seed(seed, 0xC0FFEE, ci));
        std::shuffle(order.begin(), order.end(), split_rng);
        for (int i = 0; i < episodes; ++i) {
            SplitTag tag = SplitTag::train;
            if (i < n_test) tag = SplitTag::test;
            else if (i < n_test + n_val) tag = SplitTag::val;
            split_of[ci][order[i]] = tag;
        }
    }

    const int total = n_cfg * episodes;
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int idx = 0; idx < total; ++idx) {
        const int ci = idx / episodes;
        const int ep = idx % episodes;
        const std::uint64_t ep_seed = mix_seed(seed, ci, ep);
        std::mt19937_64 rng(ep_seed);
        Bounds bounds;
        const ExcitationSpec exc = make_excitation(bounds, steps * dt, rng);

        Plant plant(configs[ci], mix_seed(ep_seed, 1, 0));
        std::uniform_real_distribution<double> unif(-0.3, 0.3);
        SystemState init;
        init.zeta = unif(rng);  // random initial hitch angle
        plant.reset(init);

        Trajectory traj;
        traj.dt = dt;
        traj.states.reserve(steps + 1);
        traj.inputs.reserve(steps);
        traj.states.push_back(plant.state());
        for (int k = 0; k < steps; ++k) {
            const ControlInput u = excitation_controller(k * dt, exc);
            plant.step(u, dt);
            traj.inputs.push_back(u);
            traj.states.push_back(plant.state());
        }
        out[idx] = DatasetEntry{std::move(traj), split_of[ci][ep], ci, ep};
    }
    return out;
}

void save_trajectory(const Trajectory& traj, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_trajectory: cannot open " + path);
    f.precision(17);
    f << "# vtnav-trajectory 1\n";
    f << "t x_f y_f psi zeta omega_zeta v delta\n";
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const SystemState& s = traj.states[k];
        const double v = k < traj.inputs.size() ? traj.inputs[k].v : 0.0;
        const double d = k < traj.inputs.size() ? traj.inputs[k].delta : 0.0;
        f << k * traj.dt << ' ' << s.xf.x << ' ' << s.xf.y << ' ' << s.psi << ' '
          << s.zeta << ' ' << s.omega_zeta << ' ' << v << ' ' << d << '\n';
    }
}

Trajectory load_trajectory(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_trajectory: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || line.rfind("# vtnav-trajectory 1", 0) != 0) {
        throw std::runtime_error("load_trajectory: bad schema header in " + path);
    }
    std::getline(f, line);  // column header
    Trajectory traj;
    double prev_t = 0.0;
    bool have_prev = false;
    std::vector<ControlInput> inputs;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        double t, x, y, psi, zeta, omega, v, d;
        if (!(is >> t >> x >> y >> psi >> zeta >> omega >> v >> d)) {
            throw std::runtime_error("load_trajectory: malformed row in " + path);
        }
        traj.states.push_back(SystemState{{x, y}, psi, zeta, omega});
        inputs.push_back(ControlInput{v, d});
        if (have_prev) traj.dt = t - prev_t;
        prev_t = t;
        have_prev = true;
    }
    if (traj.states.size() < 2) {
        throw std::runtime_error("load_trajectory: too few rows in " + path);
    }
    inputs.pop_back();  // last row carries no applied input
    traj.inputs = std::move(inputs);
    return traj;
}

}  // namespace vtnav
