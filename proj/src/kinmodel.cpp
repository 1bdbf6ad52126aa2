#include "vtnav/kinmodel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vtnav {

std::vector<double> feature_vector(const HistoryWindow& window) {
    if (!window.well_formed()) {
        throw std::invalid_argument("feature_vector: malformed history window");
    }
    const std::size_t n = window.states.size();
    std::vector<double> phi;
    phi.reserve(4 * n);
    for (const SystemState& s : window.states) phi.push_back(hitch_angle(s));
    for (const SystemState& s : window.states) phi.push_back(s.omega_zeta);
    for (const ControlInput& u : window.inputs) {
        phi.push_back(u.v);
        phi.push_back(u.delta);
    }
    return phi;
}

SystemState nominal_step(const HistoryWindow& window, const HybridModel& model) {
    const SystemState& s = window.states.back();
    const ControlInput& u = window.inputs.back();
    const double dt = model.dt;
    SystemState next;
    next.xf.x = s.xf.x + u.v * std::cos(s.psi) * dt;
    next.xf.y = s.xf.y + u.v * std::sin(s.psi) * dt;
    next.psi = s.psi + u.v * std::tan(u.delta) * dt / model.geom.l;
    next.zeta = s.zeta + s.omega_zeta * dt;
    next.omega_zeta = forward(model.nominal_net, feature_vector(window));
    return next;
}

double residual_delta(const HistoryWindow& window, const HybridModel& model) {
    return forward(model.residual_net, feature_vector(window));
}

double lambda_e(int k, const HybridModel& model) {
    if (k < 0) throw std::invalid_argument("lambda_e: negative step index");
    return model.s_e * std::max(1.0 - static_cast<double>(k) / model.n_c, 0.0);
}

SystemState weighted_step(const HistoryWindow& window, const HybridModel& model, int k) {
    SystemState next = nominal_step(window, model);
    const double lam = lambda_e(k, model);
    if (lam != 0.0) next.omega_zeta += lam * residual_delta(window, model);
    return next;
}

std::vector<SystemState> rollout(const HistoryWindow& window,
                                 const std::vector<ControlInput>& controls,
                                 const HybridModel& model, RolloutMode mode) {
    HistoryWindow w = window;
    std::vector<SystemState> out;
    out.reserve(controls.size());
    for (std::size_t k = 0; k < controls.size(); ++k) {
        SystemState next;
        switch (mode) {
            case RolloutMode::nominal:
                next = nominal_step(w, model);
                break;
            case RolloutMode::unweighted:
                next = nominal_step(w, model);
                next.omega_zeta += residual_delta(w, model);
                break;
            case RolloutMode::weighted:
                next = weighted_step(w, model, static_cast<int>(k));
                break;
        }
        out.push_back(next);
        w.states.erase(w.states.begin());
        w.inputs.erase(w.inputs.begin());
        w.states.push_back(next);
        w.inputs.push_back(controls[k]);
    }
    return out;
}

std::vector<TrainingSample> extract_samples(const Trajectory& traj, int n_f, int N,
                                            int stride) {
    const int frames = n_f + N + 1;
    std::vector<TrainingSample> out;
    const int n_states = static_cast<int>(traj.states.size());
    for (int start = 0; start + frames <= n_states; start += stride) {
        TrainingSample s;
        s.states.assign(traj.states.begin() + start, traj.states.begin() + start + frames);
        s.inputs.resize(frames);
        for (int i = 0; i < frames; ++i) {
            const int gi = start + i;
            s.inputs[i] = gi < static_cast<int>(traj.inputs.size()) ? traj.inputs[gi]
                                                                    : ControlInput{};
        }
        out.push_back(std::move(s));
    }
    return out;
}

double rolling_loss_and_grad(const TrainingSample& sample, const HybridModel& model,
                             int N, TrainTarget target, double weight,
                             std::vector<double>* grad) {
    const int n_f = model.n_f;
    const int frames = n_f + N + 1;
    if (static_cast<int>(sample.states.size()) != frames ||
        static_cast<int>(sample.inputs.size()) != frames) {
        throw std::invalid_argument("rolling_loss_and_grad: sample length mismatch");
    }
    const double dt = model.dt;
    const bool combined = target == TrainTarget::residual_combined;

    // Index t in [-n_f, N] maps to array slot t + n_f.
    auto slot = [n_f](int t) { return t + n_f; };
    std::vector<double> theta_hat(frames), omega_hat(frames), zeta_hat(frames),
        psi_hat(frames);
    for (int t = -n_f; t <= 0; ++t) {
        const SystemState& s = sample.states[slot(t)];
        psi_hat[slot(t)] = s.psi;
        zeta_hat[slot(t)] = s.zeta;
        omega_hat[slot(t)] = s.omega_zeta;
        theta_hat[slot(t)] = s.psi - s.zeta;
    }

    const int feat_size = model.feature_size();
    std::vector<ForwardCache> cache_f(N);
    std::vector<ForwardCache> cache_e(combined ? N : 0);
    std::vector<double> err(N);
    std::vector<double> phi(feat_size);

    double loss = 0.0;
    for (int k = 0; k < N; ++k) {
        for (int i = 0; i <= n_f; ++i) {
            const int t = k - n_f + i;
            phi[i] = theta_hat[slot(t)];
            phi[n_f + 1 + i] = omega_hat[slot(t)];
            phi[2 * (n_f + 1) + 2 * i] = sample.inputs[slot(t)].v;
            phi[2 * (n_f + 1) + 2 * i + 1] = sample.inputs[slot(t)].delta;
        }
        cache_f[k] = forward_cached(model.nominal_net, phi);
        double omega_next = cache_f[k].output;
        if (combined) {
            cache_e[k] = forward_cached(model.residual_net, phi);
            omega_next += cache_e[k].output;
        }
        const ControlInput& u = sample.inputs[slot(k)];
        zeta_hat[slot(k + 1)] = zeta_hat[slot(k)] + omega_hat[slot(k)] * dt;
        psi_hat[slot(k + 1)] =
            psi_hat[slot(k)] + u.v * std::tan(u.delta) * dt / model.geom.l;
        theta_hat[slot(k + 1)] = psi_hat[slot(k + 1)] - zeta_hat[slot(k + 1)];
        omega_hat[slot(k + 1)] = omega_next;

        err[k] = omega_next - sample.states[slot(k + 1)].omega_zeta;
        loss += err[k] * err[k];
    }

    if (grad == nullptr) return loss;

    // Reverse sweep: adjoints of the predicted zeta/omega chain, t in [1, N].
    std::vector<double> a_zeta(N + 1, 0.0), a_omega(N + 1, 0.0);
    std::vector<double> jac(feat_size);
    for (int k = N - 1; k >= 0; --k) {
        if (k + 2 <= N) {
            a_omega[k + 1] += dt * a_zeta[k + 2];
            a_zeta[k + 1] += a_zeta[k + 2];
        }
        const double g = 2.0 * weight * err[k] + a_omega[k + 1];
        std::fill(jac.begin(), jac.end(), 0.0);
        if (combined) {
            backward_full(model.residual_net, cache_e[k], g, grad, &jac);
            backward_full(model.nominal_net, cache_f[k], g, nullptr, &jac);
        } else {
            backward_full(model.nominal_net, cache_f[k], g, grad, &jac);
        }
        for (int i = 0; i <= n_f; ++i) {
            const int t = k - n_f + i;
            if (t < 1) continue;  // measured seed frames are constants
            a_zeta[t] -= jac[i];              // theta = psi - zeta, psi is fixed
            a_omega[t] += jac[n_f + 1 + i];
        }
    }
    return loss;
}

double train_nominal_epoch(const std::vector<TrainingSample>& samples,
                           HybridModel& model, AdamState& adam, int N,
                           int batch_size, bool parallel) {
    if (samples.empty()) throw std::invalid_argument("train_nominal_epoch: no samples");
    if (batch_size <= 0) throw std::invalid_argument("train_nominal_epoch: bad batch size");

    const std::size_t n_params = model.nominal_net.param_count();
    std::vector<double> params;
    model.nominal_net.params_to(params);

    double total_sq = 0.0;
    const int n_samples = static_cast<int>(samples.size());
    for (int begin = 0; begin < n_samples; begin += batch_size) {
        const int end = std::min(n_samples, begin + batch_size);
        const int bs = end - begin;
        const double weight = 1.0 / (static_cast<double>(bs) * N);

        std::vector<std::vector<double>> sample_grads(bs);
        std::vector<double> sample_loss(bs, 0.0);
#pragma omp parallel for schedule(dynamic) if (parallel)
        for (int i = 0; i < bs; ++i) {
            sample_grads[i].assign(n_params, 0.0);
            sample_loss[i] = rolling_loss_and_grad(samples[begin + i], model, N,
                                                   TrainTarget::nominal, weight,
                                                   &sample_grads[i]);
        }
        // Fixed-order reduction keeps the result independent of thread count.
        std::vector<double> grad(n_params, 0.0);
        for (int i = 0; i < bs; ++i) {
            for (std::size_t p = 0; p < n_params; ++p) grad[p] += sample_grads[i][p];
            total_sq += sample_loss[i];
        }
        adam_step(params, grad, adam);
        model.nominal_net.params_from(params);
    }
    return total_sq / (static_cast<double>(n_samples) * N);
}

void online_residual_update(const std::vector<SystemState>& recent_states,
                            const std::vector<ControlInput>& recent_inputs,
                            HybridModel& model, AdamState& adam, int budget,
                            int horizon, std::mt19937_64& rng, int minibatch) {
    if (budget <= 0) return;
    if (recent_states.size() != recent_inputs.size()) {
        throw std::invalid_argument("online_residual_update: misaligned window");
    }
    const int frames = model.n_f + horizon + 1;
    const int n_states = static_cast<int>(recent_states.size());
    if (n_states < frames) {
        throw std::invalid_argument("online_residual_update: window too short");
    }

    Trajectory traj;
    traj.dt = model.dt;
    traj.states = recent_states;
    traj.inputs.assign(recent_inputs.begin(), recent_inputs.end() - 1);
    const std::vector<TrainingSample> samples = extract_samples(traj, model.n_f, horizon);
    const int n_samples = static_cast<int>(samples.size());

    const std::size_t n_params = model.residual_net.param_count();
    std::vector<double> params;
    model.residual_net.params_to(params);

    std::uniform_int_distribution<int> pick(0, n_samples - 1);
    std::vector<double> grad(n_params);
    for (int step = 0; step < budget; ++step) {
        const int bs = std::min(minibatch, n_samples);
        const double weight = 1.0 / (static_cast<double>(bs) * horizon);
        std::fill(grad.begin(), grad.end(), 0.0);
        for (int i = 0; i < bs; ++i) {
            const int idx = n_samples <= minibatch ? i : pick(rng);
            rolling_loss_and_grad(samples[idx], model, horizon,
                                  TrainTarget::residual_combined, weight, &grad);
        }
        adam_step(params, grad, adam);
        model.residual_net.params_from(params);
    }
}

void PerformanceMonitor::push(const SystemState& s, const ControlInput& u, int n_f) {
    states.push_back(s);
    inputs.push_back(u);
    const std::size_t cap = static_cast<std::size_t>(n_e + n_f + 1);
    while (states.size() > cap) {
        states.pop_front();
        inputs.pop_front();
    }
}

MonitorResult update_monitor(PerformanceMonitor& monitor, const HybridModel& model) {
    MonitorResult res;
    const int n_f = model.n_f;
    const int need = monitor.n_e + n_f + 1;
    if (static_cast<int>(monitor.states.size()) < need) {
        monitor.valid = false;
        monitor.sigma_f = monitor.sigma_fe = monitor.sigma_w = 0.0;
        return res;  // s_e = 0, sigmas flagged invalid
    }

    HistoryWindow seed;
    for (int i = 0; i <= n_f; ++i) {
        seed.states.push_back(monitor.states[i]);
        seed.inputs.push_back(monitor.inputs[i]);
    }
    std::vector<ControlInput> controls;
    for (int j = 0; j < monitor.n_e; ++j) {
        controls.push_back(monitor.inputs[n_f + 1 + j]);
    }

    auto mse_of = [&](RolloutMode mode) {
        const std::vector<SystemState> pred = rollout(seed, controls, model, mode);
        double acc = 0.0;
        for (int j = 0; j < monitor.n_e; ++j) {
            const double e = pred[j].omega_zeta - monitor.states[n_f + 1 + j].omega_zeta;
            acc += e * e;
        }
        return acc / monitor.n_e;
    };

    res.sigma_f = mse_of(RolloutMode::nominal);
    res.sigma_fe = mse_of(RolloutMode::unweighted);
    res.sigma_w = mse_of(RolloutMode::weighted);  // uses the currently active lambda_e
    res.s_e = (res.sigma_f > 0.0 && res.sigma_fe / res.sigma_f < monitor.epsilon) ? 1 : 0;
    res.valid = true;

    monitor.sigma_f = res.sigma_f;
    monitor.sigma_fe = res.sigma_fe;
    monitor.sigma_w = res.sigma_w;
    monitor.valid = true;
    return res;
}

void fit_normalizer(MlpNetwork& net, const std::vector<TrainingSample>& samples,
                    int n_f) {
    const int feat_size = net.input_size();
    std::vector<double> mean(feat_size, 0.0), sq(feat_size, 0.0);
    std::size_t count = 0;
    std::vector<double> phi(feat_size);
    for (const TrainingSample& s : samples) {
        const int n_windows = static_cast<int>(s.states.size()) - n_f;
        for (int start = 0; start < n_windows; ++start) {
            for (int i = 0; i <= n_f; ++i) {
                const SystemState& st = s.states[start + i];
                phi[i] = st.psi - st.zeta;
                phi[n_f + 1 + i] = st.omega_zeta;
                phi[2 * (n_f + 1) + 2 * i] = s.inputs[start + i].v;
                phi[2 * (n_f + 1) + 2 * i + 1] = s.inputs[start + i].delta;
            }
            for (int j = 0; j < feat_size; ++j) {
                mean[j] += phi[j];
                sq[j] += phi[j] * phi[j];
            }
            ++count;
        }
    }
    if (count == 0) throw std::invalid_argument("fit_normalizer: no windows");
    for (int j = 0; j < feat_size; ++j) {
        mean[j] /= static_cast<double>(count);
        const double var = std::max(0.0, sq[j] / static_cast<double>(count) - mean[j] * mean[j]);
        net.norm_mean[j] = mean[j];
        net.norm_scale[j] = std::max(1e-6, std::sqrt(var));
    }
}

}  // namespace vtnav
