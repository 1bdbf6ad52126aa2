#include "vtnav/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace vtnav {

double clamp_sigma_w(double sigma_w) {
    return std::clamp(sigma_w, 1e-4, 1.0);
}

double distance_circle(const Vec2& pred_center, const ObstacleCircle& obstacle,
                       double body_radius, double d_safe) {
    return (pred_center - obstacle.center).norm() - body_radius - obstacle.radius - d_safe;
}

double min_separation(const SystemState& state, const SystemGeometry& geom,
                      const ObstacleSet& obstacles, double d_safe) {
    if (obstacles.circles.empty()) return std::numeric_limits<double>::infinity();
    const CoveringCircles circles = covering_circles(state, geom);
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& c : circles.vehicle) {
        for (const ObstacleCircle& o : obstacles.circles) {
            best = std::min(best, distance_circle(c, o, geom.r_f, d_safe));
        }
    }
    for (const Vec2& c : circles.trailer) {
        for (const ObstacleCircle& o : obstacles.circles) {
            best = std::min(best, distance_circle(c, o, geom.r_r, d_safe));
        }
    }
    return best;
}

double cost_terminal(const SystemState& x_n, const std::array<double, 5>& x_ter,
                     const std::array<double, 5>& q_t) {
    const double e0 = x_n.xf.x - x_ter[0];
    const double e1 = x_n.xf.y - x_ter[1];
    const double e2 = wrap_angle(x_n.psi - x_ter[2]);
    const double e3 = wrap_angle(x_n.zeta - x_ter[3]);
    const double e4 = x_n.omega_zeta - x_ter[4];
    return q_t[0] * e0 * e0 + q_t[1] * e1 * e1 + q_t[2] * e2 * e2 + q_t[3] * e3 * e3 +
           q_t[4] * e4 * e4;
}

double cost_state(const SystemState& x_k, const Vec2& ref, const std::array<double, 2>& q_ref) {
    const double ex = x_k.xf.x - ref.x;
    const double ey = x_k.xf.y - ref.y;
    return q_ref[0] * ex * ex + q_ref[1] * ey * ey;
}

double cost_input(const ControlInput& u_k, const ControlInput& u_next, double sigma_w,
                  const MpcWeights& weights) {
    // No lower clamp here: sigma_w = 0 must reproduce the base weights exactly.
    const double scale = 1.0 + weights.kappa_u * std::clamp(sigma_w, 0.0, 1.0);
    const double qu0 = weights.q_u_base[0] * scale;
    const double qu1 = weights.q_u_base[1] * scale;
    const double qd0 = weights.q_du_base[0] * scale;
    const double qd1 = weights.q_du_base[1] * scale;
    const double dv = u_next.v - u_k.v;
    const double dd = u_next.delta - u_k.delta;
    return qu0 * u_k.v * u_k.v + qu1 * u_k.delta * u_k.delta + qd0 * dv * dv + qd1 * dd * dd;
}

double cost_obstacle(const SystemState& x_k, const ObstacleSet& obstacles, double sigma_w,
                     const MpcWeights& weights, const SystemGeometry& geom) {
    if (obstacles.circles.empty()) return 0.0;
    const double sw = clamp_sigma_w(sigma_w);
    const CoveringCircles circles = covering_circles(x_k, geom);
    double total = 0.0;
    for (const Vec2& c : circles.vehicle) {
        for (const ObstacleCircle& o : obstacles.circles) {
            const double d = distance_circle(c, o, geom.r_f, weights.d_safe);
            total += weights.lambda_f * sw * std::exp(-d / weights.gamma_f);
        }
    }
    for (const Vec2& c : circles.trailer) {
        for (const ObstacleCircle& o : obstacles.circles) {
            const double d = distance_circle(c, o, geom.r_r, weights.d_safe);
            total += weights.lambda_r * sw * std::exp(-d / weights.gamma_r);
        }
    }
    return total;
}

namespace {

struct RolloutBuffers {
    // Index t in [-n_f, N] maps to slot t + n_f.
    std::vector<double> x, y, psi, zeta, omega, v, delta;
    std::vector<ForwardCache> cache_f, cache_e;  // per step k in [0, N)
    std::vector<double> lambda;                  // lambda_e(k)
};

void run_rollout(const MpcProblem& p, const std::vector<ControlInput>& inputs,
                 RolloutBuffers& b) {
    const HybridModel& m = p.model;
    const int n_f = m.n_f;
    const int N = p.N;
    const int frames = n_f + N + 1;
    auto slot = [n_f](int t) { return t + n_f; };

    b.x.resize(frames);
    b.y.resize(frames);
    b.psi.resize(frames);
    b.zeta.resize(frames);
    b.omega.resize(frames);
    b.v.resize(frames);
    b.delta.resize(frames);
    b.cache_f.resize(N);
    b.cache_e.resize(N);
    b.lambda.resize(N);

    for (int t = -n_f; t <= 0; ++t) {
        const SystemState& s = p.history.states[t + n_f];
        const ControlInput& u = p.history.inputs[t + n_f];
        b.x[slot(t)] = s.xf.x;
        b.y[slot(t)] = s.xf.y;
        b.psi[slot(t)] = s.psi;
        b.zeta[slot(t)] = s.zeta;
        b.omega[slot(t)] = s.omega_zeta;
        b.v[slot(t)] = u.v;
        b.delta[slot(t)] = u.delta;
    }
    for (int t = 1; t <= N; ++t) {
        b.v[slot(t)] = inputs[t - 1].v;
        b.delta[slot(t)] = inputs[t - 1].delta;
    }

    const int feat_size = m.feature_size();
    std::vector<double> phi(feat_size);
    const double dt = m.dt;
    for (int k = 0; k < N; ++k) {
        for (int i = 0; i <= n_f; ++i) {
            const int t = k - n_f + i;
            phi[i] = b.psi[slot(t)] - b.zeta[slot(t)];
            phi[n_f + 1 + i] = b.omega[slot(t)];
            phi[2 * (n_f + 1) + 2 * i] = b.v[slot(t)];
            phi[2 * (n_f + 1) + 2 * i + 1] = b.delta[slot(t)];
        }
        b.cache_f[k] = forward_cached(m.nominal_net, phi);
        double omega_next = b.cache_f[k].output;
        b.lambda[k] = lambda_e(k, m);
        if (b.lambda[k] != 0.0) {
            b.cache_e[k] = forward_cached(m.residual_net, phi);
            omega_next += b.lambda[k] * b.cache_e[k].output;
        }
        const double vk = b.v[slot(k)];
        const double dk = b.delta[slot(k)];
        b.x[slot(k + 1)] = b.x[slot(k)] + vk * std::cos(b.psi[slot(k)]) * dt;
        b.y[slot(k + 1)] = b.y[slot(k)] + vk * std::sin(b.psi[slot(k)]) * dt;
        b.psi[slot(k + 1)] = b.psi[slot(k)] + vk * std::tan(dk) * dt / m.geom.l;
        b.zeta[slot(k + 1)] = b.zeta[slot(k)] + b.omega[slot(k)] * dt;
        b.omega[slot(k + 1)] = omega_next;
    }
}

SystemState state_at(const RolloutBuffers& b, int n_f, int t) {
    const int s = t + n_f;
    return SystemState{{b.x[s], b.y[s]}, b.psi[s], b.zeta[s], b.omega[s]};
}

}  // namespace

double constraint_violation(const MpcProblem& p, const std::vector<SystemState>& states,
                            const std::vector<ControlInput>& inputs) {
    double worst = 0.0;
    const Bounds& bb = p.bounds;
    // x_tilde_1 is fixed by the history (the applied input drives step 0), so
    // its constraints are irreducible constants; judging convergence on them
    // would lock the solver into permanent infeasibility after any model
    // mismatch. Only states that depend on the decision inputs are measured.
    for (int k = 2; k <= p.N; ++k) {
        const SystemState& s = states[k - 1];
        if (!p.trailer_tracking && !p.obstacles.circles.empty()) {
            const double d = min_separation(s, p.model.geom, p.obstacles, p.weights.d_safe);
            worst = std::max(worst, -d);
        }
        const std::array<double, 5> sv{s.xf.x, s.xf.y, s.psi, s.zeta, s.omega_zeta};
        for (int c = 0; c < 5; ++c) {
            worst = std::max(worst, sv[c] - bb.state_hi[c]);
            worst = std::max(worst, bb.state_lo[c] - sv[c]);
        }
        const double theta = s.psi - s.zeta;
        worst = std::max(worst, theta - bb.theta_hi);
        worst = std::max(worst, bb.theta_lo - theta);
        const ControlInput& u = inputs[k - 1];
        worst = std::max(worst, u.v - bb.input_hi[0]);
        worst = std::max(worst, bb.input_lo[0] - u.v);
        worst = std::max(worst, u.delta - bb.input_hi[1]);
        worst = std::max(worst, bb.input_lo[1] - u.delta);
        const double omega_psi = u.v * std::tan(u.delta) / p.model.geom.l;
        worst = std::max(worst, omega_psi - bb.omega_psi_hi);
        worst = std::max(worst, bb.omega_psi_lo - omega_psi);
    }
    return worst;
}

double objective_with_gradient(const MpcProblem& p, const std::vector<ControlInput>& inputs,
                               double mu, std::vector<double>* grad) {
    const HybridModel& m = p.model;
    const int n_f = m.n_f;
    const int N = p.N;
    const int frames = n_f + N + 1;
    auto slot = [n_f](int t) { return t + n_f; };

    RolloutBuffers b;
    run_rollout(p, inputs, b);

    // Adjoint seeds over the whole timeline (history slots stay untouched).
    std::vector<double> ax(frames, 0.0), ay(frames, 0.0), apsi(frames, 0.0),
        azeta(frames, 0.0), aomega(frames, 0.0), av(frames, 0.0), adelta(frames, 0.0);
    const bool want_grad = grad != nullptr;

    double value = 0.0;
    const double sw = clamp_sigma_w(p.sigma_w);
    const double scale_u = 1.0 + p.weights.kappa_u * std::clamp(p.sigma_w, 0.0, 1.0);
    const SystemGeometry& geom = m.geom;

    // Terminal cost
    if (!p.trailer_tracking) {
        const int t = N;
        const double e0 = b.x[slot(t)] - p.x_ter[0];
        const double e1 = b.y[slot(t)] - p.x_ter[1];
        const double e2 = wrap_angle(b.psi[slot(t)] - p.x_ter[2]);
        const double e3 = wrap_angle(b.zeta[slot(t)] - p.x_ter[3]);
        const double e4 = b.omega[slot(t)] - p.x_ter[4];
        value += p.weights.q_t[0] * e0 * e0 + p.weights.q_t[1] * e1 * e1 +
                 p.weights.q_t[2] * e2 * e2 + p.weights.q_t[3] * e3 * e3 +
                 p.weights.q_t[4] * e4 * e4;
        if (want_grad) {
            ax[slot(t)] += 2.0 * p.weights.q_t[0] * e0;
            ay[slot(t)] += 2.0 * p.weights.q_t[1] * e1;
            apsi[slot(t)] += 2.0 * p.weights.q_t[2] * e2;
            azeta[slot(t)] += 2.0 * p.weights.q_t[3] * e3;
            aomega[slot(t)] += 2.0 * p.weights.q_t[4] * e4;
        }
    }

    // Rate cost from the already-applied input to the first decision. Without
    // this term the commanded input can jump arbitrarily between cycles.
    {
        const double qd0 = p.weights.q_du_base[0] * scale_u;
        const double qd1 = p.weights.q_du_base[1] * scale_u;
        const double dv = b.v[slot(1)] - b.v[slot(0)];
        const double dd = b.delta[slot(1)] - b.delta[slot(0)];
        value += qd0 * dv * dv + qd1 * dd * dd;
        if (want_grad) {
            av[slot(1)] += 2.0 * qd0 * dv;
            adelta[slot(1)] += 2.0 * qd1 * dd;
        }
    }

    for (int k = 1; k <= N; ++k) {
        const int t = slot(k);
        // State cost (vehicle reference) for k = 1..N-1
        if (!p.trailer_tracking && k < N && !p.reference.empty()) {
            const double ex = b.x[t] - p.reference[k].x;
            const double ey = b.y[t] - p.reference[k].y;
            value += p.weights.q_ref[0] * ex * ex + p.weights.q_ref[1] * ey * ey;
            if (want_grad) {
                ax[t] += 2.0 * p.weights.q_ref[0] * ex;
                ay[t] += 2.0 * p.weights.q_ref[1] * ey;
            }
        }
        // Simplified trailer-position objective (tracking benchmark)
        if (p.trailer_tracking && k < static_cast<int>(p.trailer_reference.size())) {
            const Vec2 e_psi = unit_vector(b.psi[t]);
            const Vec2 e_zeta = unit_vector(b.zeta[t]);
            const Vec2 pr{b.x[t] - geom.l_fh * e_psi.x - geom.l_hr * e_zeta.x,
                          b.y[t] - geom.l_fh * e_psi.y - geom.l_hr * e_zeta.y};
            const double ex = pr.x - p.trailer_reference[k].x;
            const double ey = pr.y - p.trailer_reference[k].y;
            value += p.weights.q_ref[0] * ex * ex + p.weights.q_ref[1] * ey * ey;
            if (want_grad) {
                const double gx = 2.0 * p.weights.q_ref[0] * ex;
                const double gy = 2.0 * p.weights.q_ref[1] * ey;
                ax[t] += gx;
                ay[t] += gy;
                // d pr / d psi = -l_fh * e_psi_perp, d pr / d zeta = -l_hr * e_zeta_perp
                apsi[t] += gx * (geom.l_fh * e_psi.y) + gy * (-geom.l_fh * e_psi.x);
                azeta[t] += gx * (geom.l_hr * e_zeta.y) + gy * (-geom.l_hr * e_zeta.x);
            }
        }
        // Vehicle guide term of the tracking benchmark
        if (p.trailer_tracking && k < N && !p.reference.empty()) {
            const double ex = b.x[t] - p.reference[k].x;
            const double ey = b.y[t] - p.reference[k].y;
            value += p.weights.q_track_vehicle * (ex * ex + ey * ey);
            if (want_grad) {
                ax[t] += 2.0 * p.weights.q_track_vehicle * ex;
                ay[t] += 2.0 * p.weights.q_track_vehicle * ey;
            }
        }
        // Input cost for k = 1..N-1 (magnitude of u_k plus rate to u_{k+1})
        if (k < N) {
            const double qu0 = p.weights.q_u_base[0] * scale_u;
            const double qu1 = p.weights.q_u_base[1] * scale_u;
            const double qd0 = p.weights.q_du_base[0] * scale_u;
            const double qd1 = p.weights.q_du_base[1] * scale_u;
            const double vk = b.v[t], dk = b.delta[t];
            const double dv = b.v[slot(k + 1)] - vk;
            const double dd = b.delta[slot(k + 1)] - dk;
            value += qu0 * vk * vk + qu1 * dk * dk + qd0 * dv * dv + qd1 * dd * dd;
            if (want_grad) {
                av[t] += 2.0 * qu0 * vk - 2.0 * qd0 * dv;
                adelta[t] += 2.0 * qu1 * dk - 2.0 * qd1 * dd;
                av[slot(k + 1)] += 2.0 * qd0 * dv;
                adelta[slot(k + 1)] += 2.0 * qd1 * dd;
            }
        }
        // Obstacle cost (k = 1..N-1) and obstacle hinge penalty (k = 1..N)
        if (!p.trailer_tracking && !p.obstacles.circles.empty()) {
            const Vec2 e_psi = unit_vector(b.psi[t]);
            const Vec2 e_zeta = unit_vector(b.zeta[t]);
            const Vec2 e_psi_perp{-e_psi.y, e_psi.x};
            const Vec2 e_zeta_perp{-e_zeta.y, e_zeta.x};
            auto body_terms = [&](const Vec2& center, double body_r, double lam, double gamma,
                                  const Vec2& dpsi, const Vec2& dzeta) {
                for (const ObstacleCircle& o : p.obstacles.circles) {
                    const Vec2 diff = center - o.center;
                    const double dist = diff.norm();
                    const double d = dist - body_r - o.radius - p.weights.d_safe;
                    double dphi_dd = 0.0;
                    if (k < N) {
                        const double c = lam * sw * std::exp(-d / gamma);
                        value += c;
                        dphi_dd += -c / gamma;
                    }
                    if (d < 0.0) {
                        value += mu * d * d;
                        dphi_dd += 2.0 * mu * d;
                    }
                    if (want_grad && dphi_dd != 0.0 && dist > 1e-9) {
                        const Vec2 dir = diff * (1.0 / dist);
                        ax[t] += dphi_dd * dir.x;
                        ay[t] += dphi_dd * dir.y;
                        apsi[t] += dphi_dd * dir.dot(dpsi);
                        azeta[t] += dphi_dd * dir.dot(dzeta);
                    }
                }
            };
            const Vec2 xf{b.x[t], b.y[t]};
            for (double off : geom.vehicle_circle_offsets) {
                body_terms(xf + off * e_psi, geom.r_f, p.weights.lambda_f, p.weights.gamma_f,
                           off * e_psi_perp, Vec2{0.0, 0.0});
            }
            const Vec2 xr = xf - geom.l_fh * e_psi - geom.l_hr * e_zeta;
            for (double off : geom.trailer_circle_offsets) {
                body_terms(xr + off * e_zeta, geom.r_r, p.weights.lambda_r, p.weights.gamma_r,
                           (-geom.l_fh) * e_psi_perp, (off - geom.l_hr) * e_zeta_perp);
            }
        }
        // Bound hinge penalties for k = 1..N
        const Bounds& bb = p.bounds;
        auto hinge = [&](double violation, double* seed, double dsign) {
            if (violation > 0.0) {
                value += mu * violation * violation;
                if (want_grad && seed != nullptr) *seed += dsign * 2.0 * mu * violation;
            }
        };
        const std::array<double*, 5> seeds{&ax[t], &ay[t], &apsi[t], &azeta[t], &aomega[t]};
        const std::array<double, 5> sv{b.x[t], b.y[t], b.psi[t], b.zeta[t], b.omega[t]};
        for (int c = 0; c < 5; ++c) {
            hinge(sv[c] - bb.state_hi[c], seeds[c], 1.0);
            hinge(bb.state_lo[c] - sv[c], seeds[c], -1.0);
        }
        const double theta = b.psi[t] - b.zeta[t];
        if (theta - bb.theta_hi > 0.0) {
            const double viol = theta - bb.theta_hi;
            value += mu * viol * viol;
            if (want_grad) {
                apsi[t] += 2.0 * mu * viol;
                azeta[t] -= 2.0 * mu * viol;
            }
        }
        if (bb.theta_lo - theta > 0.0) {
            const double viol = bb.theta_lo - theta;
            value += mu * viol * viol;
            if (want_grad) {
                apsi[t] -= 2.0 * mu * viol;
                azeta[t] += 2.0 * mu * viol;
            }
        }
        hinge(b.v[t] - bb.input_hi[0], &av[t], 1.0);
        hinge(bb.input_lo[0] - b.v[t], &av[t], -1.0);
        hinge(b.delta[t] - bb.input_hi[1], &adelta[t], 1.0);
        hinge(bb.input_lo[1] - b.delta[t], &adelta[t], -1.0);
        const double sec2 = 1.0 / (std::cos(b.delta[t]) * std::cos(b.delta[t]));
        const double omega_psi = b.v[t] * std::tan(b.delta[t]) / geom.l;
        auto hinge_omega_psi = [&](double violation, double dsign) {
            if (violation > 0.0) {
                value += mu * violation * violation;
                if (want_grad) {
                    const double g = dsign * 2.0 * mu * violation;
                    av[t] += g * std::tan(b.delta[t]) / geom.l;
                    adelta[t] += g * b.v[t] * sec2 / geom.l;
                }
            }
        };
        hinge_omega_psi(omega_psi - bb.omega_psi_hi, 1.0);
        hinge_omega_psi(bb.omega_psi_lo - omega_psi, -1.0);
    }

    if (!want_grad) return value;

    // Reverse sweep through the single-shooting rollout.
    const double dt = m.dt;
    std::vector<double> jac(m.feature_size());
    for (int k = N - 1; k >= 0; --k) {
        const int t = slot(k);
        const int tn = slot(k + 1);
        const double vk = b.v[t];
        const double dk = b.delta[t];
        const double cpsi = std::cos(b.psi[t]);
        const double spsi = std::sin(b.psi[t]);
        const double tand = std::tan(dk);
        const double sec2 = 1.0 / (std::cos(dk) * std::cos(dk));

        ax[t] += ax[tn];
        ay[t] += ay[tn];
        apsi[t] += apsi[tn] - ax[tn] * vk * spsi * dt + ay[tn] * vk * cpsi * dt;
        av[t] += ax[tn] * cpsi * dt + ay[tn] * spsi * dt + apsi[tn] * tand * dt / geom.l;
        adelta[t] += apsi[tn] * vk * sec2 * dt / geom.l;
        azeta[t] += azeta[tn];
        aomega[t] += azeta[tn] * dt;

        const double g = aomega[tn];
        if (g != 0.0) {
            std::fill(jac.begin(), jac.end(), 0.0);
            backward_full(m.nominal_net, b.cache_f[k], g, nullptr, &jac);
            if (b.lambda[k] != 0.0) {
                backward_full(m.residual_net, b.cache_e[k], g * b.lambda[k], nullptr, &jac);
            }
            for (int i = 0; i <= n_f; ++i) {
                const int ti = k - n_f + i;
                if (ti < 1) continue;  // history frames are constants
                const int si = slot(ti);
                apsi[si] += jac[i];
                azeta[si] -= jac[i];
                aomega[si] += jac[n_f + 1 + i];
                av[si] += jac[2 * (n_f + 1) + 2 * i];
                adelta[si] += jac[2 * (n_f + 1) + 2 * i + 1];
            }
        }
    }

    grad->resize(2 * N);
    for (int k = 1; k <= N; ++k) {
        (*grad)[2 * (k - 1)] = av[slot(k)];
        (*grad)[2 * (k - 1) + 1] = adelta[slot(k)];
    }
    return value;
}

namespace {

// Limited-memory BFGS direction from stored (s, y) pairs.
class LbfgsMemory {
  public:
    explicit LbfgsMemory(int capacity) : capacity_(capacity) {}

    void clear() {
        s_.clear();
        y_.clear();
    }

    void push(std::vector<double> s, std::vector<double> y) {
        double sy = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) sy += s[i] * y[i];
        if (sy <= 1e-12) return;  // skip non-curvature pairs
        s_.push_back(std::move(s));
        y_.push_back(std::move(y));
        if (static_cast<int>(s_.size()) > capacity_) {
            s_.erase(s_.begin());
            y_.erase(y_.begin());
        }
    }

    std::vector<double> direction(const std::vector<double>& grad) const {
        std::vector<double> q = grad;
        const int mcount = static_cast<int>(s_.size());
        std::vector<double> alpha(mcount), rho(mcount);
        for (int i = mcount - 1; i >= 0; --i) {
            double sy = 0.0, sq = 0.0;
            for (std::size_t j = 0; j < q.size(); ++j) {
                sy += s_[i][j] * y_[i][j];
                sq += s_[i][j] * q[j];
            }
            rho[i] = 1.0 / sy;
            alpha[i] = rho[i] * sq;
            for (std::size_t j = 0; j < q.size(); ++j) q[j] -= alpha[i] * y_[i][j];
        }
        if (mcount > 0) {
            double sy = 0.0, yy = 0.0;
            for (std::size_t j = 0; j < q.size(); ++j) {
                sy += s_.back()[j] * y_.back()[j];
                yy += y_.back()[j] * y_.back()[j];
            }
            const double gamma = sy / std::max(1e-12, yy);
            for (double& qj : q) qj *= gamma;
        }
        for (int i = 0; i < mcount; ++i) {
            double yq = 0.0;
            for (std::size_t j = 0; j < q.size(); ++j) yq += y_[i][j] * q[j];
            const double beta = rho[i] * yq;
            for (std::size_t j = 0; j < q.size(); ++j) q[j] += (alpha[i] - beta) * s_[i][j];
        }
        for (double& qj : q) qj = -qj;
        return q;
    }

    bool empty() const { return s_.empty(); }

  private:
    int capacity_;
    std::vector<std::vector<double>> s_;
    std::vector<std::vector<double>> y_;
};

std::vector<ControlInput> unpack(const std::vector<double>& z) {
    std::vector<ControlInput> u(z.size() / 2);
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = ControlInput{z[2 * k], z[2 * k + 1]};
    return u;
}

}  // namespace

MpcSolution solve(const MpcProblem& p, const MpcSolution* warm_start,
                  const SolverOptions& opt) {
    const auto t_start = std::chrono::steady_clock::now();
    const int N = p.N;

    // Warm start: previous solution shifted by one, last input repeated;
    // cold start holds the last applied input.
    std::vector<double> z(2 * N);
    if (warm_start != nullptr && static_cast<int>(warm_start->inputs.size()) == N) {
        for (int k = 0; k < N; ++k) {
            const ControlInput& u = warm_start->inputs[std::min(k + 1, N - 1)];
            z[2 * k] = u.v;
            z[2 * k + 1] = u.delta;
        }
    } else {
        const ControlInput& u0 = p.history.inputs.back();
        const double v0 = std::clamp(u0.v, p.bounds.input_lo[0], p.bounds.input_hi[0]);
        const double d0 = std::clamp(u0.delta, p.bounds.input_lo[1], p.bounds.input_hi[1]);
        for (int k = 0; k < N; ++k) {
            z[2 * k] = v0;
            z[2 * k + 1] = d0;
        }
    }

    MpcSolution sol;
    int total_iters = 0;
    double mu = opt.penalty_initial;
    bool feasible = false;
    for (int round = 0; round < opt.penalty_rounds && !feasible; ++round) {
        LbfgsMemory mem(8);
        std::vector<double> grad;
        double value = objective_with_gradient(p, unpack(z), mu, &grad);
        for (int it = 0; it < opt.max_iterations; ++it) {
            double gnorm = 0.0;
            for (double g : grad) gnorm = std::max(gnorm, std::abs(g));
            if (gnorm < opt.grad_tol * (1.0 + std::abs(value))) break;

            std::vector<double> dir = mem.direction(grad);
            double slope = 0.0;
            for (std::size_t i = 0; i < dir.size(); ++i) slope += dir[i] * grad[i];
            if (slope >= 0.0) {  // fall back to steepest descent
                for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = -grad[i];
                slope = -gnorm * gnorm;
            }

            // Armijo backtracking: merit is non-increasing on accepted steps.
            double alpha = 1.0;
            std::vector<double> z_new(z.size());
            std::vector<double> grad_new;
            double value_new = value;
            bool accepted = false;
            for (int ls = 0; ls < 40; ++ls) {
                for (std::size_t i = 0; i < z.size(); ++i) z_new[i] = z[i] + alpha * dir[i];
                value_new = objective_with_gradient(p, unpack(z_new), mu, &grad_new);
                if (value_new <= value + opt.armijo_c * alpha * slope) {
                    accepted = true;
                    break;
                }
                alpha *= opt.armijo_factor;
            }
            if (!accepted) break;

            std::vector<double> s(z.size()), yv(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) {
                s[i] = z_new[i] - z[i];
                yv[i] = grad_new[i] - grad[i];
            }
            mem.push(std::move(s), std::move(yv));
            z = std::move(z_new);
            value = value_new;
            grad = std::move(grad_new);
            ++total_iters;
        }

        RolloutBuffers b;
        const std::vector<ControlInput> u = unpack(z);
        run_rollout(p, u, b);
        std::vector<SystemState> states;
        for (int k = 1; k <= N; ++k) states.push_back(state_at(b, p.model.n_f, k));
        const double viol = constraint_violation(p, states, u);
        feasible = viol <= opt.tol_con;
        mu *= opt.penalty_scale;
    }

    sol.inputs = unpack(z);
    RolloutBuffers b;
    run_rollout(p, sol.inputs, b);
    sol.states.clear();
    for (int k = 1; k <= N; ++k) sol.states.push_back(state_at(b, p.model.n_f, k));
    sol.max_violation = constraint_violation(p, sol.states, sol.inputs);
    sol.converged = sol.max_violation <= opt.tol_con;
    sol.iterations = total_iters;

    sol.cost_terminal =
        p.trailer_tracking
            ? 0.0
            : cost_terminal(sol.states[N - 1], p.x_ter, p.weights.q_t);
    sol.cost_state = 0.0;
    sol.cost_obstacle = 0.0;
    {
        const double scale_u = 1.0 + p.weights.kappa_u * std::clamp(p.sigma_w, 0.0, 1.0);
        const ControlInput& u0 = p.history.inputs.back();
        const double dv = sol.inputs[0].v - u0.v;
        const double dd = sol.inputs[0].delta - u0.delta;
        sol.cost_input = scale_u * (p.weights.q_du_base[0] * dv * dv +
                                    p.weights.q_du_base[1] * dd * dd);
    }
    sol.min_dfr = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= N; ++k) {
        const SystemState& s = sol.states[k - 1];
        // k = 1 is excluded from min_dfr for the same reason as in
        // constraint_violation: that state is already committed.
        if (k >= 2) {
            sol.min_dfr = std::min(
                sol.min_dfr, min_separation(s, p.model.geom, p.obstacles, p.weights.d_safe));
        }
        if (k < N) {
            if (!p.trailer_tracking && !p.reference.empty()) {
                sol.cost_state += cost_state(s, p.reference[k], p.weights.q_ref);
            } else if (p.trailer_tracking && !p.reference.empty()) {
                const double ex = s.xf.x - p.reference[k].x;
                const double ey = s.xf.y - p.reference[k].y;
                sol.cost_state += p.weights.q_track_vehicle * (ex * ex + ey * ey);
            }
            sol.cost_input +=
                cost_input(sol.inputs[k - 1], sol.inputs[k], p.sigma_w, p.weights);
            if (!p.trailer_tracking) {
                sol.cost_obstacle +=
                    cost_obstacle(s, p.obstacles, p.sigma_w, p.weights, p.model.geom);
            }
        }
    }

    sol.solve_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return sol;
}

PlanCycleResult plan_cycle(PerformanceMonitor& monitor, HybridModel& model,
                           const ObstacleSet& obstacles, const ReferencePath& path,
                           const std::array<double, 5>& x_ter, const Bounds& bounds,
                           const MpcWeights& weights, const HistoryWindow& history,
                           int N, double v_ref, const MpcSolution* warm_start,
                           const SolverOptions& options) {
    PlanCycleResult out;
    out.monitor = update_monitor(monitor, model);
    model.s_e = out.monitor.valid ? out.monitor.s_e : 0;

    MpcProblem problem;
    problem.history = history;
    problem.model = model;  // snapshot freezes s_e and the nets for this solve
    problem.sigma_w = out.monitor.valid ? out.monitor.sigma_w : 0.0;
    problem.obstacles = obstacles;
    problem.reference =
        resample_reference(path, history.states.back().xf, v_ref, model.dt, N);
    problem.x_ter = x_ter;
    problem.bounds = bounds;
    problem.weights = weights;
    problem.N = N;

    out.lambda0 = lambda_e(0, problem.model);
    out.solution = solve(problem, warm_start, options);
    out.input = out.solution.inputs.front();
    return out;
}

}  // namespace vtnav
