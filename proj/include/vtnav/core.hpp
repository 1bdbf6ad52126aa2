#ifndef VTNAV_CORE_HPP
#define VTNAV_CORE_HPP

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace vtnav {

/// 2-vector in the plane, meters unless stated otherwise.
struct Vec2 {
    double x{0.0};
    double y{0.0};

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

/// Planning state: rear-axle position, vehicle yaw, trailer yaw, trailer yaw rate.
/// Yaw angles are stored unwrapped (continuous across samples).
struct SystemState {
    Vec2 xf;               // vehicle rear-axle center [m]
    double psi{0.0};       // vehicle yaw [rad]
    double zeta{0.0};      // trailer yaw [rad]
    double omega_zeta{0.0};  // trailer yaw rate [rad/s]
};

/// Control input: longitudinal velocity and steering wheel angle.
struct ControlInput {
    double v{0.0};      // [m/s]
    double delta{0.0};  // [rad], |delta| < pi/2
};

/// Fixed geometry of the vehicle-trailer system and its covering circles.
struct SystemGeometry {
    double l{0.65};      // wheelbase [m]
    double l_fh{0.4};    // rear axle -> hitch [m]
    double l_hr{0.9};    // hitch -> trailer [m]
    double r_f{0.45};    // vehicle covering-circle radius [m]
    double r_r{0.40};    // trailer covering-circle radius [m]
    // Longitudinal offsets of circle centers along each body axis, from the
    // rear axle (vehicle) and the trailer reference point (trailer).
    std::vector<double> vehicle_circle_offsets{0.0, 0.45};
    std::vector<double> trailer_circle_offsets{-0.25, 0.25};

    int n_fc() const { return static_cast<int>(vehicle_circle_offsets.size()); }
    int n_rc() const { return static_cast<int>(trailer_circle_offsets.size()); }
};

/// Aligned ring of the last n_f+1 states and inputs.
/// inputs[i] is the input applied over the step starting at states[i].
struct HistoryWindow {
    std::vector<SystemState> states;  // oldest first, n_f+1 entries
    std::vector<ControlInput> inputs;  // index-aligned with states

    int depth() const { return static_cast<int>(states.size()) - 1; }
    bool well_formed() const {
        return !states.empty() && states.size() == inputs.size();
    }
};

/// Box bounds on state/input plus hitch-angle and vehicle yaw-rate limits.
struct Bounds {
    std::array<double, 5> state_lo{-1e9, -1e9, -1e9, -1e9, -2.0};
    std::array<double, 5> state_hi{1e9, 1e9, 1e9, 1e9, 2.0};
    std::array<double, 2> input_lo{-0.3, -0.55};
    std::array<double, 2> input_hi{1.2, 0.55};
    double theta_lo{-1.2};      // hitch-angle limits [rad]
    double theta_hi{1.2};
    double omega_psi_lo{-1.5};  // vehicle yaw-rate limits [rad/s]
    double omega_psi_hi{1.5};
};

/// e(angle) = [cos(angle), sin(angle)]
inline Vec2 unit_vector(double angle) {
    return {std::cos(angle), std::sin(angle)};
}

/// Hitch angle theta = psi - zeta (unwrapped difference).
inline double hitch_angle(const SystemState& s) { return s.psi - s.zeta; }

/// Hitch position x_h = x_f - l_fh * e(psi).
inline Vec2 hitch_position(const SystemState& s, const SystemGeometry& g) {
    return s.xf - g.l_fh * unit_vector(s.psi);
}

/// Trailer position x_r = x_h - l_hr * e(zeta).
inline Vec2 trailer_position(const SystemState& s, const SystemGeometry& g) {
    return hitch_position(s, g) - g.l_hr * unit_vector(s.zeta);
}

/// Ackermann yaw rate omega_psi = v tan(delta) / l.
/// Throws if |delta| >= pi/2.
inline double vehicle_yaw_rate(const ControlInput& u, const SystemGeometry& g) {
    if (!(std::abs(u.delta) < M_PI / 2.0)) {
        throw std::invalid_argument("vehicle_yaw_rate: |delta| must be < pi/2");
    }
    return u.v * std::tan(u.delta) / g.l;
}

struct CoveringCircles {
    std::vector<Vec2> vehicle;  // n_fc centers
    std::vector<Vec2> trailer;  // n_rc centers
};

/// Centers of the covering circles in the world frame.
CoveringCircles covering_circles(const SystemState& s, const SystemGeometry& g);

/// Wrap an angle to (-pi, pi]. Display/comparison use only.
inline double wrap_angle(double a) {
    a = std::fmod(a + M_PI, 2.0 * M_PI);
    if (a <= 0.0) a += 2.0 * M_PI;
    return a - M_PI;
}

}  // namespace vtnav

#endif  // VTNAV_CORE_HPP
