#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "vtnav/core.hpp"

using namespace vtnav;

TEST_CASE("unit_vector basic directions") {
    CHECK(unit_vector(0.0).x == doctest::Approx(1.0));
    CHECK(unit_vector(0.0).y == doctest::Approx(0.0));
    CHECK(unit_vector(M_PI / 2).x == doctest::Approx(0.0));
    CHECK(unit_vector(M_PI / 2).y == doctest::Approx(1.0));
}

TEST_CASE("hitch angle and body positions") {
    SystemGeometry g;
    SystemState s;
    s.xf = {1.0, 2.0};
    s.psi = 0.3;
    s.zeta = 0.1;
    CHECK(hitch_angle(s) == doctest::Approx(0.2));

    const Vec2 xh = hitch_position(s, g);
    CHECK(xh.x == doctest::Approx(1.0 - g.l_fh * std::cos(0.3)));
    CHECK(xh.y == doctest::Approx(2.0 - g.l_fh * std::sin(0.3)));

    const Vec2 xr = trailer_position(s, g);
    CHECK(xr.x == doctest::Approx(xh.x - g.l_hr * std::cos(0.1)));
    CHECK(xr.y == doctest::Approx(xh.y - g.l_hr * std::sin(0.1)));
}

TEST_CASE("hitch angle uses unwrapped difference") {
    SystemState s;
    s.psi = 7.0;
    s.zeta = 6.5;
    CHECK(hitch_angle(s) == doctest::Approx(0.5));
}

TEST_CASE("vehicle yaw rate") {
    SystemGeometry g;
    g.l = 1.0;
    CHECK(vehicle_yaw_rate({1.0, M_PI / 4}, g) == doctest::Approx(1.0));
    CHECK(vehicle_yaw_rate({2.0, 0.0}, g) == doctest::Approx(0.0));
    g.l = 0.65;
    CHECK(vehicle_yaw_rate({0.5, 0.2}, g) == doctest::Approx(0.5 * std::tan(0.2) / 0.65));
    CHECK_THROWS_AS(vehicle_yaw_rate({1.0, M_PI / 2}, g), std::invalid_argument);
    CHECK_THROWS_AS(vehicle_yaw_rate({1.0, -2.0}, g), std::invalid_argument);
}

TEST_CASE("covering circles at an axis-aligned pose") {
    SystemGeometry g;
    SystemState s;  // origin, psi = zeta = 0
    const CoveringCircles c = covering_circles(s, g);
    REQUIRE(c.vehicle.size() == g.vehicle_circle_offsets.size());
    REQUIRE(c.trailer.size() == g.trailer_circle_offsets.size());
    CHECK(c.vehicle[0].x == doctest::Approx(0.0));
    CHECK(c.vehicle[1].x == doctest::Approx(0.45));
    // Trailer reference point sits at -(l_fh + l_hr) along x.
    CHECK(c.trailer[0].x == doctest::Approx(-1.3 - 0.25));
    CHECK(c.trailer[1].x == doctest::Approx(-1.3 + 0.25));
    for (const Vec2& p : c.vehicle) CHECK(p.y == doctest::Approx(0.0));
    for (const Vec2& p : c.trailer) CHECK(p.y == doctest::Approx(0.0));
}

TEST_CASE("covering circles rotate with the bodies") {
    SystemGeometry g;
    SystemState s;
    s.psi = M_PI / 2;
    s.zeta = M_PI / 2;
    const CoveringCircles c = covering_circles(s, g);
    CHECK(c.vehicle[1].x == doctest::Approx(0.0));
    CHECK(c.vehicle[1].y == doctest::Approx(0.45));
    CHECK(c.trailer[0].y == doctest::Approx(-1.55));
}

TEST_CASE("wrap_angle maps into (-pi, pi]") {
    CHECK(wrap_angle(0.0) == doctest::Approx(0.0));
    CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
    CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
    CHECK(wrap_angle(3 * M_PI / 2) == doctest::Approx(-M_PI / 2));
    CHECK(wrap_angle(10 * M_PI + 0.1) == doctest::Approx(0.1));
}

TEST_CASE("history window shape checks") {
    HistoryWindow w;
    CHECK(!w.well_formed());
    w.states.resize(4);
    w.inputs.resize(4);
    CHECK(w.well_formed());
    CHECK(w.depth() == 3);
    w.inputs.resize(3);
    CHECK(!w.well_formed());
}

TEST_CASE("default bounds") {
    Bounds b;
    CHECK(b.input_hi[0] == doctest::Approx(1.2));
    CHECK(b.input_lo[0] == doctest::Approx(-0.3));
    CHECK(b.input_hi[1] == doctest::Approx(0.55));
    CHECK(b.theta_hi == doctest::Approx(1.2));
    CHECK(b.omega_psi_hi == doctest::Approx(1.5));
}
