#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>

#include "doctest.h"
#include "vtnav/globalpath.hpp"

using namespace vtnav;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

OccupancyGrid empty_grid(int w, int h, double res, Vec2 origin = {0.0, 0.0}) {
    OccupancyGrid g;
    g.origin = origin;
    g.resolution = res;
    g.width = w;
    g.height = h;
    g.occupancy.assign(static_cast<std::size_t>(w) * h, 0);
    return g;
}

// Fills the cells covered by the world-frame axis-aligned box.
void block_box(OccupancyGrid& g, double x0, double y0, double x1, double y1) {
    for (int iy = 0; iy < g.height; ++iy) {
        for (int ix = 0; ix < g.width; ++ix) {
            const double cx = g.origin.x + (ix + 0.5) * g.resolution;
            const double cy = g.origin.y + (iy + 0.5) * g.resolution;
            if (cx >= x0 && cx <= x1 && cy >= y0 && cy <= y1) g.set(ix, iy, true);
        }
    }
}

}  // namespace

TEST_CASE("distance field hand values") {
    OccupancyGrid g = empty_grid(5, 5, 0.5);
    g.set(2, 2, true);
    const auto field = distance_field(g);
    auto at = [&](int x, int y) { return field[static_cast<std::size_t>(y) * 5 + x]; };
    CHECK(at(2, 2) == doctest::Approx(0.0));
    CHECK(at(3, 2) == doctest::Approx(0.5));
    CHECK(at(2, 0) == doctest::Approx(1.0));
    CHECK(at(3, 3) == doctest::Approx(0.5 * std::sqrt(2.0)));
    CHECK(at(4, 4) == doctest::Approx(0.5 * std::sqrt(8.0)));

    // Two seeds: each cell takes the nearer one.
    g.set(0, 0, true);
    const auto f2 = distance_field(g);
    CHECK(f2[0] == doctest::Approx(0.0));
    CHECK(f2[1] == doctest::Approx(0.5));

    // A fully free grid has no finite distances.
    const auto f3 = distance_field(empty_grid(4, 4, 0.5));
    for (double v : f3) CHECK(v == kInf);
}

TEST_CASE("grid lower bound never exceeds the euclidean distance in free space") {
    OccupancyGrid g = empty_grid(100, 100, 0.1);
    g.set(0, 0, true);  // far-away obstacle so the clearance test is non-trivial
    const Vec2 a{2.05, 2.05}, b{7.85, 6.15};
    const double lb = grid_lower_bound(g, a, b, 0.3);
    CHECK(lb < kInf);
    CHECK(lb <= (a - b).norm() + 1e-9);
    CHECK(lb > 0.8 * (a - b).norm());
}

TEST_CASE("grid lower bound grows around obstacles and detects disconnection") {
    OccupancyGrid g = empty_grid(100, 100, 0.1);
    // Vertical wall at x ~ 5 m leaving a gap only above y = 8 m.
    block_box(g, 4.9, 0.0, 5.1, 8.0);
    const Vec2 a{2.0, 2.0}, b{8.0, 2.0};
    const double lb = grid_lower_bound(g, a, b, 0.2);
    CHECK(lb < kInf);
    CHECK(lb > (a - b).norm());  // must detour over the wall

    // Sealing the gap disconnects the two sides.
    block_box(g, 4.9, 0.0, 5.1, 10.0);
    CHECK(grid_lower_bound(g, a, b, 0.2) == kInf);

    // Out-of-grid start is unreachable.
    CHECK(grid_lower_bound(g, {-5.0, 2.0}, b, 0.2) == kInf);
}

TEST_CASE("hybrid A* drives straight down an open corridor") {
    OccupancyGrid g = empty_grid(100, 100, 0.1);
    SystemGeometry geom;
    HybridAStarParams params;
    const PathPose start{{2.0, 5.0}, 0.0};
    const PathPose goal{{8.0, 5.0}, 0.0};
    const ReferencePath path = hybrid_astar(g, start, goal, geom, params);
    REQUIRE(path.poses.size() > 2);
    CHECK(path.arc_length.front() == 0.0);
    // Arc lengths are cumulative and consistent with pose spacing.
    for (std::size_t i = 1; i < path.arc_length.size(); ++i) {
        CHECK(path.arc_length[i] > path.arc_length[i - 1]);
        const double ds = (path.poses[i].position - path.poses[i - 1].position).norm();
        CHECK(path.arc_length[i] - path.arc_length[i - 1] >= ds - 1e-9);
    }
    // Straight-line query: length close to 6 m, end near the goal.
    CHECK(path.length() == doctest::Approx(6.0).epsilon(0.1));
    CHECK((path.poses.back().position - goal.position).norm() <= params.pos_tol + 1e-9);
    CHECK(std::abs(wrap_angle(path.poses.back().heading - goal.heading)) <=
          params.ang_tol + 1e-9);
}

TEST_CASE("hybrid A* degenerate and error cases") {
    OccupancyGrid g = empty_grid(60, 60, 0.1);
    SystemGeometry geom;
    HybridAStarParams params;

    // Start within tolerance of the goal returns the single start pose.
    const PathPose p{{3.0, 3.0}, 0.2};
    const ReferencePath trivial = hybrid_astar(g, p, {{3.1, 3.0}, 0.2}, geom, params);
    CHECK(trivial.poses.size() == 1);
    CHECK(trivial.length() == 0.0);

    // Colliding endpoints are rejected up front.
    OccupancyGrid blocked = g;
    block_box(blocked, 2.8, 2.8, 3.2, 3.2);
    CHECK_THROWS_AS(hybrid_astar(blocked, p, {{5.0, 5.0}, 0.0}, geom, params),
                    std::invalid_argument);
    CHECK_THROWS_AS(hybrid_astar(blocked, {{5.0, 5.0}, 0.0}, p, geom, params),
                    std::invalid_argument);

    // A goal walled off on all sides raises NoPathError.
    OccupancyGrid walled = g;
    block_box(walled, 3.2, 3.2, 6.4, 3.3);
    block_box(walled, 3.2, 6.3, 6.4, 6.4);
    block_box(walled, 3.2, 3.2, 3.3, 6.4);
    block_box(walled, 6.3, 3.2, 6.4, 6.4);
    CHECK_THROWS_AS(hybrid_astar(walled, {{1.0, 1.0}, 0.0}, {{4.3, 4.8}, 0.0}, geom, params),
                    NoPathError);
}

TEST_CASE("hybrid A* cost respects the grid lower bound around an obstacle") {
    OccupancyGrid g = empty_grid(120, 120, 0.1);
    block_box(g, 5.9, 0.0, 6.1, 8.0);  // wall with a gap above y = 8 m
    SystemGeometry geom;
    HybridAStarParams params;
    const PathPose start{{3.0, 3.0}, M_PI / 2};
    const PathPose goal{{9.0, 3.0}, -M_PI / 2};
    const ReferencePath path = hybrid_astar(g, start, goal, geom, params);
    const double lb = grid_lower_bound(g, start.position, goal.position, geom.r_f);
    CHECK(lb < kInf);
    CHECK(path.length() + params.pos_tol >= lb);
    CHECK(path.length() > (start.position - goal.position).norm());  // forced detour
    // The path never dips below the wall gap while crossing x = 6.
    for (const PathPose& pose : path.poses) {
        if (std::abs(pose.position.x - 6.0) < 0.2) CHECK(pose.position.y > 8.0);
    }
}

TEST_CASE("resample_reference projects and clamps") {
    // Straight path from (0,0) to (10,0) at 0.1 m spacing.
    ReferencePath path;
    for (int i = 0; i <= 100; ++i) {
        path.poses.push_back(PathPose{{0.1 * i, 0.0}, 0.0});
        path.arc_length.push_back(0.1 * i);
    }
    const auto refs = resample_reference(path, {2.03, 0.5}, 0.5, 0.1, 4);
    REQUIRE(refs.size() == 5);
    CHECK(refs[0].x == doctest::Approx(2.0));  // nearest-pose projection
    for (int k = 0; k <= 4; ++k) {
        CHECK(refs[k].x == doctest::Approx(2.0 + 0.05 * k));
        CHECK(refs[k].y == doctest::Approx(0.0));
    }
    // Near the end the samples clamp at the final pose.
    const auto tail = resample_reference(path, {9.9, 0.0}, 1.0, 0.5, 3);
    CHECK(tail[0].x == doctest::Approx(9.9));
    CHECK(tail[1].x == doctest::Approx(10.0));
    CHECK(tail[3].x == doctest::Approx(10.0));

    CHECK_THROWS_AS(resample_reference(ReferencePath{}, {0, 0}, 0.5, 0.1, 3),
                    std::invalid_argument);
}
