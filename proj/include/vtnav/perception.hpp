#ifndef VTNAV_PERCEPTION_HPP
#define VTNAV_PERCEPTION_HPP

#include <string>
#include <vector>

#include "vtnav/core.hpp"

namespace vtnav {

struct OccupancyGrid {
    Vec2 origin;            // world position of cell (0,0)
    double resolution{0.1};  // meters / cell
    int width{1};
    int height{1};
    std::vector<std::uint8_t> occupancy;  // row-major, height rows of width

    bool occupied(int ix, int iy) const {
        if (ix < 0 || iy < 0 || ix >= width || iy >= height) return true;  // outside = blocked
        return occupancy[static_cast<std::size_t>(iy) * width + ix] != 0;
    }
    void set(int ix, int iy, bool occ) {
        occupancy[static_cast<std::size_t>(iy) * width + ix] = occ ? 1 : 0;
    }
    int cell_x(double wx) const {
        return static_cast<int>(std::floor((wx - origin.x) / resolution));
    }
    int cell_y(double wy) const {
        return static_cast<int>(std::floor((wy - origin.y) / resolution));
    }
};

struct ObstacleCircle {
    Vec2 center;
    double radius{0.0};
};

struct ObstacleSet {
    std::vector<ObstacleCircle> circles;
    int count() const { return static_cast<int>(circles.size()); }
};

/// Static segment walls, static discs, and scripted moving discs
/// (piecewise-linear position vs time).
struct WorldSegment {
    Vec2 a, b;
};

struct WorldDisc {
    Vec2 center;
    double radius{0.3};
};

struct MovingDiscKey {
    double t{0.0};
    Vec2 center;
};

struct MovingDisc {
    double radius{0.3};
    std::vector<MovingDiscKey> keys;  // sorted by t
    Vec2 position(double t) const;
};

struct World {
    std::vector<WorldSegment> segments;
    std::vector<WorldDisc> discs;
    std::vector<MovingDisc> moving;
};

World load_world(const std::string& path);
void save_world(const World& world, const std::string& path);

struct ScanSpec {
    int beams{360};
    double max_range{12.0};
    double fov{2.0 * M_PI};  // centered on vehicle heading
};

/// Ray-casts beams from the vehicle pose against world shapes at time t;
/// returns hit points in the world frame.
std::vector<Vec2> simulate_scan(const World& world, const SystemState& pose,
                                const ScanSpec& spec, double t = 0.0);

struct GridSpec {
    Vec2 origin;
    double resolution{0.1};
    int width{200};
    int height{200};
};

OccupancyGrid rasterize(const std::vector<Vec2>& points, const GridSpec& spec);

/// Standard density-based clustering; returns a label per point
/// (>= 0 cluster id, -1 noise). Border points join the first cluster
/// that reaches them in scan order, so labels are deterministic.
std::vector<int> dbscan(const std::vector<Vec2>& points, double eps, int min_pts);

/// Per cluster: center = centroid, radius = max distance to centroid
/// (clamped below by min_radius); noise points are dropped.
ObstacleSet clusters_to_circles(const std::vector<Vec2>& points,
                                const std::vector<int>& labels,
                                double min_radius = 0.1);

}  // namespace vtnav

#endif  // VTNAV_PERCEPTION_HPP
