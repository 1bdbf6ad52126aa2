#ifndef VTNAV_GLOBALPATH_HPP
#define VTNAV_GLOBALPATH_HPP

#include <stdexcept>
#include <vector>

#include "vtnav/core.hpp"
#include "vtnav/perception.hpp"

namespace vtnav {

struct PathPose {
    Vec2 position;
    double heading{0.0};
};

struct ReferencePath {
    std::vector<PathPose> poses;
    std::vector<double> arc_length;  // cumulative, arc_length[0] == 0

    double length() const { return arc_length.empty() ? 0.0 : arc_length.back(); }
};

class NoPathError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct HybridAStarParams {
    double delta_max{0.5};   // [rad] full steering set is {-d, -d/2, 0, d/2, d}
    int angle_bins{72};
    double arc_cells{2.0};   // primitive arc length in grid cells
    double pos_tol{0.3};     // [m] goal position tolerance
    double ang_tol{0.35};    // [rad] goal heading tolerance
    int node_budget{300000};
    double pose_step{0.1};   // [m] output pose spacing
};

/// Euclidean distance [m] from each cell center to the nearest occupied cell
/// center (0 inside occupied cells).
std::vector<double> distance_field(const OccupancyGrid& grid);

/// Conservative 2-D lower bound [m] on any path of a point that must keep
/// `clearance` from occupied cells: 8-connected shortest-path distance scaled
/// below the octile overestimation factor. Infinity when disconnected.
double grid_lower_bound(const OccupancyGrid& grid, const Vec2& start, const Vec2& goal,
                        double clearance);

/// Forward-only hybrid A* over arc primitives of the Ackermann model.
/// Heuristic: max(euclidean, scaled 2-D grid shortest path), both admissible.
/// Throws std::invalid_argument when start/goal collide and NoPathError when
/// the goal is unreachable within the node budget.
ReferencePath hybrid_astar(const OccupancyGrid& grid, const PathPose& start,
                           const PathPose& goal, const SystemGeometry& geom,
                           const HybridAStarParams& params);

/// Projects the current position onto the path by nearest arc length, then
/// samples N+1 references forward at spacing v_ref * dt, clamping at the end.
std::vector<Vec2> resample_reference(const ReferencePath& path, const Vec2& current,
                                     double v_ref, double dt, int N);

void save_path(const ReferencePath& path, const std::string& file);

}  // namespace vtnav

#endif  // VTNAV_GLOBALPATH_HPP
