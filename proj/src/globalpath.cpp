#include "vtnav/globalpath.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <unordered_map>

namespace vtnav {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Finite sentinel for "no source in sight" inside the distance transform.
// Real squared cell distances never get near it, and keeping it finite avoids
// inf - inf when a row or column mixes reached and unreached cells.
constexpr double kFarSq = 1e12;

// Felzenszwalb 1-D squared distance transform.
void dt_1d(const std::vector<double>& f, std::vector<double>& d) {
    const int n = static_cast<int>(f.size());
    d.assign(n, 0.0);
    std::vector<int> v(n, 0);
    std::vector<double> z(n + 1, 0.0);
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

std::vector<double> distance_field(const OccupancyGrid& grid) {
    const int w = grid.width, h = grid.height;
    std::vector<double> sq(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            sq[static_cast<std::size_t>(y) * w + x] = grid.occupied(x, y) ? 0.0 : kFarSq;
        }
    }
    // columns
    std::vector<double> col(h), out(h);
    for (int x = 0; x < w; ++x) {
        bool any = false;
        for (int y = 0; y < h; ++y) {
            col[y] = sq[static_cast<std::size_t>(y) * w + x];
            any = any || col[y] == 0.0;
        }
        if (!any) continue;
        dt_1d(col, out);
        for (int y = 0; y < h; ++y) sq[static_cast<std::size_t>(y) * w + x] = out[y];
    }
    // rows
    std::vector<double> row(w), rout(w);
    for (int y = 0; y < h; ++y) {
        bool reached = false;
        for (int x = 0; x < w; ++x) {
            row[x] = sq[static_cast<std::size_t>(y) * w + x];
            reached = reached || row[x] < kFarSq;
        }
        if (!reached) continue;
        dt_1d(row, rout);
        for (int x = 0; x < w; ++x) sq[static_cast<std::size_t>(y) * w + x] = rout[x];
    }
    for (double& v : sq) v = v < 0.5 * kFarSq ? std::sqrt(v) * grid.resolution : kInf;
    return sq;
}

namespace {

double field_at(const OccupancyGrid& grid, const std::vector<double>& field,
                const Vec2& p) {
    const int ix = grid.cell_x(p.x);
    const int iy = grid.cell_y(p.y);
    if (ix < 0 || iy < 0 || ix >= grid.width || iy >= grid.height) return 0.0;
    return field[static_cast<std::size_t>(iy) * grid.width + ix];
}

// Dijkstra over free cells (clearance respected), 8-connected.
std::vector<double> grid_dijkstra(const OccupancyGrid& grid,
                                  const std::vector<double>& dist_field,
                                  int gx, int gy, double clearance) {
    const int w = grid.width, h = grid.height;
    std::vector<double> cost(static_cast<std::size_t>(w) * h, kInf);
    auto idx = [w](int x, int y) { return static_cast<std::size_t>(y) * w + x; };
    auto free_cell = [&](int x, int y) {
        return x >= 0 && y >= 0 && x < w && y < h && dist_field[idx(x, y)] >= clearance;
    };
    if (!free_cell(gx, gy)) return cost;
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    cost[idx(gx, gy)] = 0.0;
    open.emplace(0.0, idx(gx, gy));
    const double res = grid.resolution;
    const double diag = res * std::sqrt(2.0);
    while (!open.empty()) {
        auto [c, i] = open.top();
        open.pop();
        if (c > cost[i]) continue;
        const int x = static_cast<int>(i % w);
        const int y = static_cast<int>(i / w);
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0) continue;
                const int nx = x + dx, ny = y + dy;
                if (!free_cell(nx, ny)) continue;
                const double step = (dx != 0 && dy != 0) ? diag : res;
                const double nc = c + step;
                if (nc < cost[idx(nx, ny)]) {
                    cost[idx(nx, ny)] = nc;
                    open.emplace(nc, idx(nx, ny));
                }
            }
        }
    }
    return cost;
}

// Octile grid distance overestimates the shortest free-space path by at most
// this factor; dividing by it keeps the heuristic a lower bound.
constexpr double kOctileFactor = 1.0824;

}  // namespace

double grid_lower_bound(const OccupancyGrid& grid, const Vec2& start, const Vec2& goal,
                        double clearance) {
    const std::vector<double> field = distance_field(grid);
    const std::vector<double> cost =
        grid_dijkstra(grid, field, grid.cell_x(goal.x), grid.cell_y(goal.y), clearance);
    const int ix = grid.cell_x(start.x);
    const int iy = grid.cell_y(start.y);
    if (ix < 0 || iy < 0 || ix >= grid.width || iy >= grid.height) return kInf;
    const double octile = cost[static_cast<std::size_t>(iy) * grid.width + ix];
    if (octile == kInf) return kInf;
    return std::max(0.0, octile / kOctileFactor - grid.resolution * std::sqrt(2.0));
}

namespace {

struct Node {
    double x, y, psi;
    double g;                 // cost from start
    int parent;               // index into the node pool
    double steering;          // primitive that produced this node
};

struct OpenItem {
    double f;
    double h;
    std::uint64_t order;      // insertion tie-break
    int node;
    bool operator>(const OpenItem& o) const {
        if (f != o.f) return f > o.f;
        if (h != o.h) return h > o.h;
        return order > o.order;
    }
};

bool pose_collision_free(const OccupancyGrid& grid, const std::vector<double>& field,
                         const SystemState& s, const SystemGeometry& geom,
                         double margin) {
    const CoveringCircles circles = covering_circles(s, geom);
    for (const Vec2& c : circles.vehicle) {
        if (field_at(grid, field, c) < geom.r_f + margin) return false;
    }
    return true;
}

}  // namespace

ReferencePath hybrid_astar(const OccupancyGrid& grid, const PathPose& start,
                           const PathPose& goal, const SystemGeometry& geom,
                           const HybridAStarParams& params) {
    const std::vector<double> field = distance_field(grid);
    const double check_step = grid.resolution / 4.0;
    const double margin = 0.5 * check_step;

    auto vehicle_state = [](const PathPose& p) {
        SystemState s;
        s.xf = p.position;
        s.psi = p.heading;
        s.zeta = p.heading;  // trailer ignored: global planning is vehicle-only
        return s;
    };
    if (!pose_collision_free(grid, field, vehicle_state(start), geom, 0.0)) {
        throw std::invalid_argument("hybrid_astar: start pose in collision");
    }
    if (!pose_collision_free(grid, field, vehicle_state(goal), geom, 0.0)) {
        throw std::invalid_argument("hybrid_astar: goal pose in collision");
    }

    auto goal_reached = [&](double x, double y, double psi) {
        const double dp = std::hypot(x - goal.position.x, y - goal.position.y);
        return dp <= params.pos_tol &&
               std::abs(wrap_angle(psi - goal.heading)) <= params.ang_tol;
    };

    // Degenerate query: already at the goal.
    if (goal_reached(start.position.x, start.position.y, start.heading)) {
        ReferencePath path;
        path.poses.push_back(start);
        path.arc_length.push_back(0.0);
        return path;
    }

    const std::vector<double> h_grid = grid_dijkstra(
        grid, field, grid.cell_x(goal.position.x), grid.cell_y(goal.position.y), geom.r_f);
    auto heuristic = [&](double x, double y) {
        const double euclid = std::hypot(x - goal.position.x, y - goal.position.y);
        const int ix = grid.cell_x(x);
        const int iy = grid.cell_y(y);
        double hg = kInf;
        if (ix >= 0 && iy >= 0 && ix < grid.width && iy < grid.height) {
            const double octile = h_grid[static_cast<std::size_t>(iy) * grid.width + ix];
            if (octile < kInf) {
                hg = std::max(0.0, octile / kOctileFactor - grid.resolution * std::sqrt(2.0));
            }
        }
        if (hg == kInf) return kInf;  // cell disconnected from goal
        return std::max(euclid, hg);
    };

    const double arc_len = params.arc_cells * grid.resolution;
    const std::array<double, 5> steerings{-params.delta_max, -params.delta_max / 2.0, 0.0,
                                          params.delta_max / 2.0, params.delta_max};

    auto bin_of = [&](double x, double y, double psi) {
        const int ix = grid.cell_x(x);
        const int iy = grid.cell_y(y);
        double a = std::fmod(psi, 2.0 * M_PI);
        if (a < 0) a += 2.0 * M_PI;
        const int ia = std::min(params.angle_bins - 1,
                                static_cast<int>(a / (2.0 * M_PI) * params.angle_bins));
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(ix)) << 40) ^
               (static_cast<std::uint64_t>(static_cast<std::uint32_t>(iy)) << 16) ^
               static_cast<std::uint64_t>(ia);
    };

    std::vector<Node> pool;
    std::unordered_map<std::uint64_t, double> best_g;
    std::priority_queue<OpenItem, std::vector<OpenItem>, std::greater<>> open;
    std::uint64_t order = 0;

    pool.push_back(Node{start.position.x, start.position.y, start.heading, 0.0, -1, 0.0});
    const double h0 = heuristic(start.position.x, start.position.y);
    if (h0 == kInf) throw NoPathError("hybrid_astar: goal disconnected in 2-D grid");
    best_g[bin_of(start.position.x, start.position.y, start.heading)] = 0.0;
    open.push(OpenItem{h0, h0, order++, 0});

    int expansions = 0;
    int goal_node = -1;
    while (!open.empty()) {
        const OpenItem item = open.top();
        open.pop();
        const Node cur = pool[item.node];
        const auto bg = best_g.find(bin_of(cur.x, cur.y, cur.psi));
        if (bg != best_g.end() && bg->second + 1e-12 < cur.g) continue;  // stale entry
        if (goal_reached(cur.x, cur.y, cur.psi)) {
            goal_node = item.node;
            break;
        }
        if (++expansions > params.node_budget) {
            throw NoPathError("hybrid_astar: node budget exhausted");
        }
        for (double delta : steerings) {
            const double kappa = std::tan(delta) / geom.l;
            // exact arc endpoint
            double nx, ny, npsi;
            if (std::abs(kappa) < 1e-12) {
                npsi = cur.psi;
                nx = cur.x + arc_len * std::cos(cur.psi);
                ny = cur.y + arc_len * std::sin(cur.psi);
            } else {
                npsi = cur.psi + kappa * arc_len;
                nx = cur.x + (std::sin(npsi) - std::sin(cur.psi)) / kappa;
                ny = cur.y - (std::cos(npsi) - std::cos(cur.psi)) / kappa;
            }
            // dense collision check along the primitive
            bool blocked = false;
            const int n_checks = std::max(2, static_cast<int>(std::ceil(arc_len / check_step)));
            for (int ci = 1; ci <= n_checks && !blocked; ++ci) {
                const double s = arc_len * ci / n_checks;
                double px, py, ppsi;
                if (std::abs(kappa) < 1e-12) {
                    ppsi = cur.psi;
                    px = cur.x + s * std::cos(cur.psi);
                    py = cur.y + s * std::sin(cur.psi);
                } else {
                    ppsi = cur.psi + kappa * s;
                    px = cur.x + (std::sin(ppsi) - std::sin(cur.psi)) / kappa;
                    py = cur.y - (std::cos(ppsi) - std::cos(cur.psi)) / kappa;
                }
                SystemState s2;
                s2.xf = {px, py};
                s2.psi = ppsi;
                s2.zeta = ppsi;
                if (!pose_collision_free(grid, field, s2, geom, margin)) blocked = true;
            }
            if (blocked) continue;
            const double ng = cur.g + arc_len;
            const std::uint64_t bin = bin_of(nx, ny, npsi);
            auto it = best_g.find(bin);
            if (it != best_g.end() && it->second <= ng + 1e-12) continue;
            best_g[bin] = ng;
            const double h = heuristic(nx, ny);
            if (h == kInf) continue;
            pool.push_back(Node{nx, ny, npsi, ng, item.node, delta});
            open.push(OpenItem{ng + h, h, order++, static_cast<int>(pool.size()) - 1});
        }
    }
    if (goal_node < 0) throw NoPathError("hybrid_astar: open list exhausted");

    // Reconstruct primitive chain, then densify at pose_step spacing.
    std::vector<Node> chain;
    for (int i = goal_node; i >= 0; i = pool[i].parent) chain.push_back(pool[i]);
    std::reverse(chain.begin(), chain.end());

    ReferencePath path;
    path.poses.push_back(PathPose{{chain[0].x, chain[0].y}, chain[0].psi});
    path.arc_length.push_back(0.0);
    for (std::size_t i = 1; i < chain.size(); ++i) {
        const Node& a = chain[i - 1];
        const Node& b = chain[i];
        const double kappa = std::tan(b.steering) / geom.l;
        const int n_sub = std::max(1, static_cast<int>(std::ceil(arc_len / params.pose_step)));
        for (int j = 1; j <= n_sub; ++j) {
            const double s = arc_len * j / n_sub;
            double px, py, ppsi;
            if (std::abs(kappa) < 1e-12) {
                ppsi = a.psi;
                px = a.x + s * std::cos(a.psi);
                py = a.y + s * std::sin(a.psi);
            } else {
                ppsi = a.psi + kappa * s;
                px = a.x + (std::sin(ppsi) - std::sin(a.psi)) / kappa;
                py = a.y - (std::cos(ppsi) - std::cos(a.psi)) / kappa;
            }
            path.poses.push_back(PathPose{{px, py}, ppsi});
            path.arc_length.push_back(path.arc_length.back() + arc_len / n_sub);
        }
    }
    return path;
}

std::vector<Vec2> resample_reference(const ReferencePath& path, const Vec2& current,
                                     double v_ref, double dt, int N) {
    if (path.poses.empty()) {
        throw std::invalid_argument("resample_reference: empty path");
    }
    // nearest pose -> arc length projection
    std::size_t best = 0;
    double best_d = kInf;
    for (std::size_t i = 0; i < path.poses.size(); ++i) {
        const double d = (path.poses[i].position - current).norm();
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    const double s0 = path.arc_length[best];
    const double total = path.length();

    auto position_at = [&](double s) {
        if (s <= 0.0) return path.poses.front().position;
        if (s >= total) return path.poses.back().position;
        const auto it = std::upper_bound(path.arc_length.begin(), path.arc_length.end(), s);
        const std::size_t hi = static_cast<std::size_t>(it - path.arc_length.begin());
        const std::size_t lo = hi - 1;
        const double span = std::max(1e-12, path.arc_length[hi] - path.arc_length[lo]);
        const double a = (s - path.arc_length[lo]) / span;
        return path.poses[lo].position + a * (path.poses[hi].position - path.poses[lo].position);
    };

    std::vector<Vec2> refs;
    refs.reserve(N + 1);
    for (int k = 0; k <= N; ++k) {
        refs.push_back(position_at(s0 + k * v_ref * dt));
    }
    return refs;
}

void save_path(const ReferencePath& path, const std::string& file) {
    std::ofstream f(file);
    if (!f) throw std::runtime_error("save_path: cannot open " + file);
    f.precision(17);
    f << "s x y psi\n";
    for (std::size_t i = 0; i < path.poses.size(); ++i) {
        f << path.arc_length[i] << ' ' << path.poses[i].position.x << ' '
          << path.poses[i].position.y << ' ' << path.poses[i].heading << '\n';
    }
}

}  // namespace vtnav
