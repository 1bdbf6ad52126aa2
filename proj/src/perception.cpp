#include "vtnav/perception.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace vtnav {

Vec2 MovingDisc::position(double t) const {
    if (keys.empty()) return {};
    if (t <= keys.front().t) return keys.front().center;
    if (t >= keys.back().t) return keys.back().center;
    for (std::size_t i = 1; i < keys.size(); ++i) {
        if (t <= keys[i].t) {
            const double span = std::max(1e-12, keys[i].t - keys[i - 1].t);
            const double a = (t - keys[i - 1].t) / span;
            return keys[i - 1].center + a * (keys[i].center - keys[i - 1].center);
        }
    }
    return keys.back().center;
}

World load_world(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_world: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || line.rfind("# vtnav-world 1", 0) != 0) {
        throw std::runtime_error("load_world: bad schema header in " + path);
    }
    World world;
    MovingDisc* current_moving = nullptr;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string kind;
        is >> kind;
        if (kind == "segment") {
            WorldSegment s;
            if (!(is >> s.a.x >> s.a.y >> s.b.x >> s.b.y)) {
                throw std::runtime_error("load_world: malformed segment in " + path);
            }
            world.segments.push_back(s);
            current_moving = nullptr;
        } else if (kind == "disc") {
            WorldDisc d;
            if (!(is >> d.center.x >> d.center.y >> d.radius)) {
                throw std::runtime_error("load_world: malformed disc in " + path);
            }
            world.discs.push_back(d);
            current_moving = nullptr;
        } else if (kind == "moving_disc") {
            MovingDisc m;
            if (!(is >> m.radius)) {
                throw std::runtime_error("load_world: malformed moving_disc in " + path);
            }
            world.moving.push_back(m);
            current_moving = &world.moving.back();
        } else if (kind == "key") {
            if (current_moving == nullptr) {
                throw std::runtime_error("load_world: key outside moving_disc in " + path);
            }
            MovingDiscKey k;
            if (!(is >> k.t >> k.center.x >> k.center.y)) {
                throw std::runtime_error("load_world: malformed key in " + path);
            }
            current_moving->keys.push_back(k);
        } else {
            throw std::runtime_error("load_world: unknown record '" + kind + "' in " + path);
        }
    }
    return world;
}

void save_world(const World& world, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_world: cannot open " + path);
    f.precision(17);
    f << "# vtnav-world 1\n";
    for (const WorldSegment& s : world.segments) {
        f << "segment " << s.a.x << ' ' << s.a.y << ' ' << s.b.x << ' ' << s.b.y << '\n';
    }
    for (const WorldDisc& d : world.discs) {
        f << "disc " << d.center.x << ' ' << d.center.y << ' ' << d.radius << '\n';
    }
    for (const MovingDisc& m : world.moving) {
        f << "moving_disc " << m.radius << '\n';
        for (const MovingDiscKey& k : m.keys) {
            f << "key " << k.t << ' ' << k.center.x << ' ' << k.center.y << '\n';
        }
    }
}

namespace {

// Ray (o + s*d, s >= 0) vs segment [a, b]; returns hit parameter s or inf.
double ray_segment(const Vec2& o, const Vec2& d, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double denom = d.x * ab.y - d.y * ab.x;
    if (std::abs(denom) < 1e-12) return std::numeric_limits<double>::infinity();
    const Vec2 ao = a - o;
    const double s = (ao.x * ab.y - ao.y * ab.x) / denom;
    const double u = (ao.x * d.y - ao.y * d.x) / denom;
    if (s >= 0.0 && u >= 0.0 && u <= 1.0) return s;
    return std::numeric_limits<double>::infinity();
}

// Ray vs circle; returns smallest non-negative hit parameter or inf.
double ray_circle(const Vec2& o, const Vec2& d, const Vec2& c, double r) {
    const Vec2 oc = o - c;
    const double b = 2.0 * d.dot(oc);
    const double cc = oc.dot(oc) - r * r;
    const double disc = b * b - 4.0 * cc;
    if (disc < 0.0) return std::numeric_limits<double>::infinity();
    const double sq = std::sqrt(disc);
    const double s1 = (-b - sq) / 2.0;
    const double s2 = (-b + sq) / 2.0;
    if (s1 >= 0.0) return s1;
    if (s2 >= 0.0) return s2;
    return std::numeric_limits<double>::infinity();
}

}  // namespace

std::vector<Vec2> simulate_scan(const World& world, const SystemState& pose,
                                const ScanSpec& spec, double t) {
    if (spec.beams < 1 || spec.max_range <= 0.0) {
        throw std::invalid_argument("simulate_scan: bad scan spec");
    }
    std::vector<Vec2> hits;
    for (int i = 0; i < spec.beams; ++i) {
        const double frac = spec.beams == 1 ? 0.5 : static_cast<double>(i) / (spec.beams - 1);
        const double angle = pose.psi - spec.fov / 2.0 + frac * spec.fov;
        const Vec2 dir = unit_vector(angle);
        double best = spec.max_range;
        for (const WorldSegment& s : world.segments) {
            best = std::min(best, ray_segment(pose.xf, dir, s.a, s.b));
        }
        for (const WorldDisc& d : world.discs) {
            best = std::min(best, ray_circle(pose.xf, dir, d.center, d.radius));
        }
        for (const MovingDisc& m : world.moving) {
            best = std::min(best, ray_circle(pose.xf, dir, m.position(t), m.radius));
        }
        if (best < spec.max_range) {
            hits.push_back(pose.xf + best * dir);
        }
    }
    return hits;
}

OccupancyGrid rasterize(const std::vector<Vec2>& points, const GridSpec& spec) {
    if (spec.resolution <= 0.0 || spec.width < 1 || spec.height < 1) {
        throw std::invalid_argument("rasterize: bad grid spec");
    }
    OccupancyGrid grid;
    grid.origin = spec.origin;
    grid.resolution = spec.resolution;
    grid.width = spec.width;
    grid.height = spec.height;
    grid.occupancy.assign(static_cast<std::size_t>(spec.width) * spec.height, 0);
    for (const Vec2& p : points) {
        const int ix = grid.cell_x(p.x);
        const int iy = grid.cell_y(p.y);
        if (ix >= 0 && iy >= 0 && ix < grid.width && iy < grid.height) {
            grid.set(ix, iy, true);
        }
    }
    return grid;
}

std::vector<int> dbscan(const std::vector<Vec2>& points, double eps, int min_pts) {
    if (eps <= 0.0 || min_pts < 1) throw std::invalid_argument("dbscan: bad parameters");
    const int n = static_cast<int>(points.size());
    const double eps2 = eps * eps;
    constexpr int kUnvisited = -2;
    constexpr int kNoise = -1;
    std::vector<int> label(n, kUnvisited);

    auto neighbors = [&](int i) {
        std::vector<int> out;
        for (int j = 0; j < n; ++j) {
            const Vec2 d = points[j] - points[i];
            if (d.dot(d) <= eps2) out.push_back(j);
        }
        return out;
    };

    int next_cluster = 0;
    for (int i = 0; i < n; ++i) {
        if (label[i] != kUnvisited) continue;
        std::vector<int> nbrs = neighbors(i);
        if (static_cast<int>(nbrs.size()) < min_pts) {
            label[i] = kNoise;
            continue;
        }
        const int cid = next_cluster++;
        label[i] = cid;
        std::vector<int> frontier = std::move(nbrs);
        for (std::size_t qi = 0; qi < frontier.size(); ++qi) {
            const int j = frontier[qi];
            if (label[j] == kNoise) label[j] = cid;  // border point, first reach wins
            if (label[j] != kUnvisited) continue;
            label[j] = cid;
            std::vector<int> jn = neighbors(j);
            if (static_cast<int>(jn.size()) >= min_pts) {
                frontier.insert(frontier.end(), jn.begin(), jn.end());
            }
        }
    }
    return label;
}

ObstacleSet clusters_to_circles(const std::vector<Vec2>& points,
                                const std::vector<int>& labels, double min_radius) {
    if (points.size() != labels.size()) {
        throw std::invalid_argument("clusters_to_circles: size mismatch");
    }
    int n_clusters = 0;
    for (int l : labels) n_clusters = std::max(n_clusters, l + 1);

    ObstacleSet out;
    for (int c = 0; c < n_clusters; ++c) {
        Vec2 centroid;
        int count = 0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (labels[i] == c) {
                centroid = centroid + points[i];
                ++count;
            }
        }
        if (count == 0) continue;
        centroid = centroid * (1.0 / count);
        double radius = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (labels[i] == c) radius = std::max(radius, (points[i] - centroid).norm());
        }
        out.circles.push_back({centroid, std::max(radius, min_radius)});
    }
    return out;
}

}  // namespace vtnav
