#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "navsim/actions.hpp"
#include "navsim/core.hpp"

namespace navsim {

struct Point {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Point&) const = default;
};

inline double euclidean(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Agent state. Heading is radians in [0, 2pi), 0 along +x, counterclockwise positive.
struct Pose {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;

    Point position() const { return {x, y}; }
    bool operator==(const Pose&) const = default;
};

enum class CellKind { Free, Obstacle, Landmark };

struct Cell {
    int row = 0;
    int col = 0;
    bool operator==(const Cell&) const = default;
};

struct Episode {
    std::string id;
    std::string world_id;
    std::string instruction;
    Pose start;
    Point goal;
    double success_radius = 3.0;
    int max_steps = 500;
};

inline constexpr int kGridSide = 16;
inline constexpr std::size_t kPatchCount = kGridSide * kGridSide;
inline constexpr std::size_t kDefaultFeatureDim = 32;

/// Per-frame visual embedding: 256 patches (16x16, row-major) by C channels.
struct FrameFeatures {
    Matrix data;

    std::size_t dim() const { return data.cols; }
    bool operator==(const FrameFeatures&) const = default;
};

/**
 * Occupancy grid with landmark labels. Immutable after load.
 *
 * Cell (row r, col c) spans x in [c*res, (c+1)*res), y in [r*res, (r+1)*res).
 * Row 0 is the top of the map. Landmark cells are traversable.
 */
class GridWorld {
  public:
    GridWorld(std::string id, double resolution, std::vector<std::string> rows,
              std::map<char, std::string> landmark_names, double max_ray_range = 10.0)
        : id_(std::move(id)),
          resolution_(resolution),
          rows_(std::move(rows)),
          landmark_names_(std::move(landmark_names)),
          max_ray_range_(max_ray_range) {
        validate();
    }

    const std::string& id() const { return id_; }
    double resolution() const { return resolution_; }
    int width() const { return width_; }
    int height() const { return height_; }
    double max_ray_range() const { return max_ray_range_; }
    const std::map<char, std::string>& landmark_names() const { return landmark_names_; }
    const std::vector<std::string>& rows() const { return rows_; }
    const std::vector<Episode>& episodes() const { return episodes_; }

    void add_episode(Episode ep);

    char raw(Cell c) const { return rows_[c.row][c.col]; }

    CellKind kind(Cell c) const {
        const char ch = raw(c);
        if (ch == '#') return CellKind::Obstacle;
        if (ch == '.') return CellKind::Free;
        return CellKind::Landmark;
    }

    bool in_bounds(Cell c) const { return c.row >= 0 && c.col >= 0 && c.row < height_ && c.col < width_; }
    bool passable(Cell c) const { return in_bounds(c) && kind(c) != CellKind::Obstacle; }

    std::optional<Cell> cell_at(Point p) const {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0.0 || p.y < 0.0) return std::nullopt;
        Cell c{static_cast<int>(std::floor(p.y / resolution_)), static_cast<int>(std::floor(p.x / resolution_))};
        if (!in_bounds(c)) return std::nullopt;
        return c;
    }

    bool is_free(Point p) const {
        auto c = cell_at(p);
        return c && passable(*c);
    }

    Point center(Cell c) const { return {(c.col + 0.5) * resolution_, (c.row + 0.5) * resolution_}; }

    std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row) * width_ + c.col; }
    Cell cell_from_index(std::size_t i) const {
        return {static_cast<int>(i / width_), static_cast<int>(i % width_)};
    }

    // Semantic token for a cell, used by the synthetic features.
    std::string token(Cell c) const {
        switch (kind(c)) {
            case CellKind::Free: return "free";
            case CellKind::Obstacle: return "obstacle";
            case CellKind::Landmark: return "landmark:" + landmark_names_.at(raw(c));
        }
        return {};
    }

    std::vector<Cell> landmark_cells() const {
        std::vector<Cell> out;
        for (int r = 0; r < height_; ++r)
            for (int c = 0; c < width_; ++c)
                if (kind({r, c}) == CellKind::Landmark) out.push_back({r, c});
        return out;
    }

  private:
    void validate();

    std::string id_;
    double resolution_;
    std::vector<std::string> rows_;
    std::map<char, std::string> landmark_names_;
    double max_ray_range_;
    int width_ = 0;
    int height_ = 0;
    std::vector<Episode> episodes_;
};

inline void GridWorld::validate() {
    if (!(resolution_ > 0.0) || !std::isfinite(resolution_))
        throw ValidationError("resolution must be positive, got " + std::to_string(resolution_));
    if (!(max_ray_range_ > 0.0)) throw ValidationError("max_ray_range must be positive");
    if (rows_.size() < 3) throw ValidationError("world needs at least 3 rows");
    height_ = static_cast<int>(rows_.size());
    width_ = static_cast<int>(rows_.front().size());
    if (width_ < 3) throw ValidationError("world needs at least 3 columns");
    for (int r = 0; r < height_; ++r) {
        const auto& row = rows_[r];
        if (static_cast<int>(row.size()) != width_)
            throw ValidationError("row " + std::to_string(r) + " has length " + std::to_string(row.size()) +
                                  ", expected " + std::to_string(width_));
        for (int c = 0; c < width_; ++c) {
            const char ch = row[c];
            const bool boundary = r == 0 || c == 0 || r == height_ - 1 || c == width_ - 1;
            if (ch != '#' && ch != '.' && !(ch >= 'a' && ch <= 'z'))
                throw ValidationError(std::string("unknown cell character '") + ch + "' at row " +
                                      std::to_string(r));
            if (ch >= 'a' && ch <= 'z' && !landmark_names_.contains(ch))
                throw ValidationError(std::string("landmark '") + ch + "' has no name");
            if (boundary && ch != '#')
                throw ValidationError("boundary cell (" + std::to_string(r) + ", " + std::to_string(c) +
                                      ") is not an obstacle");
        }
    }
}

/// Shortest 8-connected path lengths (meters) from one cell to every cell.
/// Diagonal moves cost sqrt(2)*res and require both orthogonal neighbours
/// to be passable. Unreachable cells hold +infinity.
class DistanceField {
  public:
    DistanceField(const GridWorld& world, Cell source) : world_(&world), source_(source) {
        const std::size_t n = static_cast<std::size_t>(world.width()) * world.height();
        dist_.assign(n, std::numeric_limits<double>::infinity());
        if (!world.passable(source)) return;
        const double res = world.resolution();
        const double diag = std::sqrt(2.0) * res;
        using Item = std::pair<double, std::size_t>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
        dist_[world.index(source)] = 0.0;
        open.push({0.0, world.index(source)});
        while (!open.empty()) {
            auto [d, i] = open.top();
            open.pop();
            if (d > dist_[i]) continue;
            const Cell c = world.cell_from_index(i);
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const Cell nb{c.row + dr, c.col + dc};
                    if (!world.passable(nb)) continue;
                    if (dr != 0 && dc != 0 &&
                        (!world.passable({c.row + dr, c.col}) || !world.passable({c.row, c.col + dc})))
                        continue;
                    const double nd = d + ((dr != 0 && dc != 0) ? diag : res);
                    const std::size_t j = world.index(nb);
                    if (nd < dist_[j]) {
                        dist_[j] = nd;
                        open.push({nd, j});
                    }
                }
            }
        }
    }

    Cell source() const { return source_; }
    double cell_distance(Cell c) const { return dist_[world_->index(c)]; }
    const std::vector<double>& distances() const { return dist_; }

  private:
    const GridWorld* world_;
    Cell source_;
    std::vector<double> dist_;
};

namespace detail {

inline Cell require_free_cell(const GridWorld& world, Point p, const char* what) {
    auto c = world.cell_at(p);
    if (!c || !world.passable(*c))
        throw std::invalid_argument(std::string(what) + " point (" + std::to_string(p.x) + ", " +
                                    std::to_string(p.y) + ") is not in free space");
    return *c;
}

}  // namespace detail

/// Geodesic distance from `from` to the field's source, given the field's
/// source point `target`. Empty when unreachable.
inline std::optional<double> geodesic_via_field(const GridWorld& world, const DistanceField& field, Point from,
                                                Point target) {
    const Cell cf = detail::require_free_cell(world, from, "from");
    const Cell ct = field.source();
    if (cf == ct) return euclidean(from, target);
    const double d = field.cell_distance(cf);
    if (!std::isfinite(d)) return std::nullopt;
    return euclidean(from, world.center(cf)) + d + euclidean(world.center(ct), target);
}

/**
 * Shortest obstacle-respecting distance between two free points.
 *
 * Points sharing a cell use their straight-line distance. Otherwise the
 * result is the 8-connected cell path length plus each point's offset to
 * its cell center. Empty when no path exists.
 */
inline std::optional<double> geodesic_distance(const GridWorld& world, Point from, Point to) {
    detail::require_free_cell(world, from, "from");
    const Cell ct = detail::require_free_cell(world, to, "to");
    DistanceField field(world, ct);
    return geodesic_via_field(world, field, from, to);
}

/**
 * Distance along a ray from `origin` to the boundary of the first obstacle
 * cell it enters, by exact grid traversal. Returns `limit` when nothing is
 * hit before it. Ray passages exactly through a cell vertex count both
 * orthogonal cells as touched.
 */
inline double ray_clearance(const GridWorld& world, Point origin, double heading, double limit) {
    auto start = world.cell_at(origin);
    if (!start || !world.passable(*start)) return 0.0;
    const double res = world.resolution();
    const double dx = std::cos(heading);
    const double dy = std::sin(heading);
    int col = start->col;
    int row = start->row;
    const int step_c = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
    const int step_r = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
    constexpr double inf = std::numeric_limits<double>::infinity();
    double t_max_x = inf, t_max_y = inf, t_dx = inf, t_dy = inf;
    if (step_c != 0) {
        const double bound = (step_c > 0 ? (col + 1) : col) * res;
        t_max_x = (bound - origin.x) / dx;
        t_dx = res / std::abs(dx);
    }
    if (step_r != 0) {
        const double bound = (step_r > 0 ? (row + 1) : row) * res;
        t_max_y = (bound - origin.y) / dy;
        t_dy = res / std::abs(dy);
    }
    for (;;) {
        double t;
        if (t_max_x < t_max_y) {
            t = t_max_x;
            if (t >= limit) return limit;
            col += step_c;
            t_max_x += t_dx;
            if (!world.passable({row, col})) return t > 0.0 ? t : 0.0;
        } else if (t_max_y < t_max_x) {
            t = t_max_y;
            if (t >= limit) return limit;
            row += step_r;
            t_max_y += t_dy;
            if (!world.passable({row, col})) return t > 0.0 ? t : 0.0;
        } else {
            t = t_max_x;
            if (!std::isfinite(t) || t >= limit) return limit;
            if (!world.passable({row, col + step_c}) || !world.passable({row + step_r, col})) return t > 0.0 ? t : 0.0;
            col += step_c;
            row += step_r;
            t_max_x += t_dx;
            t_max_y += t_dy;
            if (!world.passable({row, col})) return t > 0.0 ? t : 0.0;
        }
    }
}

struct StepResult {
    Pose pose;
    bool collided = false;
};

/**
 * Executes one low-level action. Turns are exact and never collide.
 * Forward motion stops half a cell short of the first obstacle boundary
 * along the heading; `collided` reports that truncation happened.
 */
inline StepResult step(const GridWorld& world, const Pose& pose, const LowLevelAction& action) {
    StepResult out{pose, false};
    switch (action.type) {
        case ActionType::TurnLeft: out.pose.heading = normalize_angle(pose.heading + deg_to_rad(action.argument)); break;
        case ActionType::TurnRight: out.pose.heading = normalize_angle(pose.heading - deg_to_rad(action.argument)); break;
        case ActionType::Stop: break;
        case ActionType::Forward: {
            const double skin = 0.5 * world.resolution();
            const double d = action.argument;
            const double hit = ray_clearance(world, pose.position(), pose.heading, d + skin);
            double travel = d;
            if (hit < d + skin) {
                travel = std::max(0.0, hit - skin);
                out.collided = true;
            }
            out.pose.x = pose.x + travel * std::cos(pose.heading);
            out.pose.y = pose.y + travel * std::sin(pose.heading);
            break;
        }
    }
    return out;
}

inline constexpr double kFieldOfViewDeg = 90.0;

inline double ray_heading(double heading, int j) {
    const double spacing = deg_to_rad(kFieldOfViewDeg) / kGridSide;
    return heading - deg_to_rad(kFieldOfViewDeg / 2.0) + (j + 0.5) * spacing;
}

/**
 * Synthetic frame features from 16 rays over a 90 degree field of view.
 * Column j is ray j; row i is the depth sample (i + 0.5) / 16 along it.
 * Channel 0 is normalized hit depth, channel 1 the sample fraction, the
 * rest a unit-norm hashed embedding of the cell kind at the sample point.
 */
inline FrameFeatures raycast_features(const GridWorld& world, const Pose& pose, std::uint64_t seed,
                                      std::size_t dim = kDefaultFeatureDim) {
    if (dim < 3) throw ShapeError("feature dimension must be at least 3");
    FrameFeatures f{Matrix(kPatchCount, dim)};
    const double range = world.max_ray_range();
    std::unordered_map<std::string, std::vector<double>> embeddings;
    auto embed = [&](const std::string& tok) -> const std::vector<double>& {
        auto it = embeddings.find(tok);
        if (it == embeddings.end()) it = embeddings.emplace(tok, hash_embedding(tok, seed, dim - 2)).first;
        return it->second;
    };
    for (int j = 0; j < kGridSide; ++j) {
        const double theta = ray_heading(pose.heading, j);
        const double depth = std::min(ray_clearance(world, pose.position(), theta, range), range);
        const double cx = std::cos(theta);
        const double cy = std::sin(theta);
        for (int i = 0; i < kGridSide; ++i) {
            const double frac = (i + 0.5) / kGridSide;
            auto row = f.data.row(static_cast<std::size_t>(i) * kGridSide + j);
            row[0] = depth / range;
            row[1] = frac;
            const Point p{pose.x + cx * frac * depth, pose.y + cy * frac * depth};
            auto cell = world.cell_at(p);
            const std::string tok = cell ? world.token(*cell) : std::string("obstacle");
            const auto& e = embed(tok);
            std::copy(e.begin(), e.end(), row.begin() + 2);
        }
    }
    return f;
}

inline void GridWorld::add_episode(Episode ep) {
    if (!(ep.success_radius > 0.0)) throw ValidationError("episode " + ep.id + ": success_radius must be positive");
    if (ep.max_steps <= 0) throw ValidationError("episode " + ep.id + ": max_steps must be positive");
    if (!is_free(ep.start.position())) throw ValidationError("episode " + ep.id + ": start not in free space");
    if (!is_free(ep.goal)) throw ValidationError("episode " + ep.id + ": goal not in free space");
    if (!geodesic_distance(*this, ep.start.position(), ep.goal))
        throw ValidationError("episode " + ep.id + ": goal unreachable from start");
    ep.start.heading = normalize_angle(ep.start.heading);
    ep.world_id = id_;
    episodes_.push_back(std::move(ep));
}

/// Parses and validates a world file (JSON).
inline GridWorld load_world(std::string_view text, std::string id = "world") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("world file: ") + e.what());
    }
    try {
        if (!j.is_object()) throw ParseError("world file: top level must be an object");
        if (!j.contains("resolution") || !j.contains("rows")) throw ParseError("world file: missing resolution or rows");
        const double res = j.at("resolution").get<double>();
        auto rows = j.at("rows").get<std::vector<std::string>>();
        std::map<char, std::string> names;
        if (j.contains("landmarks")) {
            for (auto& [k, v] : j.at("landmarks").items()) {
                if (k.size() != 1 || k[0] < 'a' || k[0] > 'z')
                    throw ValidationError("landmark key must be one lowercase letter: '" + k + "'");
                names[k[0]] = v.get<std::string>();
            }
        }
        const double ray_range = j.value("max_ray_range", 10.0);
        GridWorld world(std::move(id), res, std::move(rows), std::move(names), ray_range);
        if (j.contains("episodes")) {
            for (const auto& e : j.at("episodes")) {
                Episode ep;
                ep.id = e.at("id").get<std::string>();
                ep.instruction = e.at("instruction").get<std::string>();
                const auto& s = e.at("start");
                ep.start = {s.at("x").get<double>(), s.at("y").get<double>(),
                            deg_to_rad(s.value("heading_deg", 0.0))};
                const auto& g = e.at("goal");
                ep.goal = {g.at("x").get<double>(), g.at("y").get<double>()};
                ep.success_radius = e.value("success_radius", 3.0);
                ep.max_steps = e.value("max_steps", 500);
                world.add_episode(std::move(ep));
            }
        }
        return world;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("world file: ") + e.what());
    }
}

}  // namespace navsim
