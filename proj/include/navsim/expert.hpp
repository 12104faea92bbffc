#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "navsim/actions.hpp"
#include "navsim/agent.hpp"
#include "navsim/world.hpp"

namespace navsim {

class UnreachableError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

// Cell sequence from `start` to the field's source, following the
// distance field downhill. Ties go to the first neighbour in a fixed
// order (orthogonal before diagonal).
inline std::vector<Cell> descend(const GridWorld& world, const DistanceField& field, Cell start) {
    static constexpr int kOrder[8][2] = {{0, 1}, {1, 0}, {0, -1}, {-1, 0}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    if (!std::isfinite(field.cell_distance(start))) throw UnreachableError("goal unreachable from start cell");
    const double res = world.resolution();
    const double diag = std::sqrt(2.0) * res;
    std::vector<Cell> cells{start};
    Cell cur = start;
    while (!(cur == field.source())) {
        const double here = field.cell_distance(cur);
        std::optional<Cell> best;
        for (const auto& o : kOrder) {
            const Cell nb{cur.row + o[0], cur.col + o[1]};
            if (!world.passable(nb)) continue;
            const bool diagonal = o[0] != 0 && o[1] != 0;
            if (diagonal && (!world.passable({cur.row + o[0], cur.col}) || !world.passable({cur.row, cur.col + o[1]})))
                continue;
            const double d = field.cell_distance(nb);
            const double cost = diagonal ? diag : res;
            if (std::abs(d + cost - here) <= 1e-9 * std::max(1.0, here)) {
                best = nb;
                break;
            }
        }
        if (!best) throw UnreachableError("distance field descent failed");
        cur = *best;
        cells.push_back(cur);
    }
    return cells;
}

}  // namespace detail

/**
 * Cell-center waypoints of the shortest 8-connected path with collinear
 * runs merged. The start cell is excluded and the goal cell is always last
 * (a lone goal waypoint when start and goal share a cell).
 */
inline std::vector<Point> plan_path(const GridWorld& world, const DistanceField& goal_field, Point start) {
    const Cell sc = detail::require_free_cell(world, start, "start");
    const auto cells = detail::descend(world, goal_field, sc);
    std::vector<Point> out;
    if (cells.size() == 1) {
        out.push_back(world.center(cells.front()));
        return out;
    }
    for (std::size_t k = 1; k < cells.size(); ++k) {
        if (k + 1 < cells.size()) {
            const int dr0 = cells[k].row - cells[k - 1].row, dc0 = cells[k].col - cells[k - 1].col;
            const int dr1 = cells[k + 1].row - cells[k].row, dc1 = cells[k + 1].col - cells[k].col;
            if (dr0 == dr1 && dc0 == dc1) continue;
        }
        out.push_back(world.center(cells[k]));
    }
    return out;
}

inline std::vector<Point> plan_path(const GridWorld& world, Point start, Point goal) {
    const Cell gc = detail::require_free_cell(world, goal, "goal");
    DistanceField field(world, gc);
    return plan_path(world, field, start);
}

struct OracleCaps {
    double max_forward = 0.75;  // meters
    double max_turn = 30.0;     // degrees
    double align_tol = 15.0;    // degrees
    double min_forward = 0.05;  // meters
    double min_turn = 5.0;      // degrees
};

/**
 * Shortest-path expert for one goal. Holds the goal's distance field so
 * repeated queries along a trajectory cost one path descent each.
 */
class OracleExpert {
  public:
    OracleExpert(const GridWorld& world, Point goal, double success_radius, OracleCaps caps = {})
        : world_(&world),
          goal_(goal),
          success_radius_(success_radius),
          caps_(caps),
          field_(world, detail::require_free_cell(world, goal, "goal")) {}

    const DistanceField& field() const { return field_; }
    Point goal() const { return goal_; }

    double distance_to_goal(Point p) const {
        auto d = geodesic_via_field(*world_, field_, p, goal_);
        if (!d) throw UnreachableError("goal unreachable");
        return *d;
    }

    /**
     * Stop within half the success radius. Otherwise head for the next
     * waypoint (or the current cell center when the straight segment to it
     * is blocked): turn when misaligned by more than align_tol, else move
     * forward as far as the waypoint, the cap, and the clearance allow.
     *
     * A forward step that the wall skin would cut below half its length
     * means the agent is hugging an obstacle. It then aligns with the
     * bearing to within half a degree and, if still blocked, re-centers
     * in its cell.
     */
    LowLevelAction action(const Pose& pose) const {
        const Point here = pose.position();
        if (distance_to_goal(here) <= 0.5 * success_radius_) return LowLevelAction::stop();

        const auto waypoints = plan_path(*world_, field_, here);
        Point w = waypoints.front();
        const Point center = world_->center(*world_->cell_at(here));
        const double dist_w = euclidean(here, w);
        if (ray_clearance(*world_, here, std::atan2(w.y - here.y, w.x - here.x), dist_w) < dist_w &&
            euclidean(here, center) > 1e-6)
            w = center;

        LowLevelAction a = steer(pose, w, caps_.align_tol, caps_.min_turn);
        if (progresses(pose, a)) return a;
        a = steer(pose, w, kFineAlignDeg, kFineTurnDeg);
        if (progresses(pose, a)) return a;
        if (euclidean(here, center) > 0.01) return steer(pose, center, kFineAlignDeg, kFineTurnDeg);
        return a;
    }

  private:
    static constexpr double kFineAlignDeg = 0.5;
    static constexpr double kFineTurnDeg = 1.0;

    LowLevelAction steer(const Pose& pose, Point target, double align_tol, double min_turn) const {
        const Point here = pose.position();
        const double bearing = std::atan2(target.y - here.y, target.x - here.x);
        const double delta = rad_to_deg(signed_angle(bearing - pose.heading));
        if (std::abs(delta) > align_tol) {
            const double deg = std::max(min_turn, std::round(std::min(std::abs(delta), caps_.max_turn)));
            return delta > 0 ? LowLevelAction::turn_left(deg) : LowLevelAction::turn_right(deg);
        }
        const double skin = 0.5 * world_->resolution();
        const double clearance = ray_clearance(*world_, here, pose.heading, caps_.max_forward + skin) - skin;
        const double fwd = std::min({euclidean(here, target), caps_.max_forward, clearance});
        const double meters = std::max(caps_.min_forward, std::round(fwd * 100.0) / 100.0);
        return LowLevelAction::forward(std::min(meters, kMaxForwardMeters));
    }

    bool progresses(const Pose& pose, const LowLevelAction& a) const {
        if (a.type != ActionType::Forward) return true;
        const Pose next = step(*world_, pose, a).pose;
        return euclidean(pose.position(), next.position()) >= 0.5 * a.argument;
    }

    const GridWorld* world_;
    Point goal_;
    double success_radius_;
    OracleCaps caps_;
    DistanceField field_;
};

inline LowLevelAction oracle_action(const GridWorld& world, const Pose& pose, Point goal, double success_radius,
                                    const OracleCaps& caps = {}) {
    return OracleExpert(world, goal, success_radius, caps).action(pose);
}

// Episode generation.

struct EpisodeOptions {
    double success_radius = 3.0;
    int max_steps = 500;
    double min_separation = 2.0;   // meters, geodesic
    double max_separation = 15.0;
    int max_attempts = 1000;
};

inline constexpr std::string_view kInstructionTemplates[] = {
    "walk past the {mid} and go to the {goal}, then stop.",
    "go toward the {mid}, continue to the {goal} and stop there.",
    "head past the {mid} until you reach the {goal}, then stop.",
};

namespace detail {

inline std::string fill_template(std::string_view tpl, const std::string& mid, const std::string& goal) {
    std::string out(tpl);
    auto replace = [&](std::string_view key, const std::string& value) {
        if (auto pos = out.find(key); pos != std::string::npos) out.replace(pos, key.size(), value);
    };
    replace("{mid}", mid);
    replace("{goal}", goal);
    return out;
}

inline std::string nearest_landmark(const GridWorld& world, const std::vector<Cell>& landmarks, Point p) {
    double best = std::numeric_limits<double>::infinity();
    char id = 0;
    for (const auto& c : landmarks) {
        const double d = euclidean(world.center(c), p);
        if (d < best) {
            best = d;
            id = world.raw(c);
        }
    }
    return world.landmark_names().at(id);
}

}  // namespace detail

inline std::string generated_episode_id(const GridWorld& world, std::uint64_t seed) {
    return world.id() + ":" + std::to_string(seed);
}

/**
 * Samples a start/goal pair at cell centers with geodesic separation in
 * [min_separation, max_separation] and builds a templated instruction
 * naming the landmarks nearest the path midpoint and the goal.
 */
inline Episode generate_episode(const GridWorld& world, std::uint64_t seed, const EpisodeOptions& opt = {}) {
    const auto landmarks = world.landmark_cells();
    if (landmarks.empty()) throw ValidationError("generate_episode: world " + world.id() + " has no landmarks");
    std::vector<Cell> free_cells;
    for (int r = 0; r < world.height(); ++r)
        for (int c = 0; c < world.width(); ++c)
            if (world.passable({r, c})) free_cells.push_back({r, c});
    if (free_cells.size() < 2) throw ValidationError("generate_episode: fewer than two free cells");

    Xoshiro256 rng(mix64(seed, fnv1a(world.id())));
    for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
        const Cell sc = free_cells[rng.below(free_cells.size())];
        const Cell gc = free_cells[rng.below(free_cells.size())];
        const double heading = rng.uniform(0.0, kTwoPi);
        const std::size_t tpl = rng.below(std::size(kInstructionTemplates));
        if (sc == gc) continue;
        DistanceField field(world, gc);
        const Point start = world.center(sc);
        const Point goal = world.center(gc);
        auto d = geodesic_via_field(world, field, start, goal);
        if (!d || *d < opt.min_separation || *d > opt.max_separation) continue;

        const auto cells = detail::descend(world, field, sc);
        const Point mid = world.center(cells[cells.size() / 2]);
        Episode ep;
        ep.id = generated_episode_id(world, seed);
        ep.world_id = world.id();
        ep.instruction = detail::fill_template(kInstructionTemplates[tpl], detail::nearest_landmark(world, landmarks, mid),
                                               detail::nearest_landmark(world, landmarks, goal));
        ep.start = {start.x, start.y, normalize_angle(heading)};
        ep.goal = goal;
        ep.success_radius = opt.success_radius;
        ep.max_steps = opt.max_steps;
        return ep;
    }
    throw ValidationError("generate_episode: no valid start/goal pair in world " + world.id() + " after " +
                          std::to_string(opt.max_attempts) + " attempts");
}

// Step-wise samples.

enum class SampleSource { Oracle, Dagger };

inline std::string_view source_name(SampleSource s) { return s == SampleSource::Oracle ? "oracle" : "dagger"; }

/// Regenerable reference to one rendered frame.
struct FrameRef {
    std::string world_id;
    Pose pose;
    std::uint64_t seed = 0;
};

struct Frame {
    FrameRef ref;
    std::shared_ptr<const FrameFeatures> features;
};

struct StepSample {
    std::string episode_id;
    std::string world_id;
    std::string instruction;
    std::vector<Frame> frames;  // video so far, current frame last
    LowLevelAction oracle_action;
    SampleSource source = SampleSource::Oracle;
};

struct ReasoningSample {
    std::vector<Frame> frames;
    std::string target_instruction;
};

struct Trajectory {
    Episode episode;
    std::string world_id;
    std::vector<Frame> frames;
    std::vector<LowLevelAction> labels;
};

struct CollectOptions {
    EpisodeOptions episode;
    OracleCaps caps;
    std::uint64_t feature_seed = 0;
    std::size_t feature_dim = kDefaultFeatureDim;
};

struct Collection {
    std::vector<StepSample> samples;
    std::vector<Trajectory> trajectories;
    std::size_t invalid_answers = 0;
};

inline std::uint64_t episode_seed(std::uint64_t seed, std::size_t index) { return mix64(seed, index + 1); }

namespace detail {

inline Frame render(const GridWorld& world, const Pose& pose, const CollectOptions& opt) {
    return {{world.id(), pose, opt.feature_seed},
            std::make_shared<const FrameFeatures>(raycast_features(world, pose, opt.feature_seed, opt.feature_dim))};
}

inline void append(Collection& out, Trajectory traj, SampleSource source) {
    for (std::size_t k = 0; k < traj.labels.size(); ++k) {
        StepSample s;
        s.episode_id = traj.episode.id;
        s.world_id = traj.world_id;
        s.instruction = traj.episode.instruction;
        s.frames.assign(traj.frames.begin(), traj.frames.begin() + static_cast<std::ptrdiff_t>(k + 1));
        s.oracle_action = traj.labels[k];
        s.source = source;
        out.samples.push_back(std::move(s));
    }
    out.trajectories.push_back(std::move(traj));
}

}  // namespace detail

/// Oracle rollout for one episode: one label per visited state, ending in Stop
/// unless max_steps is reached first.
inline Trajectory rollout_oracle(const GridWorld& world, const Episode& ep, const CollectOptions& opt = {}) {
    OracleExpert expert(world, ep.goal, ep.success_radius, opt.caps);
    Trajectory traj{ep, world.id(), {}, {}};
    Pose pose = ep.start;
    for (int k = 0; k < ep.max_steps; ++k) {
        traj.frames.push_back(detail::render(world, pose, opt));
        const LowLevelAction a = expert.action(pose);
        traj.labels.push_back(a);
        if (a.type == ActionType::Stop) break;
        pose = step(world, pose, parse_action(format_action(a))).pose;
    }
    return traj;
}

/// Episode i runs in worlds[i % size] with seed episode_seed(seed, i).
inline Collection collect_oracle(std::span<const GridWorld> worlds, std::size_t episode_count, std::uint64_t seed,
                                 const CollectOptions& opt = {}) {
    if (worlds.empty()) throw std::invalid_argument("collect_oracle: no worlds");
    if (episode_count < 1) throw std::invalid_argument("collect_oracle: episode_count must be at least 1");
    Collection out;
    for (std::size_t i = 0; i < episode_count; ++i) {
        const GridWorld& world = worlds[i % worlds.size()];
        const Episode ep = generate_episode(world, episode_seed(seed, i), opt.episode);
        detail::append(out, rollout_oracle(world, ep, opt), SampleSource::Oracle);
    }
    return out;
}

/**
 * Rolls out `agent` and labels every visited state with the expert's
 * action. Unparseable answers are no-ops; the episode ends on the agent's
 * Stop or after max_steps.
 */
inline Trajectory rollout_dagger(const GridWorld& world, const Episode& ep, Agent& agent, std::size_t& invalid,
                                 const CollectOptions& opt = {}) {
    OracleExpert expert(world, ep.goal, ep.success_radius, opt.caps);
    Trajectory traj{ep, world.id(), {}, {}};
    Pose pose = ep.start;
    agent.reset(ep);
    for (int k = 0; k < ep.max_steps; ++k) {
        traj.frames.push_back(detail::render(world, pose, opt));
        traj.labels.push_back(expert.action(pose));
        const auto taken = try_parse_action(agent.act(*traj.frames.back().features));
        if (!taken) {
            ++invalid;
            continue;
        }
        if (taken->type == ActionType::Stop) break;
        pose = step(world, pose, *taken).pose;
    }
    agent.finish();
    return traj;
}

inline Collection collect_dagger(Agent& agent, std::span<const GridWorld> worlds, std::size_t episode_count,
                                 std::uint64_t seed, const CollectOptions& opt = {}) {
    if (worlds.empty()) throw std::invalid_argument("collect_dagger: no worlds");
    if (episode_count < 1) throw std::invalid_argument("collect_dagger: episode_count must be at least 1");
    Collection out;
    for (std::size_t i = 0; i < episode_count; ++i) {
        const GridWorld& world = worlds[i % worlds.size()];
        const Episode ep = generate_episode(world, episode_seed(seed, i), opt.episode);
        detail::append(out, rollout_dagger(world, ep, agent, out.invalid_answers, opt), SampleSource::Dagger);
    }
    return out;
}

// 320k oracle : 180k non-oracle.
inline constexpr std::size_t kOracleShare = 16;
inline constexpr std::size_t kDaggerShare = 9;

namespace detail {

template <typename T>
void fisher_yates(std::vector<T>& v, Xoshiro256& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace detail

/**
 * Subsamples the over-represented source so oracle:dagger is 16:9 (to the
 * nearest sample), then shuffles. An empty source passes the other through.
 */
inline std::vector<StepSample> mix_datasets(std::vector<StepSample> oracle, std::vector<StepSample> dagger,
                                            std::uint64_t seed) {
    Xoshiro256 rng(mix64(seed, 0x6d6978ULL));
    if (!oracle.empty() && !dagger.empty()) {
        if (oracle.size() * kDaggerShare > dagger.size() * kOracleShare) {
            const std::size_t keep = (dagger.size() * kOracleShare * 2 + kDaggerShare) / (2 * kDaggerShare);
            detail::fisher_yates(oracle, rng);
            oracle.resize(keep);
        } else {
            const std::size_t keep = (oracle.size() * kDaggerShare * 2 + kOracleShare) / (2 * kOracleShare);
            detail::fisher_yates(dagger, rng);
            dagger.resize(keep);
        }
    }
    std::vector<StepSample> out;
    out.reserve(oracle.size() + dagger.size());
    std::move(oracle.begin(), oracle.end(), std::back_inserter(out));
    std::move(dagger.begin(), dagger.end(), std::back_inserter(out));
    detail::fisher_yates(out, rng);
    return out;
}

/// The first ceil(fraction * N) trajectories as (frames, instruction) pairs.
inline std::vector<ReasoningSample> make_reasoning_samples(std::span<const Trajectory> trajectories, double fraction) {
    if (trajectories.empty()) throw std::invalid_argument("make_reasoning_samples: no trajectories");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("make_reasoning_samples: fraction must be in (0, 1]");
    const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(trajectories.size()) - 1e-9));
    std::vector<ReasoningSample> out;
    for (std::size_t i = 0; i < std::min(n, trajectories.size()); ++i)
        out.push_back({trajectories[i].frames, trajectories[i].episode.instruction});
    return out;
}

}  // namespace navsim
