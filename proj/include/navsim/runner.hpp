#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "navsim/actions.hpp"
#include "navsim/agent.hpp"
#include "navsim/expert.hpp"
#include "navsim/world.hpp"

namespace navsim {

enum class DistanceMode { Geodesic, Euclidean };

inline constexpr double kSimSuccessRadius = 3.0;
inline constexpr double kRealWorldSuccessRadius = 1.5;

struct RunnerConfig {
    DistanceMode distance = DistanceMode::Geodesic;
    std::uint64_t feature_seed = 0;
    std::size_t feature_dim = kDefaultFeatureDim;
    bool record_answers = false;
};

struct EpisodeResult {
    std::string episode_id;
    std::vector<Pose> poses;  // start pose, then one per executed action
    std::vector<LowLevelAction> actions;
    std::vector<std::string> answers;  // filled when RunnerConfig::record_answers
    bool stop_called = false;
    int steps = 0;
    int invalid_answers = 0;
    double tl = 0.0;
    double ne = 0.0;
    bool success = false;
    bool oracle_success = false;
    double spl_term = 0.0;
    double shortest_path = 0.0;  // l in the SPL term
    std::optional<std::string> error;

    bool operator==(const EpisodeResult&) const = default;
};

namespace detail {

class GoalDistance {
  public:
    GoalDistance(const GridWorld& world, Point goal, DistanceMode mode)
        : world_(&world), goal_(goal), mode_(mode) {
        if (mode_ == DistanceMode::Geodesic)
            field_.emplace(world, require_free_cell(world, goal, "goal"));
    }

    double operator()(Point p) const {
        if (mode_ == DistanceMode::Euclidean) return euclidean(p, goal_);
        auto d = geodesic_via_field(*world_, *field_, p, goal_);
        return d ? *d : std::numeric_limits<double>::infinity();
    }

  private:
    const GridWorld* world_;
    Point goal_;
    DistanceMode mode_;
    std::optional<DistanceField> field_;
};

}  // namespace detail

/**
 * Runs one episode: render, ask the agent, parse, execute, until the agent
 * stops or max_steps actions have been taken. Unparseable answers count as
 * invalid and leave the pose unchanged. A TransportError from the agent
 * ends the episode with `error` set.
 */
inline EpisodeResult run_episode(const GridWorld& world, const Episode& episode, Agent& agent,
                                 const RunnerConfig& config = {}) {
    detail::GoalDistance goal_distance(world, episode.goal, config.distance);
    EpisodeResult r;
    r.episode_id = episode.id;
    Pose pose = episode.start;
    r.poses.push_back(pose);
    double closest = goal_distance(pose.position());

    try {
        agent.reset(episode);
        while (r.steps < episode.max_steps) {
            const FrameFeatures frame = raycast_features(world, pose, config.feature_seed, config.feature_dim);
            std::string answer = agent.act(frame);
            ++r.steps;
            auto action = try_parse_action(answer);
            if (config.record_answers) r.answers.push_back(std::move(answer));
            if (!action) {
                ++r.invalid_answers;
                continue;
            }
            r.actions.push_back(*action);
            if (action->type == ActionType::Stop) {
                r.stop_called = true;
                break;
            }
            const Pose next = step(world, pose, *action).pose;
            r.tl += euclidean(pose.position(), next.position());
            pose = next;
            r.poses.push_back(pose);
            closest = std::min(closest, goal_distance(pose.position()));
        }
        agent.finish();
    } catch (const TransportError& e) {
        r.error = e.what();
    }

    r.ne = goal_distance(pose.position());
    r.shortest_path = goal_distance(episode.start.position());
    r.success = !r.error && r.stop_called && r.ne <= episode.success_radius;
    r.oracle_success = closest <= episode.success_radius;
    if (r.success) {
        const double l = r.shortest_path;
        r.spl_term = r.tl <= 0.0 ? 1.0 : l / std::max(r.tl, l);
    }
    return r;
}

struct MetricsSummary {
    double sr = 0.0;
    double os = 0.0;
    double spl = 0.0;
    double tl = 0.0;
    double ne = 0.0;
    std::size_t n = 0;
};

inline MetricsSummary compute_metrics(std::span<const EpisodeResult> results) {
    if (results.empty()) throw std::invalid_argument("compute_metrics: no episodes");
    MetricsSummary m;
    m.n = results.size();
    for (const auto& r : results) {
        m.sr += r.success ? 1.0 : 0.0;
        m.os += r.oracle_success ? 1.0 : 0.0;
        m.spl += r.spl_term;
        m.tl += r.tl;
        m.ne += r.ne;
    }
    const double n = static_cast<double>(m.n);
    m.sr = 100.0 * m.sr / n;
    m.os = 100.0 * m.os / n;
    m.spl = 100.0 * m.spl / n;
    m.tl /= n;
    m.ne /= n;
    return m;
}

// Single-step evaluation.

struct SingleStepThresholds {
    double distance = 0.30;  // meters
    double angle = 30.0;     // degrees
};

struct SingleStepReport {
    double success_rate = 0.0;                    // percent
    std::optional<double> stop_success_rate;      // percent; absent without Stop samples
    double mean_angle_error = 0.0;                // degrees, over correctly-typed turns
    double mean_distance_error = 0.0;             // meters, over correctly-typed forwards
    std::size_t samples = 0;
};

/**
 * A prediction is correct when its type matches the label and, for
 * Forward/turns, the argument error is below the threshold. Missing
 * predictions (unparseable answers) count as wrong.
 */
inline SingleStepReport single_step_eval(std::span<const LowLevelAction> labels,
                                         std::span<const std::optional<LowLevelAction>> predictions,
                                         const SingleStepThresholds& th = {}) {
    if (labels.empty()) throw std::invalid_argument("single_step_eval: no samples");
    if (labels.size() != predictions.size()) throw std::invalid_argument("single_step_eval: size mismatch");
    std::size_t correct = 0, stops = 0, stop_correct = 0, turns = 0, forwards = 0;
    double angle_sum = 0.0, dist_sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& y = labels[i];
        if (y.type == ActionType::Stop) ++stops;
        const auto& p = predictions[i];
        if (!p || p->type != y.type) continue;
        const double err = std::abs(p->argument - y.argument);
        bool ok = true;
        if (y.type == ActionType::Forward) {
            ++forwards;
            dist_sum += err;
            ok = err < th.distance;
        } else if (y.is_turn()) {
            ++turns;
            angle_sum += err;
            ok = err < th.angle;
        } else {
            ++stop_correct;
        }
        if (ok) ++correct;
    }
    SingleStepReport r;
    r.samples = labels.size();
    r.success_rate = 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
    if (stops > 0) r.stop_success_rate = 100.0 * static_cast<double>(stop_correct) / static_cast<double>(stops);
    r.mean_angle_error = turns ? angle_sum / static_cast<double>(turns) : 0.0;
    r.mean_distance_error = forwards ? dist_sum / static_cast<double>(forwards) : 0.0;
    return r;
}

using StepPredictor = std::function<std::optional<LowLevelAction>(const StepSample&)>;

inline SingleStepReport single_step_eval(std::span<const StepSample> samples, const StepPredictor& predictor,
                                         const SingleStepThresholds& th = {}) {
    std::vector<LowLevelAction> labels;
    std::vector<std::optional<LowLevelAction>> preds;
    labels.reserve(samples.size());
    preds.reserve(samples.size());
    for (const auto& s : samples) {
        labels.push_back(s.oracle_action);
        preds.push_back(predictor(s));
    }
    return single_step_eval(labels, preds, th);
}

}  // namespace navsim
