#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "navsim/actions.hpp"
#include "navsim/base64.hpp"
#include "navsim/core.hpp"
#include "navsim/prompt.hpp"

namespace navsim {

/**
 * Linear action head over a 4C feature vector.
 *
 * Produces four type logits (Forward, TurnLeft, TurnRight, Stop) and two
 * raw regression outputs: forward distance in meters and turn angle in
 * degrees.
 */
struct PolicyParams {
    std::uint64_t seed = 0;
    std::size_t feature_dim = 0;
    Matrix w_type;                 // 4 x F
    std::vector<double> b_type;    // 4
    std::vector<double> w_dist;    // F
    double b_dist = 0.0;
    std::vector<double> w_deg;     // F
    double b_deg = 0.0;

    /// Weights uniform in [-1/sqrt(F), 1/sqrt(F)] from xoshiro256**; biases zero.
    static PolicyParams make(std::uint64_t seed, std::size_t feature_dim) {
        if (feature_dim == 0) throw ShapeError("policy feature dimension must be positive");
        PolicyParams p = zeros(feature_dim);
        p.seed = seed;
        Xoshiro256 rng(mix64(seed, 0x706f6c696379ULL));
        const double bound = 1.0 / std::sqrt(static_cast<double>(feature_dim));
        for (auto& v : p.w_type.data) v = rng.uniform(-bound, bound);
        for (auto& v : p.w_dist) v = rng.uniform(-bound, bound);
        for (auto& v : p.w_deg) v = rng.uniform(-bound, bound);
        return p;
    }

    static PolicyParams zeros(std::size_t feature_dim) {
        PolicyParams p;
        p.feature_dim = feature_dim;
        p.w_type = Matrix(kActionTypeCount, feature_dim);
        p.b_type.assign(kActionTypeCount, 0.0);
        p.w_dist.assign(feature_dim, 0.0);
        p.w_deg.assign(feature_dim, 0.0);
        return p;
    }

    // Visits every coordinate in a fixed order: w_type, b_type, w_dist, b_dist, w_deg, b_deg.
    template <typename F>
    void for_each_coordinate(F&& f) { visit(*this, f); }
    template <typename F>
    void for_each_coordinate(F&& f) const { visit(*this, f); }

    std::vector<double> flatten() const {
        std::vector<double> out;
        for_each_coordinate([&](double v) { out.push_back(v); });
        return out;
    }

    bool operator==(const PolicyParams&) const = default;

  private:
    template <typename Self, typename F>
    static void visit(Self& self, F& f) {
        for (auto& v : self.w_type.data) f(v);
        for (auto& v : self.b_type) f(v);
        for (auto& v : self.w_dist) f(v);
        f(self.b_dist);
        for (auto& v : self.w_deg) f(v);
        f(self.b_deg);
    }
};

struct StepPrediction {
    std::array<double, kActionTypeCount> type_logits{};
    double raw_distance = 0.0;
    double raw_degrees = 0.0;

    ActionType argmax_type() const {
        return static_cast<ActionType>(std::max_element(type_logits.begin(), type_logits.end()) -
                                       type_logits.begin());
    }
};

namespace detail {

inline void add_mean_of(std::vector<double>& acc, std::span<const double> v, double weight) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += weight * v[i];
}

}  // namespace detail

/**
 * [current queried; mean current agnostic; mean history queried;
 *  mean history agnostic]. History blocks are zero when t = 1.
 */
inline std::vector<double> featurize(const PromptSequence& prompt) {
    const PromptLayout layout = scan_prompt(prompt);
    const auto& e = prompt.elements;
    auto visual = [&](std::size_t i) -> const std::vector<double>& { return std::get<Visual>(e[i]).value; };
    const std::size_t c = visual(layout.current_begin).size();
    std::vector<double> f(4 * c, 0.0);
    auto block = [&](std::size_t k) { return std::span<double>(f).subspan(k * c, c); };

    auto check = [&](const std::vector<double>& v) {
        if (v.size() != c) throw std::invalid_argument("malformed prompt: visual token width mismatch");
        return std::span<const double>(v);
    };
    {
        auto q = check(visual(layout.current_begin));
        std::copy(q.begin(), q.end(), block(0).begin());
        std::vector<double> acc(c, 0.0);
        for (std::size_t r = 0; r < layout.n_cur; ++r)
            detail::add_mean_of(acc, check(visual(layout.current_begin + 1 + r)), 1.0 / layout.n_cur);
        if (layout.n_cur > 0) std::copy(acc.begin(), acc.end(), block(1).begin());
    }
    const std::size_t hist_frames = layout.frame_count - 1;
    if (hist_frames > 0) {
        std::vector<double> q_acc(c, 0.0), a_acc(c, 0.0);
        const std::size_t stride = 1 + layout.n_hist;
        const double inv_frames = 1.0 / static_cast<double>(hist_frames);
        const double inv_agn = layout.n_hist > 0 ? 1.0 / static_cast<double>(hist_frames * layout.n_hist) : 0.0;
        for (std::size_t fr = 0; fr < hist_frames; ++fr) {
            const std::size_t base = layout.history_begin + fr * stride;
            detail::add_mean_of(q_acc, check(visual(base)), inv_frames);
            for (std::size_t r = 0; r < layout.n_hist; ++r) detail::add_mean_of(a_acc, check(visual(base + 1 + r)), inv_agn);
        }
        std::copy(q_acc.begin(), q_acc.end(), block(2).begin());
        std::copy(a_acc.begin(), a_acc.end(), block(3).begin());
    }
    return f;
}

inline StepPrediction predict(const PolicyParams& params, std::span<const double> features) {
    if (features.size() != params.feature_dim)
        throw ShapeError("predict: expected " + std::to_string(params.feature_dim) + " features, got " +
                         std::to_string(features.size()));
    StepPrediction p;
    for (int k = 0; k < kActionTypeCount; ++k) p.type_logits[k] = dot(params.w_type.row(k), features) + params.b_type[k];
    p.raw_distance = dot(params.w_dist, features) + params.b_dist;
    p.raw_degrees = dot(params.w_deg, features) + params.b_deg;
    return p;
}

struct TrainingExample {
    std::vector<double> features;
    LowLevelAction label;
};

inline constexpr double kArgumentLossWeight = 0.1;
// Degrees are regressed in units of 100 degrees so both argument terms are O(1).
inline constexpr double kDegreeScale = 100.0;

namespace detail {

inline std::array<double, kActionTypeCount> softmax(const std::array<double, kActionTypeCount>& z) {
    const double mx = *std::max_element(z.begin(), z.end());
    std::array<double, kActionTypeCount> p{};
    double s = 0.0;
    for (int k = 0; k < kActionTypeCount; ++k) s += (p[k] = std::exp(z[k] - mx));
    for (auto& v : p) v /= s;
    return p;
}

inline double log_sum_exp(const std::array<double, kActionTypeCount>& z) {
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    return mx + std::log(s);
}

}  // namespace detail

/**
 * Mean over the batch of cross-entropy on the action type plus
 * 0.1 * squared argument error (meters for Forward, degrees/100 for turns).
 * Stop samples carry no argument term.
 */
inline double loss(const PolicyParams& params, std::span<const TrainingExample> batch) {
    if (batch.empty()) throw std::invalid_argument("loss: empty batch");
    double total = 0.0;
    for (const auto& ex : batch) {
        const StepPrediction p = predict(params, ex.features);
        total += detail::log_sum_exp(p.type_logits) - p.type_logits[static_cast<int>(ex.label.type)];
        if (ex.label.type == ActionType::Forward) {
            const double r = p.raw_distance - ex.label.argument;
            total += kArgumentLossWeight * r * r;
        } else if (ex.label.is_turn()) {
            const double r = (p.raw_degrees - ex.label.argument) / kDegreeScale;
            total += kArgumentLossWeight * r * r;
        }
    }
    return total / static_cast<double>(batch.size());
}

inline PolicyParams grad(const PolicyParams& params, std::span<const TrainingExample> batch) {
    if (batch.empty()) throw std::invalid_argument("grad: empty batch");
    PolicyParams g = PolicyParams::zeros(params.feature_dim);
    g.seed = params.seed;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) {
        const StepPrediction p = predict(params, ex.features);
        auto probs = detail::softmax(p.type_logits);
        probs[static_cast<int>(ex.label.type)] -= 1.0;
        for (int k = 0; k < kActionTypeCount; ++k) {
            const double dz = probs[k] * inv_n;
            g.b_type[k] += dz;
            auto row = g.w_type.row(k);
            for (std::size_t i = 0; i < row.size(); ++i) row[i] += dz * ex.features[i];
        }
        if (ex.label.type == ActionType::Forward) {
            const double d = 2.0 * kArgumentLossWeight * (p.raw_distance - ex.label.argument) * inv_n;
            g.b_dist += d;
            for (std::size_t i = 0; i < g.w_dist.size(); ++i) g.w_dist[i] += d * ex.features[i];
        } else if (ex.label.is_turn()) {
            const double d = 2.0 * kArgumentLossWeight * (p.raw_degrees - ex.label.argument) /
                             (kDegreeScale * kDegreeScale) * inv_n;
            g.b_deg += d;
            for (std::size_t i = 0; i < g.w_deg.size(); ++i) g.w_deg[i] += d * ex.features[i];
        }
    }
    return g;
}

struct TrainResult {
    PolicyParams params;
    std::vector<double> loss_trace;  // loss before epoch 0, then after each epoch
};

/// Full-batch gradient descent.
inline TrainResult train(PolicyParams params, std::span<const TrainingExample> dataset, double lr, int epochs) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    if (!(lr >= 0.0)) throw std::invalid_argument("train: learning rate must be non-negative");
    if (epochs < 1) throw std::invalid_argument("train: epochs must be at least 1");
    TrainResult out;
    out.loss_trace.reserve(static_cast<std::size_t>(epochs) + 1);
    out.loss_trace.push_back(loss(params, dataset));
    for (int e = 0; e < epochs; ++e) {
        if (lr > 0.0) {
            PolicyParams g = grad(params, dataset);
            std::vector<double> flat = g.flatten();
            std::size_t i = 0;
            params.for_each_coordinate([&](double& v) { v -= lr * flat[i++]; });
        }
        out.loss_trace.push_back(loss(params, dataset));
    }
    out.params = std::move(params);
    return out;
}

inline constexpr double kDecodeMinDistance = 0.05;
inline constexpr double kDecodeMaxDistance = 1.0;
inline constexpr double kDecodeMinDegrees = 5.0;
inline constexpr double kDecodeMaxDegrees = 90.0;

inline LowLevelAction decode_action(const StepPrediction& p) {
    const ActionType t = p.argmax_type();
    switch (t) {
        case ActionType::Forward:
            return LowLevelAction{t, std::clamp(std::isfinite(p.raw_distance) ? p.raw_distance : kDecodeMinDistance,
                                                kDecodeMinDistance, kDecodeMaxDistance)};
        case ActionType::TurnLeft:
        case ActionType::TurnRight:
            return LowLevelAction{t, std::clamp(std::isfinite(p.raw_degrees) ? p.raw_degrees : kDecodeMinDegrees,
                                                kDecodeMinDegrees, kDecodeMaxDegrees)};
        case ActionType::Stop: return LowLevelAction::stop();
    }
    return LowLevelAction::stop();
}

/// Argmax type, clamped arguments, canonical sentence.
inline std::string decode(const StepPrediction& p) { return format_action(decode_action(p)); }

// Checkpoint file.

struct Checkpoint {
    PolicyParams policy;
    std::size_t c = kDefaultFeatureDim;
    std::size_t m = kDefaultQueryCount;
    std::size_t n_hist = kDefaultHistoryTokens;
    std::size_t n_cur = kDefaultCurrentTokens;
};

inline constexpr int kCheckpointSchemaVersion = 1;

namespace detail {

inline nlohmann::json tensor_json(std::size_t rows, std::size_t cols, std::span<const double> data) {
    return {{"rows", rows}, {"cols", cols}, {"data", base64::encode_doubles(data)}};
}

inline std::vector<double> tensor_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols) {
    if (j.at("rows").get<std::size_t>() != rows || j.at("cols").get<std::size_t>() != cols)
        throw ParseError("checkpoint: tensor shape mismatch");
    auto data = base64::decode_doubles(j.at("data").get<std::string>());
    if (data.size() != rows * cols) throw ParseError("checkpoint: tensor payload size mismatch");
    return data;
}

}  // namespace detail

inline std::string checkpoint_to_json(const Checkpoint& ck) {
    const auto& p = ck.policy;
    const std::size_t f = p.feature_dim;
    nlohmann::ordered_json j;
    j["schema_version"] = kCheckpointSchemaVersion;
    j["c"] = ck.c;
    j["m"] = ck.m;
    j["seed"] = p.seed;
    j["n_hist"] = ck.n_hist;
    j["n_cur"] = ck.n_cur;
    j["w_type"] = detail::tensor_json(kActionTypeCount, f, p.w_type.data);
    j["b_type"] = detail::tensor_json(1, kActionTypeCount, p.b_type);
    j["w_dist"] = detail::tensor_json(1, f, p.w_dist);
    j["b_dist"] = detail::tensor_json(1, 1, std::span<const double>(&p.b_dist, 1));
    j["w_deg"] = detail::tensor_json(1, f, p.w_deg);
    j["b_deg"] = detail::tensor_json(1, 1, std::span<const double>(&p.b_deg, 1));
    return j.dump() + "\n";
}

inline Checkpoint checkpoint_from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("schema_version").get<int>() != kCheckpointSchemaVersion)
            throw ParseError("checkpoint: unsupported schema_version");
        Checkpoint ck;
        ck.c = j.at("c").get<std::size_t>();
        ck.m = j.at("m").get<std::size_t>();
        ck.n_hist = j.value("n_hist", kDefaultHistoryTokens);
        ck.n_cur = j.value("n_cur", kDefaultCurrentTokens);
        const std::size_t f = 4 * ck.c;
        PolicyParams p = PolicyParams::zeros(f);
        p.seed = j.at("seed").get<std::uint64_t>();
        p.w_type.data = detail::tensor_from_json(j.at("w_type"), kActionTypeCount, f);
        p.b_type = detail::tensor_from_json(j.at("b_type"), 1, kActionTypeCount);
        p.w_dist = detail::tensor_from_json(j.at("w_dist"), 1, f);
        p.b_dist = detail::tensor_from_json(j.at("b_dist"), 1, 1)[0];
        p.w_deg = detail::tensor_from_json(j.at("w_deg"), 1, f);
        p.b_deg = detail::tensor_from_json(j.at("b_deg"), 1, 1)[0];
        ck.policy = std::move(p);
        return ck;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
}

}  // namespace navsim
