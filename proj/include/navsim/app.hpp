#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "navsim/agents.hpp"
#include "navsim/dataset.hpp"
#include "navsim/protocol.hpp"
#include "navsim/runner.hpp"

namespace navsim {

/// Bad flags, missing files, unusable inputs.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path.string());
    out << content;
}

/// Loads world files; each world's id is its file stem.
inline std::vector<GridWorld> load_world_files(const std::vector<std::string>& paths) {
    if (paths.empty()) throw ConfigError("no world files given");
    std::vector<GridWorld> worlds;
    for (const auto& p : paths) {
        if (!std::filesystem::exists(p)) throw ConfigError("world file not found: " + p);
        try {
            worlds.push_back(load_world(read_file(p), std::filesystem::path(p).stem().string()));
        } catch (const ParseError& e) {
            throw ConfigError(p + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ConfigError(p + ": " + e.what());
        }
    }
    return worlds;
}

struct AgentSpec {
    enum class Kind { Oracle, Random, Toy, Remote } kind = Kind::Oracle;
    std::string checkpoint;  // toy
    std::string host;        // remote
    int port = 0;

    static AgentSpec parse(const std::string& s) {
        AgentSpec a;
        if (s == "oracle") return a;
        if (s == "random") {
            a.kind = Kind::Random;
            return a;
        }
        if (s == "toy" || s.starts_with("toy:")) {
            a.kind = Kind::Toy;
            if (s.size() > 4) a.checkpoint = s.substr(4);
            return a;
        }
        if (s.starts_with("remote:")) {
            a.kind = Kind::Remote;
            const std::string rest = s.substr(7);
            const auto colon = rest.rfind(':');
            if (colon == std::string::npos || colon == 0) throw ConfigError("agent spec must be remote:<host>:<port>");
            a.host = rest.substr(0, colon);
            try {
                std::size_t used = 0;
                a.port = std::stoi(rest.substr(colon + 1), &used);
                if (used != rest.size() - colon - 1 || a.port <= 0 || a.port > 65535) throw std::out_of_range("port");
            } catch (const std::logic_error&) {
                throw ConfigError("invalid port in agent spec: " + s);
            }
            return a;
        }
        throw ConfigError("unknown agent spec '" + s + "' (expected oracle, random, toy[:checkpoint], remote:<host>:<port>)");
    }
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::vector<std::string> world_files;
    std::size_t episodes = 100;
    std::string agent = "oracle";
    double success_radius = kSimSuccessRadius;
    int max_steps = 500;
    std::size_t n_hist = kDefaultHistoryTokens;
    std::size_t n_cur = kDefaultCurrentTokens;
    std::size_t feature_dim = kDefaultFeatureDim;
    std::uint64_t feature_seed = 0;
    DistanceMode distance = DistanceMode::Geodesic;
    bool file_episodes = false;  // use episodes declared in the world files
    std::size_t jobs = 1;
    double timeout_seconds = wire::kDefaultTimeoutSeconds;

    EpisodeOptions episode_options() const {
        EpisodeOptions o;
        o.success_radius = success_radius;
        o.max_steps = max_steps;
        return o;
    }

    RunnerConfig runner() const {
        RunnerConfig r;
        r.distance = distance;
        r.feature_seed = feature_seed;
        r.feature_dim = feature_dim;
        return r;
    }

    CollectOptions collect_options() const {
        CollectOptions c;
        c.episode = episode_options();
        c.feature_seed = feature_seed;
        c.feature_dim = feature_dim;
        return c;
    }
};

inline std::shared_ptr<const ToyModel> load_toy_model(const AgentSpec& spec, const RunConfig& cfg) {
    if (spec.checkpoint.empty())
        return std::make_shared<const ToyModel>(ToyModel::make(cfg.seed, cfg.feature_dim, kDefaultQueryCount, cfg.n_hist, cfg.n_cur));
    try {
        auto model = ToyModel::from_checkpoint(checkpoint_from_json(read_file(spec.checkpoint)));
        if (model.encoder.c != cfg.feature_dim)
            throw ConfigError("checkpoint feature dimension " + std::to_string(model.encoder.c) +
                              " does not match --dim " + std::to_string(cfg.feature_dim));
        return std::make_shared<const ToyModel>(std::move(model));
    } catch (const ParseError& e) {
        throw ConfigError(spec.checkpoint + ": " + e.what());
    }
}

inline AgentFactory make_agent_factory(const std::string& spec_text, std::shared_ptr<const WorldSet> worlds,
                                       const RunConfig& cfg, std::shared_ptr<wire::Transcript> transcript = nullptr) {
    const AgentSpec spec = AgentSpec::parse(spec_text);
    switch (spec.kind) {
        case AgentSpec::Kind::Oracle:
            return [worlds] { return std::make_unique<OracleAgent>(worlds); };
        case AgentSpec::Kind::Random: {
            const auto seed = cfg.seed;
            return [seed] { return std::make_unique<RandomAgent>(seed); };
        }
        case AgentSpec::Kind::Toy: {
            auto model = load_toy_model(spec, cfg);
            return [model] { return std::make_unique<ToyAgent>(model); };
        }
        case AgentSpec::Kind::Remote: {
            wire::RemoteOptions opt;
            opt.host = spec.host;
            opt.port = spec.port;
            opt.timeout_seconds = cfg.timeout_seconds;
            opt.n_hist = cfg.n_hist;
            opt.n_cur = cfg.n_cur;
            opt.c = cfg.feature_dim;
            opt.transcript = std::move(transcript);
            return [opt] { return std::make_unique<wire::RemoteAgent>(opt); };
        }
    }
    throw ConfigError("unreachable agent kind");
}

struct EvalOutcome {
    std::vector<EpisodeResult> results;
    MetricsSummary summary;
    std::size_t transport_failures = 0;
};

inline std::vector<Episode> episodes_for(const WorldSet& worlds, const RunConfig& cfg) {
    std::vector<Episode> eps;
    if (cfg.file_episodes) {
        for (const auto& w : worlds.worlds())
            for (auto e : w.episodes()) {
                e.success_radius = cfg.success_radius;
                eps.push_back(std::move(e));
            }
        if (eps.empty()) throw ConfigError("--file-episodes given but the world files declare no episodes");
        if (cfg.episodes < eps.size()) eps.resize(cfg.episodes);
        return eps;
    }
    for (std::size_t i = 0; i < cfg.episodes; ++i) eps.push_back(worlds.generated(cfg.seed, i));
    return eps;
}

/**
 * Runs every episode. With jobs > 1 episodes are spread over worker
 * threads, each with its own agent; results keep episode order.
 */
inline EvalOutcome evaluate(const WorldSet& worlds, const std::vector<Episode>& episodes, const AgentFactory& factory,
                            const RunnerConfig& runner, std::size_t jobs = 1) {
    if (episodes.empty()) throw ConfigError("no episodes to evaluate");
    EvalOutcome out;
    out.results.resize(episodes.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        try {
            auto agent = factory();
            for (std::size_t i = next++; i < episodes.size(); i = next++) {
                const GridWorld* w = worlds.find(episodes[i].world_id);
                if (!w) throw ConfigError("episode " + episodes[i].id + " references unknown world");
                out.results[i] = run_episode(*w, episodes[i], *agent, runner);
            }
        } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
        }
    };
    jobs = std::max<std::size_t>(1, std::min(jobs, episodes.size()));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    for (const auto& r : out.results)
        if (r.error) ++out.transport_failures;
    out.summary = compute_metrics(out.results);
    return out;
}

inline std::string format_metric_table(const std::string& label, const MetricsSummary& m) {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s %8s %8s %6s\n", "agent", "TL", "NE", "OS", "SR", "SPL", "n");
    out += buf;
    std::snprintf(buf, sizeof buf, "%-12s %8.2f %8.2f %8.1f %8.1f %8.1f %6zu\n", label.c_str(), m.tl, m.ne, m.os, m.sr,
                  m.spl, m.n);
    out += buf;
    return out;
}

inline nlohmann::ordered_json summary_json(const MetricsSummary& m) {
    return {{"tl", m.tl}, {"ne", m.ne}, {"os", m.os}, {"sr", m.sr}, {"spl", m.spl}, {"n", m.n}};
}

inline std::string results_json(const RunConfig& cfg, const EvalOutcome& eval, bool trajectories) {
    nlohmann::ordered_json j;
    j["config"] = {{"agent", cfg.agent},
                   {"seed", cfg.seed},
                   {"episodes", cfg.episodes},
                   {"success_radius", cfg.success_radius},
                   {"max_steps", cfg.max_steps},
                   {"distance", cfg.distance == DistanceMode::Geodesic ? "geodesic" : "euclidean"}};
    j["summary"] = summary_json(eval.summary);
    auto eps = nlohmann::ordered_json::array();
    for (const auto& r : eval.results) {
        nlohmann::ordered_json e{{"episode_id", r.episode_id}, {"success", r.success},
                                 {"oracle_success", r.oracle_success}, {"spl", r.spl_term},
                                 {"tl", r.tl}, {"ne", r.ne}, {"shortest_path", r.shortest_path},
                                 {"steps", r.steps}, {"stop_called", r.stop_called},
                                 {"invalid_answers", r.invalid_answers}};
        if (r.error) e["error"] = *r.error;
        if (trajectories) {
            auto poses = nlohmann::ordered_json::array();
            for (const auto& p : r.poses) poses.push_back({p.x, p.y, p.heading});
            e["trajectory"] = std::move(poses);
        }
        eps.push_back(std::move(e));
    }
    j["episodes"] = std::move(eps);
    return j.dump(2) + "\n";
}

/// Encodes samples into (features, label) pairs for the policy head.
inline std::vector<TrainingExample> build_training_set(const std::vector<StepSample>& samples, const ToyModel& model) {
    PromptFeaturizer fz(model.encoder, model.n_hist, model.n_cur);
    std::vector<TrainingExample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({fz.features(s.instruction, s.frames), s.oracle_action});
    return out;
}

/// Fraction of examples whose argmax type matches the label.
inline double type_accuracy(const PolicyParams& params, const std::vector<TrainingExample>& data) {
    if (data.empty()) throw std::invalid_argument("type_accuracy: empty data");
    std::size_t ok = 0;
    for (const auto& ex : data)
        if (predict(params, ex.features).argmax_type() == ex.label.type) ++ok;
    return static_cast<double>(ok) / static_cast<double>(data.size());
}

/// Accuracy of always answering the most frequent label type.
inline double majority_baseline(const std::vector<TrainingExample>& train, const std::vector<TrainingExample>& test) {
    std::array<std::size_t, kActionTypeCount> counts{};
    for (const auto& ex : train) ++counts[static_cast<int>(ex.label.type)];
    const auto majority = static_cast<ActionType>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    std::size_t ok = 0;
    for (const auto& ex : test)
        if (ex.label.type == majority) ++ok;
    return static_cast<double>(ok) / static_cast<double>(test.size());
}

}  // namespace navsim
