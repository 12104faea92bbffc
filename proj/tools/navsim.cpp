// Command-line front end: eval, collect, train, serve, parse.

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "navsim/navsim.hpp"

#ifndef NAVSIM_WORLDS_DIR
#define NAVSIM_WORLDS_DIR "worlds"
#endif

namespace fs = std::filesystem;
using namespace navsim;
using namespace navsim::wire;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitTransport = 2;

volatile std::sig_atomic_t g_interrupted = 0;

void on_signal(int) { g_interrupted = 1; }

std::vector<std::string> default_worlds() {
    std::vector<std::string> out;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(NAVSIM_WORLDS_DIR, ec))
        if (entry.path().extension() == ".json") out.push_back(entry.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::uint64_t env_seed() {
    const char* s = std::getenv("VLNCE_BENCH_SEED");
    if (!s || !*s) return 0;
    try {
        return std::stoull(s);
    } catch (const std::logic_error&) {
        throw ConfigError(std::string("VLNCE_BENCH_SEED is not an unsigned integer: ") + s);
    }
}

struct CommonFlags {
    RunConfig cfg;
    bool seed_given = false;
    bool real_world = false;
    std::string distance = "geodesic";
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--worlds", f.cfg.world_files, "World files (default: every .json in " NAVSIM_WORLDS_DIR ")");
    cmd->add_option("--seed", f.cfg.seed, "Run seed (fallback: VLNCE_BENCH_SEED, then 0)")
        ->each([&f](const std::string&) { f.seed_given = true; });
    cmd->add_option("--episodes", f.cfg.episodes, "Episode count")->check(CLI::Range(1, 100000000));
    cmd->add_option("--success-radius", f.cfg.success_radius, "Success radius in meters")->check(CLI::PositiveNumber);
    cmd->add_flag("--real-world", f.real_world, "Use the 1.5 m real-world success radius");
    cmd->add_option("--max-steps", f.cfg.max_steps, "Step limit per episode")->check(CLI::Range(1, 100000000));
    cmd->add_option("--n-hist", f.cfg.n_hist, "Tokens per history frame")->check(CLI::IsMember({1, 4, 16, 64}));
    cmd->add_option("--n-cur", f.cfg.n_cur, "Tokens for the current frame")->check(CLI::IsMember({1, 4, 16, 64}));
    cmd->add_option("--dim", f.cfg.feature_dim, "Feature channels per patch")->check(CLI::Range(3, 4096));
    cmd->add_option("--feature-seed", f.cfg.feature_seed, "Seed of the feature embeddings");
    cmd->add_option("--distance", f.distance, "Goal distance: geodesic or euclidean")
        ->check(CLI::IsMember({"geodesic", "euclidean"}));
    cmd->add_option("--timeout", f.cfg.timeout_seconds, "Remote request timeout in seconds")->check(CLI::PositiveNumber);
}

void finalize(CommonFlags& f) {
    if (!f.seed_given) f.cfg.seed = env_seed();
    if (f.real_world) f.cfg.success_radius = kRealWorldSuccessRadius;
    f.cfg.distance = f.distance == "euclidean" ? DistanceMode::Euclidean : DistanceMode::Geodesic;
    if (f.cfg.world_files.empty()) f.cfg.world_files = default_worlds();
}

std::shared_ptr<const WorldSet> load_worldset(const RunConfig& cfg) {
    return std::make_shared<const WorldSet>(load_world_files(cfg.world_files), cfg.episode_options());
}

std::vector<StepSample> load_dataset(const std::string& path, const WorldSet& worlds) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read dataset: " + path);
    try {
        return read_dataset(in, worlds);
    } catch (const ParseError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void save_dataset(const std::string& path, const std::vector<StepSample>& samples, bool inline_features) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write dataset: " + path);
    write_dataset(out, samples, inline_features);
}

std::pair<std::size_t, std::size_t> count_sources(const std::vector<StepSample>& samples) {
    std::size_t o = 0;
    for (const auto& s : samples)
        if (s.source == SampleSource::Oracle) ++o;
    return {o, samples.size() - o};
}

void print_counts(const std::vector<StepSample>& samples) {
    const auto [o, d] = count_sources(samples);
    std::cout << "samples: " << samples.size() << " (oracle " << o << ", dagger " << d << ")\n";
    if (o && d) std::cout << "ratio oracle:dagger = " << static_cast<double>(o) / static_cast<double>(d) << " (target "
                          << static_cast<double>(kOracleShare) / kDaggerShare << ")\n";
}

// eval

struct EvalFlags {
    CommonFlags common;
    std::string out;
    bool trajectories = false;
};

int cmd_eval(EvalFlags& f) {
    finalize(f.common);
    const RunConfig& cfg = f.common.cfg;
    auto worlds = load_worldset(cfg);
    const auto episodes = episodes_for(*worlds, cfg);
    const auto factory = make_agent_factory(cfg.agent, worlds, cfg);
    const EvalOutcome eval = evaluate(*worlds, episodes, factory, cfg.runner(), cfg.jobs);
    if (!f.out.empty()) write_file(f.out, results_json(cfg, eval, f.trajectories));
    std::cout << format_metric_table(cfg.agent.substr(0, cfg.agent.find(':')), eval.summary);
    if (eval.transport_failures) {
        for (const auto& r : eval.results)
            if (r.error) {
                std::cerr << "transport failure in " << r.episode_id << ": " << *r.error << '\n';
                break;
            }
        std::cerr << eval.transport_failures << " episode(s) hit transport failures\n";
        return kExitTransport;
    }
    return 0;
}

// collect

struct CollectFlags {
    CommonFlags common;
    std::string mode = "oracle";
    std::vector<std::string> mix;
    std::string out;
    bool inline_features = false;
};

int cmd_collect(CollectFlags& f, bool agent_given) {
    finalize(f.common);
    const RunConfig& cfg = f.common.cfg;
    auto worlds = load_worldset(cfg);
    std::vector<StepSample> samples;
    if (!f.mix.empty()) {
        samples = mix_datasets(load_dataset(f.mix[0], *worlds), load_dataset(f.mix[1], *worlds), cfg.seed);
    } else if (f.mode == "oracle") {
        samples = collect_oracle(worlds->worlds(), cfg.episodes, cfg.seed, cfg.collect_options()).samples;
    } else {
        if (!agent_given) throw ConfigError("dagger mode requires --agent");
        auto agent = make_agent_factory(cfg.agent, worlds, cfg)();
        auto col = collect_dagger(*agent, worlds->worlds(), cfg.episodes, cfg.seed, cfg.collect_options());
        if (col.invalid_answers) std::cout << "invalid answers: " << col.invalid_answers << '\n';
        samples = std::move(col.samples);
    }
    save_dataset(f.out, samples, f.inline_features);
    print_counts(samples);
    return 0;
}

// train

struct TrainFlags {
    CommonFlags common;
    std::string dataset;
    double lr = 0.1;
    int epochs = 200;
    std::string out;
    std::string loss_out;
};

int cmd_train(TrainFlags& f) {
    finalize(f.common);
    const RunConfig& cfg = f.common.cfg;
    auto worlds = load_worldset(cfg);
    const auto samples = load_dataset(f.dataset, *worlds);
    if (samples.empty()) throw ConfigError("dataset is empty: " + f.dataset);
    const std::size_t c = samples.front().frames.front().features->dim();
    ToyModel model = ToyModel::make(cfg.seed, c, kDefaultQueryCount, cfg.n_hist, cfg.n_cur);
    const auto data = build_training_set(samples, model);
    auto result = train(model.policy, data, f.lr, f.epochs);
    model.policy = std::move(result.params);
    write_file(f.out, checkpoint_to_json(model.checkpoint()));
    const std::string loss_path = f.loss_out.empty() ? f.out + ".loss.json" : f.loss_out;
    nlohmann::ordered_json trace{{"lr", f.lr}, {"epochs", f.epochs}, {"loss", result.loss_trace}};
    write_file(loss_path, trace.dump() + "\n");
    std::cout << "samples: " << data.size() << "\nloss: " << result.loss_trace.front() << " -> "
              << result.loss_trace.back() << "\ntype accuracy: " << type_accuracy(model.policy, data)
              << "\ncheckpoint: " << f.out << "\nloss trace: " << loss_path << '\n';
    return 0;
}

// serve

struct ServeFlags {
    CommonFlags common;
    std::string host = "127.0.0.1";
    int port = 7070;
    bool quiet = false;
};

int cmd_serve(ServeFlags& f) {
    finalize(f.common);
    const RunConfig& cfg = f.common.cfg;
    std::shared_ptr<const WorldSet> worlds;
    if (AgentSpec::parse(cfg.agent).kind == AgentSpec::Kind::Oracle) worlds = load_worldset(cfg);
    const auto factory = make_agent_factory(cfg.agent, worlds, cfg);
    if (AgentSpec::parse(cfg.agent).kind == AgentSpec::Kind::Remote) throw ConfigError("serve cannot wrap a remote agent");
    ServeOptions opt;
    opt.host = f.host;
    opt.port = f.port;
    opt.log = f.quiet ? nullptr : &std::cerr;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::unique_ptr<AgentServer> server;
    try {
        server = std::make_unique<AgentServer>(factory, opt);
    } catch (const BindError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitTransport;
    }
    std::cout << "listening on " << f.host << ':' << server->port() << std::endl;
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server->stop();
    std::cout << "served " << server->sessions_served() << " session(s)" << std::endl;
    return 0;
}

// parse

int cmd_parse(const std::vector<std::string>& words) {
    std::string text;
    for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
    const auto a = try_parse_action(text);
    if (!a) {
        std::cout << "NoValidAction\n";
        return 0;
    }
    nlohmann::ordered_json j{{"type", action_type_name(a->type)}};
    switch (a->type) {
        case ActionType::Forward:
            j["argument"] = a->argument;
            j["unit"] = "m";
            break;
        case ActionType::TurnLeft:
        case ActionType::TurnRight:
            j["argument"] = a->argument;
            j["unit"] = "deg";
            break;
        case ActionType::Stop:
            j["argument"] = nullptr;
            j["unit"] = nullptr;
            break;
    }
    std::cout << j.dump() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grid-world vision-language navigation benchmark"};
    app.require_subcommand(1);

    EvalFlags ev;
    auto* eval = app.add_subcommand("eval", "Evaluate an agent and print TL/NE/OS/SR/SPL");
    add_common(eval, ev.common);
    eval->add_option("--agent", ev.common.cfg.agent, "oracle | random | toy[:checkpoint] | remote:<host>:<port>");
    eval->add_option("--out", ev.out, "Write JSON results here");
    eval->add_flag("--trajectories", ev.trajectories, "Include per-step poses in the results file");
    eval->add_flag("--file-episodes", ev.common.cfg.file_episodes, "Run the episodes declared in the world files");
    eval->add_option("--jobs", ev.common.cfg.jobs, "Parallel episode workers")->check(CLI::Range(1, 1024));

    CollectFlags co;
    auto* collect = app.add_subcommand("collect", "Collect oracle or DAgger step samples, or mix two datasets");
    add_common(collect, co.common);
    collect->add_option("--mode", co.mode, "oracle or dagger")->check(CLI::IsMember({"oracle", "dagger"}));
    auto* collect_agent = collect->add_option("--agent", co.common.cfg.agent, "Agent to roll out in dagger mode");
    collect->add_option("--mix", co.mix, "Mix an oracle and a dagger dataset 16:9")->expected(2);
    collect->add_option("--out", co.out, "Output JSON-lines file")->required();
    collect->add_flag("--inline-features", co.inline_features, "Store rendered features in each line");

    TrainFlags tr;
    auto* trainc = app.add_subcommand("train", "Train the policy head on a dataset");
    add_common(trainc, tr.common);
    trainc->add_option("--dataset", tr.dataset, "JSON-lines dataset")->required();
    trainc->add_option("--lr", tr.lr, "Learning rate")->check(CLI::PositiveNumber);
    trainc->add_option("--epochs", tr.epochs, "Gradient steps")->check(CLI::Range(1, 100000000));
    trainc->add_option("--out", tr.out, "Checkpoint path")->required();
    trainc->add_option("--loss-out", tr.loss_out, "Loss trace path (default: <out>.loss.json)");

    ServeFlags sv;
    auto* serve = app.add_subcommand("serve", "Expose a built-in agent over the wire protocol");
    add_common(serve, sv.common);
    serve->add_option("--agent", sv.common.cfg.agent, "oracle | random | toy[:checkpoint]");
    serve->add_option("--host", sv.host, "Bind address");
    serve->add_option("--port", sv.port, "Bind port (0 = ephemeral)")->check(CLI::Range(0, 65535));
    serve->add_flag("--quiet", sv.quiet, "Do not log sessions");

    std::vector<std::string> words;
    auto* parse = app.add_subcommand("parse", "Parse an answer sentence into an action");
    parse->add_option("text", words, "Answer text")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    try {
        if (*eval) return cmd_eval(ev);
        if (*collect) return cmd_collect(co, collect_agent->count() > 0);
        if (*trainc) return cmd_train(tr);
        if (*serve) return cmd_serve(sv);
        if (*parse) return cmd_parse(words);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const TransportError& e) {
        std::cerr << "transport failure: " << e.what() << '\n';
        return kExitTransport;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return 0;
}
