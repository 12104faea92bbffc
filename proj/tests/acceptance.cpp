// Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero only
// when a criterion outside the known-limitation list fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include "navsim/navsim.hpp"

using namespace navsim;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const std::set<std::string> kKnownLimitations = {"learning-smoke-test"};

int unexpected_failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    const bool known = !ok && kKnownLimitations.contains(name);
    std::printf("%s %-24s %s%s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str(),
                known ? " [known limitation, recorded in the decisions ledger]" : "");
    if (!ok && !known) ++unexpected_failures;
}

void run_check(const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
    try {
        const auto t0 = Clock::now();
        auto [ok, detail] = fn();
        if (std::getenv("NAVSIM_ACCEPTANCE_TIMING")) detail += fmt(" (%.1fs)", seconds_since(t0));
        report(name, ok, detail);
    } catch (const std::exception& e) {
        report(name, false, std::string("exception: ") + e.what());
    }
}

std::vector<std::string> world_files() {
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(NAVSIM_WORLDS_DIR))
        if (e.path().extension() == ".json") out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::shared_ptr<const WorldSet> worldset(const RunConfig& cfg) {
    return std::make_shared<const WorldSet>(load_world_files(world_files()), cfg.episode_options());
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(NAVSIM_CLI) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Matrix random_matrix(Xoshiro256& rng, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (auto& v : m.data) v = rng.uniform(-1, 1);
    return m;
}

using Rows = std::vector<std::vector<double>>;

Rows rows_of(const Matrix& m) {
    Rows r(m.rows, std::vector<double>(m.cols));
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) r[i][j] = m(i, j);
    return r;
}

Rows mul(const Rows& a, const Rows& b) {
    Rows o(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < b.size(); ++k)
            for (std::size_t j = 0; j < b[0].size(); ++j) o[i][j] += a[i][k] * b[k][j];
    return o;
}

Rows naive_attention(const Rows& q, const Rows& k, const Rows& v) {
    Rows o(q.size(), std::vector<double>(v[0].size(), 0.0));
    for (std::size_t i = 0; i < q.size(); ++i) {
        std::vector<double> w(k.size());
        double z = 0;
        for (std::size_t j = 0; j < k.size(); ++j) {
            double s = 0;
            for (std::size_t d = 0; d < q[i].size(); ++d) s += q[i][d] * k[j][d];
            z += w[j] = std::exp(s);
        }
        for (std::size_t j = 0; j < k.size(); ++j)
            for (std::size_t d = 0; d < v[j].size(); ++d) o[i][d] += w[j] / z * v[j][d];
    }
    return o;
}

double max_diff(const Matrix& a, const Rows& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) m = std::max(m, std::abs(a(i, j) - b[i][j]));
    return m;
}

class StopAgent : public Agent {
  public:
    void reset(const Episode&) override {}
    std::string act(const FrameFeatures&) override { return "The next action is stop."; }
};

// ---------------------------------------------------------------------------

std::pair<bool, std::string> oracle_soundness() {
    const auto dir = std::filesystem::temp_directory_path() / "navsim_acceptance";
    std::filesystem::create_directories(dir);
    const auto out = dir / "oracle.json";
    const auto t0 = Clock::now();
    const int code = run_cli("eval --agent oracle --episodes 200 --seed 0 --jobs 1 --out " + out.string());
    const double secs = seconds_since(t0);
    if (code != 0) return {false, fmt("eval exited %d", code)};
    const auto j = nlohmann::json::parse(read_file(out));
    const auto& s = j.at("summary");
    std::set<std::string> worlds;
    for (const auto& e : j.at("episodes")) {
        const auto id = e.at("episode_id").get<std::string>();
        worlds.insert(id.substr(0, id.rfind(':')));
    }
    const double sr = s.at("sr"), os = s.at("os"), spl = s.at("spl");
    const bool ok = s.at("n") == 200 && worlds.size() >= 4 && sr == 100.0 && os == 100.0 && spl >= 85.0 && secs < 30.0;
    return {ok, fmt("n=200 worlds=%zu SR=%.1f OS=%.1f SPL=%.2f time=%.2fs", worlds.size(), sr, os, spl, secs)};
}

std::pair<bool, std::string> metric_ordering() {
    bool ok = true;
    std::string detail;
    for (const char* agent : {"oracle", "random", "toy"})
        for (std::uint64_t seed : {1, 2, 3}) {
            RunConfig cfg;
            cfg.seed = seed;
            cfg.episodes = 10;
            auto ws = worldset(cfg);
            const auto out = evaluate(*ws, episodes_for(*ws, cfg), make_agent_factory(agent, ws, cfg), cfg.runner(), 4);
            for (const auto& r : out.results) ok &= r.spl_term <= (r.success ? 1.0 : 0.0);
            const auto& m = out.summary;
            ok &= m.spl <= m.sr && m.sr <= m.os;
            if (seed == 1) detail += fmt("%s(SPL=%.1f SR=%.1f OS=%.1f) ", agent, m.spl, m.sr, m.os);
        }
    return {ok, detail + "over 3 seeds x 10 episodes each"};
}

std::pair<bool, std::string> success_radius() {
    // A straight corridor; an agent that stops at once is judged on its start distance.
    const GridWorld w("corridor", 0.25, {std::string(60, '#'), "#" + std::string(58, '.') + "#", std::string(60, '#')}, {});
    bool ok = true;
    int checked = 0;
    for (double radius : {kSimSuccessRadius, kRealWorldSuccessRadius})
        for (int cells : {5, 6, 11, 12, 13}) {
            const Point goal = w.center({1, 1});
            const Point start = w.center({1, 1 + cells});
            Episode ep{"e", w.id(), "stop", {start.x, start.y, 0.0}, goal, radius, 10};
            StopAgent agent;
            const auto r = run_episode(w, ep, agent);
            const double d = 0.25 * cells;
            ok &= r.ne == d && r.success == (d <= radius);
            ++checked;
        }
    // The CLI flag selects the real-world threshold for every episode.
    RunConfig cfg;
    cfg.success_radius = kRealWorldSuccessRadius;
    cfg.episodes = 10;
    auto ws = worldset(cfg);
    for (const auto& ep : episodes_for(*ws, cfg)) ok &= ep.success_radius == 1.5;
    const auto dir = std::filesystem::temp_directory_path() / "navsim_acceptance";
    std::filesystem::create_directories(dir);
    ok &= run_cli("eval --agent oracle --episodes 5 --real-world --out " + (dir / "rw.json").string()) == 0;
    ok &= nlohmann::json::parse(read_file(dir / "rw.json")).at("config").at("success_radius") == 1.5;
    return {ok, fmt("%d threshold probes at 3.0 m and 1.5 m, --real-world => 1.5 m", checked)};
}

std::pair<bool, std::string> token_budgets() {
    bool ok = true;
    for (std::size_t t = 1; t <= 300; ++t) {
        const std::vector<ObservationTokens> hist(t - 1, ObservationTokens{{0.0}, Matrix(4, 1)});
        const std::vector<std::string> words{"go", "to", "the", "door"};
        const auto p = assemble_prompt(hist, ObservationTokens{{0.0}, Matrix(64, 1)}, words);
        // Walk the sequence element by element.
        std::size_t i = 0, visuals = 0;
        auto marker = [&](Marker m) {
            return i < p.elements.size() && std::holds_alternative<Marker>(p.elements[i]) && std::get<Marker>(p.elements[i++]) == m;
        };
        bool good = marker(Marker::HisOpen);
        for (std::size_t f = 0; f + 1 < t; ++f)
            for (std::size_t k = 0; k < 5; ++k) good &= std::holds_alternative<Visual>(p.elements[i++]), ++visuals;
        good &= marker(Marker::HisClose) && marker(Marker::ObsOpen);
        for (std::size_t k = 0; k < 65; ++k) good &= std::holds_alternative<Visual>(p.elements[i++]), ++visuals;
        good &= marker(Marker::ObsClose) && marker(Marker::Nav);
        for (const auto& w : words) good &= std::get<Word>(p.elements[i++]).text == w;
        good &= i == p.elements.size();
        ok &= good && visuals == 5 * t + 60 && token_budget(t, 4, 64) == 5 * t + 60;
    }
    return {ok, "t=1..300, budget 5t+60 matched element by element"};
}

std::pair<bool, std::string> encoder_numerics() {
    Xoshiro256 rng(2024);
    double att = 0, query_err = 0, token_err = 0, pool = 0, perm = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto q = random_matrix(rng, 3, 4), k = random_matrix(rng, 5, 4), v = random_matrix(rng, 5, 4);
        att = std::max(att, max_diff(attention(q, k, v), naive_attention(rows_of(q), rows_of(k), rows_of(v))));

        const auto params = EncoderParams::make(rng());
        const FrameFeatures x{random_matrix(rng, 256, 32)};
        const auto instr = embed_instruction("walk past the sofa to the door", params);
        const Rows b = rows_of(params.base_queries), xr = rows_of(x.data), ir = rows_of(instr.matrix);
        const Rows qq = mul(b, rows_of(params.w_q));
        Rows want = b;
        const Rows t1 = naive_attention(qq, mul(ir, rows_of(params.w_k)), mul(ir, rows_of(params.w_v)));
        const Rows t2 = naive_attention(qq, mul(xr, rows_of(params.w_k)), mul(xr, rows_of(params.w_v)));
        for (std::size_t i = 0; i < want.size(); ++i)
            for (std::size_t j = 0; j < want[i].size(); ++j) want[i][j] += t1[i][j] + t2[i][j];
        const Matrix queries = generate_queries(x, instr, params);
        query_err = std::max(query_err, max_diff(queries, want));

        const Rows a = naive_attention(want, xr, xr);
        std::vector<double> pooled(32, 0.0);
        for (const auto& r : a)
            for (std::size_t j = 0; j < 32; ++j) pooled[j] += r[j] / a.size();
        const Rows e = mul({pooled}, rows_of(params.proj_queried));
        const auto got = instruction_queried_token(x, queries, params);
        for (std::size_t j = 0; j < 32; ++j) token_err = std::max(token_err, std::abs(got[j] - e[0][j]));

        for (std::size_t n_v : {1u, 4u, 16u, 64u}) {
            const std::size_t s = static_cast<std::size_t>(std::lround(std::sqrt(double(n_v))));
            Rows cell(n_v, std::vector<double>(32, 0.0));
            for (std::size_t i = 0; i < 256; ++i)
                for (std::size_t j = 0; j < 32; ++j) cell[(i / 16) * s / 16 * s + (i % 16) * s / 16][j] += x.data(i, j) * n_v / 256.0;
            pool = std::max(pool, max_diff(grid_pool(x, n_v), cell));
        }

        std::vector<std::size_t> idx(256);
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        FrameFeatures y{Matrix(256, 32)};
        for (std::size_t i = 0; i < 256; ++i) std::copy(x.data.row(idx[i]).begin(), x.data.row(idx[i]).end(), y.data.row(i).begin());
        const auto ea = encode_frame(x, instr, 64, params), eb = encode_frame(y, instr, 64, params);
        for (std::size_t j = 0; j < 32; ++j) perm = std::max(perm, std::abs(ea.queried[j] - eb.queried[j]));
    }
    const bool ok = att < 1e-9 && query_err < 1e-9 && token_err < 1e-9 && pool < 1e-6 && perm < 1e-9;
    return {ok, fmt("max err: attention %.1e, queries %.1e, queried token %.1e, pool %.1e, queried-token permutation %.1e", att, query_err, token_err, pool, perm)};
}

std::pair<bool, std::string> pooling_fixture() {
    Matrix x(16, 1);
    for (std::size_t i = 0; i < 16; ++i) x(i, 0) = static_cast<double>(i + 1);
    const auto out = grid_pool(x, 4);
    const bool ok = out.data == std::vector<double>{3.5, 5.5, 11.5, 13.5};
    return {ok, fmt("[%g, %g, %g, %g]", out.data[0], out.data[1], out.data[2], out.data[3])};
}

std::pair<bool, std::string> parser() {
    Xoshiro256 rng(77);
    int round_trip_ok = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto type = static_cast<ActionType>(rng.below(4));
        const double arg = type == ActionType::Forward ? rng.uniform(0.01, 5.0) : type == ActionType::Stop ? 0.0 : rng.uniform(1.0, 180.0);
        const auto a = LowLevelAction::make(type, arg);
        const auto b = parse_action(format_action(a));
        const double tol = type == ActionType::Forward ? 0.005 : 0.5;
        round_trip_ok += b.type == a.type && std::abs(b.argument - a.argument) <= tol;
    }
    std::vector<std::string> answers;
    for (int i = 0; i < 1000; ++i) {
        auto p = PolicyParams::make(rng(), 128);
        p.b_dist = rng.uniform(-5, 5);
        p.b_deg = rng.uniform(-300, 300);
        std::vector<double> f(128);
        for (auto& v : f) v = rng.uniform(-10, 10);
        answers.push_back(decode(predict(p, f)));
    }
    const double ratio = valid_answer_ratio(answers);
    return {round_trip_ok == 1000 && ratio == 1.0, fmt("round-trip %d/1000, decoded valid ratio %.1f%%", round_trip_ok, 100 * ratio)};
}

std::pair<bool, std::string> gradient_check() {
    Xoshiro256 rng(31);
    double worst = 0;
    std::size_t coords = 0;
    for (int trial = 0; trial < 20; ++trial) {
        auto p = PolicyParams::make(rng(), 12);
        for (auto& b : p.b_type) b = rng.uniform(-0.5, 0.5);
        p.b_dist = rng.uniform(-1, 1);
        p.b_deg = rng.uniform(-60, 60);
        std::vector<TrainingExample> batch;
        for (int i = 0; i < 8; ++i) {
            std::vector<double> f(12);
            for (auto& v : f) v = rng.uniform(-1, 1);
            const int t = i % 4;
            const LowLevelAction a = t == 0 ? LowLevelAction::forward(rng.uniform(0.05, 1))
                                     : t == 1 ? LowLevelAction::turn_left(rng.uniform(5, 90))
                                     : t == 2 ? LowLevelAction::turn_right(rng.uniform(5, 90))
                                              : LowLevelAction::stop();
            batch.push_back({f, a});
        }
        const auto g = grad(p, batch).flatten();
        std::size_t i = 0;
        auto probe = p;
        probe.for_each_coordinate([&](double& v) {
            const double orig = v;
            v = orig + 1e-5;
            const double up = loss(probe, batch);
            v = orig - 1e-5;
            const double down = loss(probe, batch);
            v = orig;
            const double n = (up - down) / 2e-5;
            worst = std::max(worst, std::abs(g[i] - n) / std::max(std::abs(g[i]) + std::abs(n), 1e-8));
            ++i;
        });
        coords += i;
    }
    return {worst < 1e-4, fmt("20 instances, %zu coordinates, max relative error %.2e", coords, worst)};
}

std::pair<bool, std::string> learning_smoke_test() {
    const auto t0 = Clock::now();
    RunConfig cfg;
    cfg.seed = 7;
    auto ws = worldset(cfg);
    const auto opt = cfg.collect_options();
    // Training and held-out episodes come from disjoint seeds.
    auto gather = [&](std::uint64_t seed, std::size_t want) {
        std::vector<StepSample> out;
        for (std::size_t i = 0; out.size() < want; ++i) {
            const auto& w = ws->worlds()[i % ws->worlds().size()];
            auto c = collect_oracle(std::span<const GridWorld>(&w, 1), 1, episode_seed(seed, i), opt);
            for (auto& s : c.samples) out.push_back(std::move(s));
        }
        out.resize(want);
        return out;
    };
    const auto train_samples = gather(cfg.seed, 500);
    const auto test_samples = gather(cfg.seed + 1000, 250);
    ToyModel model = ToyModel::make(cfg.seed);
    const auto train_set = build_training_set(train_samples, model);
    const auto test_set = build_training_set(test_samples, model);
    const auto r = train(model.policy, train_set, 0.1, 200);
    const double reduction = 1.0 - r.loss_trace.back() / r.loss_trace.front();
    const double acc = type_accuracy(r.params, test_set);
    const double base = majority_baseline(train_set, test_set);
    const double secs = seconds_since(t0);
    const bool ok = reduction >= 0.5 && acc > base && secs < 60;
    return {ok, fmt("loss %.3f -> %.3f (%.1f%% reduction), held-out accuracy %.3f vs majority %.3f, %.1fs",
                    r.loss_trace.front(), r.loss_trace.back(), 100 * reduction, acc, base, secs)};
}

std::pair<bool, std::string> dagger_mixing() {
    Xoshiro256 rng(99);
    int ok = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t no = 1 + rng.below(3000), nd = 1 + rng.below(3000);
        std::vector<StepSample> o(no), d(nd);
        for (auto& s : d) s.source = SampleSource::Dagger;
        const auto m = mix_datasets(std::move(o), std::move(d), rng());
        const double co = static_cast<double>(std::count_if(m.begin(), m.end(), [](auto& s) { return s.source == SampleSource::Oracle; }));
        const double cd = static_cast<double>(m.size()) - co;
        // The kept-whole source is exact; the other sits within one sample of 16:9.
        const bool good = (co == double(no) && std::abs(cd - co * 9 / 16) <= 1) || (cd == double(nd) && std::abs(co - cd * 16 / 9) <= 1);
        ok += good;
    }
    return {ok == 50, fmt("%d/50 randomized size pairs within +-1 of 16:9", ok)};
}

std::pair<bool, std::string> single_step() {
    std::vector<LowLevelAction> labels{LowLevelAction::forward(0.5), LowLevelAction::turn_left(40),
                                       LowLevelAction::turn_right(10), LowLevelAction::stop()};
    std::vector<std::optional<LowLevelAction>> same(labels.begin(), labels.end());
    const auto r = single_step_eval(labels, same);
    bool ok = r.success_rate == 100 && r.stop_success_rate == 100.0 && r.mean_angle_error == 0 && r.mean_distance_error == 0;
    // Errors just under and exactly at the thresholds.
    const std::vector<LowLevelAction> l2{LowLevelAction::forward(1.0), LowLevelAction::forward(1.0),
                                         LowLevelAction::turn_left(60), LowLevelAction::turn_left(60)};
    const std::vector<std::optional<LowLevelAction>> p2{LowLevelAction::forward(0.7001), LowLevelAction::forward(0.5),
                                                        LowLevelAction::turn_left(30.5), LowLevelAction::turn_left(20)};
    const auto r2 = single_step_eval(l2, p2);
    ok &= r2.success_rate == 50 && !r2.stop_success_rate;
    SingleStepThresholds th;
    ok &= th.distance == 0.30 && th.angle == 30.0;
    return {ok, fmt("identity 100/100/0/0; threshold probe %.0f%% (expected 50%%)", r2.success_rate)};
}

std::pair<bool, std::string> protocol_loopback() {
    RunConfig cfg;
    cfg.seed = 3;
    cfg.episodes = 50;
    auto ws = worldset(cfg);
    const auto eps = episodes_for(*ws, cfg);
    const auto factory = make_agent_factory("oracle", ws, cfg);
    const auto local = evaluate(*ws, eps, factory, cfg.runner());
    wire::AgentServer server(factory, {});
    const auto remote = evaluate(*ws, eps, make_agent_factory("remote:127.0.0.1:" + std::to_string(server.port()), ws, cfg),
                                 cfg.runner());
    std::size_t same = 0;
    for (std::size_t i = 0; i < eps.size(); ++i) same += local.results[i] == remote.results[i];

    auto transcript = [&] {
        RunConfig small;
        small.feature_dim = 3;
        auto sws = worldset(small);
        wire::AgentServer s(make_agent_factory("oracle", sws, small), {});
        auto t = std::make_shared<wire::Transcript>();
        auto agent = make_agent_factory("remote:127.0.0.1:" + std::to_string(s.port()), sws, small, t)();
        auto ep = *sws->resolve("apartment:e1");
        ep.max_steps = 3;
        auto rc = small.runner();
        run_episode(*sws->find(ep.world_id), ep, *agent, rc);
        return t->str();
    };
    const std::string a = transcript(), b = transcript();
    const std::string golden = read_file(std::string(NAVSIM_GOLDEN_DIR) + "/transcript_c3.txt");
    const bool ok = same == eps.size() && remote.transport_failures == 0 && a == b && a == golden;
    return {ok, fmt("%zu/%zu episodes field-identical; transcript stable across runs: %s, matches golden: %s", same,
                    eps.size(), a == b ? "yes" : "no", a == golden ? "yes" : "no")};
}

}  // namespace

int main() {
    run_check("oracle-soundness", oracle_soundness);
    run_check("metric-ordering", metric_ordering);
    run_check("success-radius", success_radius);
    run_check("token-budgets", token_budgets);
    run_check("encoder-numerics", encoder_numerics);
    run_check("pooling-fixture", pooling_fixture);
    run_check("parser", parser);
    run_check("gradient-check", gradient_check);
    run_check("learning-smoke-test", learning_smoke_test);
    run_check("dagger-mixing", dagger_mixing);
    run_check("single-step-evaluator", single_step);
    run_check("protocol-loopback", protocol_loopback);
    std::printf("%s\n", unexpected_failures ? "acceptance: unexpected failures" : "acceptance: ok");
    return unexpected_failures ? 1 : 0;
}
