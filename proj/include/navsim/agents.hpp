#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "navsim/actions.hpp"
#include "navsim/agent.hpp"
#include "navsim/encoder.hpp"
#include "navsim/expert.hpp"
#include "navsim/policy.hpp"
#include "navsim/prompt.hpp"

namespace navsim {

/// The worlds an evaluation runs over, with episode lookup by id.
class WorldSet {
  public:
    WorldSet() = default;
    explicit WorldSet(std::vector<GridWorld> worlds, EpisodeOptions options = {})
        : worlds_(std::move(worlds)), options_(options) {}

    std::span<const GridWorld> worlds() const { return worlds_; }
    const EpisodeOptions& episode_options() const { return options_; }
    bool empty() const { return worlds_.empty(); }

    const GridWorld* find(std::string_view id) const {
        for (const auto& w : worlds_)
            if (w.id() == id) return &w;
        return nullptr;
    }

    /// Episode i of a run seeded with `seed`.
    Episode generated(std::uint64_t seed, std::size_t index) const {
        return generate_episode(worlds_.at(index % worlds_.size()), episode_seed(seed, index), options_);
    }

    /**
     * Resolves an episode id: file-defined episodes first, then ids of the
     * form "<world_id>:<seed>" produced by generate_episode.
     */
    std::optional<Episode> resolve(const std::string& episode_id) const {
        for (const auto& w : worlds_)
            for (const auto& e : w.episodes())
                if (e.id == episode_id) return e;
        const auto colon = episode_id.rfind(':');
        if (colon == std::string::npos) return std::nullopt;
        const GridWorld* w = find(std::string_view(episode_id).substr(0, colon));
        if (!w) return std::nullopt;
        try {
            std::size_t used = 0;
            const std::string tail = episode_id.substr(colon + 1);
            const std::uint64_t seed = std::stoull(tail, &used);
            if (used != tail.size()) return std::nullopt;
            return generate_episode(*w, seed, options_);
        } catch (const std::logic_error&) {
            return std::nullopt;
        }
    }

  private:
    std::vector<GridWorld> worlds_;
    EpisodeOptions options_;
};

/**
 * Privileged shortest-path agent. It never sees the pose; it dead-reckons
 * from the episode start by simulating its own actions, which matches the
 * harness exactly because both sides execute the same parsed sentence.
 * Episodes given without a world id are resolved through the WorldSet.
 */
class OracleAgent : public Agent {
  public:
    explicit OracleAgent(std::shared_ptr<const WorldSet> worlds, OracleCaps caps = {})
        : worlds_(std::move(worlds)), caps_(caps) {}

    void reset(const Episode& episode) override {
        Episode ep = episode;
        if (ep.world_id.empty()) {
            auto resolved = worlds_->resolve(episode.id);
            if (!resolved) throw std::invalid_argument("oracle agent: unknown episode '" + episode.id + "'");
            ep = *resolved;
        }
        world_ = worlds_->find(ep.world_id);
        if (!world_) throw std::invalid_argument("oracle agent: unknown world '" + ep.world_id + "'");
        expert_.emplace(*world_, ep.goal, ep.success_radius, caps_);
        pose_ = ep.start;
    }

    std::string act(const FrameFeatures&) override {
        if (!expert_) throw std::logic_error("oracle agent: act before reset");
        const LowLevelAction a = expert_->action(pose_);
        const std::string text = format_action(a);
        pose_ = step(*world_, pose_, parse_action(text)).pose;
        return text;
    }

  private:
    std::shared_ptr<const WorldSet> worlds_;
    OracleCaps caps_;
    const GridWorld* world_ = nullptr;
    std::optional<OracleExpert> expert_;
    Pose pose_;
};

/// Emits random canonical sentences; the stream depends on (seed, episode id).
class RandomAgent : public Agent {
  public:
    explicit RandomAgent(std::uint64_t seed) : seed_(seed), rng_(seed) {}

    void reset(const Episode& episode) override { rng_ = Xoshiro256(mix64(seed_, fnv1a(episode.id))); }

    std::string act(const FrameFeatures&) override {
        const double u = rng_.uniform();
        if (u < 0.55) return format_action(LowLevelAction::forward(std::round(rng_.uniform(25.0, 75.0)) / 100.0));
        if (u < 0.75) return format_action(LowLevelAction::turn_left(std::round(rng_.uniform(15.0, 45.0))));
        if (u < 0.95) return format_action(LowLevelAction::turn_right(std::round(rng_.uniform(15.0, 45.0))));
        return format_action(LowLevelAction::stop());
    }

  private:
    std::uint64_t seed_;
    Xoshiro256 rng_;
};

/// Encoder, prompt layout, and policy head bundled for inference.
struct ToyModel {
    EncoderParams encoder;
    PolicyParams policy;
    std::size_t n_hist = kDefaultHistoryTokens;
    std::size_t n_cur = kDefaultCurrentTokens;

    static ToyModel make(std::uint64_t seed, std::size_t c = kDefaultFeatureDim, std::size_t m = kDefaultQueryCount,
                         std::size_t n_hist = kDefaultHistoryTokens, std::size_t n_cur = kDefaultCurrentTokens) {
        return {EncoderParams::make(seed, c, m), PolicyParams::make(seed, 4 * c), n_hist, n_cur};
    }

    static ToyModel from_checkpoint(const Checkpoint& ck) {
        return {EncoderParams::make(ck.policy.seed, ck.c, ck.m), ck.policy, ck.n_hist, ck.n_cur};
    }

    Checkpoint checkpoint() const { return {policy, encoder.c, encoder.m, n_hist, n_cur}; }
};

/**
 * Encodes frames into prompt features. History tokens are cached per
 * (frame, instruction) so a trajectory's frames are encoded once each.
 * Cache keys are frame addresses: frames must outlive the featurizer.
 */
class PromptFeaturizer {
  public:
    PromptFeaturizer(const EncoderParams& encoder, std::size_t n_hist, std::size_t n_cur)
        : encoder_(&encoder), n_hist_(n_hist), n_cur_(n_cur) {}

    std::vector<double> features(const std::string& instruction, std::span<const Frame> frames) {
        if (frames.empty()) throw std::invalid_argument("featurizer: no frames");
        const InstructionEmbedding& instr = embedding(instruction);
        std::vector<ObservationTokens> history;
        history.reserve(frames.size() - 1);
        for (std::size_t i = 0; i + 1 < frames.size(); ++i) history.push_back(history_tokens(instr, instruction, *frames[i].features));
        const ObservationTokens current = encode_frame(*frames.back().features, instr, n_cur_, *encoder_);
        return featurize(assemble_prompt(history, current, instr.tokens, n_hist_, n_cur_));
    }

  private:
    const InstructionEmbedding& embedding(const std::string& instruction) {
        auto it = embeddings_.find(instruction);
        if (it == embeddings_.end()) it = embeddings_.emplace(instruction, embed_instruction(instruction, *encoder_)).first;
        return it->second;
    }

    const ObservationTokens& history_tokens(const InstructionEmbedding& instr, const std::string& instruction,
                                            const FrameFeatures& f) {
        auto key = std::make_pair(&f, instruction);
        auto it = history_.find(key);
        if (it == history_.end()) it = history_.emplace(key, encode_frame(f, instr, n_hist_, *encoder_)).first;
        return it->second;
    }

    const EncoderParams* encoder_;
    std::size_t n_hist_;
    std::size_t n_cur_;
    std::map<std::string, InstructionEmbedding> embeddings_;
    std::map<std::pair<const FrameFeatures*, std::string>, ObservationTokens> history_;
};

/// The trainable policy as an agent: encode, prompt, featurize, predict, decode.
class ToyAgent : public Agent {
  public:
    explicit ToyAgent(std::shared_ptr<const ToyModel> model) : model_(std::move(model)) {}

    void reset(const Episode& episode) override {
        instruction_ = embed_instruction(episode.instruction, model_->encoder);
        history_.clear();
    }

    std::string act(const FrameFeatures& frame) override {
        const ObservationTokens current = encode_frame(frame, instruction_, model_->n_cur, model_->encoder);
        const auto f = featurize(assemble_prompt(history_, current, instruction_.tokens, model_->n_hist, model_->n_cur));
        history_.push_back(encode_frame(frame, instruction_, model_->n_hist, model_->encoder));
        return decode(predict(model_->policy, f));
    }

  private:
    std::shared_ptr<const ToyModel> model_;
    InstructionEmbedding instruction_;
    std::vector<ObservationTokens> history_;
};

}  // namespace navsim
