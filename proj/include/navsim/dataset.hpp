#pragma once

#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "navsim/agents.hpp"
#include "navsim/expert.hpp"

namespace navsim {

/**
 * One StepSample per line. Frames are stored as {world_id, pose, seed}
 * references and re-rendered on load; with `inline_features` each line
 * also carries the rendered matrices ("features": one row-major array per
 * frame) for exchange with tools that do not have the worlds.
 */
inline void write_dataset(std::ostream& out, const std::vector<StepSample>& samples, bool inline_features = false) {
    for (const auto& s : samples) {
        nlohmann::ordered_json j;
        j["episode_id"] = s.episode_id;
        j["world_id"] = s.world_id;
        j["instruction"] = s.instruction;
        j["source"] = source_name(s.source);
        j["oracle_action"] = {{"type", action_type_name(s.oracle_action.type)}, {"argument", s.oracle_action.argument}};
        j["c"] = s.frames.empty() ? 0 : s.frames.front().features->dim();
        auto frames = nlohmann::ordered_json::array();
        for (const auto& f : s.frames)
            frames.push_back({{"world_id", f.ref.world_id},
                              {"pose", {{"x", f.ref.pose.x}, {"y", f.ref.pose.y}, {"heading", f.ref.pose.heading}}},
                              {"seed", f.ref.seed}});
        j["frames"] = std::move(frames);
        if (inline_features) {
            auto feats = nlohmann::ordered_json::array();
            for (const auto& f : s.frames) feats.push_back(f.features->data.data);
            j["features"] = std::move(feats);
        }
        out << j.dump() << '\n';
    }
}

/**
 * Reads a dataset written by write_dataset. Frames without inline features
 * are rendered from `worlds`; identical references share one matrix.
 */
inline std::vector<StepSample> read_dataset(std::istream& in, const WorldSet& worlds) {
    std::vector<StepSample> out;
    std::map<std::tuple<std::string, double, double, double, std::uint64_t>, std::shared_ptr<const FrameFeatures>> cache;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            StepSample s;
            s.episode_id = j.at("episode_id").get<std::string>();
            s.world_id = j.at("world_id").get<std::string>();
            s.instruction = j.at("instruction").get<std::string>();
            const std::string src = j.at("source").get<std::string>();
            if (src != "oracle" && src != "dagger") throw ParseError("unknown source '" + src + "'");
            s.source = src == "oracle" ? SampleSource::Oracle : SampleSource::Dagger;
            const auto& a = j.at("oracle_action");
            auto type = action_type_from_name(a.at("type").get<std::string>());
            if (!type) throw ParseError("unknown action type");
            s.oracle_action = LowLevelAction::make(*type, a.value("argument", 0.0));
            const std::size_t c = j.at("c").get<std::size_t>();
            const auto& frames = j.at("frames");
            const nlohmann::json* inline_feats = j.contains("features") ? &j.at("features") : nullptr;
            if (inline_feats && inline_feats->size() != frames.size()) throw ParseError("features/frames length mismatch");
            for (std::size_t k = 0; k < frames.size(); ++k) {
                const auto& fj = frames[k];
                Frame f;
                f.ref.world_id = fj.at("world_id").get<std::string>();
                const auto& p = fj.at("pose");
                f.ref.pose = {p.at("x").get<double>(), p.at("y").get<double>(), p.at("heading").get<double>()};
                f.ref.seed = fj.at("seed").get<std::uint64_t>();
                if (inline_feats) {
                    FrameFeatures ff{Matrix(kPatchCount, c)};
                    ff.data.data = (*inline_feats)[k].get<std::vector<double>>();
                    if (ff.data.data.size() != kPatchCount * c) throw ParseError("inline features have the wrong size");
                    f.features = std::make_shared<const FrameFeatures>(std::move(ff));
                } else {
                    auto key = std::make_tuple(f.ref.world_id, f.ref.pose.x, f.ref.pose.y, f.ref.pose.heading, f.ref.seed);
                    auto it = cache.find(key);
                    if (it == cache.end()) {
                        const GridWorld* w = worlds.find(f.ref.world_id);
                        if (!w) throw ParseError("unknown world '" + f.ref.world_id + "'");
                        it = cache.emplace(key, std::make_shared<const FrameFeatures>(
                                                    raycast_features(*w, f.ref.pose, f.ref.seed, c))).first;
                    }
                    f.features = it->second;
                }
                s.frames.push_back(std::move(f));
            }
            if (s.frames.empty()) throw ParseError("sample without frames");
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("dataset line " + std::to_string(line_no) + ": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw ParseError("dataset line " + std::to_string(line_no) + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError("dataset line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace navsim
