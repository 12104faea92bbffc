#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <regex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace navsim {

enum class ActionType : int { Forward = 0, TurnLeft = 1, TurnRight = 2, Stop = 3 };

inline constexpr int kActionTypeCount = 4;

inline std::string_view action_type_name(ActionType t) {
    switch (t) {
        case ActionType::Forward: return "FORWARD";
        case ActionType::TurnLeft: return "TURN-LEFT";
        case ActionType::TurnRight: return "TURN-RIGHT";
        case ActionType::Stop: return "STOP";
    }
    return "?";
}

inline std::optional<ActionType> action_type_from_name(std::string_view s) {
    for (int i = 0; i < kActionTypeCount; ++i) {
        auto t = static_cast<ActionType>(i);
        if (action_type_name(t) == s) return t;
    }
    return std::nullopt;
}

// Argument caps. The lower bounds are the smallest quantities the
// canonical sentence can express (whole centimeters / whole degrees).
inline constexpr double kMinForwardMeters = 0.01;
inline constexpr double kMaxForwardMeters = 5.0;
inline constexpr double kMinTurnDegrees = 1.0;
inline constexpr double kMaxTurnDegrees = 180.0;

/// One low-level action. `argument` is meters for Forward, degrees for
/// turns, and 0 for Stop.
struct LowLevelAction {
    ActionType type = ActionType::Stop;
    double argument = 0.0;

    static LowLevelAction forward(double meters) { return make(ActionType::Forward, meters); }
    static LowLevelAction turn_left(double degrees) { return make(ActionType::TurnLeft, degrees); }
    static LowLevelAction turn_right(double degrees) { return make(ActionType::TurnRight, degrees); }
    static LowLevelAction stop() { return {}; }

    static LowLevelAction make(ActionType type, double argument) {
        LowLevelAction a{type, type == ActionType::Stop ? 0.0 : argument};
        if (!a.valid())
            throw std::invalid_argument(std::string("invalid argument for ") +
                                        std::string(action_type_name(type)) + ": " + std::to_string(argument));
        return a;
    }

    bool is_turn() const { return type == ActionType::TurnLeft || type == ActionType::TurnRight; }

    bool valid() const {
        switch (type) {
            case ActionType::Forward:
                return std::isfinite(argument) && argument >= kMinForwardMeters && argument <= kMaxForwardMeters;
            case ActionType::TurnLeft:
            case ActionType::TurnRight:
                return std::isfinite(argument) && argument >= kMinTurnDegrees && argument <= kMaxTurnDegrees;
            case ActionType::Stop: return argument == 0.0;
        }
        return false;
    }

    bool operator==(const LowLevelAction&) const = default;
};

class NoValidAction : public std::runtime_error {
  public:
    explicit NoValidAction(const std::string& text) : std::runtime_error("no valid action in answer: " + text) {}
};

inline std::string format_action(const LowLevelAction& a) {
    switch (a.type) {
        case ActionType::Forward:
            return "The next action is move forward " + std::to_string(std::lround(a.argument * 100.0)) + " cm.";
        case ActionType::TurnLeft:
            return "The next action is turn left " + std::to_string(std::lround(a.argument)) + " degrees.";
        case ActionType::TurnRight:
            return "The next action is turn right " + std::to_string(std::lround(a.argument)) + " degrees.";
        case ActionType::Stop: return "The next action is stop.";
    }
    return {};
}

namespace detail {

inline std::string fold_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char ch : text) {
        if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\f' || ch == '\v') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(ch < 0x80 ? static_cast<char>(std::tolower(ch)) : static_cast<char>(ch));
    }
    return out;
}

struct ActionGrammar {
    std::regex verb{
        R"(\b(move forward|go forward|walk forward|forward|turn left|rotate left|turn right|rotate right|stop|halt)\b)"};
    std::regex number{
        R"(((?:\d+(?:\.\d*)?)|(?:\.\d+)) ?(centimeters|centimeter|centimetres|centimetre|cm|meters|meter|metres|metre|m|degrees|degree|deg|\xC2\xB0)?(?![a-z]))"};
};

inline const ActionGrammar& grammar() {
    static const ActionGrammar g;
    return g;
}

inline ActionType verb_type(const std::string& verb) {
    if (verb == "stop" || verb == "halt") return ActionType::Stop;
    if (verb.ends_with("left")) return ActionType::TurnLeft;
    if (verb.ends_with("right")) return ActionType::TurnRight;
    return ActionType::Forward;
}

}  // namespace detail

/**
 * Extracts the first action from a free-form answer.
 *
 * Matching is case-insensitive and whitespace-insensitive. The numeric
 * argument is the first number between the matched verb and the next verb
 * (or end of text). Units: cm/m for forward (default cm), degrees for turns.
 * Missing numbers default to 25 cm / 30 degrees; results are clamped into
 * the argument caps.
 */
inline std::optional<LowLevelAction> try_parse_action(std::string_view text) {
    const auto& g = detail::grammar();
    const std::string folded = detail::fold_text(text);

    std::smatch verb_match;
    if (!std::regex_search(folded, verb_match, g.verb)) return std::nullopt;
    const ActionType type = detail::verb_type(verb_match.str(1));
    if (type == ActionType::Stop) return LowLevelAction::stop();

    const auto seg_begin = verb_match.suffix().first;
    auto seg_end = folded.cend();
    std::smatch next_verb;
    if (std::regex_search(seg_begin, folded.cend(), next_verb, g.verb)) seg_end = next_verb[0].first;

    const bool forward = type == ActionType::Forward;
    double value = forward ? 25.0 : 30.0;
    std::string unit = forward ? "cm" : "deg";

    std::smatch num_match;
    if (std::regex_search(seg_begin, seg_end, num_match, g.number)) {
        value = std::strtod(num_match.str(1).c_str(), nullptr);
        const std::string u = num_match.str(2);
        if (forward) {
            if (u == "m" || u.starts_with("met")) unit = "m";
        }
    }

    if (forward) {
        double meters = unit == "m" ? value : value / 100.0;
        meters = std::clamp(meters, kMinForwardMeters, kMaxForwardMeters);
        return LowLevelAction{type, meters};
    }
    return LowLevelAction{type, std::clamp(value, kMinTurnDegrees, kMaxTurnDegrees)};
}

inline LowLevelAction parse_action(std::string_view text) {
    if (auto a = try_parse_action(text)) return *a;
    throw NoValidAction(std::string(text));
}

inline double valid_answer_ratio(std::span<const std::string> texts) {
    if (texts.empty()) throw std::invalid_argument("valid_answer_ratio: empty list");
    std::size_t ok = 0;
    for (const auto& t : texts)
        if (try_parse_action(t)) ++ok;
    return static_cast<double>(ok) / static_cast<double>(texts.size());
}

}  // namespace navsim
