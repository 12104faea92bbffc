#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "navsim/encoder.hpp"

namespace navsim {

inline constexpr std::size_t kDefaultHistoryTokens = 4;
inline constexpr std::size_t kDefaultCurrentTokens = 64;

enum class Marker { HisOpen, HisClose, ObsOpen, ObsClose, Nav };

inline std::string_view marker_text(Marker m) {
    switch (m) {
        case Marker::HisOpen: return "<HIS>";
        case Marker::HisClose: return "</HIS>";
        case Marker::ObsOpen: return "<OBS>";
        case Marker::ObsClose: return "</OBS>";
        case Marker::Nav: return "<NAV>";
    }
    return "";
}

struct Visual {
    std::vector<double> value;
};

struct Word {
    std::string text;
};

using PromptElement = std::variant<Marker, Visual, Word>;

class BudgetError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Number of visual tokens in a prompt over t frames.
inline std::size_t token_budget(std::size_t t, std::size_t n_hist = kDefaultHistoryTokens,
                                std::size_t n_cur = kDefaultCurrentTokens) {
    if (t < 1) throw std::invalid_argument("token_budget: need at least one frame");
    return (t - 1) * (1 + n_hist) + (1 + n_cur);
}

/**
 * <HIS> history visuals </HIS> <OBS> current visuals </OBS> <NAV> words.
 * Each frame contributes its queried token first, then its agnostic
 * tokens in row-major order.
 */
struct PromptSequence {
    std::vector<PromptElement> elements;
    std::size_t frame_count = 0;
    std::size_t n_hist = kDefaultHistoryTokens;
    std::size_t n_cur = kDefaultCurrentTokens;
};

inline PromptSequence assemble_prompt(std::span<const ObservationTokens> history, const ObservationTokens& current,
                                      std::span<const std::string> instruction,
                                      std::size_t n_hist = kDefaultHistoryTokens,
                                      std::size_t n_cur = kDefaultCurrentTokens) {
    if (current.n_v() != n_cur)
        throw BudgetError("current frame has " + std::to_string(current.n_v()) + " agnostic tokens, expected " +
                          std::to_string(n_cur));
    for (std::size_t i = 0; i < history.size(); ++i)
        if (history[i].n_v() != n_hist)
            throw BudgetError("history frame " + std::to_string(i) + " has " + std::to_string(history[i].n_v()) +
                              " agnostic tokens, expected " + std::to_string(n_hist));

    PromptSequence p;
    p.frame_count = history.size() + 1;
    p.n_hist = n_hist;
    p.n_cur = n_cur;
    p.elements.reserve(5 + token_budget(p.frame_count, n_hist, n_cur) + instruction.size());
    auto push_frame = [&](const ObservationTokens& f) {
        p.elements.emplace_back(Visual{f.queried});
        for (std::size_t r = 0; r < f.agnostic.rows; ++r) {
            auto row = f.agnostic.row(r);
            p.elements.emplace_back(Visual{{row.begin(), row.end()}});
        }
    };
    p.elements.emplace_back(Marker::HisOpen);
    for (const auto& h : history) push_frame(h);
    p.elements.emplace_back(Marker::HisClose);
    p.elements.emplace_back(Marker::ObsOpen);
    push_frame(current);
    p.elements.emplace_back(Marker::ObsClose);
    p.elements.emplace_back(Marker::Nav);
    for (const auto& w : instruction) p.elements.emplace_back(Word{w});
    return p;
}

/// Structure recovered by scanning a prompt's elements.
struct PromptLayout {
    std::size_t frame_count = 0;
    std::size_t n_hist = 0;
    std::size_t n_cur = 0;
    std::size_t history_begin = 0;  // index of the first history visual
    std::size_t current_begin = 0;  // index of the current queried token
    std::vector<std::string> words;
};

/// Validates marker order and token counts; throws std::invalid_argument on
/// a malformed sequence. The history frame size comes from `p.n_hist` since
/// the visual count alone does not determine it.
inline PromptLayout scan_prompt(const PromptSequence& p) {
    auto fail = [](const std::string& why) { throw std::invalid_argument("malformed prompt: " + why); };
    const auto& e = p.elements;
    auto is_marker = [&](std::size_t i, Marker m) {
        return i < e.size() && std::holds_alternative<Marker>(e[i]) && std::get<Marker>(e[i]) == m;
    };
    std::size_t i = 0;
    if (!is_marker(i++, Marker::HisOpen)) fail("expected <HIS>");
    PromptLayout out;
    out.history_begin = i;
    std::size_t hist_visuals = 0;
    while (i < e.size() && std::holds_alternative<Visual>(e[i])) ++hist_visuals, ++i;
    if (!is_marker(i++, Marker::HisClose)) fail("expected </HIS>");
    if (!is_marker(i++, Marker::ObsOpen)) fail("expected <OBS>");
    out.current_begin = i;
    std::size_t cur_visuals = 0;
    while (i < e.size() && std::holds_alternative<Visual>(e[i])) ++cur_visuals, ++i;
    if (!is_marker(i++, Marker::ObsClose)) fail("expected </OBS>");
    if (!is_marker(i++, Marker::Nav)) fail("expected <NAV>");
    for (; i < e.size(); ++i) {
        if (!std::holds_alternative<Word>(e[i])) fail("non-word after <NAV>");
        out.words.push_back(std::get<Word>(e[i]).text);
    }
    if (cur_visuals < 1) fail("current frame has no tokens");
    out.n_cur = cur_visuals - 1;
    out.n_hist = p.n_hist;
    if (hist_visuals % (1 + p.n_hist) != 0) fail("history token count not a multiple of the frame size");
    out.frame_count = hist_visuals / (1 + p.n_hist) + 1;
    return out;
}

/// Text rendering with literal markers and a [VIS] placeholder per visual token.
inline std::string to_debug_string(const PromptSequence& p) {
    std::string out;
    bool after_nav = false;
    for (const auto& el : p.elements) {
        if (const auto* m = std::get_if<Marker>(&el)) {
            out += marker_text(*m);
            after_nav = *m == Marker::Nav;
        } else if (std::holds_alternative<Visual>(el)) {
            out += "[VIS]";
        } else {
            if (!after_nav) out += ' ';
            out += std::get<Word>(el).text;
            after_nav = false;
        }
    }
    return out;
}

}  // namespace navsim
