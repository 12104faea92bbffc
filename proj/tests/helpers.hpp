#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "navsim/navsim.hpp"

namespace testutil {

inline navsim::GridWorld make_world(std::vector<std::string> rows, double res = 0.25,
                                    std::map<char, std::string> names = {}, std::string id = "test") {
    return navsim::GridWorld(std::move(id), res, std::move(rows), std::move(names));
}

/// Closed rectangle of free cells with one landmark 'a' (named "chair").
inline navsim::GridWorld open_room(int h, int w, double res = 0.25, std::string id = "room") {
    std::vector<std::string> rows(h, std::string(w, '.'));
    for (int r = 0; r < h; ++r) rows[r][0] = rows[r][w - 1] = '#';
    rows[0] = rows[h - 1] = std::string(w, '#');
    rows[1][1] = 'a';
    return navsim::GridWorld(std::move(id), res, std::move(rows), {{'a', "chair"}});
}

inline std::vector<std::string> world_files() {
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(NAVSIM_WORLDS_DIR))
        if (e.path().extension() == ".json") out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<navsim::GridWorld> bundled_worlds() { return navsim::load_world_files(world_files()); }

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("navsim_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testutil
