#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "oracle.hpp"
#include "rulehte/rulehte.hpp"

namespace testing_support {

inline rulehte::Matrix to_matrix(const oracle::Problem& p) {
    rulehte::Matrix m(p.n, 2 * p.groups);
    for (std::size_t c = 0; c < 2 * p.groups; ++c)
        for (std::size_t i = 0; i < p.n; ++i) m(i, c) = p.at(i, c);
    return m;
}

// Fresh scratch directory under the system temp dir, one per test name.
inline std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("rulehte_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

inline rulehte::FitConfig small_config(std::uint64_t seed = 1) {
    rulehte::FitConfig cfg;
    cfg.gbt.trees = 40;
    cfg.gbt.mean_terminal = 3.0;
    cfg.gbt.shrinkage = 0.1;
    cfg.gbt.min_leaf = 5;
    cfg.solver.path_length = 20;
    cfg.solver.cv_folds = 5;
    cfg.seed = seed;
    return cfg;
}

}  // namespace testing_support
