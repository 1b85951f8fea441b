#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>

#include "json.hpp"
#include "rulehte/error.hpp"
#include "rulehte/model.hpp"

namespace rulehte {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

using Json = nlohmann::ordered_json;

inline Json bound_to_json(double v) {
    if (v == kInf) return "+inf";
    if (v == -kInf) return "-inf";
    return v;
}

inline double bound_from_json(const Json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "+inf" || s == "inf") return kInf;
        if (s == "-inf") return -kInf;
        throw ParseError("bad interval bound '" + s + "'", 0, 0);
    }
    return j.get<double>();
}

inline Json config_to_json(const FitConfig& c) {
    Json j;
    j["trees"] = c.gbt.trees;
    j["mean_terminal"] = c.gbt.mean_terminal;
    j["shrinkage"] = c.gbt.shrinkage;
    j["subsample"] = c.gbt.subsample ? Json(*c.gbt.subsample) : Json(nullptr);
    j["min_leaf"] = c.gbt.min_leaf;
    j["winsor_q"] = c.winsor_q;
    j["center_outcome"] = c.center_outcome;
    j["clip_propensity"] = c.clip.enabled;
    j["clip_epsilon"] = c.clip.epsilon;
    j["path_length"] = c.solver.path_length;
    j["path_min_ratio"] = c.solver.path_min_ratio;
    j["tolerance"] = c.solver.tolerance;
    j["max_sweeps"] = c.solver.max_sweeps;
    j["cv_folds"] = c.solver.cv_folds;
    j["cv_repeats"] = c.solver.cv_repeats;
    return j;
}

inline FitConfig config_from_json(const Json& j, std::uint64_t seed) {
    FitConfig c;
    c.seed = seed;
    c.gbt.trees = j.at("trees").get<std::size_t>();
    c.gbt.mean_terminal = j.at("mean_terminal").get<double>();
    c.gbt.shrinkage = j.at("shrinkage").get<double>();
    if (!j.at("subsample").is_null()) c.gbt.subsample = j.at("subsample").get<double>();
    c.gbt.min_leaf = j.at("min_leaf").get<std::size_t>();
    c.winsor_q = j.at("winsor_q").get<double>();
    c.center_outcome = j.at("center_outcome").get<bool>();
    c.clip.enabled = j.at("clip_propensity").get<bool>();
    c.clip.epsilon = j.at("clip_epsilon").get<double>();
    c.solver.path_length = j.at("path_length").get<std::size_t>();
    c.solver.path_min_ratio = j.at("path_min_ratio").get<double>();
    c.solver.tolerance = j.at("tolerance").get<double>();
    c.solver.max_sweeps = j.at("max_sweeps").get<std::size_t>();
    c.solver.cv_folds = j.at("cv_folds").get<std::size_t>();
    c.solver.cv_repeats = j.at("cv_repeats").get<std::size_t>();
    return seeded(c);
}

}  // namespace detail

inline std::string model_to_json(const CausalRuleFitModel& m) {
    using detail::Json;
    Json doc;
    doc["format_version"] = kModelFormatVersion;
    doc["intercept"] = m.intercept;
    Json rules = Json::array();
    for (const auto& r : m.rules) {
        Json conds = Json::array();
        for (const auto& c : r.rule.conditions())
            conds.push_back(Json{{"feature", m.feature_names.at(c.feature)},
                                 {"lo", detail::bound_to_json(c.lo)},
                                 {"hi", detail::bound_to_json(c.hi)}});
        rules.push_back(Json{{"conditions", conds}, {"alpha", r.alpha}, {"beta", r.beta}, {"support", r.support}});
    }
    doc["rules"] = rules;
    Json linear = Json::array();
    for (const auto& l : m.linear)
        linear.push_back(Json{{"feature", m.feature_names.at(l.term.feature)},
                              {"delta_lo", l.term.delta_lo},
                              {"delta_hi", l.term.delta_hi},
                              {"scale", l.term.scale},
                              {"alpha", l.alpha},
                              {"beta", l.beta},
                              {"mean", l.term.mean},
                              {"std", l.term.std}});
    doc["linear"] = linear;
    Json meta;
    meta["seed"] = m.meta.seed;
    meta["lambda"] = m.meta.lambda;
    meta["n"] = m.meta.n;
    meta["p"] = m.meta.p;
    meta["feature_names"] = m.feature_names;
    meta["config"] = detail::config_to_json(m.meta.config);
    doc["meta"] = meta;
    return doc.dump(2) + "\n";
}

inline CausalRuleFitModel model_from_json(const std::string& text) {
    using detail::Json;
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed model JSON: ") + e.what(), 0, 0);
    }
    try {
        const int version = doc.at("format_version").get<int>();
        if (version != kModelFormatVersion) throw FormatVersionError(version, kModelFormatVersion);

        CausalRuleFitModel m;
        const auto& meta = doc.at("meta");
        m.feature_names = meta.at("feature_names").get<std::vector<std::string>>();
        std::unordered_map<std::string, std::size_t> index;
        for (std::size_t j = 0; j < m.feature_names.size(); ++j) index[m.feature_names[j]] = j;
        auto feature = [&](const Json& j) {
            const auto name = j.get<std::string>();
            auto it = index.find(name);
            if (it == index.end()) throw ParseError("model references unknown feature '" + name + "'", 0, 0);
            return it->second;
        };

        m.intercept = doc.at("intercept").get<double>();
        for (const auto& r : doc.at("rules")) {
            std::vector<Condition> conds;
            for (const auto& c : r.at("conditions"))
                conds.push_back({feature(c.at("feature")), detail::bound_from_json(c.at("lo")),
                                 detail::bound_from_json(c.at("hi"))});
            m.rules.push_back({Rule(std::move(conds)), r.at("alpha").get<double>(), r.at("beta").get<double>(),
                               r.at("support").get<double>()});
        }
        for (const auto& l : doc.at("linear")) {
            LinearEntry e;
            e.term.feature = feature(l.at("feature"));
            e.term.delta_lo = l.at("delta_lo").get<double>();
            e.term.delta_hi = l.at("delta_hi").get<double>();
            e.term.scale = l.at("scale").get<double>();
            e.term.mean = l.value("mean", 0.0);
            e.term.std = l.value("std", 0.0);
            e.alpha = l.at("alpha").get<double>();
            e.beta = l.at("beta").get<double>();
            m.linear.push_back(e);
        }
        m.meta.seed = meta.at("seed").get<std::uint64_t>();
        m.meta.lambda = meta.at("lambda").get<double>();
        m.meta.n = meta.at("n").get<std::size_t>();
        m.meta.p = meta.at("p").get<std::size_t>();
        m.meta.config = detail::config_from_json(meta.at("config"), m.meta.seed);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid model JSON: ") + e.what(), 0, 0);
    }
}

inline void save_model(const CausalRuleFitModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << model_to_json(m);
    if (!out) throw IoError("write to '" + path + "' failed");
}

inline CausalRuleFitModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

}  // namespace rulehte
