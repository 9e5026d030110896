#pragma once

// Experiment configuration: one JSON document, validated in full before any
// computation. Unknown keys are errors; every error names a JSON pointer.
//
// Defaults: s0 1, grid {T 1, n_steps 256}, mc {n_paths 100000, seed 42,
// antithetic false, ci_level 0.99}, horizon {phi_m 0, psi_m 1, hazard 0, g0 1},
// search {n_points 41, half_width 2, refine false, tolerance 1e-3},
// verify {suites all, alpha 0.01, checkpoints 8}, simulate {dump_paths 10},
// output {dir "out"}, experiment_id "experiment".

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hk/error.hpp"
#include "hk/params.hpp"
#include "hk/simulate.hpp"
#include "hk/verify.hpp"

namespace hk {

struct McSettings {
  std::size_t n_paths = 100000;
  std::uint64_t seed = 42;
  bool antithetic = false;
  double ci_level = 0.99;
};

struct SearchSettings {
  std::vector<double> theta_grid;  // empty: 41 points on theta~ +- 2
  std::size_t n_points = 41;
  double half_width = 2.0;
  bool refine = false;
  double tolerance = 1e-3;
};

struct VerifyBlock {
  std::vector<std::string> suites;  // empty: every suite that applies to the model
  double alpha = 0.01;
  std::size_t checkpoints = 8;
};

struct ExperimentConfig {
  std::string experiment_id = "experiment";
  Model model;
  GridSpec grid;
  McSettings mc;
  SearchSettings search;
  VerifyBlock verify;
  std::size_t dump_paths = 10;
  std::string output_dir = "out";
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw SchemaError(where.empty() ? "/" : where, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items())
    if (!ok.count(k)) throw SchemaError(where + "/" + k, "unknown key");
}

inline double get_number(const json& obj, const std::string& where, const char* key, std::optional<double> def) {
  if (!obj.contains(key)) {
    if (def) return *def;
    throw SchemaError(where + "/" + key, "missing required field");
  }
  const auto& v = obj.at(key);
  if (!v.is_number()) throw SchemaError(where + "/" + key, "expected a number");
  return v.get<double>();
}

inline std::uint64_t get_count(const json& obj, const std::string& where, const char* key, std::uint64_t def,
                               std::uint64_t min_value) {
  if (!obj.contains(key)) return def;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw SchemaError(where + "/" + key, "expected a non-negative integer");
  const auto x = v.get<std::uint64_t>();
  if (x < min_value) throw SchemaError(where + "/" + key, "must be >= " + std::to_string(min_value));
  return x;
}

inline bool get_bool(const json& obj, const std::string& where, const char* key, bool def) {
  if (!obj.contains(key)) return def;
  if (!obj.at(key).is_boolean()) throw SchemaError(where + "/" + key, "expected true or false");
  return obj.at(key).get<bool>();
}

inline std::string get_string(const json& obj, const std::string& where, const char* key, const std::string& def) {
  if (!obj.contains(key)) return def;
  if (!obj.at(key).is_string()) throw SchemaError(where + "/" + key, "expected a string");
  return obj.at(key).get<std::string>();
}

/// Field a constraint message refers to, e.g. "zeta > -1 violated ..." -> "zeta".
inline std::string constraint_field(const std::string& msg) {
  static const std::vector<std::pair<std::string, std::string>> prefixes{
      {"sigma + |zeta|", "sigma"}, {"sigma", "sigma"}, {"zeta", "zeta"},   {"lambda", "lambda"}, {"delta", "delta"},
      {"psi_m", "psi_m"},          {"hazard", "hazard"}, {"g0", "g0"},     {"finite horizon", ""}, {"finite", ""}};
  for (const auto& [p, f] : prefixes)
    if (msg.rfind(p, 0) == 0) return f;
  return "";
}

inline std::string constraint_text(const std::string& msg) {
  const auto pos = msg.find(" at grid index");
  return pos == std::string::npos ? msg : msg.substr(0, pos);
}

inline MarketParams parse_market(const json& j, const std::string& where) {
  reject_unknown(j, where, {"mu", "sigma", "zeta", "lambda", "delta"});
  MarketParams p;
  p.mu = get_number(j, where, "mu", std::nullopt);
  p.sigma = get_number(j, where, "sigma", std::nullopt);
  p.zeta = get_number(j, where, "zeta", std::nullopt);
  p.lambda = get_number(j, where, "lambda", std::nullopt);
  p.delta = get_number(j, where, "delta", 1e-8);
  try {
    validate_market(p);
  } catch (const InvalidParams& e) {
    const std::string msg = e.what();
    throw SchemaError(where + "/" + constraint_field(msg), "constraint " + constraint_text(msg));
  }
  return p;
}

inline HorizonParams parse_horizon(const json& j, const std::string& where) {
  reject_unknown(j, where, {"phi_m", "psi_m", "hazard", "g0"});
  HorizonParams h;
  h.phi_m = get_number(j, where, "phi_m", 0.0);
  h.psi_m = get_number(j, where, "psi_m", 1.0);
  h.hazard = get_number(j, where, "hazard", 0.0);
  h.g0 = get_number(j, where, "g0", 1.0);
  try {
    validate_horizon(h);
  } catch (const InvalidParams& e) {
    const std::string msg = e.what();
    throw SchemaError(where + "/" + constraint_field(msg), "constraint " + constraint_text(msg));
  }
  return h;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::get_number;
  detail::reject_unknown(j, "", {"experiment_id", "market", "horizon", "regimes", "s0", "grid", "mc", "search", "verify",
                                 "simulate", "output"});
  ExperimentConfig c;
  c.experiment_id = detail::get_string(j, "", "experiment_id", c.experiment_id);
  if (c.experiment_id.empty() || c.experiment_id.find_first_of(",\n\"") != std::string::npos)
    throw SchemaError("/experiment_id", "must be non-empty without commas, quotes or newlines");

  const double s0 = get_number(j, "", "s0", 1.0);
  if (!(s0 > 0.0)) throw SchemaError("/s0", "constraint s0 > 0");
  c.model.s0 = s0;

  if (j.contains("regimes")) {
    if (j.contains("market") || j.contains("horizon"))
      throw SchemaError("/regimes", "give either market/horizon or regimes, not both");
    const auto& rs = j.at("regimes");
    if (!rs.is_array() || rs.empty()) throw SchemaError("/regimes", "expected a non-empty array");
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const std::string w = "/regimes/" + std::to_string(i);
      detail::reject_unknown(rs[i], w, {"start", "market", "horizon"});
      Regime r;
      r.start = get_number(rs[i], w, "start", i == 0 ? std::optional<double>(0.0) : std::nullopt);
      if (!rs[i].contains("market")) throw SchemaError(w + "/market", "missing required field");
      r.market = detail::parse_market(rs[i].at("market"), w + "/market");
      r.horizon = rs[i].contains("horizon") ? detail::parse_horizon(rs[i].at("horizon"), w + "/horizon") : HorizonParams{};
      c.model.regimes.push_back(r);
    }
  } else {
    if (!j.contains("market")) throw SchemaError("/market", "missing required field");
    Regime r;
    r.market = detail::parse_market(j.at("market"), "/market");
    if (j.contains("horizon")) r.horizon = detail::parse_horizon(j.at("horizon"), "/horizon");
    c.model.regimes.push_back(r);
  }
  try {
    validate_model(c.model);
  } catch (const InvalidParams& e) {
    throw SchemaError("/regimes", e.what());
  }

  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    detail::reject_unknown(g, "/grid", {"T", "n_steps"});
    c.grid.horizon = get_number(g, "/grid", "T", 1.0);
    c.grid.n_steps = detail::get_count(g, "/grid", "n_steps", 256, 1);
    if (!(c.grid.horizon > 0.0)) throw SchemaError("/grid/T", "constraint T > 0");
  }

  if (j.contains("mc")) {
    const auto& m = j.at("mc");
    detail::reject_unknown(m, "/mc", {"n_paths", "seed", "antithetic", "ci_level"});
    c.mc.n_paths = detail::get_count(m, "/mc", "n_paths", c.mc.n_paths, 2);
    c.mc.seed = detail::get_count(m, "/mc", "seed", c.mc.seed, 0);
    c.mc.antithetic = detail::get_bool(m, "/mc", "antithetic", false);
    c.mc.ci_level = get_number(m, "/mc", "ci_level", 0.99);
    if (!(c.mc.ci_level > 0.0 && c.mc.ci_level < 1.0)) throw SchemaError("/mc/ci_level", "constraint 0 < ci_level < 1");
  }
  c.grid.antithetic = c.mc.antithetic;

  if (j.contains("search")) {
    const auto& s = j.at("search");
    detail::reject_unknown(s, "/search", {"theta_grid", "n_points", "half_width", "refine", "tolerance"});
    if (s.contains("theta_grid")) {
      const auto& tg = s.at("theta_grid");
      if (!tg.is_array() || tg.size() < 2) throw SchemaError("/search/theta_grid", "expected an array of >= 2 numbers");
      for (std::size_t i = 0; i < tg.size(); ++i) {
        if (!tg[i].is_number()) throw SchemaError("/search/theta_grid/" + std::to_string(i), "expected a number");
        c.search.theta_grid.push_back(tg[i].get<double>());
        if (i > 0 && !(c.search.theta_grid[i] > c.search.theta_grid[i - 1]))
          throw SchemaError("/search/theta_grid/" + std::to_string(i), "grid must be strictly increasing");
      }
    }
    c.search.n_points = detail::get_count(s, "/search", "n_points", 41, 3);
    c.search.half_width = get_number(s, "/search", "half_width", 2.0);
    if (!(c.search.half_width > 0.0)) throw SchemaError("/search/half_width", "constraint half_width > 0");
    c.search.refine = detail::get_bool(s, "/search", "refine", false);
    c.search.tolerance = get_number(s, "/search", "tolerance", 1e-3);
    if (!(c.search.tolerance > 0.0)) throw SchemaError("/search/tolerance", "constraint tolerance > 0");
  }

  if (j.contains("verify")) {
    const auto& v = j.at("verify");
    detail::reject_unknown(v, "/verify", {"suites", "alpha", "checkpoints"});
    if (v.contains("suites")) {
      const auto& ss = v.at("suites");
      if (!ss.is_array()) throw SchemaError("/verify/suites", "expected an array of suite names");
      for (std::size_t i = 0; i < ss.size(); ++i) {
        const std::string w = "/verify/suites/" + std::to_string(i);
        if (!ss[i].is_string()) throw SchemaError(w, "expected a string");
        const auto name = ss[i].get<std::string>();
        const auto& known = suite_names();
        if (std::find(known.begin(), known.end(), name) == known.end()) throw SchemaError(w, "unknown suite '" + name + "'");
        c.verify.suites.push_back(name);
      }
    }
    c.verify.alpha = get_number(v, "/verify", "alpha", 0.01);
    if (!(c.verify.alpha > 0.0 && c.verify.alpha < 1.0)) throw SchemaError("/verify/alpha", "constraint 0 < alpha < 1");
    c.verify.checkpoints = detail::get_count(v, "/verify", "checkpoints", 8, 2);
  }

  if (j.contains("simulate")) {
    const auto& s = j.at("simulate");
    detail::reject_unknown(s, "/simulate", {"dump_paths"});
    c.dump_paths = detail::get_count(s, "/simulate", "dump_paths", 10, 1);
  }

  if (j.contains("output")) {
    const auto& o = j.at("output");
    detail::reject_unknown(o, "/output", {"dir"});
    c.output_dir = detail::get_string(o, "/output", "dir", c.output_dir);
  }
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config_text(os.str());
}

/// Suites selected by the config, or every suite whose preconditions the model meets.
inline std::vector<std::string> selected_suites(const ExperimentConfig& c) {
  if (!c.verify.suites.empty()) return c.verify.suites;
  std::vector<std::string> out;
  for (const auto& s : suite_names()) {
    if (s == "pseudo_stopping" && !c.model.is_cox()) continue;
    if (s == "sbar" && c.model.regimes.size() != 1) continue;
    out.push_back(s);
  }
  return out;
}

}  // namespace hk
