#pragma once

// Run configuration, read from a JSON file. One config drives every
// subcommand; the README documents the full grammar. Parsing is strict:
// unknown keys in known sections are rejected so typos fail loudly
// instead of silently using a default.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ivmatch/cohort.hpp"
#include "ivmatch/errors.hpp"
#include "ivmatch/solver.hpp"

namespace ivmatch {

struct CapRule {
  std::string variable;            // nominal trait; a pair is flagged when
                                   // its two units disagree on the trait
  std::optional<double> fraction;  // cap = floor(fraction * stratum units)
  std::optional<long> count;       // absolute cap; exactly one of the two
};

struct MeanBalanceRule {
  std::string variable;             // numeric covariate
  std::optional<double> epsilon;    // absent: 0.005 * stratum SD
};

struct NearFineRule {
  std::string variable;  // nominal trait, one row pair per category
  long epsilon = 0;
};

struct InferenceConfig {
  std::optional<long long> delta0;        // absolute attributed count
  std::optional<double> delta0_fraction;  // of matched pairs, rounded
  std::vector<double> gamma_grid{1.0};
  double alpha = 0.05;
};

struct RunConfig {
  std::string input_path;
  Schema schema;

  std::vector<std::string> distance_covariates;  // empty: all covariates

  double hard_gap_hours = 12.0;     // pairs closer than this are ineligible
  double separation_hours = 13.0;   // required mean anticipated-stay gap
  bool lambda_is_median = true;     // subset price: median pre-match distance
  double lambda_value = 0.0;        //   or a fixed number
  std::vector<std::string> fine_balance;
  std::vector<NearFineRule> near_fine;
  std::vector<CapRule> caps;
  std::vector<MeanBalanceRule> mean_balance;
  SolveLimits limits;
  bool allow_gap = false;           // accept feasible_gap strata
  long max_variables = 2000000;     // pair-variable budget per stratum
  std::string split_key;            // nominal used to split oversized strata

  InferenceConfig inference;
  std::vector<double> sweep_thresholds{0.0, 9.0, 12.0, 15.0};
  std::string output_dir = "ivmatch_out";
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::set<std::string>& known,
                           const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ExitError(kExitUsage, "config: unknown key '" + it.key() + "' in " + where);
}

inline std::vector<std::string> string_list(const json& j, const std::string& where) {
  if (!j.is_array()) throw ExitError(kExitUsage, "config: " + where + " must be a list");
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string())
      throw ExitError(kExitUsage, "config: " + where + " entries must be strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  using detail::reject_unknown;
  using detail::string_list;
  RunConfig c;

  reject_unknown(j, {"input", "schema", "distance", "match", "inference", "sweep",
                     "output_dir"},
                 "the top level");

  if (!j.contains("input") || !j["input"].is_string())
    throw ExitError(kExitUsage, "config: 'input' (string) is required");
  c.input_path = j["input"].get<std::string>();

  if (!j.contains("schema") || !j["schema"].is_object())
    throw ExitError(kExitUsage, "config: 'schema' (object) is required");
  {
    const auto& s = j["schema"];
    reject_unknown(s, {"id", "hour", "los", "outcome", "covariates", "impute",
                       "nominals", "exact_keys"},
                   "schema");
    auto str = [&](const char* key, bool required) {
      if (!s.contains(key)) {
        if (required) throw ExitError(kExitUsage, std::string("config: schema.") + key +
                                               " is required");
        return std::string();
      }
      if (!s[key].is_string())
        throw ExitError(kExitUsage, std::string("config: schema.") + key +
                                 " must be a string");
      return s[key].get<std::string>();
    };
    c.schema.id = str("id", false);
    c.schema.hour = str("hour", true);
    c.schema.los = str("los", true);
    c.schema.outcome = str("outcome", false);
    if (s.contains("covariates"))
      c.schema.covariates = string_list(s["covariates"], "schema.covariates");
    if (s.contains("impute"))
      c.schema.impute_flagged = string_list(s["impute"], "schema.impute");
    if (s.contains("nominals"))
      c.schema.nominals = string_list(s["nominals"], "schema.nominals");
    if (s.contains("exact_keys"))
      c.schema.exact_keys = string_list(s["exact_keys"], "schema.exact_keys");
  }

  if (j.contains("distance")) {
    const auto& d = j["distance"];
    reject_unknown(d, {"covariates"}, "distance");
    if (d.contains("covariates"))
      c.distance_covariates = string_list(d["covariates"], "distance.covariates");
  }

  if (j.contains("match")) {
    const auto& m = j["match"];
    reject_unknown(m,
                   {"hard_gap_hours", "separation_hours", "lambda", "fine_balance",
                    "near_fine_balance", "mean_balance", "caps", "limits",
                    "allow_gap", "max_variables", "split_key"},
                   "match");
    if (m.contains("hard_gap_hours")) c.hard_gap_hours = m["hard_gap_hours"].get<double>();
    if (c.hard_gap_hours < 0.0)
      throw ExitError(kExitUsage, "config: match.hard_gap_hours must be >= 0");
    if (m.contains("separation_hours"))
      c.separation_hours = m["separation_hours"].get<double>();
    if (c.separation_hours < 0.0)
      throw ExitError(kExitUsage, "config: match.separation_hours must be >= 0");
    if (m.contains("lambda")) {
      if (m["lambda"].is_string()) {
        if (m["lambda"].get<std::string>() != "median")
          throw ExitError(kExitUsage, "config: match.lambda must be a number or \"median\"");
        c.lambda_is_median = true;
      } else if (m["lambda"].is_number()) {
        c.lambda_is_median = false;
        c.lambda_value = m["lambda"].get<double>();
      } else {
        throw ExitError(kExitUsage, "config: match.lambda must be a number or \"median\"");
      }
    }
    if (m.contains("fine_balance"))
      c.fine_balance = string_list(m["fine_balance"], "match.fine_balance");
    if (m.contains("near_fine_balance")) {
      for (const auto& e : m["near_fine_balance"]) {
        reject_unknown(e, {"variable", "epsilon"}, "match.near_fine_balance[]");
        NearFineRule r;
        r.variable = e.at("variable").get<std::string>();
        r.epsilon = e.at("epsilon").get<long>();
        if (r.epsilon < 0)
          throw ExitError(kExitUsage, "config: near_fine_balance epsilon must be >= 0");
        c.near_fine.push_back(std::move(r));
      }
    }
    if (m.contains("mean_balance")) {
      for (const auto& e : m["mean_balance"]) {
        reject_unknown(e, {"variable", "epsilon"}, "match.mean_balance[]");
        MeanBalanceRule r;
        r.variable = e.at("variable").get<std::string>();
        if (e.contains("epsilon")) {
          r.epsilon = e["epsilon"].get<double>();
          if (*r.epsilon < 0.0)
            throw ExitError(kExitUsage, "config: mean_balance epsilon must be >= 0");
        }
        c.mean_balance.push_back(std::move(r));
      }
    }
    if (m.contains("caps")) {
      for (const auto& e : m["caps"]) {
        reject_unknown(e, {"variable", "fraction", "count"}, "match.caps[]");
        CapRule r;
        r.variable = e.at("variable").get<std::string>();
        if (e.contains("fraction")) r.fraction = e["fraction"].get<double>();
        if (e.contains("count")) r.count = e["count"].get<long>();
        if (r.fraction.has_value() == r.count.has_value())
          throw ExitError(
              kExitUsage, "config: caps need exactly one of 'fraction' or 'count'");
        if (r.fraction && (*r.fraction < 0.0 || *r.fraction > 1.0))
          throw ExitError(kExitUsage, "config: cap fraction must be in [0,1]");
        if (r.count && *r.count < 0)
          throw ExitError(kExitUsage, "config: cap count must be >= 0");
        c.caps.push_back(std::move(r));
      }
    }
    if (m.contains("limits")) {
      const auto& l = m["limits"];
      reject_unknown(l, {"max_nodes", "max_seconds"}, "match.limits");
      if (l.contains("max_nodes")) c.limits.max_nodes = l["max_nodes"].get<long>();
      if (l.contains("max_seconds"))
        c.limits.max_seconds = l["max_seconds"].get<double>();
    }
    if (m.contains("allow_gap")) c.allow_gap = m["allow_gap"].get<bool>();
    if (m.contains("max_variables")) c.max_variables = m["max_variables"].get<long>();
    if (m.contains("split_key")) c.split_key = m["split_key"].get<std::string>();
  }

  if (j.contains("inference")) {
    const auto& i = j["inference"];
    reject_unknown(i, {"delta0", "gamma_grid", "alpha"}, "inference");
    if (i.contains("delta0")) {
      if (i["delta0"].is_object()) {
        reject_unknown(i["delta0"], {"fraction"}, "inference.delta0");
        c.inference.delta0_fraction = i["delta0"].at("fraction").get<double>();
        if (*c.inference.delta0_fraction < 0.0)
          throw ExitError(kExitUsage, "config: delta0 fraction must be >= 0");
      } else {
        c.inference.delta0 = i["delta0"].get<long long>();
        if (*c.inference.delta0 < 0)
          throw ExitError(kExitUsage, "config: delta0 must be >= 0");
      }
    }
    if (i.contains("gamma_grid")) {
      c.inference.gamma_grid.clear();
      for (const auto& g : i["gamma_grid"]) {
        double v = g.get<double>();
        if (v < 1.0) throw ExitError(kExitUsage, "config: gamma values must be >= 1");
        c.inference.gamma_grid.push_back(v);
      }
      if (c.inference.gamma_grid.empty())
        throw ExitError(kExitUsage, "config: gamma_grid must not be empty");
    }
    if (i.contains("alpha")) {
      c.inference.alpha = i["alpha"].get<double>();
      if (c.inference.alpha <= 0.0 || c.inference.alpha >= 1.0)
        throw ExitError(kExitUsage, "config: alpha must be in (0,1)");
    }
  }

  if (j.contains("sweep")) {
    reject_unknown(j["sweep"], {"thresholds"}, "sweep");
    if (j["sweep"].contains("thresholds")) {
      c.sweep_thresholds.clear();
      for (const auto& t : j["sweep"]["thresholds"]) {
        double v = t.get<double>();
        if (v < 0.0) throw ExitError(kExitUsage, "config: sweep thresholds must be >= 0");
        c.sweep_thresholds.push_back(v);
      }
      if (c.sweep_thresholds.empty())
        throw ExitError(kExitUsage, "config: sweep.thresholds must not be empty");
    }
  }

  if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();

  // Cross-field checks: every referenced variable must exist in the schema.
  auto is_cov = [&](const std::string& v) {
    for (const auto& name : c.schema.covariates)
      if (name == v) return true;
    for (const auto& name : c.schema.impute_flagged)
      if (name + "_missing" == v) return true;
    return false;
  };
  auto is_nom = [&](const std::string& v) {
    for (const auto& name : c.schema.nominals)
      if (name == v) return true;
    return false;
  };
  for (const auto& v : c.distance_covariates)
    if (!is_cov(v))
      throw ExitError(kExitUsage, "config: distance covariate '" + v +
                               "' is not a schema covariate");
  for (const auto& v : c.fine_balance)
    if (!is_nom(v))
      throw ExitError(kExitUsage, "config: fine_balance variable '" + v +
                               "' is not a schema nominal");
  for (const auto& r : c.near_fine)
    if (!is_nom(r.variable))
      throw ExitError(kExitUsage, "config: near_fine_balance variable '" + r.variable +
                               "' is not a schema nominal");
  for (const auto& r : c.caps)
    if (!is_nom(r.variable))
      throw ExitError(kExitUsage, "config: cap variable '" + r.variable +
                               "' is not a schema nominal");
  for (const auto& r : c.mean_balance)
    if (!is_cov(r.variable))
      throw ExitError(kExitUsage, "config: mean_balance variable '" + r.variable +
                               "' is not a schema covariate");
  if (!c.split_key.empty() && !is_nom(c.split_key))
    throw ExitError(kExitUsage, "config: split_key must be a schema nominal");

  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ExitError(kExitIo, "config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ExitError(kExitUsage, "config: " + std::string(e.what()));
  }
  RunConfig c;
  try {
    c = parse_config(j);
  } catch (const nlohmann::json::exception& e) {
    // Wrong value type somewhere in the document.
    throw ExitError(kExitUsage, "config: " + std::string(e.what()));
  }
  // A relative input path is taken relative to the config file, so a
  // config stays valid no matter where the tool is launched from.
  std::filesystem::path ip(c.input_path);
  if (ip.is_relative())
    c.input_path = (std::filesystem::path(path).parent_path() / ip).string();
  return c;
}

}  // namespace ivmatch
