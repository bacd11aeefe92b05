#pragma once

// Cohort ingestion and preparation for instrument-based pair matching.
//
// A cohort is a flat table of units. Each unit carries
//   - an id (stable across runs, used to join outcomes back later),
//   - numeric covariates (matched on via a rank-based distance),
//   - nominal covariates (balanced as category counts, never entered
//     into the distance directly),
//   - exact-stratification keys (matching never crosses strata),
//   - the raw instrument level (hour of the day, an integer bin 0..23),
//   - the observed exposure (length of stay, in hours),
//   - optionally a binary outcome.
//
// Outcomes are quarantined: design code (distances, programs, solving,
// balance reports) must never observe them. The only way to read an
// outcome is Cohort::outcome(), which counts every access so tests can
// assert the design phase performed zero reads.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ivmatch/csv.hpp"

namespace ivmatch {

struct Schema {
  std::string id;                            // empty: synthesize row ids
  std::vector<std::string> covariates;       // numeric columns
  std::vector<std::string> impute_flagged;   // subset of covariates that may be blank
  std::vector<std::string> nominals;         // categorical columns
  std::vector<std::string> exact_keys;       // stratification columns
  std::string hour;                          // instrument level column
  std::string los;                           // observed length of stay, hours
  std::string outcome;                       // empty: cohort has no outcomes
};

struct Unit {
  std::string id;
  std::vector<double> covariates;   // NaN marks a value pending imputation
  std::vector<std::string> nominals;
  std::vector<std::string> exact_key;
  int hour = -1;                    // instrument level (bin)
  double los = std::numeric_limits<double>::quiet_NaN();   // hours
  double alos = std::numeric_limits<double>::quiet_NaN();  // anticipated stay, set by compute_alos
};

class Cohort {
 public:
  std::vector<Unit> units;
  std::vector<std::string> covariate_names;
  std::vector<std::string> nominal_names;
  std::vector<std::string> exact_key_names;
  std::vector<std::string> imputed_columns;  // flagged covariates, for reporting

  bool has_outcomes() const { return has_outcomes_; }

  // Audited outcome access. Every call is counted, including calls that
  // find no outcome recorded for the unit.
  std::optional<int> outcome(std::size_t unit) const {
    ++outcome_reads_;
    return outcomes_.at(unit);
  }
  long outcome_reads() const { return outcome_reads_; }

  // Write path used by ingestion; writing is not audited, reading is.
  void attach_outcomes(std::vector<std::optional<int>> outcomes) {
    if (outcomes.size() != units.size())
      throw std::invalid_argument("cohort: outcome vector size mismatch");
    outcomes_ = std::move(outcomes);
    has_outcomes_ = true;
  }

 private:
  std::vector<std::optional<int>> outcomes_;
  bool has_outcomes_ = false;
  mutable long outcome_reads_ = 0;
};

struct Stratum {
  std::vector<std::string> key;
  std::vector<std::size_t> units;  // indices into Cohort::units, input order
};

// Median of hourly length-of-stay values: hour h -> median LOS among all
// units delivered in bin h. This is the instrument.
using AlosTable = std::map<int, double>;

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline double parse_number(const std::string& raw, const std::string& what,
                           std::size_t row) {
  std::string s = trim(raw);
  if (s.empty())
    throw std::runtime_error("ingest: empty " + what + " at data row " +
                             std::to_string(row));
  const char* b = s.c_str();
  char* e = nullptr;
  double v = std::strtod(b, &e);
  if (e != b + s.size() || !std::isfinite(v))
    throw std::runtime_error("ingest: bad " + what + " '" + raw +
                             "' at data row " + std::to_string(row));
  return v;
}

// Median with the usual convention: mean of the two central order
// statistics when the count is even.
inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Reads a unit table. Strictness rules:
//   - every schema column must exist in the header,
//   - numeric cells must parse completely (covariates, hour, LOS),
//   - a blank covariate cell is an error unless the column is flagged
//     imputable, in which case it becomes NaN and a companion indicator
//     column "<name>_missing" records where imputation will happen,
//   - hour must land in [0, 24) and is floored to an integer bin,
//   - LOS must be nonnegative,
//   - outcome cells are "", "0" or "1",
//   - unit ids must be unique.
inline Cohort ingest(const csv::Table& table, const Schema& schema) {
  Cohort cohort;

  auto col_of = [&](const std::string& name) {
    int j = table.column(name);
    if (j < 0) throw std::runtime_error("ingest: missing column '" + name + "'");
    return static_cast<std::size_t>(j);
  };

  std::optional<std::size_t> id_col;
  if (!schema.id.empty()) id_col = col_of(schema.id);
  std::size_t hour_col = col_of(schema.hour);
  std::size_t los_col = col_of(schema.los);
  std::optional<std::size_t> outcome_col;
  if (!schema.outcome.empty()) outcome_col = col_of(schema.outcome);

  std::vector<std::size_t> cov_cols, nom_cols, key_cols;
  for (const auto& c : schema.covariates) cov_cols.push_back(col_of(c));
  for (const auto& c : schema.nominals) nom_cols.push_back(col_of(c));
  for (const auto& c : schema.exact_keys) key_cols.push_back(col_of(c));

  std::vector<bool> imputable(schema.covariates.size(), false);
  for (const auto& name : schema.impute_flagged) {
    auto it = std::find(schema.covariates.begin(), schema.covariates.end(), name);
    if (it == schema.covariates.end())
      throw std::runtime_error("ingest: imputable column '" + name +
                               "' is not a declared covariate");
    imputable[static_cast<std::size_t>(it - schema.covariates.begin())] = true;
  }

  cohort.covariate_names = schema.covariates;
  cohort.nominal_names = schema.nominals;
  cohort.exact_key_names = schema.exact_keys;
  cohort.imputed_columns = schema.impute_flagged;

  std::vector<std::optional<int>> outcomes;
  std::set<std::string> seen_ids;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size())
      throw std::runtime_error("ingest: row " + std::to_string(r + 1) + " has " +
                               std::to_string(row.size()) + " cells, header has " +
                               std::to_string(table.header.size()));
    Unit u;
    u.id = id_col ? detail::trim(row[*id_col]) : "r" + std::to_string(r);
    if (u.id.empty())
      throw std::runtime_error("ingest: blank id at data row " + std::to_string(r + 1));
    if (!seen_ids.insert(u.id).second)
      throw std::runtime_error("ingest: duplicate id '" + u.id + "'");

    double hraw = detail::parse_number(row[hour_col], "hour", r + 1);
    if (hraw < 0.0 || hraw >= 24.0)
      throw std::runtime_error("ingest: hour " + std::to_string(hraw) +
                               " outside [0,24) at data row " + std::to_string(r + 1));
    u.hour = static_cast<int>(std::floor(hraw));

    u.los = detail::parse_number(row[los_col], "length of stay", r + 1);
    if (u.los < 0.0)
      throw std::runtime_error("ingest: negative length of stay at data row " +
                               std::to_string(r + 1));

    u.covariates.reserve(cov_cols.size());
    for (std::size_t k = 0; k < cov_cols.size(); ++k) {
      const std::string& cell = row[cov_cols[k]];
      if (detail::trim(cell).empty()) {
        if (!imputable[k])
          throw std::runtime_error("ingest: missing value for '" +
                                   schema.covariates[k] + "' at data row " +
                                   std::to_string(r + 1));
        u.covariates.push_back(nan);
      } else {
        u.covariates.push_back(
            detail::parse_number(cell, "covariate " + schema.covariates[k], r + 1));
      }
    }
    for (std::size_t k : nom_cols) u.nominals.push_back(detail::trim(row[k]));
    for (std::size_t k : key_cols) u.exact_key.push_back(detail::trim(row[k]));

    if (outcome_col) {
      std::string cell = detail::trim(row[*outcome_col]);
      if (cell.empty()) outcomes.push_back(std::nullopt);
      else if (cell == "0") outcomes.push_back(0);
      else if (cell == "1") outcomes.push_back(1);
      else
        throw std::runtime_error("ingest: outcome must be blank, 0 or 1 at data row " +
                                 std::to_string(r + 1));
    }

    cohort.units.push_back(std::move(u));
  }

  // Companion indicator columns. Appended for every flagged column, even
  // when nothing is missing, so the covariate layout does not depend on
  // the data. A constant indicator column is harmless downstream.
  for (std::size_t k = 0; k < schema.covariates.size(); ++k) {
    if (!imputable[k]) continue;
    std::string ind = schema.covariates[k] + "_missing";
    if (std::find(cohort.covariate_names.begin(), cohort.covariate_names.end(), ind) !=
        cohort.covariate_names.end())
      throw std::runtime_error("ingest: indicator name collision for '" + ind + "'");
    cohort.covariate_names.push_back(ind);
    for (auto& u : cohort.units)
      u.covariates.push_back(std::isnan(u.covariates[k]) ? 1.0 : 0.0);
  }

  if (outcome_col) cohort.attach_outcomes(std::move(outcomes));
  return cohort;
}

inline Cohort ingest_file(const std::string& path, const Schema& schema) {
  return ingest(csv::read_file(path), schema);
}

// Builds the hour -> median LOS table and stamps every unit's anticipated
// length of stay. The anticipated stay is a function of the hour bin only,
// never of the unit's own covariates or outcome.
inline AlosTable compute_alos(Cohort& cohort) {
  if (cohort.units.empty()) throw std::invalid_argument("compute_alos: empty cohort");
  std::map<int, std::vector<double>> by_hour;
  for (const auto& u : cohort.units) by_hour[u.hour].push_back(u.los);
  AlosTable table;
  for (auto& [hour, stays] : by_hour) table[hour] = detail::median(std::move(stays));
  for (auto& u : cohort.units) u.alos = table.at(u.hour);
  return table;
}

// Groups units by their exact-key tuple. Strata are ordered by key
// (lexicographic over the tuple); units inside a stratum keep input order.
// With no exact keys the whole cohort is a single stratum.
inline std::vector<Stratum> stratify(const Cohort& cohort) {
  std::map<std::vector<std::string>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cohort.units.size(); ++i)
    groups[cohort.units[i].exact_key].push_back(i);
  std::vector<Stratum> strata;
  strata.reserve(groups.size());
  for (auto& [key, members] : groups) strata.push_back({key, std::move(members)});
  return strata;
}

// Replaces NaN covariate cells with the mean of the observed values in the
// unit's stratum. Falls back to the cohort mean when a stratum has no
// observed value, and to zero when the whole column is blank. The "_missing"
// indicators already mark every cell this touches.
inline void impute_missing(Cohort& cohort, const std::vector<Stratum>& strata) {
  for (std::size_t k = 0; k < cohort.covariate_names.size(); ++k) {
    bool any = false;
    for (const auto& u : cohort.units)
      if (std::isnan(u.covariates[k])) { any = true; break; }
    if (!any) continue;

    double cohort_sum = 0.0;
    long cohort_n = 0;
    for (const auto& u : cohort.units)
      if (!std::isnan(u.covariates[k])) { cohort_sum += u.covariates[k]; ++cohort_n; }
    double cohort_mean = cohort_n ? cohort_sum / cohort_n : 0.0;

    for (const auto& s : strata) {
      double sum = 0.0;
      long n = 0;
      for (std::size_t i : s.units)
        if (!std::isnan(cohort.units[i].covariates[k])) {
          sum += cohort.units[i].covariates[k];
          ++n;
        }
      double fill = n ? sum / n : cohort_mean;
      for (std::size_t i : s.units)
        if (std::isnan(cohort.units[i].covariates[k]))
          cohort.units[i].covariates[k] = fill;
    }
  }
}

}  // namespace ivmatch
