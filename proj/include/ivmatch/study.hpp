#pragma once

// A matched study: the durable artifact of a matching run. Each record is
// an oriented pair (the high-instrument unit first) plus the stratum it
// was formed in; units left unmatched are listed as discarded. Every
// report and test downstream is a pure function of this structure and the
// cohort, so a study saved to disk and reloaded reproduces all numbers.

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ivmatch/cohort.hpp"
#include "ivmatch/csv.hpp"

namespace ivmatch {

struct MatchedPairRec {
  std::size_t long_unit;   // higher anticipated stay
  std::size_t short_unit;  // lower anticipated stay
  std::size_t stratum;     // index into MatchedStudy::stratum_keys
};

struct MatchedStudy {
  std::vector<std::vector<std::string>> stratum_keys;
  std::vector<MatchedPairRec> pairs;      // stratum-major, stable order
  std::vector<std::size_t> discarded;     // cohort indices, ascending
};

// pairs.csv layout: pair, long_id, short_id, alos_long, alos_short, then
// one column per exact-key variable. The ALOS columns are informational;
// ids and keys carry the study.
inline void save_study(std::ostream& out, const Cohort& cohort,
                       const MatchedStudy& study) {
  std::vector<std::string> header{"pair", "long_id", "short_id", "alos_long",
                                  "alos_short"};
  for (const auto& k : cohort.exact_key_names) {
    if (std::find(header.begin(), header.end(), k) != header.end())
      throw std::runtime_error("save_study: exact key name '" + k +
                               "' collides with a reserved column");
    header.push_back(k);
  }
  csv::write_row(out, header);
  char buf[40];
  for (std::size_t i = 0; i < study.pairs.size(); ++i) {
    const auto& pr = study.pairs[i];
    std::vector<std::string> row;
    row.push_back(std::to_string(i));
    row.push_back(cohort.units[pr.long_unit].id);
    row.push_back(cohort.units[pr.short_unit].id);
    std::snprintf(buf, sizeof buf, "%.10g", cohort.units[pr.long_unit].alos);
    row.push_back(buf);
    std::snprintf(buf, sizeof buf, "%.10g", cohort.units[pr.short_unit].alos);
    row.push_back(buf);
    for (const auto& kv : study.stratum_keys[pr.stratum]) row.push_back(kv);
    csv::write_row(out, row);
  }
}

// Rebuilds a study against a cohort. Ids must resolve; no unit may appear
// in two pairs; strata are regrouped by the key columns in file order.
// Deeper validity (keys actually matching the units, instrument
// orientation, separation) is the job of the check pass, not the loader.
inline MatchedStudy load_study(const csv::Table& table, const Cohort& cohort) {
  int long_col = table.column("long_id");
  int short_col = table.column("short_id");
  if (long_col < 0 || short_col < 0)
    throw std::runtime_error("load_study: need long_id and short_id columns");
  std::vector<int> key_cols;
  for (const auto& k : cohort.exact_key_names) {
    int c = table.column(k);
    if (c < 0) throw std::runtime_error("load_study: missing key column '" + k + "'");
    key_cols.push_back(c);
  }

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < cohort.units.size(); ++i)
    index[cohort.units[i].id] = i;

  MatchedStudy study;
  std::map<std::vector<std::string>, std::size_t> stratum_of;
  std::set<std::size_t> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto resolve = [&](int col) {
      const std::string& id = row[static_cast<std::size_t>(col)];
      auto it = index.find(id);
      if (it == index.end())
        throw std::runtime_error("load_study: unknown unit id '" + id + "'");
      if (!seen.insert(it->second).second)
        throw std::runtime_error("load_study: unit '" + id + "' matched twice");
      return it->second;
    };
    MatchedPairRec pr;
    pr.long_unit = resolve(long_col);
    pr.short_unit = resolve(short_col);
    std::vector<std::string> key;
    for (int c : key_cols) key.push_back(row[static_cast<std::size_t>(c)]);
    auto [it, inserted] = stratum_of.try_emplace(key, study.stratum_keys.size());
    if (inserted) study.stratum_keys.push_back(key);
    pr.stratum = it->second;
    study.pairs.push_back(pr);
  }
  for (std::size_t i = 0; i < cohort.units.size(); ++i)
    if (!seen.count(i)) study.discarded.push_back(i);
  return study;
}

}  // namespace ivmatch
