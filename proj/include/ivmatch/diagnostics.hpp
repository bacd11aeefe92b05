#pragma once

// Post-match diagnostics. Two reports, both pure functions of
// (cohort, study):
//
//   balance_report   are the two sides of the match comparable? Covariate
//                    means and standardized differences, nominal category
//                    counts per side, and pair cross-tabulations for
//                    selected traits.
//
//   strength_report  did the instrument actually move the exposure?
//                    Anticipated and observed stay by side, share of
//                    units past one day, the pairwise day-category
//                    cross-tab and its adjacent-cell odds.
//
// Neither report reads outcomes; they are design-phase artifacts.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "ivmatch/cohort.hpp"
#include "ivmatch/study.hpp"

namespace ivmatch {

// Hospital-day category of a stay in hours. Day 1 ends at 36 hours
// because stays are binned at half-day resolution from 12h on: a stay
// under 12h is "day 0" clinically but still within one day; the first
// full extra day starts at 36h.
//   1 = at most one day   (los <  36h)
//   2 = two days          (36h <= los < 60h)
//   3 = three or more     (los >= 60h)
inline int day_category(double los_hours) {
  if (los_hours < 36.0) return 1;
  if (los_hours < 60.0) return 2;
  return 3;
}

inline bool over_one_day(double los_hours) { return los_hours >= 36.0; }

struct BalanceLine {
  std::string name;
  double long_mean = 0.0;
  double short_mean = 0.0;
  double std_diff = 0.0;  // (long - short) / pre-match cohort SD
};

struct CountLine {
  std::string variable;
  std::string category;
  long long long_n = 0;
  long long short_n = 0;
};

struct CrossTabLine {
  std::string variable;
  std::string long_cat;
  std::string short_cat;
  long long pairs = 0;
};

struct BalanceReport {
  long long matched_pairs = 0;
  long long discarded_units = 0;
  std::vector<BalanceLine> covariates;       // alos first, then covariates
  std::vector<CountLine> nominal_counts;
  std::vector<CrossTabLine> crosstabs;
};

namespace detail {

// Pre-match standard deviation over the whole cohort (n-1 denominator):
// the match must not be allowed to shrink its own yardstick.
inline double prematch_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

// crosstab_vars: nominal variables whose pairwise category table is
// wanted (the capped and balance-constrained traits, typically).
inline BalanceReport balance_report(const Cohort& cohort, const MatchedStudy& study,
                                    const std::vector<std::string>& crosstab_vars = {}) {
  BalanceReport rep;
  rep.matched_pairs = static_cast<long long>(study.pairs.size());
  rep.discarded_units = static_cast<long long>(study.discarded.size());

  auto mean_line = [&](const std::string& name, auto getter) {
    BalanceLine line;
    line.name = name;
    std::vector<double> all;
    all.reserve(cohort.units.size());
    for (const auto& u : cohort.units) all.push_back(getter(u));
    double sd = detail::prematch_sd(all);
    double ls = 0.0, ss = 0.0;
    for (const auto& pr : study.pairs) {
      ls += getter(cohort.units[pr.long_unit]);
      ss += getter(cohort.units[pr.short_unit]);
    }
    double n = static_cast<double>(study.pairs.size());
    line.long_mean = n ? ls / n : 0.0;
    line.short_mean = n ? ss / n : 0.0;
    double diff = line.long_mean - line.short_mean;
    line.std_diff = diff == 0.0 ? 0.0 : (sd > 0.0 ? diff / sd : std::numeric_limits<double>::infinity());
    return line;
  };

  rep.covariates.push_back(mean_line("alos", [](const Unit& u) { return u.alos; }));
  for (std::size_t k = 0; k < cohort.covariate_names.size(); ++k)
    rep.covariates.push_back(mean_line(
        cohort.covariate_names[k], [k](const Unit& u) { return u.covariates[k]; }));

  for (std::size_t k = 0; k < cohort.nominal_names.size(); ++k) {
    std::map<std::string, std::pair<long long, long long>> counts;
    for (const auto& pr : study.pairs) {
      ++counts[cohort.units[pr.long_unit].nominals[k]].first;
      ++counts[cohort.units[pr.short_unit].nominals[k]].second;
    }
    for (const auto& [cat, c] : counts)
      rep.nominal_counts.push_back({cohort.nominal_names[k], cat, c.first, c.second});
  }

  for (const auto& var : crosstab_vars) {
    auto it = std::find(cohort.nominal_names.begin(), cohort.nominal_names.end(), var);
    if (it == cohort.nominal_names.end()) continue;  // numeric traits have no categories
    std::size_t k = static_cast<std::size_t>(it - cohort.nominal_names.begin());
    std::map<std::pair<std::string, std::string>, long long> cells;
    for (const auto& pr : study.pairs)
      ++cells[{cohort.units[pr.long_unit].nominals[k],
               cohort.units[pr.short_unit].nominals[k]}];
    for (const auto& [cell, n] : cells)
      rep.crosstabs.push_back({var, cell.first, cell.second, n});
  }
  return rep;
}

struct StrengthReport {
  long long matched_pairs = 0;
  double long_mean_alos = 0.0;
  double short_mean_alos = 0.0;
  double mean_alos_gap = 0.0;    // mean over pairs of (long - short)
  double long_mean_los = 0.0;    // observed stays
  double short_mean_los = 0.0;
  double long_pct_over_1day = 0.0;   // share of long units with los >= 36h
  double short_pct_over_1day = 0.0;
  long long day_table[3][3] = {{0}};  // [long category - 1][short category - 1]
  long long push_up_pairs = 0;    // long side stayed 2 days, short side <= 1
  long long push_down_pairs = 0;  // long side <= 1 day, short side 2 days
  bool odds_defined = false;
  double discordant_odds = 0.0;   // push_up / push_down when defined
};

inline StrengthReport strength_report(const Cohort& cohort, const MatchedStudy& study) {
  StrengthReport rep;
  rep.matched_pairs = static_cast<long long>(study.pairs.size());
  if (study.pairs.empty()) return rep;
  double n = static_cast<double>(study.pairs.size());
  long long long_over = 0, short_over = 0;
  for (const auto& pr : study.pairs) {
    const Unit& ul = cohort.units[pr.long_unit];
    const Unit& us = cohort.units[pr.short_unit];
    rep.long_mean_alos += ul.alos;
    rep.short_mean_alos += us.alos;
    rep.long_mean_los += ul.los;
    rep.short_mean_los += us.los;
    if (over_one_day(ul.los)) ++long_over;
    if (over_one_day(us.los)) ++short_over;
    int cl = day_category(ul.los), cs = day_category(us.los);
    ++rep.day_table[cl - 1][cs - 1];
    if (cl == 2 && cs == 1) ++rep.push_up_pairs;
    if (cl == 1 && cs == 2) ++rep.push_down_pairs;
  }
  rep.long_mean_alos /= n;
  rep.short_mean_alos /= n;
  rep.mean_alos_gap = rep.long_mean_alos - rep.short_mean_alos;
  rep.long_mean_los /= n;
  rep.short_mean_los /= n;
  rep.long_pct_over_1day = 100.0 * static_cast<double>(long_over) / n;
  rep.short_pct_over_1day = 100.0 * static_cast<double>(short_over) / n;
  if (rep.push_down_pairs > 0) {
    rep.odds_defined = true;
    rep.discordant_odds = static_cast<double>(rep.push_up_pairs) /
                          static_cast<double>(rep.push_down_pairs);
  }
  return rep;
}

// ---- report writers ----
// Every writer has a CSV twin and an aligned-text twin with identical
// numbers; files are deterministic (no timestamps, fixed formatting).

namespace detail {

inline std::string fmt(double x, const char* spec = "%.6g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

}  // namespace detail

inline void write_balance_csv(std::ostream& out, const BalanceReport& r) {
  out << "section,name,category_long,category_short,long,short,std_diff\n";
  out << "summary,matched_pairs,,," << r.matched_pairs << ",,\n";
  out << "summary,discarded_units,,," << r.discarded_units << ",,\n";
  for (const auto& l : r.covariates)
    out << "covariate," << csv::quote(l.name) << ",,," << detail::fmt(l.long_mean)
        << ',' << detail::fmt(l.short_mean) << ',' << detail::fmt(l.std_diff) << "\n";
  for (const auto& l : r.nominal_counts)
    out << "nominal," << csv::quote(l.variable) << ',' << csv::quote(l.category)
        << ",," << l.long_n << ',' << l.short_n << ",\n";
  for (const auto& l : r.crosstabs)
    out << "crosstab," << csv::quote(l.variable) << ',' << csv::quote(l.long_cat)
        << ',' << csv::quote(l.short_cat) << ',' << l.pairs << ",,\n";
}

inline void write_balance_text(std::ostream& out, const BalanceReport& r) {
  char buf[160];
  out << "Matched pairs: " << r.matched_pairs
      << "   Discarded units: " << r.discarded_units << "\n\n";
  out << "Covariate means (long side vs short side)\n";
  std::snprintf(buf, sizeof buf, "  %-24s %12s %12s %10s\n", "covariate", "long",
                "short", "std.diff");
  out << buf;
  for (const auto& l : r.covariates) {
    std::snprintf(buf, sizeof buf, "  %-24s %12.4f %12.4f %10.4f\n", l.name.c_str(),
                  l.long_mean, l.short_mean, l.std_diff);
    out << buf;
  }
  if (!r.nominal_counts.empty()) {
    out << "\nNominal categories (unit counts per side)\n";
    std::snprintf(buf, sizeof buf, "  %-18s %-14s %10s %10s\n", "variable",
                  "category", "long", "short");
    out << buf;
    for (const auto& l : r.nominal_counts) {
      std::snprintf(buf, sizeof buf, "  %-18s %-14s %10lld %10lld\n",
                    l.variable.c_str(), l.category.c_str(), l.long_n, l.short_n);
      out << buf;
    }
  }
  if (!r.crosstabs.empty()) {
    out << "\nPair cross-tabulations (long category x short category)\n";
    std::snprintf(buf, sizeof buf, "  %-18s %-14s %-14s %10s\n", "variable",
                  "long", "short", "pairs");
    out << buf;
    for (const auto& l : r.crosstabs) {
      std::snprintf(buf, sizeof buf, "  %-18s %-14s %-14s %10lld\n",
                    l.variable.c_str(), l.long_cat.c_str(), l.short_cat.c_str(),
                    l.pairs);
      out << buf;
    }
  }
}

inline void write_strength_csv(std::ostream& out, const StrengthReport& r) {
  out << "measure,long,short\n";
  out << "matched_pairs," << r.matched_pairs << ",\n";
  out << "mean_alos," << detail::fmt(r.long_mean_alos) << ','
      << detail::fmt(r.short_mean_alos) << "\n";
  out << "mean_alos_gap," << detail::fmt(r.mean_alos_gap) << ",\n";
  out << "mean_los," << detail::fmt(r.long_mean_los) << ','
      << detail::fmt(r.short_mean_los) << "\n";
  out << "pct_over_1day," << detail::fmt(r.long_pct_over_1day) << ','
      << detail::fmt(r.short_pct_over_1day) << "\n";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      out << "day_table_" << (i + 1) << '_' << (j + 1) << ','
          << r.day_table[i][j] << ",\n";
  out << "push_up_pairs," << r.push_up_pairs << ",\n";
  out << "push_down_pairs," << r.push_down_pairs << ",\n";
  out << "discordant_odds,"
      << (r.odds_defined ? detail::fmt(r.discordant_odds) : std::string("undefined"))
      << ",\n";
}

inline void write_strength_text(std::ostream& out, const StrengthReport& r) {
  char buf[160];
  out << "Matched pairs: " << r.matched_pairs << "\n\n";
  std::snprintf(buf, sizeof buf, "  %-22s %10s %10s\n", "", "long", "short");
  out << buf;
  std::snprintf(buf, sizeof buf, "  %-22s %10.3f %10.3f\n", "mean anticipated stay",
                r.long_mean_alos, r.short_mean_alos);
  out << buf;
  std::snprintf(buf, sizeof buf, "  %-22s %10.3f %10.3f\n", "mean observed stay",
                r.long_mean_los, r.short_mean_los);
  out << buf;
  std::snprintf(buf, sizeof buf, "  %-22s %9.2f%% %9.2f%%\n", "stayed past one day",
                r.long_pct_over_1day, r.short_pct_over_1day);
  out << buf;
  std::snprintf(buf, sizeof buf, "\n  mean anticipated gap: %.3f hours\n",
                r.mean_alos_gap);
  out << buf;
  out << "\nDay categories (rows: long side; columns: short side)\n";
  std::snprintf(buf, sizeof buf, "  %-10s %10s %10s %10s\n", "", "<=1 day", "2 days",
                ">=3 days");
  out << buf;
  const char* rows[3] = {"<=1 day", "2 days", ">=3 days"};
  for (int i = 0; i < 3; ++i) {
    std::snprintf(buf, sizeof buf, "  %-10s %10lld %10lld %10lld\n", rows[i],
                  r.day_table[i][0], r.day_table[i][1], r.day_table[i][2]);
    out << buf;
  }
  out << "\nDiscordant push (2 days vs <=1 day): " << r.push_up_pairs << " up, "
      << r.push_down_pairs << " down";
  if (r.odds_defined) {
    std::snprintf(buf, sizeof buf, ", odds %.3f\n", r.discordant_odds);
    out << buf;
  } else {
    out << ", odds undefined\n";
  }
}

}  // namespace ivmatch
