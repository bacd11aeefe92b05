#pragma once

// End-to-end flows behind the CLI subcommands.
//
//   prepare        ingest -> anticipated stay -> strata -> imputation ->
//                  distances -> lambda
//   run_match      one exact solve per stratum, assembled into a study,
//                  with reports and a machine-readable summary
//   separation_sweep
//                  re-solves the whole design across minimum-gap
//                  thresholds; reads exposure, never outcomes
//   run_infer      outcome tabulation and randomization inference on a
//                  saved study
//   check_study    re-validates a saved study against the cohort and
//                  every configured constraint
//
// Design/outcome firewall: run_match and separation_sweep assert that no
// outcome value was read anywhere in their execution. Inference runs on
// its own cohort instance and is the only reader.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ivmatch/cohort.hpp"
#include "ivmatch/config.hpp"
#include "ivmatch/csv.hpp"
#include "ivmatch/diagnostics.hpp"
#include "ivmatch/distance.hpp"
#include "ivmatch/errors.hpp"
#include "ivmatch/inference.hpp"
#include "ivmatch/ipmodel.hpp"
#include "ivmatch/solver.hpp"
#include "ivmatch/study.hpp"

namespace ivmatch {

struct Prepared {
  Cohort cohort;
  AlosTable alos;
  std::vector<Stratum> strata;            // post split, deterministic order
  std::vector<DistanceMatrix> distances;  // parallel to strata (empty for L < 2)
  std::vector<std::size_t> dist_cols;     // covariate columns in the distance
  double lambda = 0.0;
};

namespace detail {

inline std::string key_label(const std::vector<std::string>& key) {
  if (key.empty()) return "(all)";
  std::string s;
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (i) s += '|';
    s += key[i];
  }
  return s;
}

inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline std::size_t covariate_index(const Cohort& c, const std::string& name,
                                   const char* who) {
  auto it = std::find(c.covariate_names.begin(), c.covariate_names.end(), name);
  if (it == c.covariate_names.end())
    throw ExitError(kExitUsage,
                    std::string(who) + ": unknown covariate '" + name + "'");
  return static_cast<std::size_t>(it - c.covariate_names.begin());
}

inline std::size_t nominal_index(const Cohort& c, const std::string& name,
                                 const char* who) {
  auto it = std::find(c.nominal_names.begin(), c.nominal_names.end(), name);
  if (it == c.nominal_names.end())
    throw ExitError(kExitUsage,
                    std::string(who) + ": unknown nominal '" + name + "'");
  return static_cast<std::size_t>(it - c.nominal_names.begin());
}

}  // namespace detail

inline Prepared prepare(const RunConfig& cfg) {
  Prepared pr;
  try {
    pr.cohort = ingest_file(cfg.input_path, cfg.schema);
  } catch (const ExitError&) {
    throw;
  } catch (const std::exception& e) {
    // Distinguish unreadable files from malformed content.
    if (!std::filesystem::exists(cfg.input_path))
      throw ExitError(kExitIo, e.what());
    throw ExitError(kExitUsage, e.what());
  }
  if (pr.cohort.units.empty())
    throw ExitError(kExitUsage, "prepare: cohort has no units");

  pr.alos = compute_alos(pr.cohort);
  pr.strata = stratify(pr.cohort);

  // Oversized strata: the pair-variable budget caps C(L,2). A stratum
  // past the budget is split by the configured nominal; each part keeps
  // the exact key (constraints then hold per part, which only tightens
  // the design).
  {
    std::vector<Stratum> out;
    for (auto& st : pr.strata) {
      std::size_t L = st.units.size();
      auto pair_count = [](std::size_t n) { return n * (n - 1) / 2; };
      if (pair_count(L) <= static_cast<std::size_t>(cfg.max_variables)) {
        out.push_back(std::move(st));
        continue;
      }
      if (cfg.split_key.empty())
        throw ExitError(kExitUsage,
                        "prepare: stratum " + detail::key_label(st.key) + " has " +
                            std::to_string(pair_count(L)) +
                            " pair variables (budget " +
                            std::to_string(cfg.max_variables) +
                            "); set match.split_key");
      std::size_t k = detail::nominal_index(pr.cohort, cfg.split_key, "prepare");
      std::map<std::string, std::vector<std::size_t>> parts;
      for (std::size_t u : st.units)
        parts[pr.cohort.units[u].nominals[k]].push_back(u);
      for (auto& [val, members] : parts) {
        if (pair_count(members.size()) > static_cast<std::size_t>(cfg.max_variables))
          throw ExitError(kExitUsage,
                          "prepare: stratum " + detail::key_label(st.key) +
                              " still exceeds the pair budget after splitting by '" +
                              cfg.split_key + "' = '" + val + "'");
        out.push_back({st.key, std::move(members)});
      }
    }
    pr.strata = std::move(out);
  }

  impute_missing(pr.cohort, pr.strata);

  // Distance covariates: the configured subset (default all), with the
  // missingness indicator of any imputed base column pulled in alongside.
  if (cfg.distance_covariates.empty()) {
    for (std::size_t k = 0; k < pr.cohort.covariate_names.size(); ++k)
      pr.dist_cols.push_back(k);
  } else {
    std::vector<std::string> wanted = cfg.distance_covariates;
    for (const auto& base : cfg.schema.impute_flagged) {
      if (std::find(wanted.begin(), wanted.end(), base) == wanted.end()) continue;
      std::string ind = base + "_missing";
      if (std::find(wanted.begin(), wanted.end(), ind) == wanted.end())
        wanted.push_back(ind);
    }
    for (const auto& name : wanted)
      pr.dist_cols.push_back(detail::covariate_index(pr.cohort, name, "prepare"));
  }

  pr.distances.resize(pr.strata.size());
  std::vector<double> all_pair_distances;
  for (std::size_t si = 0; si < pr.strata.size(); ++si) {
    const auto& st = pr.strata[si];
    if (st.units.size() < 2) {
      pr.distances[si].n = st.units.size();
      continue;
    }
    std::vector<std::vector<double>> rows;
    rows.reserve(st.units.size());
    for (std::size_t u : st.units) {
      std::vector<double> r;
      r.reserve(pr.dist_cols.size());
      for (std::size_t k : pr.dist_cols)
        r.push_back(pr.cohort.units[u].covariates[k]);
      rows.push_back(std::move(r));
    }
    pr.distances[si] = robust_mahalanobis(rows);
    for (std::size_t i = 0; i < pr.distances[si].n; ++i)
      for (std::size_t j = i + 1; j < pr.distances[si].n; ++j)
        all_pair_distances.push_back(pr.distances[si](i, j));
  }

  // The discard price: the median of every within-stratum pair distance,
  // taken before any pairing decision.
  if (cfg.lambda_is_median) {
    pr.lambda = all_pair_distances.empty()
                    ? 0.0
                    : ivmatch::detail::median(std::move(all_pair_distances));
  } else {
    pr.lambda = cfg.lambda_value;
  }
  return pr;
}

// Assembles the full integer program of one stratum. hard_gap is a
// parameter (not read from cfg) because the sweep rebuilds programs
// across thresholds.
inline BinaryMatchProgram build_program(const Prepared& pr, std::size_t si,
                                        const RunConfig& cfg, double hard_gap) {
  const Stratum& st = pr.strata[si];
  const std::size_t L = st.units.size();
  std::vector<double> alos(L);
  for (std::size_t i = 0; i < L; ++i) alos[i] = pr.cohort.units[st.units[i]].alos;

  auto keep = [&](std::size_t l, std::size_t m) {
    return std::abs(alos[l] - alos[m]) >= hard_gap;
  };
  BinaryMatchProgram prog = new_program(pr.distances[si], pr.lambda, keep, alos);

  auto categories = [&](std::size_t k) {
    std::set<std::string> cats;
    for (std::size_t u : st.units) cats.insert(pr.cohort.units[u].nominals[k]);
    return cats;
  };
  auto indicator = [&](std::size_t k, const std::string& cat) {
    std::vector<double> w(L, 0.0);
    for (std::size_t i = 0; i < L; ++i)
      if (pr.cohort.units[st.units[i]].nominals[k] == cat) w[i] = 1.0;
    return w;
  };

  for (const auto& var : cfg.fine_balance) {
    std::size_t k = detail::nominal_index(pr.cohort, var, "fine_balance");
    for (const auto& cat : categories(k)) add_fine_balance(prog, indicator(k, cat));
  }
  for (const auto& rule : cfg.near_fine) {
    std::size_t k = detail::nominal_index(pr.cohort, rule.variable, "near_fine");
    for (const auto& cat : categories(k))
      add_near_fine_balance(prog, indicator(k, cat), rule.epsilon);
  }
  for (const auto& rule : cfg.caps) {
    std::size_t k = detail::nominal_index(pr.cohort, rule.variable, "caps");
    std::vector<char> h(prog.num_vars(), 0);
    for (std::size_t v = 0; v < prog.num_vars(); ++v) {
      auto [l, m] = prog.pairs()[v];
      h[v] = pr.cohort.units[st.units[static_cast<std::size_t>(l)]].nominals[k] !=
                     pr.cohort.units[st.units[static_cast<std::size_t>(m)]].nominals[k]
                 ? 1
                 : 0;
    }
    long H = rule.count ? *rule.count
                        : static_cast<long>(std::floor(*rule.fraction *
                                                       static_cast<double>(L)));
    add_cap(prog, h, H);
  }
  for (const auto& rule : cfg.mean_balance) {
    std::size_t k = detail::covariate_index(pr.cohort, rule.variable, "mean_balance");
    std::vector<double> v(L);
    for (std::size_t i = 0; i < L; ++i)
      v[i] = pr.cohort.units[st.units[i]].covariates[k];
    double eps = rule.epsilon ? *rule.epsilon : 0.005 * detail::sample_sd(v);
    add_mean_balance(prog, v, eps);
  }
  add_separation(prog, alos, cfg.separation_hours);
  return prog;
}

struct StratumOutcome {
  std::vector<std::string> key;
  std::size_t units = 0;
  std::size_t pair_vars = 0;       // eligible pair variables
  bool solved = false;             // false for strata too small to pair
  SolveStatus status = SolveStatus::optimal;
  double objective = 0.0;
  double bound = 0.0;
  long nodes = 0;
  std::size_t matched_pairs = 0;
};

struct MatchResult {
  Prepared prep;
  MatchedStudy study;
  std::vector<StratumOutcome> strata;
};

inline MatchResult run_match(const RunConfig& cfg) {
  MatchResult res{prepare(cfg), {}, {}};
  const long reads_before = res.prep.cohort.outcome_reads();

  std::vector<char> matched(res.prep.cohort.units.size(), 0);
  for (std::size_t si = 0; si < res.prep.strata.size(); ++si) {
    const Stratum& st = res.prep.strata[si];
    res.study.stratum_keys.push_back(st.key);
    StratumOutcome out;
    out.key = st.key;
    out.units = st.units.size();

    if (st.units.size() < 2) {
      res.strata.push_back(out);
      continue;
    }
    BinaryMatchProgram prog = build_program(res.prep, si, cfg, cfg.hard_gap_hours);
    out.pair_vars = prog.num_vars();
    MatchSolution sol = solve(prog, cfg.limits);
    out.solved = true;
    out.status = sol.status;
    out.objective = sol.objective;
    out.bound = sol.bound;
    out.nodes = sol.nodes;

    bool acceptable = sol.status == SolveStatus::optimal ||
                      (sol.status == SolveStatus::feasible_gap && cfg.allow_gap);
    if (!acceptable)
      throw ExitError(kExitInfeasible,
                      "match: stratum " + detail::key_label(st.key) + " ended " +
                          solve_status_name(sol.status) + " after " +
                          std::to_string(sol.nodes) +
                          " nodes; raise match.limits or set match.allow_gap");

    out.matched_pairs = sol.pairs.size();
    for (const auto& sp : sol.pairs) {
      MatchedPairRec pr;
      pr.long_unit = st.units[static_cast<std::size_t>(sp.hi)];
      pr.short_unit = st.units[static_cast<std::size_t>(sp.lo)];
      pr.stratum = si;
      matched[pr.long_unit] = matched[pr.short_unit] = 1;
      res.study.pairs.push_back(pr);
    }
    res.strata.push_back(out);
  }
  for (std::size_t i = 0; i < matched.size(); ++i)
    if (!matched[i]) res.study.discarded.push_back(i);

  if (res.prep.cohort.outcome_reads() != reads_before)
    throw std::logic_error("run_match: outcome was read during design");
  return res;
}

// ---- sweep ----

struct SweepColumn {
  double threshold = 0.0;
  bool feasible = false;
  long long pairs = 0;
  double mean_gap = 0.0;        // anticipated hours, long minus short
  double long_pct_over = 0.0;   // observed stay past one day, long side
  double short_pct_over = 0.0;
  double pct_difference = 0.0;  // long_pct_over - short_pct_over
};

struct SweepResult {
  std::vector<SweepColumn> columns;
};

// How the design strength moves with the minimum anticipated-stay gap.
// Exposure only: observed stays are read, outcomes never are.
inline SweepResult separation_sweep(const RunConfig& cfg,
                                    std::vector<double> thresholds = {}) {
  if (thresholds.empty()) thresholds = cfg.sweep_thresholds;
  Prepared pr = prepare(cfg);
  const long reads_before = pr.cohort.outcome_reads();

  SweepResult res;
  for (double th : thresholds) {
    SweepColumn col;
    col.threshold = th;
    col.feasible = true;
    double gap_sum = 0.0;
    long long long_over = 0, short_over = 0;
    for (std::size_t si = 0; si < pr.strata.size() && col.feasible; ++si) {
      if (pr.strata[si].units.size() < 2) continue;
      BinaryMatchProgram prog = build_program(pr, si, cfg, th);
      MatchSolution sol = solve(prog, cfg.limits);
      bool acceptable = sol.status == SolveStatus::optimal ||
                        (sol.status == SolveStatus::feasible_gap && cfg.allow_gap);
      if (!acceptable) {
        col.feasible = false;
        break;
      }
      for (const auto& sp : sol.pairs) {
        const Unit& ul = pr.cohort.units[pr.strata[si].units[static_cast<std::size_t>(sp.hi)]];
        const Unit& us = pr.cohort.units[pr.strata[si].units[static_cast<std::size_t>(sp.lo)]];
        ++col.pairs;
        gap_sum += ul.alos - us.alos;
        if (over_one_day(ul.los)) ++long_over;
        if (over_one_day(us.los)) ++short_over;
      }
    }
    if (col.feasible && col.pairs > 0) {
      double n = static_cast<double>(col.pairs);
      col.mean_gap = gap_sum / n;
      col.long_pct_over = 100.0 * static_cast<double>(long_over) / n;
      col.short_pct_over = 100.0 * static_cast<double>(short_over) / n;
      col.pct_difference = col.long_pct_over - col.short_pct_over;
    }
    res.columns.push_back(col);
  }

  if (pr.cohort.outcome_reads() != reads_before)
    throw std::logic_error("separation_sweep: outcome was read during design");
  return res;
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& r) {
  out << "threshold_hours,feasible,pairs,mean_alos_gap,long_pct_over_1day,"
         "short_pct_over_1day,pct_difference\n";
  for (const auto& c : r.columns) {
    out << detail::fmt(c.threshold) << ','
        << (c.feasible ? "yes" : "no") << ',';
    if (c.feasible)
      out << c.pairs << ',' << detail::fmt(c.mean_gap) << ','
          << detail::fmt(c.long_pct_over) << ','
          << detail::fmt(c.short_pct_over) << ','
          << detail::fmt(c.pct_difference);
    else
      out << ",,,,";
    out << '\n';
  }
}

inline void write_sweep_text(std::ostream& out, const SweepResult& r) {
  char buf[200];
  out << "Design strength by minimum anticipated-stay gap\n\n";
  std::snprintf(buf, sizeof buf, "  %10s %10s %10s %12s %12s %12s\n", "threshold",
                "pairs", "mean gap", "long >1d %", "short >1d %", "difference");
  out << buf;
  for (const auto& c : r.columns) {
    if (!c.feasible) {
      std::snprintf(buf, sizeof buf, "  %10.4g %10s\n", c.threshold, "infeasible");
      out << buf;
      continue;
    }
    std::snprintf(buf, sizeof buf, "  %10.4g %10lld %10.3f %12.2f %12.2f %12.2f\n",
                  c.threshold, c.pairs, c.mean_gap, c.long_pct_over,
                  c.short_pct_over, c.pct_difference);
    out << buf;
  }
}

// ---- inference ----

struct InferenceReport {
  PairedOutcomeTable table;
  double p_one_sided = 1.0;
  double p_two_sided = 1.0;
  bool degenerate = false;
  long long delta0 = 0;
  ThreePartResult three;
  double alpha = 0.05;
  std::vector<SensitivityBounds> long_grid;   // exposure caused delta0 events
  std::vector<SensitivityBounds> short_grid;  // exposure averted delta0 events
};

inline InferenceReport run_infer(const RunConfig& cfg, const std::string& pairs_path) {
  if (cfg.schema.outcome.empty())
    throw ExitError(kExitUsage, "infer: schema.outcome is required for inference");
  Cohort cohort;
  try {
    cohort = ingest_file(cfg.input_path, cfg.schema);
  } catch (const std::exception& e) {
    if (!std::filesystem::exists(cfg.input_path)) throw ExitError(kExitIo, e.what());
    throw ExitError(kExitUsage, e.what());
  }
  csv::Table table;
  try {
    table = csv::read_file(pairs_path);
  } catch (const std::exception& e) {
    throw ExitError(kExitIo, e.what());
  }
  MatchedStudy study = load_study(table, cohort);

  InferenceReport rep;
  rep.table = tabulate(cohort, study);
  rep.alpha = cfg.inference.alpha;
  rep.p_one_sided = mcnemar_test(rep.table, Sided::one).p;
  TestResult two = mcnemar_test(rep.table, Sided::two);
  rep.p_two_sided = two.p;
  rep.degenerate = two.degenerate;

  if (cfg.inference.delta0)
    rep.delta0 = *cfg.inference.delta0;
  else if (cfg.inference.delta0_fraction)
    rep.delta0 = std::llround(*cfg.inference.delta0_fraction *
                              static_cast<double>(study.pairs.size()));
  rep.three = three_part_test(rep.table, rep.delta0);

  auto grid_side = [&](Attribution side) {
    std::vector<SensitivityBounds> grid;
    for (double g : cfg.inference.gamma_grid) {
      try {
        grid.push_back(attributable_test(rep.table, side, rep.delta0, g));
      } catch (const IncompatibleHypothesis&) {
        SensitivityBounds b;
        b.gamma = g;
        b.p_lower = b.p_upper = 0.0;  // auto-rejected
        grid.push_back(b);
      }
    }
    return grid;
  };
  rep.long_grid = grid_side(Attribution::long_side);
  rep.short_grid = grid_side(Attribution::short_side);
  return rep;
}

// lambda = delta solving collapse(x, x) = gamma, for the amplification
// column of the sensitivity table.
inline double symmetric_amplification(double gamma) {
  return gamma + std::sqrt(gamma * gamma - 1.0);
}

inline void write_inference_csv(std::ostream& out, const InferenceReport& r) {
  out << "section,name,value,extra\n";
  out << "table,both," << r.table.both << ",\n";
  out << "table,only_long," << r.table.only_long << ",\n";
  out << "table,only_short," << r.table.only_short << ",\n";
  out << "table,neither," << r.table.neither << ",\n";
  out << "table,pairs," << r.table.pairs() << ",\n";
  out << "test,mcnemar_one_sided," << detail::fmt(r.p_one_sided, "%.8g") << ",\n";
  out << "test,mcnemar_two_sided," << detail::fmt(r.p_two_sided, "%.8g") << ",\n";
  out << "test,degenerate," << (r.degenerate ? "yes" : "no") << ",\n";
  out << "test,delta0," << r.delta0 << ",\n";
  out << "three_part,no_effect," << detail::fmt(r.three.p_no_effect, "%.8g")
      << ",\n";
  out << "three_part,long_attribution,"
      << detail::fmt(r.three.p_long_attribution, "%.8g") << ','
      << (r.three.long_incompatible ? "incompatible" : "") << "\n";
  out << "three_part,short_attribution,"
      << detail::fmt(r.three.p_short_attribution, "%.8g") << ','
      << (r.three.short_incompatible ? "incompatible" : "") << "\n";
  auto grid = [&](const char* side, const std::vector<SensitivityBounds>& g) {
    for (const auto& b : g)
      out << "sensitivity_" << side << ',' << detail::fmt(b.gamma) << ','
          << detail::fmt(b.p_upper, "%.8g") << ','
          << detail::fmt(symmetric_amplification(b.gamma)) << "\n";
  };
  grid("long", r.long_grid);
  grid("short", r.short_grid);
}

inline void write_inference_text(std::ostream& out, const InferenceReport& r) {
  char buf[200];
  out << "Matched pair outcomes\n";
  std::snprintf(buf, sizeof buf,
                "  both: %lld   only long: %lld   only short: %lld   neither: %lld"
                "   (pairs: %lld)\n\n",
                r.table.both, r.table.only_long, r.table.only_short, r.table.neither,
                r.table.pairs());
  out << buf;
  std::snprintf(buf, sizeof buf,
                "Paired sign test: one-sided P = %.6g, two-sided P = %.6g%s\n",
                r.p_one_sided, r.p_two_sided,
                r.degenerate ? " (degenerate: no discordant pairs)" : "");
  out << buf;
  std::snprintf(buf, sizeof buf,
                "\nThree-part test at delta0 = %lld (alpha %.3g; small P rejects "
                "the stated null)\n",
                r.delta0, r.alpha);
  out << buf;
  std::snprintf(buf, sizeof buf, "  (i)   null: no effect on any pair"
                "            P = %.6g\n", r.three.p_no_effect);
  out << buf;
  std::snprintf(buf, sizeof buf, "  (ii)  null: long stay caused >= %lld events"
                "    P = %.6g%s\n",
                r.delta0, r.three.p_long_attribution,
                r.three.long_incompatible ? " (auto-rejected: table incompatible)" : "");
  out << buf;
  std::snprintf(buf, sizeof buf, "  (iii) null: long stay averted >= %lld events"
                "   P = %.6g%s\n",
                r.delta0, r.three.p_short_attribution,
                r.three.short_incompatible ? " (auto-rejected: table incompatible)" : "");
  out << buf;
  auto grid = [&](const char* title, const std::vector<SensitivityBounds>& g) {
    out << "\nSensitivity, " << title << "\n";
    std::snprintf(buf, sizeof buf, "  %8s %14s %26s\n", "gamma", "P upper bound",
                  "equivalent (lambda=delta)");
    out << buf;
    for (const auto& b : g) {
      std::snprintf(buf, sizeof buf, "  %8.4g %14.6g %26.4f\n", b.gamma, b.p_upper,
                    symmetric_amplification(b.gamma));
      out << buf;
    }
  };
  grid("null: long stay caused >= delta0 events", r.long_grid);
  grid("null: long stay averted >= delta0 events", r.short_grid);
}

// ---- check ----

struct CheckResult {
  std::vector<std::string> problems;
  bool ok() const { return problems.empty(); }
};

// Re-validates a saved study against the cohort file and the configured
// constraints. Works at the exact-key stratum level: a design solved on
// split strata satisfies all aggregate bounds except absolute-count caps,
// which are documented as per-part.
inline CheckResult check_study(const RunConfig& cfg, const std::string& pairs_path) {
  CheckResult res;
  Cohort cohort;
  try {
    cohort = ingest_file(cfg.input_path, cfg.schema);
  } catch (const std::exception& e) {
    if (!std::filesystem::exists(cfg.input_path)) throw ExitError(kExitIo, e.what());
    throw ExitError(kExitUsage, e.what());
  }
  compute_alos(cohort);

  csv::Table table;
  try {
    table = csv::read_file(pairs_path);
  } catch (const std::exception& e) {
    throw ExitError(kExitIo, e.what());
  }
  MatchedStudy study;
  try {
    study = load_study(table, cohort);
  } catch (const std::exception& e) {
    res.problems.push_back(e.what());
    return res;
  }

  const double tol = 1e-6;
  // Pair-level rules.
  for (std::size_t i = 0; i < study.pairs.size(); ++i) {
    const auto& pr = study.pairs[i];
    const Unit& ul = cohort.units[pr.long_unit];
    const Unit& us = cohort.units[pr.short_unit];
    std::string tag = "pair " + std::to_string(i) + " (" + ul.id + ", " + us.id + ")";
    if (ul.exact_key != us.exact_key)
      res.problems.push_back(tag + ": units are in different strata");
    else if (ul.exact_key != study.stratum_keys[pr.stratum])
      res.problems.push_back(tag + ": stratum columns disagree with the cohort");
    if (ul.alos < us.alos - tol)
      res.problems.push_back(tag + ": orientation reversed (long side has shorter "
                                   "anticipated stay)");
    if (std::abs(ul.alos - us.alos) < cfg.hard_gap_hours - tol)
      res.problems.push_back(tag + ": anticipated gap below the hard minimum");
  }

  // Stratum-level rules, grouped by the units' exact keys.
  std::map<std::vector<std::string>, std::vector<std::size_t>> pair_groups;
  for (std::size_t i = 0; i < study.pairs.size(); ++i)
    pair_groups[cohort.units[study.pairs[i].long_unit].exact_key].push_back(i);
  std::map<std::vector<std::string>, std::vector<std::size_t>> unit_groups;
  for (std::size_t u = 0; u < cohort.units.size(); ++u)
    unit_groups[cohort.units[u].exact_key].push_back(u);

  for (const auto& [key, pidx] : pair_groups) {
    std::string where = "stratum " + detail::key_label(key);
    double n = static_cast<double>(pidx.size());

    double gap_sum = 0.0;
    for (std::size_t i : pidx) {
      gap_sum += cohort.units[study.pairs[i].long_unit].alos -
                 cohort.units[study.pairs[i].short_unit].alos;
    }
    if (gap_sum / n < cfg.separation_hours - tol)
      res.problems.push_back(where + ": mean anticipated gap " +
                             std::to_string(gap_sum / n) + " is below " +
                             std::to_string(cfg.separation_hours));

    auto count_side = [&](const std::string& var, const std::string& cat, bool lng) {
      std::size_t k = detail::nominal_index(cohort, var, "check");
      long long c = 0;
      for (std::size_t i : pidx) {
        std::size_t u = lng ? study.pairs[i].long_unit : study.pairs[i].short_unit;
        if (cohort.units[u].nominals[k] == cat) ++c;
      }
      return c;
    };
    auto stratum_cats = [&](const std::string& var) {
      std::size_t k = detail::nominal_index(cohort, var, "check");
      std::set<std::string> cats;
      for (std::size_t u : unit_groups.at(key)) cats.insert(cohort.units[u].nominals[k]);
      return cats;
    };

    for (const auto& var : cfg.fine_balance)
      for (const auto& cat : stratum_cats(var)) {
        long long cl = count_side(var, cat, true), cs = count_side(var, cat, false);
        if (cl != cs)
          res.problems.push_back(where + ": fine balance broken on " + var + "='" +
                                 cat + "' (" + std::to_string(cl) + " vs " +
                                 std::to_string(cs) + ")");
      }
    for (const auto& rule : cfg.near_fine)
      for (const auto& cat : stratum_cats(rule.variable)) {
        long long cl = count_side(rule.variable, cat, true);
        long long cs = count_side(rule.variable, cat, false);
        if (std::llabs(cl - cs) > rule.epsilon)
          res.problems.push_back(where + ": near-fine balance broken on " +
                                 rule.variable + "='" + cat + "' (|" +
                                 std::to_string(cl) + " - " + std::to_string(cs) +
                                 "| > " + std::to_string(rule.epsilon) + ")");
      }
    for (const auto& rule : cfg.caps) {
      std::size_t k = detail::nominal_index(cohort, rule.variable, "check");
      long long mism = 0;
      for (std::size_t i : pidx)
        if (cohort.units[study.pairs[i].long_unit].nominals[k] !=
            cohort.units[study.pairs[i].short_unit].nominals[k])
          ++mism;
      long H = rule.count
                   ? *rule.count
                   : static_cast<long>(std::floor(
                         *rule.fraction *
                         static_cast<double>(unit_groups.at(key).size())));
      if (mism > H)
        res.problems.push_back(where + ": " + std::to_string(mism) +
                               " mismatched pairs on " + rule.variable +
                               " exceed the cap " + std::to_string(H));
    }
    for (const auto& rule : cfg.mean_balance) {
      std::size_t k = detail::covariate_index(cohort, rule.variable, "check");
      double eps;
      if (rule.epsilon) {
        eps = *rule.epsilon;
      } else {
        std::vector<double> v;
        for (std::size_t u : unit_groups.at(key))
          v.push_back(cohort.units[u].covariates[k]);
        eps = 0.005 * detail::sample_sd(v);
      }
      double dl = 0.0, ds = 0.0;
      for (std::size_t i : pidx) {
        dl += cohort.units[study.pairs[i].long_unit].covariates[k];
        ds += cohort.units[study.pairs[i].short_unit].covariates[k];
      }
      if (std::abs(dl - ds) / n > eps + tol)
        res.problems.push_back(where + ": mean difference of " + rule.variable +
                               " is " + std::to_string(std::abs(dl - ds) / n) +
                               ", allowed " + std::to_string(eps));
    }
  }
  return res;
}

// ---- model export ----

inline nlohmann::json model_json(const BinaryMatchProgram& p) {
  nlohmann::json j;
  j["units"] = p.num_units();
  j["lambda"] = p.lambda();
  j["orientation"] = p.orientation();
  nlohmann::json vars = nlohmann::json::array();
  for (std::size_t v = 0; v < p.num_vars(); ++v) {
    auto [l, m] = p.pairs()[v];
    auto [hi, lo] = p.oriented(static_cast<int>(v));
    vars.push_back({{"name", "p_" + std::to_string(l) + "_" + std::to_string(m)},
                    {"high", hi},
                    {"low", lo},
                    {"eta", p.eta()[v]}});
  }
  j["variables"] = std::move(vars);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : p.rows()) {
    nlohmann::json jr;
    jr["name"] = r.name;
    jr["family"] = row_tag_name(r.tag);
    jr["rel"] = r.rel == Rel::le ? "<=" : (r.rel == Rel::eq ? "=" : ">=");
    jr["rhs"] = r.rhs;
    nlohmann::json coeffs = nlohmann::json::array();
    for (auto [v, c] : r.coeffs) coeffs.push_back({v, c});
    jr["coeffs"] = std::move(coeffs);
    rows.push_back(std::move(jr));
  }
  j["rows"] = std::move(rows);
  return j;
}

// ---- output writing ----

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ExitError(kExitIo, "cannot write " + path.string());
  out << body;
}

template <typename F>
inline void write_with(const std::filesystem::path& path, F&& fill) {
  std::ostringstream os;
  fill(os);
  write_file(path, os.str());
}

}  // namespace detail

// Writes pairs.csv, balance and strength reports (CSV and text twins) and
// summary.json. Deterministic: same config and input give byte-identical
// files; no timestamps anywhere.
inline void write_match_outputs(const RunConfig& cfg, const MatchResult& res,
                                const std::string& dir) {
  namespace fs = std::filesystem;
  fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw ExitError(kExitIo, "cannot create " + root.string());

  detail::write_with(root / "pairs.csv",
                     [&](std::ostream& o) { save_study(o, res.prep.cohort, res.study); });

  std::vector<std::string> crosstab_vars;
  auto add_var = [&](const std::string& v) {
    if (std::find(crosstab_vars.begin(), crosstab_vars.end(), v) == crosstab_vars.end())
      crosstab_vars.push_back(v);
  };
  for (const auto& r : cfg.caps) add_var(r.variable);
  for (const auto& v : cfg.fine_balance) add_var(v);
  for (const auto& r : cfg.near_fine) add_var(r.variable);

  BalanceReport bal = balance_report(res.prep.cohort, res.study, crosstab_vars);
  detail::write_with(root / "balance.csv", [&](std::ostream& o) { write_balance_csv(o, bal); });
  detail::write_with(root / "balance.txt", [&](std::ostream& o) { write_balance_text(o, bal); });

  StrengthReport st = strength_report(res.prep.cohort, res.study);
  detail::write_with(root / "strength.csv", [&](std::ostream& o) { write_strength_csv(o, st); });
  detail::write_with(root / "strength.txt", [&](std::ostream& o) { write_strength_text(o, st); });

  nlohmann::json j;
  j["lambda"] = res.prep.lambda;
  j["hard_gap_hours"] = cfg.hard_gap_hours;
  j["separation_hours"] = cfg.separation_hours;
  j["matched_pairs"] = res.study.pairs.size();
  j["discarded_units"] = res.study.discarded.size();
  nlohmann::json strata = nlohmann::json::array();
  for (const auto& s : res.strata) {
    nlohmann::json js;
    js["key"] = s.key;
    js["units"] = s.units;
    js["pair_variables"] = s.pair_vars;
    js["solved"] = s.solved;
    if (s.solved) {
      js["status"] = solve_status_name(s.status);
      js["objective"] = s.objective;
      js["bound"] = s.bound;
      js["nodes"] = s.nodes;
    }
    js["matched_pairs"] = s.matched_pairs;
    strata.push_back(std::move(js));
  }
  j["strata"] = std::move(strata);
  detail::write_file(root / "summary.json", j.dump(2) + "\n");
}

inline void write_sweep_outputs(const SweepResult& res, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw ExitError(kExitIo, "cannot create " + root.string());
  detail::write_with(root / "sweep.csv", [&](std::ostream& o) { write_sweep_csv(o, res); });
  detail::write_with(root / "sweep.txt", [&](std::ostream& o) { write_sweep_text(o, res); });
}

inline void write_inference_outputs(const InferenceReport& rep, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw ExitError(kExitIo, "cannot create " + root.string());
  detail::write_with(root / "inference.csv",
                     [&](std::ostream& o) { write_inference_csv(o, rep); });
  detail::write_with(root / "inference.txt",
                     [&](std::ostream& o) { write_inference_text(o, rep); });
}

// One MPS file per solvable stratum plus a manifest, and a JSON twin of
// each model for tooling that prefers structure over MPS.
inline void export_models(const RunConfig& cfg, const std::string& dir,
                          bool with_json = true) {
  namespace fs = std::filesystem;
  Prepared pr = prepare(cfg);
  fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw ExitError(kExitIo, "cannot create " + root.string());

  nlohmann::json manifest = nlohmann::json::array();
  for (std::size_t si = 0; si < pr.strata.size(); ++si) {
    if (pr.strata[si].units.size() < 2) continue;
    BinaryMatchProgram prog = build_program(pr, si, cfg, cfg.hard_gap_hours);
    char name[32];
    std::snprintf(name, sizeof name, "model_%03zu", si);
    std::string mps_name = std::string(name) + ".mps";
    detail::write_file(root / mps_name, export_mps(prog, name));
    nlohmann::json entry;
    entry["stratum"] = si;
    entry["key"] = pr.strata[si].key;
    entry["units"] = pr.strata[si].units.size();
    entry["pair_variables"] = prog.num_vars();
    entry["mps"] = mps_name;
    if (with_json) {
      std::string json_name = std::string(name) + ".json";
      detail::write_file(root / json_name, model_json(prog).dump(2) + "\n");
      entry["json"] = json_name;
    }
    manifest.push_back(std::move(entry));
  }
  detail::write_file(root / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace ivmatch
