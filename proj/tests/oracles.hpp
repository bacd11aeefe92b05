#pragma once

// Independent, deliberately naive re-implementations used to cross-check
// the library: exhaustive matching enumeration, long-double binomial
// tails, and a from-scratch MPS reader. Small inputs only.

#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ivmatch/ipmodel.hpp"

namespace oracle {

using Matching = std::vector<std::pair<int, int>>;  // (l, m) with l < m

namespace detail {

inline void enumerate_rec(int n, std::vector<char>& used, Matching& cur,
                          std::vector<Matching>& out) {
  int first = -1;
  for (int i = 0; i < n; ++i)
    if (!used[i]) {
      first = i;
      break;
    }
  if (first < 0) {
    out.push_back(cur);
    return;
  }
  used[first] = 1;
  enumerate_rec(n, used, cur, out);  // leave `first` unmatched
  for (int j = first + 1; j < n; ++j) {
    if (used[j]) continue;
    used[j] = 1;
    cur.push_back({first, j});
    enumerate_rec(n, used, cur, out);
    cur.pop_back();
    used[j] = 0;
  }
  used[first] = 0;
}

}  // namespace detail

// Every matching (including the empty one) on n units. n <= 10 or so.
inline std::vector<Matching> all_matchings(int n) {
  std::vector<Matching> out;
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  Matching cur;
  detail::enumerate_rec(n, used, cur, out);
  return out;
}

struct BruteResult {
  bool any_feasible = false;
  double objective = 0.0;
  std::vector<int> assignment;  // an argmin
};

// Exhaustive optimum of a pair-matching program: every matching whose
// pairs all exist as variables, filtered by the program's own row check.
inline BruteResult brute_solve(const ivmatch::BinaryMatchProgram& p) {
  std::map<std::pair<int, int>, std::size_t> var_of;
  for (std::size_t v = 0; v < p.num_vars(); ++v) var_of[p.pairs()[v]] = v;

  BruteResult best;
  for (const Matching& m : all_matchings(static_cast<int>(p.num_units()))) {
    std::vector<int> a(p.num_vars(), 0);
    bool representable = true;
    for (const auto& pr : m) {
      auto it = var_of.find(pr);
      if (it == var_of.end()) {
        representable = false;
        break;
      }
      a[it->second] = 1;
    }
    if (!representable || !p.feasible(a)) continue;
    double obj = p.objective(a);
    if (!best.any_feasible || obj < best.objective - 1e-12) {
      best.any_feasible = true;
      best.objective = obj;
      best.assignment = a;
    }
  }
  return best;
}

// P(Bin(n, p) <= k), exact in long double. n small (<= ~200).
inline long double binom_tail_le(long long n, long long k, long double p) {
  if (k < 0) return 0.0L;
  if (k >= n) return 1.0L;
  long double q = 1.0L - p;
  // pmf(0) = q^n, then pmf(i+1) = pmf(i) * (n-i)/(i+1) * p/q.
  long double pmf = std::pow(q, static_cast<long double>(n));
  long double sum = pmf;
  for (long long i = 0; i < k; ++i) {
    pmf *= static_cast<long double>(n - i) / static_cast<long double>(i + 1) * (p / q);
    sum += pmf;
  }
  return sum;
}

inline long double binom_tail_ge(long long n, long long k, long double p) {
  if (k <= 0) return 1.0L;
  if (k > n) return 0.0L;
  return 1.0L - binom_tail_le(n, k - 1, p);
}

// ---- MPS parse-back ----

struct MpsRow {
  char rel = 'L';  // 'L', 'E', 'G' (objective excluded)
  double rhs = 0.0;
  std::map<std::string, double> coeffs;  // column -> value
};

struct MpsModel {
  std::string name;
  std::string objective_row;
  std::map<std::string, double> objective;  // column -> cost
  std::map<std::string, MpsRow> rows;
  std::vector<std::string> row_order;
  std::set<std::string> binary_columns;
};

// Whitespace-tolerant reader for the fixed subset of MPS this library
// writes (N/L/E/G rows, INTORG markers, RHS, BV bounds).
inline MpsModel parse_mps(const std::string& text) {
  MpsModel m;
  std::istringstream in(text);
  std::string line, section;
  bool in_integer = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<std::string> tok;
    std::string t;
    while (ls >> t) tok.push_back(t);
    if (tok.empty()) continue;
    if (line[0] != ' ') {  // section header
      section = tok[0];
      if (section == "NAME" && tok.size() > 1) m.name = tok[1];
      continue;
    }
    if (section == "ROWS") {
      if (tok.size() != 2) throw std::runtime_error("mps: bad ROWS line: " + line);
      if (tok[0] == "N") {
        m.objective_row = tok[1];
      } else {
        MpsRow r;
        r.rel = tok[0].at(0);
        m.rows[tok[1]] = r;
        m.row_order.push_back(tok[1]);
      }
    } else if (section == "COLUMNS") {
      if (tok.size() >= 3 && tok[1] == "'MARKER'") {
        in_integer = tok[2] == "'INTORG'";
        continue;
      }
      if (tok.size() != 3 && tok.size() != 5)
        throw std::runtime_error("mps: bad COLUMNS line: " + line);
      const std::string& col = tok[0];
      if (in_integer) m.binary_columns.insert(col);
      for (std::size_t i = 1; i + 1 < tok.size(); i += 2) {
        double val = std::stod(tok[i + 1]);
        if (tok[i] == m.objective_row)
          m.objective[col] += val;
        else if (m.rows.count(tok[i]))
          m.rows[tok[i]].coeffs[col] += val;
        else
          throw std::runtime_error("mps: unknown row " + tok[i]);
      }
    } else if (section == "RHS") {
      if (tok.size() != 3 && tok.size() != 5)
        throw std::runtime_error("mps: bad RHS line: " + line);
      for (std::size_t i = 1; i + 1 < tok.size(); i += 2) {
        if (!m.rows.count(tok[i])) throw std::runtime_error("mps: rhs for unknown row");
        m.rows[tok[i]].rhs = std::stod(tok[i + 1]);
      }
    } else if (section == "BOUNDS") {
      if (tok.size() != 3) throw std::runtime_error("mps: bad BOUNDS line: " + line);
      if (tok[0] != "BV") throw std::runtime_error("mps: unexpected bound type " + tok[0]);
      m.binary_columns.insert(tok[2]);
    } else if (section == "ENDATA") {
      break;
    }
  }
  return m;
}

}  // namespace oracle
