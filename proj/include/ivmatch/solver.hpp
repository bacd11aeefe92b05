#pragma once

// Exact 0-1 solver for BinaryMatchProgram: branch and bound over the
// bounded-variable LP relaxation.
//
//   - Node selection: best bound first (ties to the older node), so the
//     first node whose bound cannot beat the incumbent proves optimality.
//   - Branching: most fractional variable (ties to the lowest index).
//   - Incumbents: a greedy-and-repair heuristic seeds the search; the
//     empty matching (objective 0) is itself a feasible fallback whenever
//     the rows admit it, which builder-constructed rows always do.
//   - Every solution handed back is re-verified against every row of the
//     program at integer tolerance; a violation is an internal error, not
//     a reportable result.
//
// Determinism: given the same program and limits the search visits the
// same tree. All tie-breaks are by index or node age; nothing depends on
// wall time except the cutoff itself.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ivmatch/ipmodel.hpp"
#include "ivmatch/simplex.hpp"

namespace ivmatch {

enum class SolveStatus { optimal, feasible_gap, infeasible, unknown_limit };

inline const char* solve_status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::feasible_gap: return "feasible_gap";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unknown_limit: return "unknown_limit";
  }
  return "?";
}

struct SolveLimits {
  long max_nodes = 200000;
  double max_seconds = 300.0;
};

struct SelectedPair {
  int var;
  int hi;  // high-orientation unit
  int lo;
};

struct MatchSolution {
  SolveStatus status = SolveStatus::unknown_limit;
  std::vector<int> assignment;  // 0/1 per variable; empty when nothing found
  std::vector<SelectedPair> pairs;
  double objective = 0.0;  // of the assignment (when present)
  double bound = 0.0;      // proven lower bound on the optimum
  double gap = 0.0;        // objective - bound (0 when optimal)
  long nodes = 0;
  long lp_iterations = 0;
  double seconds = 0.0;
};

namespace detail {

inline std::vector<lp::Row> relaxation_rows(const BinaryMatchProgram& p) {
  std::vector<lp::Row> rows;
  rows.reserve(p.rows().size());
  for (const auto& r : p.rows()) {
    lp::Row lr;
    switch (r.rel) {
      case Rel::le: lr.rel = lp::Rel::le; break;
      case Rel::eq: lr.rel = lp::Rel::eq; break;
      case Rel::ge: lr.rel = lp::Rel::ge; break;
    }
    lr.rhs = r.rhs;
    lr.coeffs = r.coeffs;
    rows.push_back(std::move(lr));
  }
  return rows;
}

// Violation mass of an assignment: how far each row is past its bound,
// summed. Zero exactly when feasible.
inline double violation(const BinaryMatchProgram& p, const std::vector<int>& a) {
  double v = 0.0;
  for (const auto& r : p.rows()) {
    double s = p.row_activity(r, a);
    switch (r.rel) {
      case Rel::le: v += std::max(0.0, s - r.rhs); break;
      case Rel::eq: v += std::abs(s - r.rhs); break;
      case Rel::ge: v += std::max(0.0, r.rhs - s); break;
    }
  }
  return v;
}

}  // namespace detail

// LP relaxation value under partial fixing (variable -> 0 or 1). Empty
// optional when the fixed relaxation is infeasible. This is the bound the
// search uses; exposed for tests and for poking at models interactively.
inline std::optional<double> lp_bound(const BinaryMatchProgram& p,
                                      const std::map<int, int>& fixed = {}) {
  const std::size_t n = p.num_vars();
  std::vector<double> lo(n, 0.0), hi(n, 1.0);
  for (auto [v, val] : fixed) {
    if (v < 0 || static_cast<std::size_t>(v) >= n)
      throw std::invalid_argument("lp_bound: bad variable in fixing");
    lo[static_cast<std::size_t>(v)] = hi[static_cast<std::size_t>(v)] =
        val ? 1.0 : 0.0;
  }
  lp::Result r = lp::solve(n, p.eta(), detail::relaxation_rows(p), lo, hi);
  if (r.status != lp::Status::optimal) return std::nullopt;
  return r.objective;
}

// Greedy incumbent: take pairs in eta order while they pay for themselves
// and respect degree and cap rows, then repair balance violations by
// dropping the most expensive pair whose removal helps. Returns a feasible
// assignment or nothing; the caller validates independently.
inline std::optional<std::vector<int>> incumbent_heuristic(const BinaryMatchProgram& p) {
  const std::size_t n = p.num_vars();
  std::vector<int> order(n);
  for (std::size_t v = 0; v < n; ++v) order[v] = static_cast<int>(v);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return p.eta()[static_cast<std::size_t>(a)] < p.eta()[static_cast<std::size_t>(b)];
  });

  std::vector<int> a(n, 0);
  std::vector<char> used(p.num_units(), 0);

  // Cap rows are the only <= rows a greedy step can push past their limit
  // monotonically; track their activities incrementally.
  std::vector<const Row*> caps;
  for (const auto& r : p.rows())
    if (r.tag == RowTag::cap) caps.push_back(&r);
  std::vector<std::vector<std::pair<std::size_t, double>>> cap_of_var(n);
  for (std::size_t ci = 0; ci < caps.size(); ++ci)
    for (auto [v, c] : caps[ci]->coeffs)
      cap_of_var[static_cast<std::size_t>(v)].emplace_back(ci, c);
  std::vector<double> cap_act(caps.size(), 0.0);

  for (int v : order) {
    if (p.eta()[static_cast<std::size_t>(v)] >= 0.0) break;
    auto [l, m] = p.pairs()[static_cast<std::size_t>(v)];
    if (used[static_cast<std::size_t>(l)] || used[static_cast<std::size_t>(m)]) continue;
    bool ok = true;
    for (auto [ci, c] : cap_of_var[static_cast<std::size_t>(v)])
      if (cap_act[ci] + c > caps[ci]->rhs + 1e-9) { ok = false; break; }
    if (!ok) continue;
    a[static_cast<std::size_t>(v)] = 1;
    used[static_cast<std::size_t>(l)] = used[static_cast<std::size_t>(m)] = 1;
    for (auto [ci, c] : cap_of_var[static_cast<std::size_t>(v)]) cap_act[ci] += c;
  }

  // Repair: while infeasible, drop the selected pair with the largest eta
  // whose removal strictly shrinks the violation mass.
  double viol = detail::violation(p, a);
  while (viol > 1e-9) {
    int drop = -1;
    double drop_eta = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < n; ++v) {
      if (!a[v]) continue;
      a[v] = 0;
      double after = detail::violation(p, a);
      a[v] = 1;
      if (after < viol - 1e-12 && p.eta()[v] > drop_eta) {
        drop = static_cast<int>(v);
        drop_eta = p.eta()[v];
      }
    }
    if (drop < 0) return std::nullopt;  // stuck; let the exact search cope
    a[static_cast<std::size_t>(drop)] = 0;
    viol = detail::violation(p, a);
  }
  return a;
}

inline MatchSolution solve(const BinaryMatchProgram& p, SolveLimits limits = {}) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };

  MatchSolution sol;
  const std::size_t n = p.num_vars();

  // Incumbent candidates before any tree search: the empty matching and
  // the greedy heuristic. Both are validated the hard way.
  std::optional<std::vector<int>> incumbent;
  double incumbent_obj = std::numeric_limits<double>::infinity();
  {
    std::vector<int> empty(n, 0);
    if (p.feasible(empty)) {
      incumbent = empty;
      incumbent_obj = 0.0;
    }
    if (auto h = incumbent_heuristic(p)) {
      if (p.feasible(*h)) {
        double obj = p.objective(*h);
        if (obj < incumbent_obj - 1e-12) {
          incumbent = *h;
          incumbent_obj = obj;
        }
      }
    }
  }

  auto finish = [&](SolveStatus status, double bound) {
    sol.status = status;
    sol.bound = bound;
    if (incumbent) {
      sol.assignment = *incumbent;
      sol.objective = incumbent_obj;
      sol.gap = std::max(0.0, incumbent_obj - bound);
      if (!p.feasible(sol.assignment))
        throw std::logic_error("solver: produced an infeasible solution");
      for (std::size_t v = 0; v < n; ++v)
        if (sol.assignment[v]) {
          auto [hi, lo] = p.oriented(static_cast<int>(v));
          sol.pairs.push_back({static_cast<int>(v), hi, lo});
        }
    }
    sol.seconds = elapsed();
    return sol;
  };

  if (n == 0) {
    std::vector<int> empty;
    if (p.feasible(empty)) {
      incumbent = empty;
      incumbent_obj = 0.0;
      return finish(SolveStatus::optimal, 0.0);
    }
    return finish(SolveStatus::infeasible, 0.0);
  }

  const std::vector<lp::Row> rows = detail::relaxation_rows(p);

  struct Node {
    double bound;
    long id;
    int parent;      // index into the node pool, -1 at the root
    int branch_var;  // fixing added at this node
    int branch_val;
  };
  std::vector<Node> pool;
  // Best bound first; FIFO on ties so the tree is explored the same way
  // every run.
  auto cmp = [&](long a, long b) {
    if (pool[static_cast<std::size_t>(a)].bound !=
        pool[static_cast<std::size_t>(b)].bound)
      return pool[static_cast<std::size_t>(a)].bound >
             pool[static_cast<std::size_t>(b)].bound;
    return a > b;
  };
  std::priority_queue<long, std::vector<long>, decltype(cmp)> open(cmp);

  std::vector<double> lo(n), hi(n);
  std::vector<int> fixed_val(n);
  auto load_fixings = [&](int node) {
    std::fill(lo.begin(), lo.end(), 0.0);
    std::fill(hi.begin(), hi.end(), 1.0);
    for (int at = node; at >= 0; at = pool[static_cast<std::size_t>(at)].parent) {
      const Node& nd = pool[static_cast<std::size_t>(at)];
      if (nd.branch_var < 0) continue;
      double v = nd.branch_val ? 1.0 : 0.0;
      lo[static_cast<std::size_t>(nd.branch_var)] = v;
      hi[static_cast<std::size_t>(nd.branch_var)] = v;
    }
  };

  pool.push_back({-std::numeric_limits<double>::infinity(), 0, -1, -1, 0});
  open.push(0);

  double best_open_bound = -std::numeric_limits<double>::infinity();
  bool hit_limit = false;

  while (!open.empty()) {
    long id = open.top();
    const Node nd = pool[static_cast<std::size_t>(id)];

    // Best-first: once the best open bound cannot beat the incumbent the
    // incumbent is optimal.
    if (incumbent && nd.bound >= incumbent_obj - 1e-9) {
      best_open_bound = nd.bound;
      return finish(SolveStatus::optimal, incumbent_obj);
    }
    open.pop();

    if (sol.nodes >= limits.max_nodes || elapsed() >= limits.max_seconds) {
      hit_limit = true;
      best_open_bound = nd.bound;
      break;
    }
    ++sol.nodes;

    load_fixings(static_cast<int>(id));
    lp::Result r = lp::solve(n, p.eta(), rows, lo, hi);
    sol.lp_iterations += r.iterations;
    if (r.status != lp::Status::optimal) continue;  // node infeasible
    double bound = std::max(r.objective, nd.bound);
    if (incumbent && bound >= incumbent_obj - 1e-9) continue;

    // Integrality check and candidate promotion. Most fractional variable,
    // ties to the lowest index.
    auto pick_branch = [&](double int_tol) {
      int var = -1;
      double best_score = std::numeric_limits<double>::infinity();
      for (std::size_t v = 0; v < n; ++v) {
        double f = r.x[v] - std::floor(r.x[v]);
        double dist = std::min(f, 1.0 - f);
        if (dist <= int_tol) continue;
        double score = std::abs(f - 0.5);
        if (score < best_score - 1e-12) {
          best_score = score;
          var = static_cast<int>(v);
        }
      }
      return var;
    };

    int branch = pick_branch(1e-6);
    if (branch < 0) {
      std::vector<int> a(n);
      for (std::size_t v = 0; v < n; ++v)
        a[v] = r.x[v] > 0.5 ? 1 : 0;
      if (p.feasible(a)) {
        double obj = p.objective(a);
        if (obj < incumbent_obj - 1e-12) {
          incumbent = std::move(a);
          incumbent_obj = obj;
        }
        continue;
      }
      // The rounded point misses a row by more than the tolerance even
      // though every variable sat within 1e-6 of an integer: branch on the
      // least integral variable instead of discarding the subtree.
      branch = pick_branch(1e-9);
      if (branch < 0) continue;  // numerically identical to the LP point
    }

    for (int val = 0; val <= 1; ++val) {
      long child = static_cast<long>(pool.size());
      pool.push_back({bound, child, static_cast<int>(id), branch, val});
      open.push(child);
    }
  }

  if (!hit_limit) {
    // Tree exhausted. Whatever incumbent exists is optimal; none means the
    // program has no feasible 0/1 point at all.
    if (incumbent) return finish(SolveStatus::optimal, incumbent_obj);
    return finish(SolveStatus::infeasible, 0.0);
  }

  // Limit hit: the node we stopped at had the smallest bound of the open
  // set, so it is the proven global bound.
  if (incumbent) return finish(SolveStatus::feasible_gap, best_open_bound);
  return finish(SolveStatus::unknown_limit, best_open_bound);
}

// External solution support: a text file of "<variable> <value>" lines,
// '#' starts a comment, variables named p_<l>_<m> as in the MPS export.
// Unlisted variables are zero.
inline std::vector<int> parse_solution(std::istream& in, const BinaryMatchProgram& p) {
  std::map<std::string, int> names;
  for (std::size_t v = 0; v < p.num_vars(); ++v) {
    auto [l, m] = p.pairs()[v];
    names["p_" + std::to_string(l) + "_" + std::to_string(m)] = static_cast<int>(v);
  }
  std::vector<int> a(p.num_vars(), 0);
  std::string tok;
  std::vector<std::string> line_toks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string body = line.substr(0, line.find('#'));
    std::istringstream ls(body);
    line_toks.clear();
    while (ls >> tok) line_toks.push_back(tok);
    if (line_toks.empty()) continue;
    if (line_toks.size() != 2)
      throw std::runtime_error("solution: expected '<var> <value>' at line " +
                               std::to_string(lineno));
    auto it = names.find(line_toks[0]);
    if (it == names.end())
      throw std::runtime_error("solution: unknown variable '" + line_toks[0] +
                               "' at line " + std::to_string(lineno));
    double val = std::stod(line_toks[1]);
    if (std::abs(val) > 1e-6 && std::abs(val - 1.0) > 1e-6)
      throw std::runtime_error("solution: non-binary value at line " +
                               std::to_string(lineno));
    a[static_cast<std::size_t>(it->second)] = val > 0.5 ? 1 : 0;
  }
  return a;
}

struct AssignmentCheck {
  bool feasible = false;
  double objective = 0.0;
  std::vector<std::string> violated_rows;
};

inline AssignmentCheck evaluate_assignment(const BinaryMatchProgram& p,
                                           const std::vector<int>& a) {
  AssignmentCheck out;
  out.objective = p.objective(a);
  out.feasible = true;
  for (const auto& r : p.rows()) {
    if (!p.row_satisfied(r, a)) {
      out.feasible = false;
      out.violated_rows.push_back(r.name);
    }
  }
  return out;
}

}  // namespace ivmatch
