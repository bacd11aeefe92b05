#pragma once

// 0-1 integer program for nonbipartite pair matching with balance side
// constraints.
//
// Variables: one binary a[l,m] per eligible unordered pair (l < m) of a
// stratum; a[l,m] = 1 means l and m form a matched pair. Objective:
// minimize sum eta[l,m] * a[l,m] with eta = distance - lambda. A negative
// eta rewards keeping a pair; lambda is the price of discarding units, so
// the optimum trades pair quality against sample size (the empty matching
// is always available at objective 0).
//
// Orientation: balance rows need a consistent notion of which side of a
// pair is "high" and which is "low". The program carries one orientation
// value per unit (the instrument in the intended use); in every row the
// pair contributes coefficient f(high side) - f(low side). Ties and a
// missing orientation fall back to index order (the lower index is the
// high side), which keeps row construction deterministic.
//
// Row families:
//   degree        a-row sums over pairs touching unit l, at most one
//   fine_balance  sum a (w_hi - w_lo) = 0 for a binary trait w: the trait
//                 count must be equal on the two sides of the match
//   cap           sum over flagged pairs <= H (H = 0 forbids them)
//   mean_balance  |mean difference| of a numeric covariate bounded by eps,
//                 linearized as two <= 0 rows with eps folded into the
//                 coefficients
//   separation    mean instrument gap across pairs at least phi
//   near_fine     |sum a (w_hi - w_lo)| <= eps, a count slack on a trait
//                 where exact fine balance is infeasible

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ivmatch/distance.hpp"

namespace ivmatch {

enum class Rel { le, eq, ge };

enum class RowTag { degree, fine_balance, cap, mean_balance, separation, near_fine };

inline const char* row_tag_name(RowTag t) {
  switch (t) {
    case RowTag::degree: return "degree";
    case RowTag::fine_balance: return "fine_balance";
    case RowTag::cap: return "cap";
    case RowTag::mean_balance: return "mean_balance";
    case RowTag::separation: return "separation";
    case RowTag::near_fine: return "near_fine";
  }
  return "?";
}

struct Row {
  RowTag tag;
  Rel rel;
  double rhs;
  std::vector<std::pair<int, double>> coeffs;  // (variable, coefficient), sparse
  std::string name;
};

class BinaryMatchProgram {
 public:
  // Pair variables over an L-unit stratum; keep(l, m) selects the eligible
  // pairs. eta[v] = distance(l, m) - lambda.
  BinaryMatchProgram(const DistanceMatrix& d, double lambda,
                     const std::function<bool(std::size_t, std::size_t)>& keep,
                     std::vector<double> orientation)
      : L_(d.n), lambda_(lambda), orientation_(std::move(orientation)) {
    if (!orientation_.empty() && orientation_.size() != L_)
      throw std::invalid_argument("program: orientation size mismatch");
    by_unit_.resize(L_);
    for (std::size_t l = 0; l < L_; ++l) {
      for (std::size_t m = l + 1; m < L_; ++m) {
        if (keep && !keep(l, m)) continue;
        int v = static_cast<int>(pairs_.size());
        pairs_.emplace_back(static_cast<int>(l), static_cast<int>(m));
        eta_.push_back(d(l, m) - lambda);
        by_unit_[l].push_back(v);
        by_unit_[m].push_back(v);
      }
    }
    for (std::size_t l = 0; l < L_; ++l) {
      Row r;
      r.tag = RowTag::degree;
      r.rel = Rel::le;
      r.rhs = 1.0;
      r.name = "DEG_" + std::to_string(l);
      for (int v : by_unit_[l]) r.coeffs.emplace_back(v, 1.0);
      rows_.push_back(std::move(r));
    }
  }

  std::size_t num_units() const { return L_; }
  std::size_t num_vars() const { return pairs_.size(); }
  double lambda() const { return lambda_; }
  const std::vector<double>& eta() const { return eta_; }
  const std::vector<Row>& rows() const { return rows_; }
  const std::vector<std::pair<int, int>>& pairs() const { return pairs_; }
  const std::vector<int>& vars_of_unit(std::size_t l) const { return by_unit_[l]; }

  // (high side, low side) of variable v under the program orientation.
  std::pair<int, int> oriented(int v) const {
    auto [l, m] = pairs_[static_cast<std::size_t>(v)];
    if (!orientation_.empty() && orientation_[static_cast<std::size_t>(m)] >
                                     orientation_[static_cast<std::size_t>(l)])
      return {m, l};
    return {l, m};
  }

  // Replaces the orientation. Only legal while the program has nothing but
  // degree rows; balance rows already built would silently keep the old
  // orientation otherwise.
  void set_orientation(std::vector<double> orientation) {
    if (rows_.size() != L_)
      throw std::logic_error("program: orientation change after balance rows");
    if (!orientation.empty() && orientation.size() != L_)
      throw std::invalid_argument("program: orientation size mismatch");
    orientation_ = std::move(orientation);
  }

  const std::vector<double>& orientation() const { return orientation_; }

  void add_row(Row r) { rows_.push_back(std::move(r)); }

  int count_rows(RowTag t) const {
    int n = 0;
    for (const auto& r : rows_)
      if (r.tag == t) ++n;
    return n;
  }

  // Objective and row activity for a 0/1 assignment (used by feasibility
  // re-checks and by external solution verification).
  double objective(const std::vector<int>& a) const {
    check_assignment(a);
    double z = 0.0;
    for (std::size_t v = 0; v < pairs_.size(); ++v)
      if (a[v]) z += eta_[v];
    return z;
  }

  double row_activity(const Row& r, const std::vector<int>& a) const {
    check_assignment(a);
    double s = 0.0;
    for (auto [v, c] : r.coeffs)
      if (a[static_cast<std::size_t>(v)]) s += c;
    return s;
  }

  bool row_satisfied(const Row& r, const std::vector<int>& a, double tol = 1e-6) const {
    double s = row_activity(r, a);
    switch (r.rel) {
      case Rel::le: return s <= r.rhs + tol;
      case Rel::eq: return std::abs(s - r.rhs) <= tol;
      case Rel::ge: return s >= r.rhs - tol;
    }
    return false;
  }

  bool feasible(const std::vector<int>& a, double tol = 1e-6) const {
    for (const auto& r : rows_)
      if (!row_satisfied(r, a, tol)) return false;
    return true;
  }

 private:
  void check_assignment(const std::vector<int>& a) const {
    if (a.size() != pairs_.size())
      throw std::invalid_argument("program: assignment size mismatch");
  }

 private:
  std::size_t L_;
  double lambda_;
  std::vector<double> orientation_;
  std::vector<std::pair<int, int>> pairs_;
  std::vector<double> eta_;
  std::vector<std::vector<int>> by_unit_;
  std::vector<Row> rows_;
};

inline BinaryMatchProgram new_program(const DistanceMatrix& d, double lambda,
                                      std::vector<double> orientation = {}) {
  return BinaryMatchProgram(d, lambda, nullptr, std::move(orientation));
}

inline BinaryMatchProgram new_program(
    const DistanceMatrix& d, double lambda,
    const std::function<bool(std::size_t, std::size_t)>& keep,
    std::vector<double> orientation = {}) {
  return BinaryMatchProgram(d, lambda, keep, std::move(orientation));
}

namespace detail {

inline void require_indicator(const std::vector<double>& w, std::size_t L,
                              const char* who) {
  if (w.size() != L)
    throw std::invalid_argument(std::string(who) + ": trait size mismatch");
  for (double x : w)
    if (x != 0.0 && x != 1.0)
      throw std::invalid_argument(std::string(who) + ": trait must be 0/1");
}

inline void require_numeric(const std::vector<double>& v, std::size_t L,
                            const char* who) {
  if (v.size() != L)
    throw std::invalid_argument(std::string(who) + ": covariate size mismatch");
  for (double x : v)
    if (!std::isfinite(x))
      throw std::invalid_argument(std::string(who) + ": non-finite covariate");
}

}  // namespace detail

// Exact fine balance on a binary trait w: among matched units, the high
// sides and the low sides carry w equally often.
inline void add_fine_balance(BinaryMatchProgram& p, const std::vector<double>& w) {
  detail::require_indicator(w, p.num_units(), "add_fine_balance");
  Row r;
  r.tag = RowTag::fine_balance;
  r.rel = Rel::eq;
  r.rhs = 0.0;
  r.name = "FB_" + std::to_string(p.count_rows(RowTag::fine_balance));
  for (int v = 0; v < static_cast<int>(p.num_vars()); ++v) {
    auto [hi, lo] = p.oriented(v);
    double c = w[static_cast<std::size_t>(hi)] - w[static_cast<std::size_t>(lo)];
    if (c != 0.0) r.coeffs.emplace_back(v, c);
  }
  p.add_row(std::move(r));
}

// At most H matched pairs may carry the flag h (h indexed by variable).
// H = 0 bans flagged pairs outright.
inline void add_cap(BinaryMatchProgram& p, const std::vector<char>& h, long H) {
  if (h.size() != p.num_vars())
    throw std::invalid_argument("add_cap: flag size mismatch");
  if (H < 0) throw std::invalid_argument("add_cap: negative cap");
  Row r;
  r.tag = RowTag::cap;
  r.rel = Rel::le;
  r.rhs = static_cast<double>(H);
  r.name = "CAP_" + std::to_string(p.count_rows(RowTag::cap));
  for (int v = 0; v < static_cast<int>(p.num_vars()); ++v)
    if (h[static_cast<std::size_t>(v)]) r.coeffs.emplace_back(v, 1.0);
  p.add_row(std::move(r));
}

// Convenience: flag pairs by predicate on the oriented (high, low) units.
inline void add_cap(BinaryMatchProgram& p,
                    const std::function<bool(int, int)>& flagged, long H) {
  std::vector<char> h(p.num_vars(), 0);
  for (int v = 0; v < static_cast<int>(p.num_vars()); ++v) {
    auto [hi, lo] = p.oriented(v);
    h[static_cast<std::size_t>(v)] = flagged(hi, lo) ? 1 : 0;
  }
  add_cap(p, h, H);
}

// Mean balance on covariate v: the average high-side value and the average
// low-side value of v, over matched pairs, may differ by at most eps in
// either direction. Multiplying through by the pair count turns each bound
// into a linear row: sum a (v_hi - v_lo - eps) <= 0 and the mirror image.
inline void add_mean_balance(BinaryMatchProgram& p, const std::vector<double>& v,
                             double eps) {
  detail::require_numeric(v, p.num_units(), "add_mean_balance");
  if (!(eps >= 0.0)) throw std::invalid_argument("add_mean_balance: eps < 0");
  int k = p.count_rows(RowTag::mean_balance) / 2;
  Row up, dn;
  up.tag = dn.tag = RowTag::mean_balance;
  up.rel = dn.rel = Rel::le;
  up.rhs = dn.rhs = 0.0;
  up.name = "MB_" + std::to_string(k) + "_UP";
  dn.name = "MB_" + std::to_string(k) + "_LO";
  for (int var = 0; var < static_cast<int>(p.num_vars()); ++var) {
    auto [hi, lo] = p.oriented(var);
    double gap = v[static_cast<std::size_t>(hi)] - v[static_cast<std::size_t>(lo)];
    double cu = gap - eps;
    double cd = -gap - eps;
    if (cu != 0.0) up.coeffs.emplace_back(var, cu);
    if (cd != 0.0) dn.coeffs.emplace_back(var, cd);
  }
  p.add_row(std::move(up));
  p.add_row(std::move(dn));
}

// Forced separation on covariate v (the instrument in the intended use):
// the mean high-low gap across matched pairs must be at least phi. Same
// multiplication trick, one >= row: sum a (v_hi - v_lo - phi) >= 0.
// The empty matching satisfies it vacuously.
inline void add_separation(BinaryMatchProgram& p, const std::vector<double>& v,
                           double phi) {
  detail::require_numeric(v, p.num_units(), "add_separation");
  if (!(phi >= 0.0)) throw std::invalid_argument("add_separation: phi < 0");
  Row r;
  r.tag = RowTag::separation;
  r.rel = Rel::ge;
  r.rhs = 0.0;
  r.name = "SEP_" + std::to_string(p.count_rows(RowTag::separation));
  for (int var = 0; var < static_cast<int>(p.num_vars()); ++var) {
    auto [hi, lo] = p.oriented(var);
    double c = v[static_cast<std::size_t>(hi)] - v[static_cast<std::size_t>(lo)] - phi;
    if (c != 0.0) r.coeffs.emplace_back(var, c);
  }
  p.add_row(std::move(r));
}

// Near-fine balance: the signed trait count difference between the two
// sides is bounded by an integer slack eps. eps = 0 is exact fine balance
// written as two inequalities.
inline void add_near_fine_balance(BinaryMatchProgram& p, const std::vector<double>& w,
                                  long eps) {
  detail::require_indicator(w, p.num_units(), "add_near_fine_balance");
  if (eps < 0) throw std::invalid_argument("add_near_fine_balance: eps < 0");
  int k = p.count_rows(RowTag::near_fine) / 2;
  Row up, dn;
  up.tag = dn.tag = RowTag::near_fine;
  up.rel = dn.rel = Rel::le;
  up.rhs = dn.rhs = static_cast<double>(eps);
  up.name = "NFB_" + std::to_string(k) + "_UP";
  dn.name = "NFB_" + std::to_string(k) + "_LO";
  for (int var = 0; var < static_cast<int>(p.num_vars()); ++var) {
    auto [hi, lo] = p.oriented(var);
    double c = w[static_cast<std::size_t>(hi)] - w[static_cast<std::size_t>(lo)];
    if (c != 0.0) {
      up.coeffs.emplace_back(var, c);
      dn.coeffs.emplace_back(var, -c);
    }
  }
  p.add_row(std::move(up));
  p.add_row(std::move(dn));
}

// MPS text for the program. All variables are binary (BV bounds inside an
// INTORG/INTEND marker pair); every row's RHS is written, zeros included,
// so diffing two exports is trivial.
inline std::string export_mps(const BinaryMatchProgram& p, const std::string& name) {
  std::ostringstream out;
  auto num = [](double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return std::string(buf);
  };

  out << "NAME          " << name << "\n";
  out << "ROWS\n";
  out << " N  COST\n";
  for (const auto& r : p.rows()) {
    char rel = r.rel == Rel::le ? 'L' : (r.rel == Rel::eq ? 'E' : 'G');
    out << " " << rel << "  " << r.name << "\n";
  }

  // Column-major entries: objective first, then every row touching the
  // variable, two entries per line.
  std::vector<std::vector<std::pair<std::string, double>>> by_var(p.num_vars());
  for (std::size_t v = 0; v < p.num_vars(); ++v)
    by_var[v].emplace_back("COST", p.eta()[v]);
  for (const auto& r : p.rows())
    for (auto [v, c] : r.coeffs) by_var[static_cast<std::size_t>(v)].emplace_back(r.name, c);

  out << "COLUMNS\n";
  out << "    MARKER                 'MARKER'                 'INTORG'\n";
  for (std::size_t v = 0; v < p.num_vars(); ++v) {
    auto [l, m] = p.pairs()[v];
    std::string col = "p_" + std::to_string(l) + "_" + std::to_string(m);
    for (std::size_t i = 0; i < by_var[v].size(); i += 2) {
      out << "    " << col << "  " << by_var[v][i].first << "  "
          << num(by_var[v][i].second);
      if (i + 1 < by_var[v].size())
        out << "  " << by_var[v][i + 1].first << "  " << num(by_var[v][i + 1].second);
      out << "\n";
    }
  }
  out << "    MARKER                 'MARKER'                 'INTEND'\n";

  out << "RHS\n";
  {
    const auto& rows = p.rows();
    for (std::size_t i = 0; i < rows.size(); i += 2) {
      out << "    RHS  " << rows[i].name << "  " << num(rows[i].rhs);
      if (i + 1 < rows.size())
        out << "  " << rows[i + 1].name << "  " << num(rows[i + 1].rhs);
      out << "\n";
    }
  }

  out << "BOUNDS\n";
  for (std::size_t v = 0; v < p.num_vars(); ++v) {
    auto [l, m] = p.pairs()[v];
    out << " BV BND  p_" << l << "_" << m << "\n";
  }
  out << "ENDATA\n";
  return out.str();
}

}  // namespace ivmatch
