#pragma once

// Bounded-variable primal simplex, two phases, dense explicit basis
// inverse. Built for the pair-matching relaxations: a few thousand
// columns, a few hundred rows, every structural variable boxed in [0, 1]
// (or pinned by branching). Minimizes c'x subject to general rows and
// box bounds.
//
// Internal form: every row gets a slack column s with A s coefficient +1
// and bounds chosen by the row sense (<=: [0, inf), >=: (-inf, 0],
// =: [0, 0]), turning all rows into equalities. A starting basis is the
// slack of each row when the initial residual fits the slack's bounds;
// otherwise the row receives a phase-1 artificial column whose sign makes
// its starting value nonnegative. Phase 1 minimizes the artificial sum;
// a positive minimum proves infeasibility.
//
// Pivoting: Dantzig pricing (most negative reduced cost, ties to the
// lowest column index) with a ratio test that honors both bounds and
// allows bound flips. A run of degenerate steps switches to Bland's rule,
// which cannot cycle, so termination is guaranteed. The basis inverse is
// rebuilt from scratch every few dozen pivots to shed accumulated error,
// and once more before reporting the solution.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ivmatch::lp {

enum class Rel { le, eq, ge };

struct Row {
  Rel rel;
  double rhs;
  std::vector<std::pair<int, double>> coeffs;  // (structural column, coefficient)
};

enum class Status { optimal, infeasible };

struct Result {
  Status status = Status::infeasible;
  double objective = 0.0;
  std::vector<double> x;  // structural columns only
  long iterations = 0;
};

class BoundedSimplex {
  static constexpr double kFeasTol = 1e-9;   // residual / bound violation
  static constexpr double kDualTol = 1e-9;   // reduced cost significance
  static constexpr double kPivotTol = 1e-10; // smallest usable ratio-test rate
  static constexpr int kRefactorEvery = 64;
  static constexpr int kDegenerateLimit = 400;  // pivots before Bland's rule

  enum class State : unsigned char { basic, at_lower, at_upper };

 public:
  BoundedSimplex(std::size_t n, std::vector<double> cost, const std::vector<Row>& rows,
                 std::vector<double> lo, std::vector<double> hi)
      : n_(n), m_(rows.size()) {
    if (cost.size() != n || lo.size() != n || hi.size() != n)
      throw std::invalid_argument("simplex: size mismatch");
    for (std::size_t j = 0; j < n; ++j) {
      if (lo[j] > hi[j]) throw std::invalid_argument("simplex: empty bound box");
      if (!std::isfinite(lo[j]) && !std::isfinite(hi[j]))
        throw std::invalid_argument("simplex: free columns unsupported");
    }

    const double inf = std::numeric_limits<double>::infinity();
    cost_ = std::move(cost);
    lo_ = std::move(lo);
    hi_ = std::move(hi);
    cols_.resize(n_);
    rhs_.reserve(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      const Row& r = rows[i];
      rhs_.push_back(r.rhs);
      for (auto [j, a] : r.coeffs) {
        if (j < 0 || static_cast<std::size_t>(j) >= n_)
          throw std::invalid_argument("simplex: row references bad column");
        if (a != 0.0) cols_[static_cast<std::size_t>(j)].emplace_back(static_cast<int>(i), a);
      }
    }
    // Slack columns n_ .. n_+m_-1.
    for (std::size_t i = 0; i < m_; ++i) {
      cols_.push_back({{static_cast<int>(i), 1.0}});
      cost_.push_back(0.0);
      switch (rows[i].rel) {
        case Rel::le: lo_.push_back(0.0); hi_.push_back(inf); break;
        case Rel::ge: lo_.push_back(-inf); hi_.push_back(0.0); break;
        case Rel::eq: lo_.push_back(0.0); hi_.push_back(0.0); break;
      }
    }
  }

  Result solve() {
    init_start_basis();

    Result res;
    if (!artificials_.empty()) {
      std::vector<double> phase1(cols_.size(), 0.0);
      for (std::size_t j : artificials_) phase1[j] = 1.0;
      double infeas = run(phase1, res.iterations);
      if (infeas > 1e-7) {
        res.status = Status::infeasible;
        return res;
      }
      // Freeze the artificials at zero for phase 2. Basic ones may linger
      // at value zero; the ratio test evicts them the moment they would
      // have to move.
      for (std::size_t j : artificials_) { lo_[j] = 0.0; hi_[j] = 0.0; }
    }

    run(cost_, res.iterations);

    refactor();
    recompute_basics();
    res.status = Status::optimal;
    res.x.assign(n_, 0.0);
    for (std::size_t j = 0; j < n_; ++j) {
      double v = x_[j];
      v = std::min(std::max(v, lo_[j]), hi_[j]);
      res.x[j] = v;
      res.objective += cost_[j] * v;
    }
    return res;
  }

 private:
  void init_start_basis() {
    const std::size_t total = cols_.size();
    state_.assign(total, State::at_lower);
    x_.assign(total, 0.0);
    for (std::size_t j = 0; j < total; ++j) {
      // Start each column at a finite bound, preferring the lower one.
      if (std::isfinite(lo_[j])) { state_[j] = State::at_lower; x_[j] = lo_[j]; }
      else { state_[j] = State::at_upper; x_[j] = hi_[j]; }
    }

    std::vector<double> resid = rhs_;
    for (std::size_t j = 0; j < total; ++j) {
      if (x_[j] == 0.0) continue;
      for (auto [i, a] : cols_[j]) resid[static_cast<std::size_t>(i)] -= a * x_[j];
    }

    basis_.assign(m_, -1);
    binv_.assign(m_ * m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) binv_[i * m_ + i] = 1.0;

    for (std::size_t i = 0; i < m_; ++i) {
      std::size_t s = n_ + i;  // slack of row i, currently at value 0
      double need = resid[i] + x_[s];  // value the slack must take to close the row
      if (need >= lo_[s] - kFeasTol && need <= hi_[s] + kFeasTol) {
        basis_[i] = static_cast<int>(s);
        state_[s] = State::basic;
        x_[s] = need;
      } else {
        double sign = need >= 0.0 ? 1.0 : -1.0;
        std::size_t a = cols_.size();
        cols_.push_back({{static_cast<int>(i), sign}});
        cost_.push_back(0.0);
        lo_.push_back(0.0);
        hi_.push_back(std::numeric_limits<double>::infinity());
        state_.push_back(State::basic);
        x_.push_back(std::abs(need));
        basis_[i] = static_cast<int>(a);
        // A negative-sign artificial makes the starting basis diag(+/-1),
        // so the inverse must carry the same sign on this diagonal.
        binv_[i * m_ + i] = sign;
        artificials_.push_back(a);
      }
    }
  }

  // Runs the pivot loop to optimality under the given costs. Returns the
  // objective over all columns (phase-1 infeasibility when called with the
  // artificial costs).
  double run(const std::vector<double>& c, long& iterations) {
    bool bland = false;
    int degenerate_run = 0;
    int since_refactor = 0;
    const long iteration_cap =
        20000 + 200 * static_cast<long>(cols_.size() + m_);

    std::vector<double> y(m_), w(m_);
    for (long iter = 0;; ++iter) {
      if (iter > iteration_cap)
        throw std::runtime_error("simplex: iteration cap hit (cycling?)");
      ++iterations;

      // Duals: y = c_B * Binv, row by row of Binv.
      std::fill(y.begin(), y.end(), 0.0);
      for (std::size_t k = 0; k < m_; ++k) {
        double cb = c[static_cast<std::size_t>(basis_[k])];
        if (cb == 0.0) continue;
        const double* row = &binv_[k * m_];
        for (std::size_t i = 0; i < m_; ++i) y[i] += cb * row[i];
      }

      // Pricing.
      int enter = -1;
      double best = 0.0;
      for (std::size_t j = 0; j < cols_.size(); ++j) {
        if (state_[j] == State::basic) continue;
        if (lo_[j] == hi_[j]) continue;  // pinned, can never move
        double d = c[j];
        for (auto [i, a] : cols_[j]) d -= y[static_cast<std::size_t>(i)] * a;
        bool eligible = (state_[j] == State::at_lower && d < -kDualTol) ||
                        (state_[j] == State::at_upper && d > kDualTol);
        if (!eligible) continue;
        if (bland) { enter = static_cast<int>(j); break; }
        if (std::abs(d) > best + 1e-15) { best = std::abs(d); enter = static_cast<int>(j); }
      }
      if (enter < 0) break;  // optimal for these costs

      const std::size_t e = static_cast<std::size_t>(enter);
      const double dir = state_[e] == State::at_lower ? 1.0 : -1.0;

      // w = Binv * A_e.
      std::fill(w.begin(), w.end(), 0.0);
      for (auto [i, a] : cols_[e]) {
        const std::size_t r = static_cast<std::size_t>(i);
        for (std::size_t k = 0; k < m_; ++k) w[k] += binv_[k * m_ + r] * a;
      }

      // Ratio test. The entering column's own range is one candidate
      // (a bound flip); each basic column leaving at a bound is another.
      double t_best = hi_[e] - lo_[e];  // inf when the range is one-sided
      int leave = -1;
      bool leave_to_upper = false;
      for (std::size_t i = 0; i < m_; ++i) {
        double rate = dir * w[i];  // basic value falls at this rate
        const std::size_t bj = static_cast<std::size_t>(basis_[i]);
        double t;
        bool to_upper;
        if (rate > kPivotTol) {
          if (!std::isfinite(lo_[bj])) continue;
          t = (x_[bj] - lo_[bj]) / rate;
          to_upper = false;
        } else if (rate < -kPivotTol) {
          if (!std::isfinite(hi_[bj])) continue;
          t = (x_[bj] - hi_[bj]) / rate;
          to_upper = true;
        } else {
          continue;
        }
        if (t < 0.0) t = 0.0;  // tiny infeasibility from roundoff
        bool better;
        if (t < t_best - 1e-12) {
          better = true;
        } else if (t < t_best + 1e-12 && leave >= 0) {
          // Tie between rows: prefer the larger pivot magnitude for
          // stability; under Bland's rule the smallest basic column index
          // wins instead. A tie against a pure bound flip keeps the flip.
          if (bland)
            better = bj < static_cast<std::size_t>(basis_[leave]);
          else
            better = std::abs(w[i]) >
                     std::abs(w[static_cast<std::size_t>(leave)]) + 1e-15;
        } else {
          better = false;
        }
        if (better) { t_best = t; leave = static_cast<int>(i); leave_to_upper = to_upper; }
      }

      if (!std::isfinite(t_best))
        throw std::runtime_error("simplex: unbounded direction (model bug)");

      // Apply the step.
      if (t_best > 0.0) {
        for (std::size_t i = 0; i < m_; ++i) {
          if (w[i] == 0.0) continue;
          x_[static_cast<std::size_t>(basis_[i])] -= dir * w[i] * t_best;
        }
        x_[e] += dir * t_best;
      }
      degenerate_run = t_best <= 1e-11 ? degenerate_run + 1 : 0;
      if (degenerate_run > kDegenerateLimit) bland = true;

      if (leave < 0) {
        // Bound flip: the entering column crossed its box to the other side.
        state_[e] = state_[e] == State::at_lower ? State::at_upper : State::at_lower;
        x_[e] = state_[e] == State::at_lower ? lo_[e] : hi_[e];
        continue;
      }

      const std::size_t li = static_cast<std::size_t>(leave);
      const std::size_t out = static_cast<std::size_t>(basis_[li]);
      state_[out] = leave_to_upper ? State::at_upper : State::at_lower;
      x_[out] = leave_to_upper ? hi_[out] : lo_[out];
      state_[e] = State::basic;
      basis_[li] = enter;

      // Product-form update of the inverse: pivot on w[leave].
      double piv = w[li];
      if (std::abs(piv) < 1e-12)
        throw std::runtime_error("simplex: zero pivot");
      double* prow = &binv_[li * m_];
      for (std::size_t k = 0; k < m_; ++k) prow[k] /= piv;
      for (std::size_t i = 0; i < m_; ++i) {
        if (i == li || w[i] == 0.0) continue;
        double f = w[i];
        double* row = &binv_[i * m_];
        for (std::size_t k = 0; k < m_; ++k) row[k] -= f * prow[k];
      }

      if (++since_refactor >= kRefactorEvery) {
        refactor();
        recompute_basics();
        since_refactor = 0;
      }
    }

    double obj = 0.0;
    for (std::size_t j = 0; j < cols_.size(); ++j) obj += c[j] * x_[j];
    return obj;
  }

  // Rebuilds Binv from the basis columns by Gauss-Jordan elimination with
  // partial pivoting.
  void refactor() {
    std::vector<double> B(m_ * m_, 0.0);
    for (std::size_t k = 0; k < m_; ++k)
      for (auto [i, a] : cols_[static_cast<std::size_t>(basis_[k])])
        B[static_cast<std::size_t>(i) * m_ + k] = a;
    std::vector<double> inv(m_ * m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) inv[i * m_ + i] = 1.0;

    for (std::size_t col = 0; col < m_; ++col) {
      std::size_t piv = col;
      double best = std::abs(B[col * m_ + col]);
      for (std::size_t r = col + 1; r < m_; ++r) {
        double v = std::abs(B[r * m_ + col]);
        if (v > best) { best = v; piv = r; }
      }
      if (best < 1e-12) throw std::runtime_error("simplex: singular basis");
      if (piv != col) {
        for (std::size_t k = 0; k < m_; ++k) {
          std::swap(B[piv * m_ + k], B[col * m_ + k]);
          std::swap(inv[piv * m_ + k], inv[col * m_ + k]);
        }
      }
      double d = B[col * m_ + col];
      for (std::size_t k = 0; k < m_; ++k) { B[col * m_ + k] /= d; inv[col * m_ + k] /= d; }
      for (std::size_t r = 0; r < m_; ++r) {
        if (r == col) continue;
        double f = B[r * m_ + col];
        if (f == 0.0) continue;
        for (std::size_t k = 0; k < m_; ++k) {
          B[r * m_ + k] -= f * B[col * m_ + k];
          inv[r * m_ + k] -= f * inv[col * m_ + k];
        }
      }
    }
    binv_ = std::move(inv);
  }

  // x_B = Binv (b - N x_N), refreshing the basic values from the nonbasic
  // ones currently sitting on bounds.
  void recompute_basics() {
    std::vector<double> r = rhs_;
    for (std::size_t j = 0; j < cols_.size(); ++j) {
      if (state_[j] == State::basic || x_[j] == 0.0) continue;
      for (auto [i, a] : cols_[j]) r[static_cast<std::size_t>(i)] -= a * x_[j];
    }
    for (std::size_t k = 0; k < m_; ++k) {
      double v = 0.0;
      const double* row = &binv_[k * m_];
      for (std::size_t i = 0; i < m_; ++i) v += row[i] * r[i];
      x_[static_cast<std::size_t>(basis_[k])] = v;
    }
  }

  std::size_t n_, m_;
  std::vector<std::vector<std::pair<int, double>>> cols_;
  std::vector<double> cost_, lo_, hi_, rhs_, x_, binv_;
  std::vector<State> state_;
  std::vector<int> basis_;
  std::vector<std::size_t> artificials_;
};

inline Result solve(std::size_t n, std::vector<double> cost, const std::vector<Row>& rows,
                    std::vector<double> lo, std::vector<double> hi) {
  BoundedSimplex s(n, std::move(cost), rows, std::move(lo), std::move(hi));
  return s.solve();
}

}  // namespace ivmatch::lp
