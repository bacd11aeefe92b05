#include <catch2/catch_amalgamated.hpp>

#include <limits>
#include <random>
#include <vector>

#include "ivmatch/ipmodel.hpp"
#include "ivmatch/simplex.hpp"
#include "ivmatch/solver.hpp"
#include "oracles.hpp"

using namespace ivmatch;
using Catch::Approx;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("bounded box LP with overlapping caps") {
  // min -x - 2y  s.t.  x + y <= 3,  boxes x,y in [0,2]. Optimum (1,2): -5.
  std::vector<lp::Row> rows = {{lp::Rel::le, 3.0, {{0, 1.0}, {1, 1.0}}}};
  lp::Result r = lp::solve(2, {-1.0, -2.0}, rows, {0.0, 0.0}, {2.0, 2.0});
  REQUIRE(r.status == lp::Status::optimal);
  CHECK(r.objective == Approx(-5.0).margin(1e-9));
  CHECK(r.x[0] == Approx(1.0).margin(1e-9));
  CHECK(r.x[1] == Approx(2.0).margin(1e-9));
}

TEST_CASE("equality rows, including negative right-hand sides") {
  // x + y = 2 and x - y = 0 pin (1,1).
  std::vector<lp::Row> rows = {{lp::Rel::eq, 2.0, {{0, 1.0}, {1, 1.0}}},
                               {lp::Rel::eq, 0.0, {{0, 1.0}, {1, -1.0}}}};
  lp::Result r = lp::solve(2, {1.0, 1.0}, rows, {0.0, 0.0}, {5.0, 5.0});
  REQUIRE(r.status == lp::Status::optimal);
  CHECK(r.objective == Approx(2.0).margin(1e-9));
  CHECK(r.x[0] == Approx(1.0).margin(1e-9));

  // Same geometry written with a negative rhs (exercises artificial signs).
  std::vector<lp::Row> neg = {{lp::Rel::eq, -2.0, {{0, -1.0}, {1, -1.0}}}};
  lp::Result r2 = lp::solve(2, {1.0, 2.0}, neg, {0.0, 0.0}, {5.0, 5.0});
  REQUIRE(r2.status == lp::Status::optimal);
  CHECK(r2.objective == Approx(2.0).margin(1e-9));  // all weight on x
}

TEST_CASE("infeasible systems are reported, not mis-solved") {
  // x >= 5 with x in [0,1].
  std::vector<lp::Row> rows = {{lp::Rel::ge, 5.0, {{0, 1.0}}}};
  lp::Result r = lp::solve(1, {1.0}, rows, {0.0}, {1.0});
  CHECK(r.status == lp::Status::infeasible);

  // Contradictory equalities.
  std::vector<lp::Row> rows2 = {{lp::Rel::eq, 1.0, {{0, 1.0}, {1, 1.0}}},
                                {lp::Rel::eq, 3.0, {{0, 1.0}, {1, 1.0}}}};
  lp::Result r2 = lp::solve(2, {0.0, 0.0}, rows2, {0.0, 0.0}, {5.0, 5.0});
  CHECK(r2.status == lp::Status::infeasible);
}

TEST_CASE("unbounded problems throw instead of looping") {
  std::vector<lp::Row> rows = {{lp::Rel::ge, 1.0, {{0, 1.0}}}};
  CHECK_THROWS(lp::solve(1, {-1.0}, rows, {0.0}, {kInf}));
}

TEST_CASE("degenerate vertices with redundant rows still terminate") {
  // Three copies of the same cap plus a redundant equality pair.
  std::vector<lp::Row> rows = {
      {lp::Rel::le, 1.0, {{0, 1.0}}},
      {lp::Rel::le, 1.0, {{0, 1.0}}},
      {lp::Rel::le, 1.0, {{0, 1.0}}},
      {lp::Rel::le, 2.0, {{0, 1.0}, {1, 1.0}}},
      {lp::Rel::le, 2.0, {{0, 1.0}, {1, 1.0}}},
  };
  lp::Result r = lp::solve(2, {-1.0, -1.0}, rows, {0.0, 0.0}, {4.0, 4.0});
  REQUIRE(r.status == lp::Status::optimal);
  CHECK(r.objective == Approx(-2.0).margin(1e-9));
}

TEST_CASE("solutions respect bounds and rows on random instances") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> uc(-3.0, 3.0);
  std::uniform_int_distribution<int> un(2, 6), um(1, 5), urel(0, 2);
  for (int trial = 0; trial < 60; ++trial) {
    int n = un(rng), m = um(rng);
    std::vector<double> cost(static_cast<std::size_t>(n));
    for (auto& c : cost) c = uc(rng);
    std::vector<double> lo(static_cast<std::size_t>(n), 0.0);
    std::vector<double> hi(static_cast<std::size_t>(n), 1.0);
    std::vector<lp::Row> rows;
    for (int i = 0; i < m; ++i) {
      lp::Row r;
      int rel = urel(rng);
      r.rel = rel == 0 ? lp::Rel::le : (rel == 1 ? lp::Rel::ge : lp::Rel::eq);
      for (int j = 0; j < n; ++j)
        if (rng() % 2) r.coeffs.push_back({j, uc(rng)});
      // Right-hand sides chosen around a random feasible point x*, so
      // le/ge rows are satisfiable; equalities are pinned exactly at x*.
      double act = 0.0;
      std::vector<double> xstar(static_cast<std::size_t>(n));
      for (auto& v : xstar) v = 0.5;
      for (auto [j, c] : r.coeffs) act += c * xstar[static_cast<std::size_t>(j)];
      r.rhs = r.rel == lp::Rel::le ? act + 0.25 : (r.rel == lp::Rel::ge ? act - 0.25 : act);
      rows.push_back(std::move(r));
    }
    lp::Result r = lp::solve(static_cast<std::size_t>(n), cost, rows, lo, hi);
    REQUIRE(r.status == lp::Status::optimal);  // x* = 0.5 keeps them feasible
    double obj = 0.0;
    for (int j = 0; j < n; ++j) {
      CHECK(r.x[static_cast<std::size_t>(j)] >= -1e-8);
      CHECK(r.x[static_cast<std::size_t>(j)] <= 1.0 + 1e-8);
      obj += cost[static_cast<std::size_t>(j)] * r.x[static_cast<std::size_t>(j)];
    }
    CHECK(obj == Approx(r.objective).margin(1e-7));
    for (const auto& row : rows) {
      double act = 0.0;
      for (auto [j, c] : row.coeffs) act += c * r.x[static_cast<std::size_t>(j)];
      if (row.rel == lp::Rel::le) CHECK(act <= row.rhs + 1e-7);
      if (row.rel == lp::Rel::ge) CHECK(act >= row.rhs - 1e-7);
      if (row.rel == lp::Rel::eq) CHECK(act == Approx(row.rhs).margin(1e-7));
    }
    // The LP optimum cannot exceed the value at the known feasible point.
    double at_half = 0.0;
    for (double c : cost) at_half += 0.5 * c;
    CHECK(r.objective <= at_half + 1e-7);
  }
}

TEST_CASE("relaxation bounds never exceed the integer optimum") {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> ud(0.0, 10.0);
  for (int trial = 0; trial < 40; ++trial) {
    std::size_t L = 4 + (rng() % 3) * 2;  // 4, 6, 8
    DistanceMatrix d;
    d.n = L;
    d.d.assign(L * L, 0.0);
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = i + 1; j < L; ++j) {
        double w = ud(rng);
        d.at(i, j) = w;
        d.at(j, i) = w;
      }
    std::vector<double> t(L);
    for (auto& v : t) v = ud(rng);
    BinaryMatchProgram p = new_program(d, ud(rng) * 0.8, t);
    std::vector<double> cat(L);
    for (auto& c : cat) c = rng() % 2 ? 1.0 : 0.0;
    add_near_fine_balance(p, cat, 1);
    add_separation(p, t, 1.0);

    auto bound = lp_bound(p);
    oracle::BruteResult brute = oracle::brute_solve(p);
    REQUIRE(brute.any_feasible);  // the empty matching always qualifies
    REQUIRE(bound.has_value());
    CHECK(*bound <= brute.objective + 1e-7);
  }
}

TEST_CASE("repeated solves are bit-for-bit deterministic") {
  std::vector<lp::Row> rows = {{lp::Rel::le, 3.0, {{0, 1.0}, {1, 2.0}, {2, 1.0}}},
                               {lp::Rel::ge, 1.0, {{0, 1.0}, {2, -1.0}}}};
  lp::Result a = lp::solve(3, {-1.0, -1.0, 2.0}, rows, {0.0, 0.0, 0.0},
                           {2.0, 2.0, 2.0});
  lp::Result b = lp::solve(3, {-1.0, -1.0, 2.0}, rows, {0.0, 0.0, 0.0},
                           {2.0, 2.0, 2.0});
  REQUIRE(a.status == b.status);
  CHECK(a.iterations == b.iterations);
  CHECK(a.x == b.x);
}
