#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "ivmatch/distance.hpp"
#include "ivmatch/ipmodel.hpp"
#include "oracles.hpp"

using namespace ivmatch;
using Catch::Approx;

namespace {

// A distance matrix with explicit entries, bypassing the rank machinery.
DistanceMatrix dist(std::size_t n, std::vector<double> upper) {
  DistanceMatrix m;
  m.n = n;
  m.d.assign(n * n, 0.0);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      m.at(i, j) = upper[k];
      m.at(j, i) = upper[k];
      ++k;
    }
  return m;
}

// Variable index of the (l, m) pair in a full 4-unit program:
// order (0,1) (0,2) (0,3) (1,2) (1,3) (2,3).
int var4(const BinaryMatchProgram& p, int l, int m) {
  for (std::size_t v = 0; v < p.num_vars(); ++v)
    if (p.pairs()[v] == std::make_pair(l, m)) return static_cast<int>(v);
  FAIL("pair not found");
  return -1;
}

}  // namespace

TEST_CASE("pair variables, eta, and degree rows") {
  DistanceMatrix d = dist(3, {1.0, 2.0, 3.0});
  BinaryMatchProgram p = new_program(d, 1.5);
  REQUIRE(p.num_vars() == 3);
  CHECK(p.eta()[0] == Approx(-0.5));  // 1.0 - 1.5
  CHECK(p.eta()[2] == Approx(1.5));   // 3.0 - 1.5
  REQUIRE(p.rows().size() == 3);      // one degree row per unit
  for (const auto& r : p.rows()) {
    CHECK(r.tag == RowTag::degree);
    CHECK(r.rel == Rel::le);
    CHECK(r.rhs == 1.0);
    CHECK(r.coeffs.size() == 2);  // each unit sits in two of the three pairs
  }
  // Unit 0 used twice is infeasible, a single pair is fine.
  CHECK(p.feasible({1, 0, 0}));
  CHECK_FALSE(p.feasible({1, 1, 0}));
  CHECK(p.objective({1, 0, 1}) == Approx(1.0));
}

TEST_CASE("keep predicate prunes ineligible pairs") {
  DistanceMatrix d = dist(3, {1.0, 2.0, 3.0});
  std::vector<double> t = {0.0, 10.0, 30.0};
  BinaryMatchProgram p = new_program(
      d, 0.0, [&](std::size_t l, std::size_t m) { return std::abs(t[m] - t[l]) >= 15.0; },
      t);
  REQUIRE(p.num_vars() == 2);  // (0,2) gap 30 and (1,2) gap 20 survive
  CHECK(p.pairs()[0] == std::make_pair(0, 2));
  CHECK(p.pairs()[1] == std::make_pair(1, 2));
}

TEST_CASE("orientation puts the higher instrument value on the high side") {
  DistanceMatrix d = dist(4, std::vector<double>(6, 1.0));
  std::vector<double> t = {10.0, 0.0, 0.0, 10.0};
  BinaryMatchProgram p = new_program(d, 0.0, t);
  CHECK(p.oriented(var4(p, 0, 1)) == std::make_pair(0, 1));
  CHECK(p.oriented(var4(p, 0, 3)) == std::make_pair(0, 3));  // tie: lower index
  CHECK(p.oriented(var4(p, 1, 2)) == std::make_pair(1, 2));  // tie: lower index
  CHECK(p.oriented(var4(p, 1, 3)) == std::make_pair(3, 1));  // 3 has the bigger t
}

TEST_CASE("fine balance counts categories on the high side minus the low side") {
  DistanceMatrix d = dist(4, std::vector<double>(6, 1.0));
  std::vector<double> t = {10.0, 0.0, 0.0, 10.0};
  BinaryMatchProgram p = new_program(d, 0.0, t);
  std::vector<double> w = {1.0, 1.0, 0.0, 0.0};  // category membership
  add_fine_balance(p, w);

  const Row& r = p.rows().back();
  CHECK(r.tag == RowTag::fine_balance);
  CHECK(r.rel == Rel::eq);
  CHECK(r.rhs == 0.0);
  std::map<int, double> c;
  for (auto [v, coef] : r.coeffs) c[v] = coef;
  // Coefficient is w[high] - w[low] for each pair.
  CHECK(c.count(var4(p, 0, 1)) == 0);              // 1 - 1 = 0: dropped
  CHECK(c[var4(p, 0, 2)] == Approx(1.0));          // high 0 in, low 2 out
  CHECK(c[var4(p, 0, 3)] == Approx(1.0));          // tie high 0 in, low 3 out
  CHECK(c[var4(p, 1, 2)] == Approx(1.0));          // tie high 1 in, low 2 out
  CHECK(c[var4(p, 1, 3)] == Approx(-1.0));         // high 3 out, low 1 in
  CHECK(c.count(var4(p, 2, 3)) == 0);              // 0 - 0: dropped

  // {(0,2), (1,3)}: high units are 0 and 3, one in-category each side.
  std::vector<int> a(p.num_vars(), 0);
  a[static_cast<std::size_t>(var4(p, 0, 2))] = 1;
  a[static_cast<std::size_t>(var4(p, 1, 3))] = 1;
  CHECK(p.row_activity(r, a) == Approx(0.0));
  CHECK(p.feasible(a));
  // {(0,2)} alone leaves the category count uneven.
  std::vector<int> b(p.num_vars(), 0);
  b[static_cast<std::size_t>(var4(p, 0, 2))] = 1;
  CHECK_FALSE(p.row_satisfied(r, b));
}

TEST_CASE("orientation cannot change once balance rows exist") {
  DistanceMatrix d = dist(3, {1.0, 1.0, 1.0});
  BinaryMatchProgram p = new_program(d, 0.0, {1.0, 2.0, 3.0});
  p.set_orientation({3.0, 2.0, 1.0});  // fine before any balance row
  add_fine_balance(p, {1.0, 0.0, 0.0});
  CHECK_THROWS_AS(p.set_orientation({1.0, 2.0, 3.0}), std::logic_error);
}

TEST_CASE("cap row counts flagged pairs") {
  DistanceMatrix d = dist(4, std::vector<double>(6, 1.0));
  BinaryMatchProgram p = new_program(d, 0.0);
  std::vector<char> flag(p.num_vars(), 0);
  flag[0] = flag[5] = 1;  // pairs (0,1) and (2,3)
  add_cap(p, flag, 1);
  const Row& r = p.rows().back();
  CHECK(r.tag == RowTag::cap);
  CHECK(r.rel == Rel::le);
  CHECK(r.rhs == 1.0);
  CHECK(r.coeffs.size() == 2);
  std::vector<int> both(p.num_vars(), 0);
  both[0] = both[5] = 1;
  CHECK_FALSE(p.row_satisfied(r, both));
  std::vector<int> one(p.num_vars(), 0);
  one[0] = 1;
  CHECK(p.row_satisfied(r, one));
}

TEST_CASE("mean balance bounds the averaged signed gap both ways") {
  DistanceMatrix d = dist(2, {1.0});
  std::vector<double> t = {5.0, 0.0};
  BinaryMatchProgram p = new_program(d, 0.0, t);
  std::vector<double> age = {30.0, 38.0};
  add_mean_balance(p, age, 5.0);
  REQUIRE(p.rows().size() == 2 + 2);
  const Row& up = p.rows()[2];
  const Row& lo = p.rows()[3];
  CHECK(up.tag == RowTag::mean_balance);
  CHECK(up.rel == Rel::le);
  CHECK(up.rhs == 0.0);
  // Pair (0,1): high unit 0, gap = 30 - 38 = -8. Rows carry gap -+ eps.
  CHECK(up.coeffs[0].second == Approx(-13.0));  // gap - eps
  CHECK(lo.coeffs[0].second == Approx(3.0));    // -gap - eps
  // Selecting the pair violates the second row: mean gap -8 is below -5.
  CHECK(p.row_satisfied(up, {1}));
  CHECK_FALSE(p.row_satisfied(lo, {1}));
  // The empty matching satisfies both.
  CHECK(p.feasible({0}));
}

TEST_CASE("separation requires the mean instrument gap to clear the floor") {
  DistanceMatrix d = dist(4, std::vector<double>(6, 1.0));
  std::vector<double> t = {20.0, 0.0, 16.0, 0.0};
  BinaryMatchProgram p = new_program(d, 0.0, t);
  add_separation(p, t, 13.0);
  const Row& r = p.rows().back();
  CHECK(r.tag == RowTag::separation);
  CHECK(r.rel == Rel::ge);
  CHECK(r.rhs == 0.0);
  // (0,1): gap 20, coef 7; (2,3): gap 16, coef 3; (0,3): 20 -> 7;
  // (1,2): 16 -> 3; (0,2): 4 -> -9; (1,3): 0 -> -13.
  std::map<int, double> c;
  for (auto [v, coef] : r.coeffs) c[v] = coef;
  CHECK(c[var4(p, 0, 1)] == Approx(7.0));
  CHECK(c[var4(p, 0, 2)] == Approx(-9.0));
  CHECK(c[var4(p, 1, 3)] == Approx(-13.0));
  std::vector<int> good(p.num_vars(), 0);
  good[static_cast<std::size_t>(var4(p, 0, 1))] = 1;
  good[static_cast<std::size_t>(var4(p, 2, 3))] = 1;
  CHECK(p.row_satisfied(r, good));  // mean gap 18 >= 13
  std::vector<int> bad(p.num_vars(), 0);
  bad[static_cast<std::size_t>(var4(p, 0, 2))] = 1;
  CHECK_FALSE(p.row_satisfied(r, bad));  // mean gap 4 < 13
}

TEST_CASE("near-fine balance allows a bounded count mismatch") {
  DistanceMatrix d = dist(4, std::vector<double>(6, 1.0));
  std::vector<double> t = {10.0, 0.0, 10.0, 0.0};
  BinaryMatchProgram p = new_program(d, 0.0, t);
  std::vector<double> w = {1.0, 0.0, 1.0, 0.0};  // both high units in-category
  add_near_fine_balance(p, w, 1);
  REQUIRE(p.count_rows(RowTag::near_fine) == 2);
  const Row& up = p.rows()[p.rows().size() - 2];
  CHECK(up.rhs == 1.0);
  // {(0,1), (2,3)}: both high units in, both low units out: imbalance 2 > 1.
  std::vector<int> a(p.num_vars(), 0);
  a[static_cast<std::size_t>(var4(p, 0, 1))] = 1;
  a[static_cast<std::size_t>(var4(p, 2, 3))] = 1;
  CHECK_FALSE(p.feasible(a));
  // A single such pair is inside the tolerance.
  std::vector<int> b(p.num_vars(), 0);
  b[static_cast<std::size_t>(var4(p, 0, 1))] = 1;
  CHECK(p.feasible(b));
}

TEST_CASE("builders validate their inputs") {
  DistanceMatrix d = dist(2, {1.0});
  BinaryMatchProgram p = new_program(d, 0.0);
  CHECK_THROWS(add_fine_balance(p, {1.0}));            // wrong length
  CHECK_THROWS(add_fine_balance(p, {1.0, 0.5}));       // not an indicator
  CHECK_THROWS(add_mean_balance(p, {1.0, 2.0}, -1.0)); // negative tolerance
  CHECK_THROWS(add_cap(p, std::vector<char>{1, 0}, 1));  // wrong length
  CHECK_THROWS(add_near_fine_balance(p, {1.0, 0.0}, -1));
  DistanceMatrix d2 = dist(2, {1.0});
  BinaryMatchProgram q(d2, 0.0, nullptr, {});  // no orientation stored
  CHECK_THROWS(add_separation(q, {1.0, std::nan("")}, 1.0));
}

TEST_CASE("mps export round-trips through an independent reader") {
  DistanceMatrix d = dist(4, {2.0, 6.0, 100.0, 100.0, 6.0, 100.0});
  std::vector<double> t = {1.0, 2.0, 3.0, 4.0};
  BinaryMatchProgram p = new_program(d, 5.0, t);
  add_fine_balance(p, {1.0, 0.0, 1.0, 0.0});
  add_cap(p, [&](int l, int m) { return (l + m) % 2 == 1; }, 2);
  add_mean_balance(p, {1.0, 4.0, 2.0, 3.0}, 0.5);
  add_separation(p, t, 1.0);
  add_near_fine_balance(p, {0.0, 1.0, 0.0, 1.0}, 1);

  oracle::MpsModel m = oracle::parse_mps(export_mps(p, "roundtrip"));
  CHECK(m.name == "roundtrip");
  REQUIRE(m.row_order.size() == p.rows().size());

  // Every variable is binary and priced at its eta.
  for (std::size_t v = 0; v < p.num_vars(); ++v) {
    auto [l, mm] = p.pairs()[v];
    std::string col = "p_" + std::to_string(l) + "_" + std::to_string(mm);
    REQUIRE(m.binary_columns.count(col) == 1);
    CHECK(m.objective.at(col) == Approx(p.eta()[v]).margin(1e-9));
  }
  // Rows carry the same relation, rhs, and coefficients.
  for (std::size_t i = 0; i < p.rows().size(); ++i) {
    const Row& r = p.rows()[i];
    REQUIRE(m.rows.count(r.name) == 1);
    const oracle::MpsRow& mr = m.rows.at(r.name);
    char want = r.rel == Rel::le ? 'L' : (r.rel == Rel::eq ? 'E' : 'G');
    CHECK(mr.rel == want);
    CHECK(mr.rhs == Approx(r.rhs).margin(1e-9));
    REQUIRE(mr.coeffs.size() == r.coeffs.size());
    for (auto [v, coef] : r.coeffs) {
      auto [l, mm] = p.pairs()[static_cast<std::size_t>(v)];
      std::string col = "p_" + std::to_string(l) + "_" + std::to_string(mm);
      CHECK(mr.coeffs.at(col) == Approx(coef).margin(1e-9));
    }
  }
}
