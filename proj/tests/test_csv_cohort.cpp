#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "ivmatch/cohort.hpp"
#include "ivmatch/csv.hpp"

using namespace ivmatch;

TEST_CASE("csv reader handles quoting, embedded delimiters and CRLF") {
  std::istringstream in(
      "name,note,n\r\n"
      "plain,\"a,b\",1\r\n"
      "\"quo\"\"ted\",\"line1\nline2\",2\n"
      "\n"
      "last,,3\n");
  csv::Table t = csv::read(in);
  REQUIRE(t.header == std::vector<std::string>{"name", "note", "n"});
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0][1] == "a,b");
  CHECK(t.rows[1][0] == "quo\"ted");
  CHECK(t.rows[1][1] == "line1\nline2");
  CHECK(t.rows[2][1] == "");
  CHECK(t.column("n") == 2);
  CHECK(t.column("absent") == -1);
}

TEST_CASE("csv reader rejects malformed input") {
  std::istringstream bad("a,b\n\"unterminated,1\n");
  CHECK_THROWS_AS(csv::read(bad), csv::ParseError);
  std::istringstream empty("");
  CHECK_THROWS(csv::read(empty));
}

TEST_CASE("csv writer quotes only when needed and round-trips") {
  std::ostringstream out;
  csv::write_row(out, {"plain", "with,comma", "with\"quote", "multi\nline"});
  std::istringstream back("h1,h2,h3,h4\n" + out.str());
  csv::Table t = csv::read(back);
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][0] == "plain");
  CHECK(t.rows[0][1] == "with,comma");
  CHECK(t.rows[0][2] == "with\"quote");
  CHECK(t.rows[0][3] == "multi\nline");
  CHECK(out.str().substr(0, 5) == "plain");  // unquoted first field
}

namespace {

Schema test_schema() {
  Schema s;
  s.id = "id";
  s.hour = "hour";
  s.los = "los";
  s.outcome = "outcome";
  s.covariates = {"age", "score"};
  s.impute_flagged = {"score"};
  s.nominals = {"sex"};
  s.exact_keys = {"site"};
  return s;
}

Cohort cohort_from(const std::string& text, const Schema& s = test_schema()) {
  std::istringstream in(text);
  return ingest(csv::read(in), s);
}

const char* kBasic =
    "id,site,hour,los,age,score,sex,outcome\n"
    "a,S1,7.9,20,40,1.5,F,1\n"
    "b,S1,23,50,50,,M,0\n"
    "c,S2,0,30,60,2.5,F,\n";

}  // namespace

TEST_CASE("ingest parses units, floors hours, flags imputation") {
  Cohort c = cohort_from(kBasic);
  REQUIRE(c.units.size() == 3);
  CHECK(c.units[0].hour == 7);  // fractional hour falls to its hour bucket
  CHECK(c.units[1].hour == 23);
  CHECK(c.units[2].hour == 0);
  // Flagged blank becomes NaN plus an indicator column appended at the end.
  REQUIRE(c.covariate_names ==
          std::vector<std::string>{"age", "score", "score_missing"});
  CHECK(std::isnan(c.units[1].covariates[1]));
  CHECK(c.units[1].covariates[2] == 1.0);
  CHECK(c.units[0].covariates[2] == 0.0);
  CHECK(c.units[0].exact_key == std::vector<std::string>{"S1"});
  // Outcomes: present, present, missing.
  CHECK(c.outcome(0) == 1);
  CHECK(c.outcome(1) == 0);
  CHECK_FALSE(c.outcome(2).has_value());
  CHECK(c.outcome_reads() == 3);  // the audit counter saw each access
}

TEST_CASE("ingest rejects defective rows") {
  // Duplicate id.
  CHECK_THROWS(cohort_from("id,site,hour,los,age,score,sex,outcome\n"
                           "a,S1,1,2,3,4,F,0\na,S1,2,3,4,5,M,1\n"));
  // Hour out of range.
  CHECK_THROWS(cohort_from("id,site,hour,los,age,score,sex,outcome\n"
                           "a,S1,24,2,3,4,F,0\n"));
  CHECK_THROWS(cohort_from("id,site,hour,los,age,score,sex,outcome\n"
                           "a,S1,-1,2,3,4,F,0\n"));
  // Negative stay.
  CHECK_THROWS(cohort_from("id,site,hour,los,age,score,sex,outcome\n"
                           "a,S1,1,-2,3,4,F,0\n"));
  // Blank in a covariate not flagged for imputation.
  CHECK_THROWS(cohort_from("id,site,hour,los,age,score,sex,outcome\n"
                           "a,S1,1,2,,4,F,0\n"));
  // Outcome outside {"",0,1}.
  CHECK_THROWS(cohort_from("id,site,hour,los,age,score,sex,outcome\n"
                           "a,S1,1,2,3,4,F,2\n"));
  // Missing schema column.
  CHECK_THROWS(cohort_from("id,site,hour,age,score,sex,outcome\n"
                           "a,S1,1,3,4,F,0\n"));
  // Ragged row.
  CHECK_THROWS(cohort_from("id,site,hour,los,age,score,sex,outcome\n"
                           "a,S1,1,2,3,4,F\n"));
  // Number with trailing junk.
  CHECK_THROWS(cohort_from("id,site,hour,los,age,score,sex,outcome\n"
                           "a,S1,1,2,3x,4,F,0\n"));
}

TEST_CASE("ingest synthesizes ids when the schema names none") {
  Schema s = test_schema();
  s.id.clear();
  Cohort c = cohort_from(kBasic, s);
  CHECK(c.units[0].id == "r0");
  CHECK(c.units[2].id == "r2");
}

TEST_CASE("anticipated stay is the median stay of the unit's hour") {
  Cohort c = cohort_from(
      "id,site,hour,los,age,score,sex,outcome\n"
      "a,S1,2,10,1,1,F,\n"
      "b,S1,2,30,1,1,F,\n"
      "c,S2,2,20,1,1,F,\n"
      "d,S1,5,7,1,1,F,\n"
      "e,S1,5,9,1,1,F,\n");
  AlosTable t = compute_alos(c);
  CHECK(t.at(2) == 20.0);       // odd count: middle value
  CHECK(t.at(5) == 8.0);        // even count: mean of the central two
  CHECK(c.units[0].alos == 20.0);
  CHECK(c.units[3].alos == 8.0);
}

TEST_CASE("stratify orders keys lexicographically, preserves input order") {
  Cohort c = cohort_from(
      "id,site,hour,los,age,score,sex,outcome\n"
      "a,S2,1,1,1,1,F,\n"
      "b,S1,1,1,1,1,F,\n"
      "c,S2,1,1,1,1,F,\n");
  auto strata = stratify(c);
  REQUIRE(strata.size() == 2);
  CHECK(strata[0].key == std::vector<std::string>{"S1"});
  CHECK(strata[1].units == std::vector<std::size_t>{0, 2});
}

TEST_CASE("imputation fills stratum mean, then cohort mean, then zero") {
  Cohort c = cohort_from(
      "id,site,hour,los,age,score,sex,outcome\n"
      "a,S1,1,1,1,2.0,F,\n"
      "b,S1,1,1,1,4.0,F,\n"
      "c,S1,1,1,1,,F,\n"
      "d,S2,1,1,1,,F,\n"
      "e,S2,1,1,1,,F,\n");
  auto strata = stratify(c);
  impute_missing(c, strata);
  CHECK(c.units[2].covariates[1] == 3.0);  // mean of its stratum
  CHECK(c.units[3].covariates[1] == 3.0);  // stratum empty: cohort mean
  for (const auto& u : c.units)
    for (double v : u.covariates) CHECK(std::isfinite(v));

  // A column missing everywhere falls back to zero.
  Cohort c2 = cohort_from(
      "id,site,hour,los,age,score,sex,outcome\n"
      "a,S1,1,1,1,,F,\n"
      "b,S1,1,1,1,,F,\n");
  auto strata2 = stratify(c2);
  impute_missing(c2, strata2);
  CHECK(c2.units[0].covariates[1] == 0.0);
}

TEST_CASE("indicator name collisions are rejected") {
  Schema s = test_schema();
  s.covariates = {"age", "score", "score_missing"};
  CHECK_THROWS(cohort_from(
      "id,site,hour,los,age,score,score_missing,sex,outcome\n"
      "a,S1,1,2,3,4,0,F,0\n", s));
}
