#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "doctest.h"
#include "ncd/theory.hpp"

using namespace ncd;
using namespace ncd::theory;
using game::CoopLabel;

namespace {

constexpr auto NC = CoopLabel::kNC;
constexpr auto CP = CoopLabel::kCP;

LabeledSample sample_of(std::vector<int> ys, std::vector<CoopLabel> zs) {
  LabeledSample s;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    s.items.push_back({static_cast<int>(i), ys[i], zs[i]});
  }
  return s;
}

FiniteHypothesisClass object_class(int domain, std::vector<std::vector<int>> table) {
  FiniteHypothesisClass c;
  c.domain_size = domain;
  c.output = FiniteHypothesisClass::Output::kObject;
  c.table = std::move(table);
  return c;
}

FiniteHypothesisClass coop_class(int domain, std::vector<std::vector<int>> table) {
  auto c = object_class(domain, std::move(table));
  c.output = FiniteHypothesisClass::Output::kCooperation;
  return c;
}

// Second, independent scan for the minimal error: highest index first.
double min_error_reverse(const FiniteHypothesisClass& c, const LabeledSample& s) {
  double best = 2.0;
  for (int h = c.size() - 1; h >= 0; --h) {
    int wrong = 0;
    for (const auto& it : s.items) {
      wrong += c.table[h][it.x] != (it.z == NC ? 1 : 0);
    }
    best = std::min(best, static_cast<double>(wrong) / s.m());
  }
  return best;
}

}  // namespace

TEST_CASE("p_hat counts NC items") {
  CHECK(p_hat(sample_of({0, 0, 0, 0}, {NC, CP, NC, CP})) == 0.5);
  CHECK(p_hat(sample_of({0, 0}, {CP, CP})) == 0.0);
  CHECK(p_hat(sample_of({0, 0, 0, 0, 0}, {NC, CP, CP, CP, NC})) == doctest::Approx(0.4));
  CHECK_THROWS_AS(p_hat(LabeledSample{}), PreconditionError);
}

TEST_CASE("oer and cer") {
  const auto s = sample_of({0, 1, 2, 1}, {NC, CP, CP, NC});
  CHECK(oer(s, [&](int x) { return s.items[x].y; }) == 0.0);
  CHECK(oer(s, [](int) { return 5; }) == 1.0);
  CHECK(oer(s, [&](int x) { return x == 2 ? 0 : s.items[x].y; }) == 0.25);
  CHECK(cer(s, [](int) { return CP; }) == p_hat(s));
  CHECK(cer(s, [](int) { return NC; }) == 1.0 - p_hat(s));
  CHECK(cer(s, [&](int x) { return s.items[x].z; }) == 0.0);
}

TEST_CASE("conditional errors and the cooperation gap") {
  const auto s = sample_of({0, 0, 0}, {CP, CP, NC});
  const ObjectHypothesis wrong_on_nc = [](int x) { return x == 2 ? 1 : 0; };
  CHECK(oer_conditional(s, wrong_on_nc, CP) == 0.0);
  CHECK(oer_conditional(s, wrong_on_nc, NC) == 1.0);
  const auto all_cp = sample_of({0, 0}, {CP, CP});
  CHECK_THROWS_AS(oer_conditional(all_cp, wrong_on_nc, NC), UndefinedConditionalError);
  CHECK_THROWS_AS(coop_gap(all_cp, wrong_on_nc), UndefinedConditionalError);

  // p = 0.5; 5 NC items with 4 wrong and 5 CP items with 2 wrong.
  std::vector<int> ys(10, 0);
  std::vector<CoopLabel> zs;
  for (int i = 0; i < 10; ++i) zs.push_back(i < 5 ? NC : CP);
  const auto half = sample_of(ys, zs);
  const ObjectHypothesis o = [](int x) { return (x < 4 || x == 5 || x == 6) ? 1 : 0; };
  CHECK(coop_gap(half, o) == doctest::Approx(0.5 * 0.8 - 0.5 * 0.4));
  const ObjectHypothesis o_neg = [](int x) { return (x == 0 || (x >= 5 && x < 8)) ? 1 : 0; };
  CHECK(coop_gap(half, o_neg) == doctest::Approx(0.5 * 0.2 - 0.5 * 0.6));
  const ObjectHypothesis o_eq = [](int x) { return (x == 0 || x == 5) ? 1 : 0; };
  CHECK(coop_gap(half, o_eq) == doctest::Approx(0.0));
}

TEST_CASE("decomposition identity on random samples") {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const int m = 2 + static_cast<int>(uniform_index(rng, 60));
    LabeledSample s;
    for (int i = 0; i < m; ++i) {
      s.items.push_back({i, static_cast<int>(uniform_index(rng, 3)),
                         i == 0 ? NC : (i == 1 ? CP : (bernoulli(rng, 0.4) ? NC : CP))});
    }
    std::vector<int> guess(m);
    for (auto& g : guess) g = static_cast<int>(uniform_index(rng, 3));
    const ObjectHypothesis o = [&](int x) { return guess[x]; };
    const double p = p_hat(s);
    CHECK(std::abs(oer(s, o) - (p * oer_conditional(s, o, NC) +
                                (1 - p) * oer_conditional(s, o, CP))) < 1e-12);
    const double gap = coop_gap(s, o);
    CHECK(gap >= -1.0);
    CHECK(gap <= 1.0);
  }
}

TEST_CASE("VC term arithmetic") {
  const auto direct = [](double d, double m, double delta) {
    return (4.0 + std::sqrt(d * std::log(2.0 * std::numbers::e * m / d))) /
           (delta * std::sqrt(2.0 * m));
  };
  CHECK(vc_term_C_thm1(1, 2, 1.0) == doctest::Approx(2.772).epsilon(1e-3));
  CHECK(vc_term_C_thm1(1, 2, 1.0) ==
        doctest::Approx((4.0 + std::sqrt(std::log(4.0 * std::numbers::e))) / 2.0));
  CHECK(vc_term_C_thm1(3, 1000, 0.1) == doctest::Approx(1.955).epsilon(1e-3));
  CHECK(vc_term_C_thm1(3, 1000, 0.1) == doctest::Approx(direct(3, 1000, 0.1)));
  CHECK(vc_term_C_thm1(3, 1000000000, 0.1) < 0.01);
  CHECK(vc_term_C_thm1(3, 2000, 0.1) < vc_term_C_thm1(3, 1000, 0.1));
  CHECK_THROWS_AS(vc_term_C_thm1(3, 2, 0.1), PreconditionError);
  CHECK_THROWS_AS(vc_term_C_thm1(0, 2, 0.1), PreconditionError);
}

TEST_CASE("symmetric-difference class") {
  const auto single = sym_diff_class(object_class(3, {{0, 1, 2}}));
  REQUIRE(single.size() == 1);
  CHECK(single.table[0] == std::vector<int>{0, 0, 0});

  const auto pair = sym_diff_class(object_class(3, {{0, 1, 2}, {0, 2, 2}}));
  CHECK(pair.output == FiniteHypothesisClass::Output::kCooperation);
  CHECK(pair.table == std::vector<std::vector<int>>{{0, 0, 0}, {0, 1, 0}});

  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::set<std::vector<int>> rows;
    const int n = 1 + static_cast<int>(uniform_index(rng, 6));
    while (static_cast<int>(rows.size()) < n) {
      std::vector<int> r(5);
      for (auto& v : r) v = static_cast<int>(uniform_index(rng, 3));
      rows.insert(r);
    }
    const auto o = object_class(5, {rows.begin(), rows.end()});
    const auto sd = sym_diff_class(o);
    CHECK(sd.size() <= o.size() * o.size());
    CHECK(std::count(sd.table.begin(), sd.table.end(), std::vector<int>(5, 0)) == 1);
    // Symmetric in (o, o'): every pair's disagreement set is present.
    for (int a = 0; a < o.size(); ++a) {
      for (int b = 0; b < o.size(); ++b) {
        std::vector<int> row(5);
        for (int x = 0; x < 5; ++x) row[x] = o.table[a][x] != o.table[b][x];
        CHECK(std::find(sd.table.begin(), sd.table.end(), row) != sd.table.end());
      }
    }
  }
}

TEST_CASE("ERM picks a minimizer with the lowest index") {
  const auto s = sample_of({0, 0, 0, 0}, {NC, CP, NC, CP});
  const auto truth = coop_class(4, {{0, 0, 0, 0}, {1, 0, 1, 0}});
  CHECK(erm(truth, s) == 1);
  CHECK(empirical_error(truth, 1, s) == 0.0);

  const auto tied = coop_class(4, {{1, 1, 1, 1}, {0, 0, 0, 0}});
  CHECK(empirical_error(tied, 0, s) == 0.5);
  CHECK(empirical_error(tied, 1, s) == 0.5);
  CHECK(erm(tied, s) == 0);

  LabeledSample outside = s;
  outside.items.push_back({9, 0, CP});
  CHECK_THROWS_AS(erm(truth, outside), DataError);

  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::set<std::vector<int>> rows;
    while (rows.size() < 50) {
      std::vector<int> r(8);
      for (auto& v : r) v = static_cast<int>(uniform_index(rng, 2));
      rows.insert(r);
    }
    const auto c = coop_class(8, {rows.begin(), rows.end()});
    LabeledSample r;
    for (int i = 0; i < 20; ++i) {
      r.items.push_back({static_cast<int>(uniform_index(rng, 8)), 0,
                         bernoulli(rng, 0.5) ? NC : CP});
    }
    const int h = erm(c, r);
    CHECK(empirical_error(c, h, r) == min_error_reverse(c, r));
    for (int k = 0; k < h; ++k) CHECK(empirical_error(c, k, r) > empirical_error(c, h, r));
  }
}

TEST_CASE("exact VC dimension") {
  FiniteHypothesisClass full = coop_class(3, {});
  for (int mask = 0; mask < 8; ++mask) {
    full.table.push_back({mask & 1, (mask >> 1) & 1, (mask >> 2) & 1});
  }
  CHECK(vc_dimension_exact(full) == 3);
  CHECK(vc_dimension_exact(coop_class(4, {{0, 1, 0, 1}})) == 0);

  // Thresholds x >= t on 5 ordered points, t = 0..5.
  FiniteHypothesisClass thresholds = coop_class(5, {});
  for (int t = 0; t <= 5; ++t) {
    std::vector<int> row(5);
    for (int x = 0; x < 5; ++x) row[x] = x >= t;
    thresholds.table.push_back(row);
  }
  CHECK(vc_dimension_exact(thresholds) == 1);

  CHECK_THROWS_AS(vc_dimension_exact(coop_class(17, {std::vector<int>(17, 0)})),
                  PreconditionError);

  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::set<std::vector<int>> rows;
    const int n = 1 + static_cast<int>(uniform_index(rng, 20));
    while (static_cast<int>(rows.size()) < n) {
      std::vector<int> r(6);
      for (auto& v : r) v = static_cast<int>(uniform_index(rng, 2));
      rows.insert(r);
    }
    const auto c = coop_class(6, {rows.begin(), rows.end()});
    CHECK((1 << vc_dimension_exact(c)) <= c.size());
  }
}

TEST_CASE("class validation") {
  CHECK_THROWS_AS(coop_class(2, {{0, 1}, {0, 1}}).validate(), DataError);
  CHECK_THROWS_AS(coop_class(2, {{0, 2}}).validate(), DataError);
  CHECK_THROWS_AS(object_class(2, {{0, 1, 1}}).validate(), DataError);
}

TEST_CASE("empirical core of the bound on random instances") {
  Rng rng(5);
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto inst = random_thm1_instance(rng);
    for (const auto& r : thm1_empirical_check(inst.objects, inst.coop, inst.sample, 0.1)) {
      violations += !r.holds_empirical;
      CHECK(r.m == inst.sample.m());
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("bound check specializations") {
  // Singleton O: c_hat must be the constant-CP rule.
  const auto o = object_class(4, {{0, 1, 2, 0}});
  const auto s = sample_of({0, 1, 1, 0}, {NC, CP, NC, CP});
  const auto reports = thm1_empirical_check(o, sym_diff_class(o), s, 0.5);
  REQUIRE(reports.size() == 1);
  const auto& r = reports[0];
  const ObjectHypothesis h = o.object(0);
  CHECK(r.cer_chat == p_hat(s));
  CHECK(r.empirical_rhs == doctest::Approx(p_hat(s) + oer(s, h) - coop_gap(s, h)));
  CHECK(r.holds_empirical);

  // A strict superset can only lower the ERM error.
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const auto inst = random_thm1_instance(rng);
    const auto sd = sym_diff_class(inst.objects);
    const double sub = thm1_empirical_check(inst.objects, sd, inst.sample, 0.1)[0].cer_chat;
    const double sup =
        thm1_empirical_check(inst.objects, inst.coop, inst.sample, 0.1)[0].cer_chat;
    CHECK(sup <= sub);
  }

  const auto missing = coop_class(4, {{1, 1, 1, 1}});
  CHECK_THROWS_AS(thm1_empirical_check(o, missing, s, 0.5), PreconditionError);
}

TEST_CASE("triangle inequality for classification error") {
  CHECK(triangle_inequality_check([](int x) { return x % 3; }, [](int x) { return x % 3; },
                                  {{0, 1}, {1, 1}, {2, 0}}));
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      for (int y = 0; y < 3; ++y) {
        CHECK(triangle_inequality_check([a](int) { return a; }, [b](int) { return b; },
                                        {{0, y}}));
      }
    }
  }
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const int a = static_cast<int>(uniform_index(rng, 4));
    const int b = static_cast<int>(uniform_index(rng, 4));
    const int y = static_cast<int>(uniform_index(rng, 4));
    CHECK(triangle_inequality_check([a](int) { return a; }, [b](int) { return b; },
                                    {{0, y}}));
  }
}

TEST_CASE("alpha improvement") {
  CHECK(alpha_improvement(0.4, 0.4) == 0.0);
  CHECK(alpha_improvement(0.7, 0.5) == doctest::Approx(0.2));
  CHECK(alpha_improvement(0.5, 0.7) == -alpha_improvement(0.7, 0.5));
}

TEST_CASE("Hoeffding step Monte Carlo") {
  Rng rng(8);
  const auto r = lemma1_mc_check(0.3, 0.1, 200, 20000, bernoulli_reward_pair(0.5, 0.8), rng);
  CHECK(r.bound == doctest::Approx(std::exp(-200 * 0.04 / 2)));
  CHECK(r.bound == doctest::Approx(0.0183).epsilon(1e-2));
  CHECK(r.passes);
  const auto vacuous =
      lemma1_mc_check(0.3, 0.2999, 10, 200, bernoulli_reward_pair(0.5, 0.8), rng);
  CHECK(vacuous.bound > 0.99);
  CHECK(vacuous.passes);
  const auto one = lemma1_mc_check(0.3, 0.1, 1, 10, bernoulli_reward_pair(0.5, 0.8), rng);
  CHECK(one.bound == doctest::Approx(std::exp(-0.04 / 2)));
  CHECK_THROWS_AS(lemma1_mc_check(0.1, 0.1, 10, 10, bernoulli_reward_pair(0.5, 0.6), rng),
                  PreconditionError);
}

TEST_CASE("p_hat concentration") {
  CHECK(phat_deviation_C(100, 0.3) == doctest::Approx(std::sqrt(std::log(20.0) / 200)));
  CHECK(phat_deviation_C(100, 0.3) == doctest::Approx(0.1224).epsilon(1e-3));
  CHECK(phat_deviation_C(50, 1.0) == doctest::Approx(std::sqrt(std::log(6.0) / 100)));
  Rng rng(9);
  const auto r = phat_concentration_check(0.3, 100, 0.3, 20000, rng);
  CHECK(r.bound == doctest::Approx(0.1));
  CHECK(r.passes);
  const auto big = phat_concentration_check(0.5, 100000, 0.3, 20, rng);
  CHECK(big.violation_freq == 0.0);
}

TEST_CASE("policy-improvement inequality diagnostics") {
  Rng rng(10);
  LabeledSample s;
  for (int i = 0; i < 200; ++i) {
    s.items.push_back({i, static_cast<int>(uniform_index(rng, 3)), i % 3 == 0 ? NC : CP});
  }
  std::vector<int> guess(400);
  for (auto& g : guess) g = static_cast<int>(uniform_index(rng, 3));
  const ObjectHypothesis o = [&](int x) { return guess[x]; };
  const auto same = prop1_inequality_check(s, s, o, o, 0.1, 0.05);
  CHECK(same.holds);
  CHECK(same.margin == doctest::Approx(same.slack));
  CHECK(same.slack == doctest::Approx(6 * phat_deviation_C(200, 0.1)));

  // T: o is wrong everywhere, so the policy got worse and the bound fails.
  LabeledSample t;
  for (int i = 0; i < 200; ++i) {
    t.items.push_back({200 + i, (guess[200 + i] + 1) % 3, i % 2 ? NC : CP});
  }
  const ObjectHypothesis o_cp_right = [&](int x) {
    return x >= 200 && t.items[x - 200].z == CP ? t.items[x - 200].y : guess[x];
  };
  const auto worse = prop1_inequality_check(s, t, o, o_cp_right, 0.1, 0.05);
  CHECK_FALSE(worse.alpha_improved);
  if (!worse.holds) CHECK(worse.verdict == "assumption_violated");
  CHECK(to_json(worse)["verdict"] == worse.verdict);
}

TEST_CASE("battery CSV has one row per instance") {
  Rng rng(11);
  const auto rows = thm1_battery(20, 0.1, rng);
  CHECK(rows.size() == 20);
  std::ostringstream out;
  write_battery_csv(out, rows);
  const std::string csv = out.str();
  CHECK(csv.rfind("instance,m,p_hat,lhs,rhs,margin,holds\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 21);
  for (const auto& r : rows) CHECK(r.holds);
}
