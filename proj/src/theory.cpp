#include "ncd/theory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <set>

namespace ncd::theory {

namespace {

int count_nc(const LabeledSample& s) {
  return static_cast<int>(std::count_if(
      s.items.begin(), s.items.end(),
      [](const Item& it) { return it.z == CoopLabel::kNC; }));
}

int count_object_errors(const LabeledSample& s, const ObjectHypothesis& o,
                        const CoopLabel* only) {
  int errors = 0;
  for (const auto& it : s.items) {
    if (only && it.z != *only) continue;
    if (o(it.x) != it.y) ++errors;
  }
  return errors;
}

void require_nonempty(const LabeledSample& s) {
  if (s.items.empty()) throw PreconditionError("sample must have m >= 1");
}

}  // namespace

double p_hat(const LabeledSample& s) {
  require_nonempty(s);
  return static_cast<double>(count_nc(s)) / s.m();
}

double oer(const LabeledSample& s, const ObjectHypothesis& o) {
  require_nonempty(s);
  return static_cast<double>(count_object_errors(s, o, nullptr)) / s.m();
}

double cer(const LabeledSample& s, const CoopHypothesis& c) {
  require_nonempty(s);
  int errors = 0;
  for (const auto& it : s.items) {
    if (c(it.x) != it.z) ++errors;
  }
  return static_cast<double>(errors) / s.m();
}

double oer_conditional(const LabeledSample& s, const ObjectHypothesis& o,
                       CoopLabel which) {
  const int nc = count_nc(s);
  const int n = which == CoopLabel::kNC ? nc : s.m() - nc;
  if (n == 0) {
    throw UndefinedConditionalError(
        std::string("no items with z = ") + game::to_string(which));
  }
  return static_cast<double>(count_object_errors(s, o, &which)) / n;
}

double coop_gap(const LabeledSample& s, const ObjectHypothesis& o) {
  const double p = p_hat(s);
  return p * oer_conditional(s, o, CoopLabel::kNC) -
         (1.0 - p) * oer_conditional(s, o, CoopLabel::kCP);
}

double vc_term_C_thm1(int d, int m, double delta) {
  if (d < 1) throw PreconditionError("VC term needs d >= 1");
  if (m < d) throw PreconditionError("VC term needs m >= d");
  if (!(delta > 0.0 && delta <= 1.0)) {
    throw PreconditionError("VC term needs delta in (0, 1]");
  }
  const double dm = static_cast<double>(m);
  const double dd = static_cast<double>(d);
  const double growth = dd * std::log(2.0 * std::numbers::e * dm / dd);
  return (4.0 + std::sqrt(growth)) / (delta * std::sqrt(2.0 * dm));
}

void FiniteHypothesisClass::validate() const {
  if (domain_size < 1) throw DataError("hypothesis class needs a domain");
  std::set<std::vector<int>> seen;
  for (const auto& row : table) {
    if (static_cast<int>(row.size()) != domain_size) {
      throw DataError("hypothesis is not total on the domain");
    }
    if (output == Output::kCooperation) {
      for (int v : row) {
        if (v != 0 && v != 1) throw DataError("cooperation output must be 0/1");
      }
    }
    if (!seen.insert(row).second) throw DataError("duplicate hypothesis");
  }
}

ObjectHypothesis FiniteHypothesisClass::object(int h) const {
  const auto& row = table.at(h);
  return [&row](int x) { return row.at(x); };
}

CoopHypothesis FiniteHypothesisClass::coop(int h) const {
  const auto& row = table.at(h);
  return [&row](int x) {
    return row.at(x) == 1 ? CoopLabel::kNC : CoopLabel::kCP;
  };
}

FiniteHypothesisClass sym_diff_class(const FiniteHypothesisClass& objects) {
  FiniteHypothesisClass out;
  out.domain_size = objects.domain_size;
  out.output = FiniteHypothesisClass::Output::kCooperation;
  std::set<std::vector<int>> seen;
  for (const auto& a : objects.table) {
    for (const auto& b : objects.table) {
      std::vector<int> row(objects.domain_size);
      for (int x = 0; x < objects.domain_size; ++x) row[x] = a[x] != b[x];
      if (seen.insert(row).second) out.table.push_back(std::move(row));
    }
  }
  return out;
}

bool contains_class(const FiniteHypothesisClass& outer,
                    const FiniteHypothesisClass& inner) {
  if (outer.domain_size != inner.domain_size) return false;
  const std::set<std::vector<int>> rows(outer.table.begin(), outer.table.end());
  return std::all_of(inner.table.begin(), inner.table.end(),
                     [&](const auto& r) { return rows.count(r) > 0; });
}

namespace {

int error_count(const FiniteHypothesisClass& c, int h, const LabeledSample& s) {
  const auto& row = c.table[h];
  int errors = 0;
  for (const auto& it : s.items) {
    const int target = c.output == FiniteHypothesisClass::Output::kCooperation
                           ? static_cast<int>(it.z)
                           : it.y;
    if (row[it.x] != target) ++errors;
  }
  return errors;
}

void require_in_domain(const FiniteHypothesisClass& c, const LabeledSample& s) {
  for (const auto& it : s.items) {
    if (it.x < 0 || it.x >= c.domain_size) {
      throw DataError("sample point " + std::to_string(it.x) +
                      " lies outside the hypothesis domain");
    }
  }
}

}  // namespace

double empirical_error(const FiniteHypothesisClass& c, int h,
                       const LabeledSample& s) {
  require_nonempty(s);
  require_in_domain(c, s);
  return static_cast<double>(error_count(c, h, s)) / s.m();
}

int erm(const FiniteHypothesisClass& c, const LabeledSample& s) {
  if (c.table.empty()) throw PreconditionError("ERM over an empty class");
  require_in_domain(c, s);
  int best = 0;
  int best_errors = std::numeric_limits<int>::max();
  for (int h = 0; h < c.size(); ++h) {
    const int e = error_count(c, h, s);
    if (e < best_errors) {
      best_errors = e;
      best = h;
    }
  }
  return best;
}

int vc_dimension_exact(const FiniteHypothesisClass& c, int max_check) {
  if (c.output != FiniteHypothesisClass::Output::kCooperation) {
    throw PreconditionError("VC dimension needs a binary (cooperation) class");
  }
  if (c.domain_size > max_check) {
    throw PreconditionError("domain of " + std::to_string(c.domain_size) +
                            " points is too large for exhaustive shattering; "
                            "use floor(log2 |C|) instead");
  }
  const int n = c.domain_size;
  int best = 0;
  for (int k = 1; k <= n && (1LL << k) <= c.size(); ++k) {
    bool found = false;
    // Enumerate k-subsets as bitmasks over the domain.
    for (std::uint32_t mask = 0; mask < (1u << n) && !found; ++mask) {
      if (std::popcount(mask) != k) continue;
      std::set<std::uint32_t> patterns;
      for (const auto& row : c.table) {
        std::uint32_t pattern = 0;
        int bit = 0;
        for (int x = 0; x < n; ++x) {
          if (mask & (1u << x)) pattern |= static_cast<std::uint32_t>(row[x]) << bit++;
        }
        patterns.insert(pattern);
      }
      found = patterns.size() == (1u << k);
    }
    // Subsets of a shattered set are shattered, so the first failure is final.
    if (!found) break;
    best = k;
  }
  return best;
}

std::vector<BoundReport> thm1_empirical_check(const FiniteHypothesisClass& objects,
                                              const FiniteHypothesisClass& coop,
                                              const LabeledSample& s,
                                              double delta) {
  objects.validate();
  coop.validate();
  if (coop.output != FiniteHypothesisClass::Output::kCooperation) {
    throw PreconditionError("C must be a cooperation class");
  }
  if (!contains_class(coop, sym_diff_class(objects))) {
    throw PreconditionError("C does not contain the symmetric-difference class of O");
  }
  require_nonempty(s);
  require_in_domain(objects, s);

  const int m = s.m();
  const int n_nc = count_nc(s);
  const int chat = erm(coop, s);
  const int chat_errors = error_count(coop, chat, s);

  int d = 0;
  if (coop.domain_size <= 16) {
    d = vc_dimension_exact(coop);
  } else {
    d = static_cast<int>(std::floor(std::log2(coop.size())));
  }
  const int d_eff = std::max(d, 1);
  const double C = m >= d_eff ? vc_term_C_thm1(d_eff, m, delta)
                              : std::numeric_limits<double>::infinity();

  std::vector<BoundReport> reports;
  const CoopLabel nc = CoopLabel::kNC;
  const CoopLabel cp = CoopLabel::kCP;
  for (int a = 0; a < objects.size(); ++a) {
    const auto o = objects.object(a);
    const int err_o = count_object_errors(s, o, nullptr);
    for (int b = 0; b < objects.size(); ++b) {
      const auto op = objects.object(b);
      const int nc_err = count_object_errors(s, op, &nc);
      const int cp_err = count_object_errors(s, op, &cp);

      BoundReport r;
      r.o = a;
      r.o_prime = b;
      r.m = m;
      r.d = d;
      r.delta_confidence = delta;
      r.p_hat = static_cast<double>(n_nc) / m;
      r.oer_o = static_cast<double>(err_o) / m;
      r.oer_o_nc = oer_conditional(s, o, nc);
      r.oer_o_cp = oer_conditional(s, o, cp);
      r.delta_oprime = coop_gap(s, op);
      r.cer_chat = static_cast<double>(chat_errors) / m;
      r.C_term = C;
      r.empirical_rhs = r.p_hat + r.oer_o - r.delta_oprime;
      r.rhs = r.empirical_rhs + C;
      // m * Delta(o') = nc_err - cp_err exactly.
      r.holds_empirical = chat_errors <= n_nc + err_o - nc_err + cp_err;
      reports.push_back(r);
    }
  }
  return reports;
}

bool triangle_inequality_check(const ObjectHypothesis& o,
                               const ObjectHypothesis& o_prime,
                               const std::vector<std::pair<int, int>>& points) {
  for (const auto& [x, y] : points) {
    const int e = o(x) != y;
    const int ep = o_prime(x) != y;
    const int dis = o(x) != o_prime(x);
    if (!(ep - e <= dis && dis <= e + ep)) return false;
  }
  return true;
}

RewardPairGenerator bernoulli_reward_pair(double mean, double mean_star) {
  return [mean, mean_star](Rng& rng) {
    const double r = bernoulli(rng, mean) ? 1.0 : 0.0;
    const double r_star = bernoulli(rng, mean_star) ? 1.0 : 0.0;
    return std::make_pair(r, r_star);
  };
}

namespace {

McCheck finish(int violations, int trials, double bound, double C) {
  McCheck r;
  r.trials = trials;
  r.violation_freq = static_cast<double>(violations) / trials;
  r.bound = bound;
  r.C = C;
  const double p = std::clamp(bound, 0.0, 1.0);
  r.mc_stderr = std::sqrt(p * (1.0 - p) / trials);
  r.passes = r.violation_freq <= r.bound + 3.0 * r.mc_stderr;
  return r;
}

}  // namespace

McCheck lemma1_mc_check(double alpha, double epsilon, int m, int trials,
                        const RewardPairGenerator& generator, Rng& rng) {
  if (!(alpha > epsilon)) {
    throw PreconditionError("Hoeffding step needs alpha > epsilon");
  }
  if (m < 1 || trials < 1) throw PreconditionError("need m >= 1 and trials >= 1");
  const double bound = std::exp(-m * (alpha - epsilon) * (alpha - epsilon) / 2.0);
  int violations = 0;
  for (int t = 0; t < trials; ++t) {
    double u = 0.0;
    for (int i = 0; i < m; ++i) {
      const auto [r, r_star] = generator(rng);
      u += r - r_star;
    }
    u /= m;
    if (u >= -epsilon) ++violations;
  }
  return finish(violations, trials, bound, 0.0);
}

double phat_deviation_C(int m, double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) {
    throw PreconditionError("delta must lie in (0, 1]");
  }
  if (m < 1) throw PreconditionError("need m >= 1");
  return std::sqrt((std::log(6.0) - std::log(delta)) / (2.0 * m));
}

McCheck phat_concentration_check(double p_nc, int m, double delta, int trials,
                                 Rng& rng) {
  if (!(p_nc > 0.0 && p_nc < 1.0)) {
    throw PreconditionError("p_nc must lie in (0, 1)");
  }
  if (trials < 1) throw PreconditionError("need trials >= 1");
  const double C = phat_deviation_C(m, delta);
  int violations = 0;
  for (int t = 0; t < trials; ++t) {
    int nc = 0;
    for (int i = 0; i < m; ++i) nc += bernoulli(rng, p_nc);
    const double p = static_cast<double>(nc) / m;
    if (std::abs(p - p_nc) >= C) ++violations;
  }
  return finish(violations, trials, delta / 3.0, C);
}

Prop1Report prop1_inequality_check(const LabeledSample& s,
                                   const LabeledSample& t,
                                   const ObjectHypothesis& o,
                                   const ObjectHypothesis& o_prime,
                                   double delta, double epsilon) {
  Prop1Report r;
  r.epsilon = epsilon;
  r.C = phat_deviation_C(std::min(s.m(), t.m()), delta);
  r.slack = 6.0 * r.C;
  r.rhs = p_hat(s) + oer(s, o) - coop_gap(s, o_prime);
  r.lhs = p_hat(t) + oer(t, o) - coop_gap(t, o_prime);
  r.margin = r.rhs + r.slack - r.lhs;
  r.holds = r.margin >= 0.0;

  r.alpha_improved = oer(t, o) <= oer(s, o) - epsilon &&
                     oer(t, o_prime) <= oer(s, o_prime) - epsilon;
  r.effective = std::abs(oer_conditional(t, o_prime, CoopLabel::kNC) -
                         oer_conditional(s, o_prime, CoopLabel::kNC)) <= epsilon;
  r.p_hat_close = std::abs(p_hat(t) - p_hat(s)) <= 2.0 * r.C;
  if (r.holds) {
    r.verdict = "holds";
  } else if (!(r.alpha_improved && r.effective && r.p_hat_close)) {
    r.verdict = "assumption_violated";
  } else {
    r.verdict = "bound_violated";
  }
  return r;
}

nlohmann::json to_json(const BoundReport& r) {
  return {{"o", r.o},
          {"o_prime", r.o_prime},
          {"p_hat", r.p_hat},
          {"oer_o", r.oer_o},
          {"oer_o_nc", r.oer_o_nc},
          {"oer_o_cp", r.oer_o_cp},
          {"delta_oprime", r.delta_oprime},
          {"cer_chat", r.cer_chat},
          {"C_term", std::isfinite(r.C_term) ? nlohmann::json(r.C_term)
                                             : nlohmann::json(nullptr)},
          {"d", r.d},
          {"delta_confidence", r.delta_confidence},
          {"m", r.m},
          {"rhs", std::isfinite(r.rhs) ? nlohmann::json(r.rhs)
                                       : nlohmann::json(nullptr)},
          {"empirical_rhs", r.empirical_rhs},
          {"holds_empirical", r.holds_empirical}};
}

nlohmann::json to_json(const McCheck& r) {
  return {{"violation_freq", r.violation_freq},
          {"bound", r.bound},
          {"mc_stderr", r.mc_stderr},
          {"C", r.C},
          {"trials", r.trials},
          {"passes", r.passes}};
}

nlohmann::json to_json(const Prop1Report& r) {
  return {{"lhs", r.lhs},
          {"rhs", r.rhs},
          {"C", r.C},
          {"epsilon", r.epsilon},
          {"slack", r.slack},
          {"margin", r.margin},
          {"holds", r.holds},
          {"alpha_improved", r.alpha_improved},
          {"effective", r.effective},
          {"p_hat_close", r.p_hat_close},
          {"verdict", r.verdict}};
}

void write_battery_csv(std::ostream& out, const std::vector<BatteryRow>& rows) {
  out << "instance,m,p_hat,lhs,rhs,margin,holds\n";
  for (const auto& r : rows) {
    out << r.instance << ',' << r.m << ',' << r.p_hat << ',' << r.lhs << ','
        << r.rhs << ',' << r.margin << ',' << (r.holds ? 1 : 0) << '\n';
  }
}

}  // namespace ncd::theory

namespace ncd::theory {

Thm1Instance random_thm1_instance(Rng& rng, int max_domain, int max_hypotheses,
                                  int max_m, int n_object_labels) {
  if (max_domain < 1 || max_hypotheses < 1 || max_m < 2 || n_object_labels < 2) {
    throw PreconditionError("random instance bounds are too small");
  }
  Thm1Instance inst;
  const int n = 1 + uniform_index(rng, max_domain);
  inst.objects.domain_size = n;
  inst.objects.output = FiniteHypothesisClass::Output::kObject;
  const int k = 1 + uniform_index(rng, max_hypotheses);
  std::set<std::vector<int>> seen;
  for (int tries = 0; tries < 20 * k && inst.objects.size() < k; ++tries) {
    std::vector<int> row(n);
    for (auto& v : row) v = uniform_index(rng, n_object_labels);
    if (seen.insert(row).second) inst.objects.table.push_back(std::move(row));
  }

  inst.coop = sym_diff_class(inst.objects);
  if (bernoulli(rng, 0.5)) {
    std::set<std::vector<int>> have(inst.coop.table.begin(), inst.coop.table.end());
    const int extra = 1 + uniform_index(rng, 4);
    for (int e = 0; e < extra; ++e) {
      std::vector<int> row(n);
      for (auto& v : row) v = bernoulli(rng, 0.5);
      if (have.insert(row).second) inst.coop.table.push_back(std::move(row));
    }
  }

  const int m = 2 + uniform_index(rng, max_m - 1);
  const double p_nc = 0.05 + 0.9 * uniform01(rng);
  for (int i = 0; i < m; ++i) {
    Item it;
    it.x = uniform_index(rng, n);
    it.y = uniform_index(rng, n_object_labels);
    it.z = bernoulli(rng, p_nc) ? CoopLabel::kNC : CoopLabel::kCP;
    inst.sample.items.push_back(it);
  }
  // Both labels must be present for the conditional errors.
  inst.sample.items[0].z = CoopLabel::kCP;
  inst.sample.items[1].z = CoopLabel::kNC;
  return inst;
}

std::vector<BatteryRow> thm1_battery(int n, double delta, Rng& rng) {
  std::vector<BatteryRow> rows;
  for (int i = 0; i < n; ++i) {
    const auto inst = random_thm1_instance(rng);
    const auto reports =
        thm1_empirical_check(inst.objects, inst.coop, inst.sample, delta);
    BatteryRow row;
    row.instance = i;
    row.m = inst.sample.m();
    row.p_hat = reports.front().p_hat;
    row.lhs = reports.front().cer_chat;
    row.rhs = std::numeric_limits<double>::infinity();
    row.holds = true;
    for (const auto& r : reports) {
      row.rhs = std::min(row.rhs, r.empirical_rhs);
      row.holds = row.holds && r.holds_empirical;
    }
    row.margin = row.rhs - row.lhs;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace ncd::theory
