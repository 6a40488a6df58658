#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ncd/common.hpp"
#include "ncd/game.hpp"

// Estimators, bounds, and proof devices relating object identification to
// cooperation identification, as executable checks on finite samples.
namespace ncd::theory {

using game::CoopLabel;

struct Item {
  int x = 0;  // point id in the hypotheses' domain
  int y = 0;  // object label
  CoopLabel z = CoopLabel::kCP;
};

struct LabeledSample {
  std::vector<Item> items;
  int m() const { return static_cast<int>(items.size()); }
};

using ObjectHypothesis = std::function<int(int)>;
using CoopHypothesis = std::function<CoopLabel(int)>;

// Fraction of items labeled NC.
double p_hat(const LabeledSample& s);
double oer(const LabeledSample& s, const ObjectHypothesis& o);
double cer(const LabeledSample& s, const CoopHypothesis& c);
// Object error restricted to items with z == which. Throws
// UndefinedConditionalError when that subset is empty.
double oer_conditional(const LabeledSample& s, const ObjectHypothesis& o,
                       CoopLabel which);
// p * oer(o|NC) - (1 - p) * oer(o|CP). Negative when cooperative items are
// harder than non-cooperative ones.
double coop_gap(const LabeledSample& s, const ObjectHypothesis& o);

// (4 + sqrt(d ln(2em/d))) / (delta sqrt(2m)), natural log. delta may be 1.
double vc_term_C_thm1(int d, int m, double delta);

// Hypotheses given as explicit tables over the domain {0, ..., n-1}.
struct FiniteHypothesisClass {
  enum class Output { kObject, kCooperation };

  int domain_size = 0;
  Output output = Output::kObject;
  // table[h][x]; cooperation outputs use 0 = CP, 1 = NC.
  std::vector<std::vector<int>> table;

  int size() const { return static_cast<int>(table.size()); }
  // Throws DataError for ragged tables, out-of-range outputs or duplicates.
  void validate() const;
  ObjectHypothesis object(int h) const;
  CoopHypothesis coop(int h) const;
};

// {x -> NC[o(x) != o'(x)] : o, o' in O}, duplicates removed, in first-seen
// order over (o, o') pairs.
FiniteHypothesisClass sym_diff_class(const FiniteHypothesisClass& objects);

// Every hypothesis of `inner` appears in `outer`.
bool contains_class(const FiniteHypothesisClass& outer,
                    const FiniteHypothesisClass& inner);

// Empirical error of hypothesis h against y (object classes) or z
// (cooperation classes).
double empirical_error(const FiniteHypothesisClass& c, int h,
                       const LabeledSample& s);

// Index of a hypothesis with minimal empirical error, lowest index on ties.
// Throws DataError when a sample point lies outside the domain.
int erm(const FiniteHypothesisClass& c, const LabeledSample& s);

// Largest k such that some k-subset of the domain is shattered. Throws
// PreconditionError when the domain exceeds max_check points.
int vc_dimension_exact(const FiniteHypothesisClass& c, int max_check = 16);

struct BoundReport {
  int o = 0;
  int o_prime = 0;
  double p_hat = 0.0;
  double oer_o = 0.0;
  double oer_o_nc = 0.0;
  double oer_o_cp = 0.0;
  double delta_oprime = 0.0;
  double cer_chat = 0.0;
  double C_term = 0.0;
  int d = 0;
  double delta_confidence = 0.0;
  int m = 0;
  double rhs = 0.0;
  double empirical_rhs = 0.0;
  bool holds_empirical = false;
};

// For c_hat = erm(C, s) and every ordered (o, o') in O x O, checks
// cer_S(c_hat) <= p_hat + oer_S(o) - Delta_S(o') with exact integer counts.
// Throws PreconditionError unless C contains sym_diff_class(O).
std::vector<BoundReport> thm1_empirical_check(const FiniteHypothesisClass& objects,
                                              const FiniteHypothesisClass& coop,
                                              const LabeledSample& s,
                                              double delta);

// 1[o'(x)!=y] - 1[o(x)!=y] <= 1[o(x)!=o'(x)] <= 1[o(x)!=y] + 1[o'(x)!=y]
// at every point.
bool triangle_inequality_check(const ObjectHypothesis& o,
                               const ObjectHypothesis& o_prime,
                               const std::vector<std::pair<int, int>>& points);

inline double alpha_improvement(double j_star_hat, double j_hat) {
  return j_star_hat - j_hat;
}

struct McCheck {
  double violation_freq = 0.0;
  double bound = 0.0;
  double mc_stderr = 0.0;  // binomial standard error at the bound
  double C = 0.0;          // deviation threshold, where one applies
  int trials = 0;
  bool passes = false;     // violation_freq <= bound + 3 mc_stderr
};

// Draws one paired reward (rho under theta, rho under theta*), each in [0,1].
using RewardPairGenerator = std::function<std::pair<double, double>(Rng&)>;
RewardPairGenerator bernoulli_reward_pair(double mean, double mean_star);

// Frequency of U = (1/m) sum(rho - rho*) >= -epsilon against
// exp(-m (alpha - epsilon)^2 / 2).
McCheck lemma1_mc_check(double alpha, double epsilon, int m, int trials,
                        const RewardPairGenerator& generator, Rng& rng);

// Frequency of |p_hat - p_nc| >= C with C = sqrt((ln 6 - ln delta) / (2m))
// against delta / 3.
McCheck phat_concentration_check(double p_nc, int m, double delta, int trials,
                                 Rng& rng);
double phat_deviation_C(int m, double delta);

struct Prop1Report {
  double lhs = 0.0;  // p_T + oer_T(o) - Delta_T(o')
  double rhs = 0.0;  // p_S + oer_S(o) - Delta_S(o')
  double C = 0.0;
  double epsilon = 0.0;
  double slack = 0.0;
  double margin = 0.0;  // rhs + slack - lhs
  bool holds = false;
  // Empirical stand-ins for the events the argument conditions on.
  bool alpha_improved = false;  // oer_T <= oer_S - epsilon for o and o'
  bool effective = false;       // |oer_T(o'|NC) - oer_S(o'|NC)| <= epsilon
  bool p_hat_close = false;     // |p_T - p_S| <= 2C
  // "holds", "assumption_violated" or "bound_violated".
  std::string verdict;
};

// Compares both sides of the policy-improvement inequality with slack
// 6C (2C - eps from the p_hat and oer terms, 4C + eps from the gap term).
// S and T must use disjoint point ids so that o and o' see each item. C uses
// m = min(|S|, |T|).
Prop1Report prop1_inequality_check(const LabeledSample& s,
                                   const LabeledSample& t,
                                   const ObjectHypothesis& o,
                                   const ObjectHypothesis& o_prime,
                                   double delta, double epsilon);

nlohmann::json to_json(const BoundReport& r);
nlohmann::json to_json(const McCheck& r);
nlohmann::json to_json(const Prop1Report& r);

struct BatteryRow {
  int instance = 0;
  int m = 0;
  double p_hat = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  bool holds = false;
};
void write_battery_csv(std::ostream& out, const std::vector<BatteryRow>& rows);

// A random finite instance: an object class O, a cooperation class containing
// sym_diff_class(O) (sometimes with extra hypotheses), and a sample with both
// labels present.
struct Thm1Instance {
  FiniteHypothesisClass objects;
  FiniteHypothesisClass coop;
  LabeledSample sample;
};
Thm1Instance random_thm1_instance(Rng& rng, int max_domain = 8,
                                  int max_hypotheses = 6, int max_m = 64,
                                  int n_object_labels = 3);

// Runs thm1_empirical_check on n random instances. Each row compares
// cer(c_hat) (lhs) with the smallest empirical right-hand side over pairs.
std::vector<BatteryRow> thm1_battery(int n, double delta, Rng& rng);

}  // namespace ncd::theory
