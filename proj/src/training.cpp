#include "ncd/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace ncd::training {

using agent::BeliefState;
using agent::SelectMode;
using answerers::StrategyAnswerer;
using game::Answer;

Scene SceneSource::draw(Rng& rng) const {
  if (!fixed.empty()) return fixed[uniform_index(rng, fixed.size())];
  return game::generate_scene(config, rng);
}

RewardSpec RewardSpec::mixed(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("mixed reward weight must lie in [0, 1]");
  }
  return {Kind::kMixed, lambda};
}

double RewardSpec::operator()(bool object_correct, bool coop_correct) const {
  const double obj = object_correct ? 1.0 : 0.0;
  const double coop = coop_correct ? 1.0 : 0.0;
  switch (kind) {
    case Kind::kCoopOnly:
      return coop;
    case Kind::kObjectOnly:
      return obj;
    case Kind::kMixed:
      return lambda * obj + (1.0 - lambda) * coop;
  }
  return 0.0;
}

std::string RewardSpec::name() const {
  switch (kind) {
    case Kind::kCoopOnly:
      return "coop";
    case Kind::kObjectOnly:
      return "object";
    case Kind::kMixed: {
      std::ostringstream s;
      s << "mixed:" << lambda;
      return s.str();
    }
  }
  return "?";
}

double expected_information_gain(const Scene& scene, const BeliefState& b,
                                 const game::Question& q) {
  if (!scene.vocab.contains(q.attribute, q.value)) return 0.0;
  const double eps = b.lie_rate;
  double gain = b.entropy();
  for (Answer a : {Answer::kYes, Answer::kNo}) {
    double p_a = 0.0;
    for (int i = 0; i < b.size(); ++i) {
      p_a += b.probs[i] * (game::consistent(scene, i, q, a) ? 1.0 - eps : eps);
    }
    if (p_a <= 0.0) continue;
    gain -= p_a * agent::belief_update(b, scene, q, a).entropy();
  }
  return gain;
}

int teacher_question(const AgentModel& model, const Scene& scene,
                     const BeliefState& b) {
  int best = 0;
  double best_gain = -std::numeric_limits<double>::infinity();
  for (int q = 0; q < model.space.size(); ++q) {
    const double g = expected_information_gain(scene, b, model.space.at(q));
    if (g > best_gain + 1e-12) {
      best_gain = g;
      best = q;
    }
  }
  return best;
}

namespace {

// One teacher decision: features of every question and the chosen index.
struct TeacherStep {
  std::vector<std::vector<double>> feats;
  int target = 0;
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Mean cross-entropy and, when grad is given, its gradient.
double teacher_loss(const std::vector<TeacherStep>& data,
                    const std::vector<double>& theta,
                    std::vector<double>* grad) {
  if (grad) grad->assign(theta.size(), 0.0);
  double loss = 0.0;
  std::vector<double> logits;
  for (const auto& step : data) {
    logits.resize(step.feats.size());
    for (std::size_t q = 0; q < step.feats.size(); ++q) {
      logits[q] = dot(step.feats[q], theta);
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    loss += mx + std::log(z) - logits[step.target];
    if (grad) {
      for (std::size_t q = 0; q < step.feats.size(); ++q) {
        const double p = std::exp(logits[q] - mx) / z;
        const double w = p - (static_cast<int>(q) == step.target ? 1.0 : 0.0);
        for (std::size_t k = 0; k < theta.size(); ++k) {
          (*grad)[k] += w * step.feats[q][k];
        }
      }
    }
  }
  const double n = static_cast<double>(data.size());
  if (grad) {
    for (auto& g : *grad) g /= n;
  }
  return loss / n;
}

double norm(const std::vector<double>& v) { return std::sqrt(dot(v, v)); }

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace

PretrainResult pretrain_supervised(const AgentModel& agent,
                                   const SceneSource& scenes, int n_games,
                                   const PretrainHyper& hyper, Rng& rng) {
  if (n_games < 1) throw ConfigError("pretraining needs n_games >= 1");
  agent.check_shapes();
  const int rounds = agent.config.max_rounds;

  std::vector<TeacherStep> data;
  data.reserve(static_cast<std::size_t>(n_games) * rounds);
  for (int g = 0; g < n_games; ++g) {
    const Scene scene = scenes.draw(rng);
    auto b = BeliefState::uniform(scene.n_objects(), agent.config.lie_rate);
    for (int r = 1; r <= rounds; ++r) {
      TeacherStep step;
      for (int q = 0; q < agent.space.size(); ++q) {
        step.feats.push_back(
            agent::policy_features(agent.space, q, scene, b, r, rounds));
      }
      step.target = teacher_question(agent, scene, b);
      const auto& q = agent.space.at(step.target);
      b = agent::belief_update(b, scene, q,
                               game::truth_answer(scene, scene.goal, q));
      data.push_back(std::move(step));
    }
  }

  PretrainResult out;
  out.guesser.mode = agent::GuesserParams::Mode::kBeliefArgmax;
  auto theta = agent.policy.theta;
  std::vector<double> grad;
  double loss = teacher_loss(data, theta, &grad);
  out.loss_curve.push_back(loss);
  double lr = hyper.learning_rate;
  for (int e = 0; e < hyper.epochs; ++e) {
    // Halve the step until the loss does not increase.
    for (int tries = 0; tries < 40; ++tries) {
      std::vector<double> cand = theta;
      for (std::size_t k = 0; k < cand.size(); ++k) cand[k] -= lr * grad[k];
      const double cand_loss = teacher_loss(data, cand, nullptr);
      if (cand_loss <= loss) {
        theta = std::move(cand);
        loss = teacher_loss(data, theta, &grad);
        break;
      }
      lr *= 0.5;
    }
    out.loss_curve.push_back(loss);
  }
  out.policy.theta = std::move(theta);
  return out;
}

EpisodeOutcome simulate_episode(const AgentModel& model,
                                const RewardSpec& reward, double p_nc,
                                const answerers::StrategyPool& pool,
                                const SceneSource& scenes, bool cooperative_only,
                                std::uint64_t seed) {
  Rng rng(seed);
  answerers::AnswerStrategy strategy = pool.cooperative;
  CoopLabel z = CoopLabel::kCP;
  if (!cooperative_only) {
    std::tie(strategy, z) = answerers::sample_answerer(p_nc, pool, rng);
  }
  const Scene scene = scenes.draw(rng);
  const StrategyAnswerer answerer(strategy);
  agent::PlayerEpisode player(model, scene, SelectMode::kSample);
  auto responder = answerer.begin(scene, rng);

  EpisodeOutcome out;
  out.seed = seed;
  out.z = z;
  out.record = game::play_episode(player, *responder, z, scene,
                                  model.config.max_rounds, rng);
  out.record.seed = seed;
  out.features = player.features();
  out.object_feats =
      agent::object_features(scene, player.turns(), player.belief());
  out.score.assign(model.policy.theta.size(), 0.0);
  for (const auto& s : player.selections()) {
    for (std::size_t k = 0; k < s.score.size(); ++k) out.score[k] += s.score[k];
  }
  out.reward = reward(*out.record.object_guess == scene.goal,
                      *out.record.coop_guess == z);
  return out;
}

std::vector<double> estimate_policy_gradient(
    const AgentModel& model, const RewardSpec& reward, double p_nc,
    const answerers::StrategyPool& pool, const SceneSource& scenes,
    int episodes, Baseline baseline, Rng& rng) {
  if (episodes < 1) throw ConfigError("need at least one episode");
  std::vector<double> grad(model.policy.theta.size(), 0.0);
  double mean_reward = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const auto out =
        simulate_episode(model, reward, p_nc, pool, scenes, false, rng());
    // The running mean uses earlier episodes only, so it stays unbiased.
    const double b = baseline == Baseline::kMean ? mean_reward : 0.0;
    for (std::size_t k = 0; k < grad.size(); ++k) {
      grad[k] += (out.reward - b) * out.score[k];
    }
    mean_reward += (out.reward - mean_reward) / (e + 1);
  }
  for (auto& g : grad) g /= episodes;
  return grad;
}

namespace {

double sigmoid(double t) {
  return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t))
                  : std::exp(t) / (1.0 + std::exp(t));
}

// Softmax cross-entropy step of the linear guesser towards the goal.
void guesser_step(agent::GuesserParams& o,
                  const std::vector<std::vector<double>>& feats, int goal,
                  double lr) {
  std::vector<double> scores(feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) scores[i] = dot(o.weights, feats[i]);
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const double p = std::exp(scores[i] - mx) / z;
    const double w = (static_cast<int>(i) == goal ? 1.0 : 0.0) - p;
    for (int k = 0; k < agent::kObjectFeatureDim; ++k) {
      o.weights[k] += lr * w * feats[i][k];
    }
  }
}

void abort_if_diverged(const std::vector<double>& params, const char* what,
                       std::uint64_t seed, int episode) {
  if (all_finite(params)) return;
  std::ostringstream s;
  s << "non-finite " << what << " after episode " << episode
    << " (episode seed " << seed << ", parameter norm " << norm(params) << ")";
  throw TrainingAbortedError(s.str());
}

}  // namespace

ReinforceResult reinforce_train(const AgentModel& init,
                                const RewardSpec& reward, double p_nc,
                                const answerers::StrategyPool& pool,
                                const SceneSource& scenes, int episodes,
                                Baseline baseline, const ReinforceHyper& hyper,
                                Rng& rng, const EvalSet* eval) {
  if (!hyper.cooperative_only && !(p_nc > 0.0 && p_nc < 1.0)) {
    throw ConfigError("p_nc must lie in the open interval (0, 1)");
  }
  if (episodes < 1) throw ConfigError("need at least one episode");
  if (hyper.epochs < 1) throw ConfigError("need at least one epoch");
  init.check_shapes();

  AgentModel model = init;
  if (hyper.train_guesser &&
      model.guesser.mode == agent::GuesserParams::Mode::kBeliefArgmax) {
    // Starts as the belief argmax it replaces.
    model.guesser.mode = agent::GuesserParams::Mode::kLinear;
    model.guesser.weights = {1.0, 0.0, 0.0};
  }

  ReinforceResult out;
  double mean_reward = 0.0;
  int done = 0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const int n = episodes / hyper.epochs + (epoch < episodes % hyper.epochs);
    double epoch_reward = 0.0;
    for (int e = 0; e < n; ++e) {
      const std::uint64_t seed = rng();
      const auto ep = simulate_episode(model, reward, p_nc, pool, scenes,
                                       hyper.cooperative_only, seed);
      const double b = baseline == Baseline::kMean ? mean_reward : 0.0;
      const double adv = ep.reward - b;
      for (std::size_t k = 0; k < model.policy.theta.size(); ++k) {
        model.policy.theta[k] += hyper.policy_lr * adv * ep.score[k];
      }
      abort_if_diverged(model.policy.theta, "policy parameters", seed, done);

      // Logistic-regression step for c on (X, Z).
      const auto& x = ep.features.values;
      const double target = ep.z == CoopLabel::kNC ? 1.0 : 0.0;
      const double p =
          sigmoid(agent::coop_score(model.coop, ep.features) - model.coop.threshold);
      for (std::size_t k = 0; k < x.size(); ++k) {
        model.coop.weights[k] += hyper.coop_lr * (target - p) * x[k];
      }
      abort_if_diverged(model.coop.weights, "classifier weights", seed, done);

      if (hyper.train_guesser) {
        guesser_step(model.guesser, ep.object_feats, ep.record.scene.goal,
                     hyper.guesser_lr);
        abort_if_diverged(model.guesser.weights, "guesser weights", seed, done);
      }

      ++done;
      mean_reward += (ep.reward - mean_reward) / done;
      epoch_reward += ep.reward;
      if (ep.z == CoopLabel::kNC) ++out.nc_episodes;
    }
    CurvePoint point;
    point.epoch = epoch + 1;
    point.mean_reward = n > 0 ? epoch_reward / n : 0.0;
    if (eval) {
      const auto summary = summarize(
          evaluate(model, *eval, p_nc, pool, SelectMode::kSample));
      point.oer_eval = summary.oer;
      point.cer_eval = summary.cer;
    }
    out.curve.push_back(point);
  }
  out.episodes = done;
  out.policy = model.policy;
  out.coop = model.coop;
  out.guesser = model.guesser;
  return out;
}

std::vector<EvalItem> evaluate(const AgentModel& model, const EvalSet& eval,
                               double p_nc, const answerers::StrategyPool& pool,
                               SelectMode mode, GuessMode guess) {
  model.check_shapes();
  std::vector<EvalItem> items;
  items.reserve(eval.scenes.size());
  for (std::size_t i = 0; i < eval.scenes.size(); ++i) {
    const Scene& scene = eval.scenes[i];
    Rng label_rng(derive_seed(eval.label_seed, i, 1));
    Rng play_rng(derive_seed(eval.label_seed, i, 2));
    auto [strategy, z] = answerers::sample_answerer(p_nc, pool, label_rng);
    const StrategyAnswerer answerer(strategy);
    auto responder = answerer.begin(scene, label_rng);
    agent::PlayerEpisode player(model, scene, mode);

    EvalItem item;
    item.record = game::play_episode(player, *responder, z, scene,
                                     model.config.max_rounds, play_rng);
    item.record.seed = derive_seed(eval.label_seed, i, 0);
    item.record.strategy_tag = responder->tag();
    if (guess == GuessMode::kUniformRandom) {
      Rng guess_rng(derive_seed(eval.label_seed, i, 3));
      item.record.object_guess =
          static_cast<int>(uniform_index(guess_rng, scene.n_objects()));
      item.record.coop_guess =
          bernoulli(guess_rng, 0.5) ? CoopLabel::kNC : CoopLabel::kCP;
    }
    item.goal = scene.goal;
    item.object_guess = *item.record.object_guess;
    item.z = z;
    item.coop_guess = *item.record.coop_guess;
    item.strategy_tag = item.record.strategy_tag;
    items.push_back(std::move(item));
  }
  return items;
}

EvalSummary summarize(const std::vector<EvalItem>& items) {
  EvalSummary s;
  s.m = static_cast<int>(items.size());
  if (items.empty()) throw PreconditionError("cannot summarize an empty batch");
  int obj_err = 0, coop_err = 0, n_nc = 0, err_nc = 0, err_cp = 0;
  for (const auto& it : items) {
    const bool wrong = it.object_guess != it.goal;
    obj_err += wrong;
    coop_err += it.coop_guess != it.z;
    if (it.z == CoopLabel::kNC) {
      ++n_nc;
      err_nc += wrong;
    } else {
      err_cp += wrong;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.oer = static_cast<double>(obj_err) / s.m;
  s.cer = static_cast<double>(coop_err) / s.m;
  s.p_hat = static_cast<double>(n_nc) / s.m;
  s.oer_nc = n_nc > 0 ? static_cast<double>(err_nc) / n_nc : nan;
  s.oer_cp = n_nc < s.m ? static_cast<double>(err_cp) / (s.m - n_nc) : nan;
  return s;
}

EffectivenessReport effectiveness_estimate(
    const answerers::AnswerStrategy& answerer,
    const std::vector<AgentModel>& policies, const agent::GuesserParams& o,
    const SceneSource& scenes, int m, int trials, Rng& rng) {
  if (policies.size() < 2) throw ConfigError("need at least two policies");
  if (m < 30) throw ConfigError("need m >= 30 episodes per policy");
  if (trials < 1) throw ConfigError("need at least one trial");
  if (answerer.label() != CoopLabel::kNC) {
    throw ConfigError("effectiveness is measured against a non-cooperative answerer");
  }

  std::vector<AgentModel> models = policies;
  for (auto& mdl : models) {
    mdl.guesser = o;
    mdl.check_shapes();
  }
  const StrategyAnswerer strategy(answerer);
  const int k = static_cast<int>(models.size());

  EffectivenessReport report;
  report.m = m;
  report.trials = trials;
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) report.pairs.emplace_back(a, b);
  }
  report.pair_deviations.assign(report.pairs.size(), 0.0);

  for (int t = 0; t < trials; ++t) {
    const std::uint64_t base = rng();
    std::vector<double> err(k, 0.0);
    for (int p = 0; p < k; ++p) {
      int wrong = 0;
      for (int i = 0; i < m; ++i) {
        // Same scenes and answerer draws for every policy.
        Rng scene_rng(derive_seed(base, i, 1));
        const Scene scene = scenes.draw(scene_rng);
        auto responder = strategy.begin(scene, scene_rng);
        Rng play_rng(derive_seed(base, i, 2));
        agent::PlayerEpisode player(models[p], scene, SelectMode::kSample);
        const auto rec = game::play_episode(player, *responder, CoopLabel::kNC,
                                            scene, models[p].config.max_rounds,
                                            play_rng);
        wrong += *rec.object_guess != scene.goal;
      }
      err[p] = static_cast<double>(wrong) / m;
    }
    double worst = 0.0;
    for (std::size_t j = 0; j < report.pairs.size(); ++j) {
      const auto [a, b] = report.pairs[j];
      const double d = std::abs(err[a] - err[b]);
      report.pair_deviations[j] += d / trials;
      worst = std::max(worst, d);
    }
    report.epsilon_hat += worst / trials;
  }
  return report;
}

}  // namespace ncd::training
