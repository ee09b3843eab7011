#include "speclab/head.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "json.hpp"
#include "speclab/errors.hpp"
#include "speclab/metrics.hpp"
#include "speclab/verify.hpp"

namespace speclab {

FeatureVector make_features(std::span<const double> q, std::span<const double> p) {
  FeatureVector f(q.begin(), q.end());
  f.insert(f.end(), p.begin(), p.end());
  return f;
}

double forward(const EnsembleHead& head, std::span<const double> features) {
  if (features.size() != head.weights.size()) {
    throw DimensionError("head forward: feature dimension mismatch");
  }
  double z = head.bias;
  for (std::size_t i = 0; i < features.size(); ++i) z += head.weights[i] * features[i];
  return 1.0 / (1.0 + std::exp(-z));
}

void HeadGradient::accumulate(const HeadGradient& other, double s) {
  if (weights.size() != other.weights.size()) {
    throw DimensionError("gradient accumulate: dimension mismatch");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += s * other.weights[i];
  bias += s * other.bias;
}

void HeadGradient::scale(double s) {
  for (double& w : weights) w *= s;
  bias *= s;
}

double HeadGradient::max_abs() const {
  double m = std::abs(bias);
  for (double w : weights) m = std::max(m, std::abs(w));
  return m;
}

std::string EnsembleHead::to_json() const {
  nlohmann::json j;
  j["dim"] = dim();
  j["weights"] = weights;
  j["bias"] = bias;
  return j.dump(2);
}

EnsembleHead EnsembleHead::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  EnsembleHead head;
  head.weights = j.at("weights").get<std::vector<double>>();
  head.bias = j.at("bias").get<double>();
  if (j.at("dim").get<int>() != head.dim()) {
    throw InvalidArgumentError("head JSON: dim field disagrees with weights length");
  }
  return head;
}

void TrainConfig::validate() const {
  if (!(lambda > 0.0)) throw InvalidArgumentError("train config: lambda must be > 0");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) {
    throw InvalidArgumentError("train config: clip_eps must lie in (0,1)");
  }
  if (learning_rate <= 0.0) throw InvalidArgumentError("train config: learning_rate must be > 0");
  if (rollouts_per_prompt < 1) throw InvalidArgumentError("train config: rollouts must be >= 1");
  if (epochs < 1) throw InvalidArgumentError("train config: epochs must be >= 1");
  if (updates_per_epoch < 1) throw InvalidArgumentError("train config: updates must be >= 1");
  if (eval_episodes < 2) throw InvalidArgumentError("train config: eval_episodes must be >= 2");
}

void SyntheticTask::validate() const {
  // An empty critical set is allowed and makes the reward identically 1.
  if (prompts.empty()) throw InvalidArgumentError("task: empty prompt set");
  for (int c : critical_positions) {
    if (c < 1 || c >= horizon) {
      throw InvalidArgumentError("task: critical position " + std::to_string(c) +
                                 " outside [1, horizon)");
    }
  }
  if (draft.vocab_size() != target.vocab_size()) {
    throw InvalidArgumentError("task: draft/target vocab mismatch");
  }
}

double SyntheticTask::reward(std::span<const TokenId> prompt,
                             std::span<const TokenId> sequence) const {
  std::vector<TokenId> path(prompt.begin(), prompt.end());
  Context ctx{path, target.order()};
  for (int c : critical_positions) {
    if (c > static_cast<int>(sequence.size())) return 0.0;
    ctx.tokens.assign(prompt.begin(), prompt.end());
    ctx.tokens.insert(ctx.tokens.end(), sequence.begin(), sequence.begin() + (c - 1));
    const ProbVector p_c = cond_dist(target, ctx);
    if (sequence[c - 1] != static_cast<TokenId>(argmax(p_c))) return 0.0;
  }
  return 1.0;
}

SyntheticTask make_critical_token_task(const CriticalTokenTaskParams& params) {
  const int v = params.vocab;
  if (v < 4) throw InvalidArgumentError("critical token task needs vocab >= 4");
  const int cycle = v - 1;  // tokens 0..v-2 cycle; v-1 is the distractor
  const double tail = 1.0 - params.cycle_mass;

  ConditionalModel target(Vocab{v}, 1, 1.0);
  ConditionalModel draft(Vocab{v}, 1, 1.0);

  for (TokenId c = 0; c < static_cast<TokenId>(v); ++c) {
    const TokenId ctx[] = {c};
    if (c == static_cast<TokenId>(cycle - 1)) {
      // Row where the pair disagrees hard: target restarts the cycle at 0,
      // the draft prefers the distractor token.
      ProbVector p_row(v, 0.0);
      p_row[0] = params.critical_target_mass;
      const double p_rest = (1.0 - params.critical_target_mass) / (v - 2);
      for (int i = 1; i < v - 1; ++i) p_row[i] = p_rest;
      ProbVector q_row(v, 0.0);
      q_row[0] = params.critical_draft_leak;
      q_row[v - 1] = params.critical_target_mass;
      const double q_rest =
          (1.0 - params.critical_target_mass - params.critical_draft_leak) / (v - 2);
      for (int i = 1; i < v - 1; ++i) q_row[i] = q_rest;
      target.set_row(ctx, p_row);
      draft.set_row(ctx, q_row);
      continue;
    }
    // Free rows: identical argmax mass on the next cycle token, but the two
    // models park the remaining mass on disjoint tails, so the mismatch is
    // real (TV = tail) yet harmless to the greedy continuation. The
    // distractor row rejoins the cycle at token 1, which is where the cycle
    // would be one step after the critical position.
    const TokenId next = (c == static_cast<TokenId>(v - 1)) ? 1 : (c + 1) % cycle;
    std::vector<int> others;
    for (int i = 0; i < v; ++i) {
      if (i != next) others.push_back(i);
    }
    ProbVector p_row(v, 0.0);
    ProbVector q_row(v, 0.0);
    p_row[next] = params.cycle_mass;
    q_row[next] = params.cycle_mass;
    const int half = static_cast<int>(others.size()) / 2;
    for (int i = 0; i < static_cast<int>(others.size()); ++i) {
      (i < half ? p_row : q_row)[others[i]] += tail / half;
    }
    // Odd leftover token goes to the draft tail; rescale if counts differ.
    double p_tail = 0.0, q_tail = 0.0;
    for (int i = 0; i < v; ++i) {
      if (i != next) {
        p_tail += p_row[i];
        q_tail += q_row[i];
      }
    }
    for (int i = 0; i < v; ++i) {
      if (i == next) continue;
      if (p_tail > 0.0) p_row[i] *= tail / p_tail;
      if (q_tail > 0.0) q_row[i] *= tail / q_tail;
    }
    target.set_row(ctx, p_row);
    draft.set_row(ctx, q_row);
  }

  SyntheticTask task;
  task.draft = std::move(draft);
  task.target = std::move(target);
  task.prompts = {{0}};
  task.critical_positions = params.critical_positions;
  task.horizon = params.horizon;
  task.validate();
  return task;
}

Episode episode_rollout(const SyntheticTask& task, const EnsembleHead& head,
                        const ConditionalModel& draft, const ConditionalModel& target,
                        std::span<const TokenId> prompt, Rng& rng) {
  Episode ep;
  ep.prompt.assign(prompt.begin(), prompt.end());
  std::vector<TokenId> path(prompt.begin(), prompt.end());
  std::vector<TokenId> generated;

  for (int t = 0; t < task.horizon; ++t) {
    Context dctx{path, draft.order()};
    Context tctx{path, target.order()};
    EpisodeStep step;
    step.q = cond_dist(draft, dctx);
    step.p = cond_dist(target, tctx);
    step.features = make_features(step.q, step.p);
    step.w = forward(head, step.features);
    step.nu = mix(step.q, step.p, step.w);

    const double u = rng.uniform01();
    double cum = 0.0;
    TokenId tok = static_cast<TokenId>(step.nu.size()) - 1;
    for (std::size_t i = 0; i < step.nu.size(); ++i) {
      cum += step.nu[i];
      if (u < cum) {
        tok = static_cast<TokenId>(i);
        break;
      }
    }
    step.token = tok;
    step.log_nu_token = std::log(step.nu[tok]);
    ep.regularizer += 1.0 - tv_distance(step.q, step.nu);

    generated.push_back(tok);
    path.push_back(tok);
    ep.steps.push_back(std::move(step));
  }
  ep.reward = task.reward(prompt, generated);
  return ep;
}

double objective_value(std::span<const Episode> episodes, double lambda) {
  if (episodes.empty()) throw InvalidArgumentError("objective_value: empty batch");
  double total = 0.0;
  for (const Episode& ep : episodes) total += ep.reward + lambda * ep.regularizer;
  return total / static_cast<double>(episodes.size());
}

namespace {

std::vector<double> normalized_advantages(std::span<const Episode> episodes) {
  const double n = static_cast<double>(episodes.size());
  double mean = 0.0;
  for (const Episode& ep : episodes) mean += ep.reward;
  mean /= n;
  double var = 0.0;
  for (const Episode& ep : episodes) {
    const double d = ep.reward - mean;
    var += d * d;
  }
  const double stddev = std::sqrt(var / n);
  std::vector<double> adv(episodes.size());
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    adv[i] = (episodes[i].reward - mean) / (stddev + 1e-8);
  }
  return adv;
}

double clip(double r, double eps) { return std::clamp(r, 1.0 - eps, 1.0 + eps); }

}  // namespace

double surrogate_value(const EnsembleHead& head_old, const EnsembleHead& head,
                       std::span<const Episode> episodes, double lambda, double clip_eps) {
  if (episodes.empty()) throw InvalidArgumentError("surrogate_value: empty batch");
  const std::vector<double> adv = normalized_advantages(episodes);
  double total = 0.0;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    for (const EpisodeStep& step : episodes[e].steps) {
      const double w_new = forward(head, step.features);
      const double w_old = forward(head_old, step.features);
      const double nu_new = w_new * step.p[step.token] + (1.0 - w_new) * step.q[step.token];
      const double nu_old = w_old * step.p[step.token] + (1.0 - w_old) * step.q[step.token];
      const double ratio = nu_new / nu_old;
      total += std::min(ratio * adv[e], clip(ratio, clip_eps) * adv[e]);
      const double tv = tv_distance(step.q, step.p);
      total += lambda * (1.0 - w_new * tv);
    }
  }
  return total / static_cast<double>(episodes.size());
}

HeadGradient policy_gradient(const EnsembleHead& head_old, const EnsembleHead& head,
                             std::span<const Episode> episodes, double lambda, double clip_eps) {
  if (episodes.empty()) throw InvalidArgumentError("policy_gradient: empty batch");
  const std::vector<double> adv = normalized_advantages(episodes);

  HeadGradient grad{std::vector<double>(head.weights.size(), 0.0), 0.0};
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    for (const EpisodeStep& step : episodes[e].steps) {
      const double w_new = forward(head, step.features);
      const double w_old = forward(head_old, step.features);
      const double nu_new = w_new * step.p[step.token] + (1.0 - w_new) * step.q[step.token];
      const double nu_old = w_old * step.p[step.token] + (1.0 - w_old) * step.q[step.token];
      const double ratio = nu_new / nu_old;
      const double sigmoid_slope = w_new * (1.0 - w_new);

      // d min(r*A, clip(r)*A) / dr: the unclipped branch's slope when it is
      // active, zero when the clipped constant branch wins.
      double dmin_dr = 0.0;
      if (ratio * adv[e] <= clip(ratio, clip_eps) * adv[e]) dmin_dr = adv[e];
      const double dnu_dz = (step.p[step.token] - step.q[step.token]) * sigmoid_slope;
      const double policy_dz = dmin_dr * dnu_dz / nu_old;

      const double tv = tv_distance(step.q, step.p);
      const double reg_dz = -lambda * tv * sigmoid_slope;

      const double dz = policy_dz + reg_dz;
      for (std::size_t i = 0; i < step.features.size(); ++i) {
        grad.weights[i] += dz * step.features[i];
      }
      grad.bias += dz;
    }
  }
  grad.scale(1.0 / static_cast<double>(episodes.size()));
  return grad;
}

TrainResult train(const SyntheticTask& task, const TrainConfig& config) {
  config.validate();
  task.validate();

  const int dim = 2 * task.draft.vocab_size();
  EnsembleHead head = EnsembleHead::zeros(dim);

  Rng rollout_rng(derive_seed(config.seed, 0x1001));
  Rng eval_rng(derive_seed(config.seed, 0x2002));

  auto evaluate = [&](int epoch) {
    EpochStats stats;
    stats.epoch = epoch;
    const AcceptRule rule = AcceptRule::dynamic(head);
    double reward_sum = 0.0;
    double accept_sum = 0.0;
    double w_sum = 0.0;
    std::int64_t w_count = 0;
    for (int i = 0; i < config.eval_episodes; ++i) {
      const auto& prompt = task.prompts[i % task.prompts.size()];
      Rng rng(derive_seed(derive_seed(config.seed, 0x3000 + epoch), i));
      DecodeTrace trace = decode(task.draft, task.target, rule, prompt, task.horizon,
                                 config.eval_draft_len, rng);
      reward_sum += task.reward(prompt, trace.generated);
      const std::int64_t verified = trace.totals.accepted + trace.totals.rejected;
      accept_sum += verified > 0 ? static_cast<double>(trace.totals.accepted) /
                                       static_cast<double>(verified)
                                 : 0.0;
      for (const RoundResult& r : trace.rounds) {
        for (double w : r.weights) {
          w_sum += w;
          ++w_count;
        }
      }
    }
    stats.mean_reward = reward_sum / config.eval_episodes;
    stats.acceptance_rate = accept_sum / config.eval_episodes;
    stats.mean_w = w_count > 0 ? w_sum / static_cast<double>(w_count) : 0.0;

    std::vector<Episode> probe;
    probe.reserve(config.eval_episodes);
    for (int i = 0; i < config.eval_episodes; ++i) {
      const auto& prompt = task.prompts[i % task.prompts.size()];
      probe.push_back(episode_rollout(task, head, task.draft, task.target, prompt, eval_rng));
    }
    stats.objective = objective_value(probe, config.lambda);
    return stats;
  };

  TrainResult result;
  result.curve.push_back(evaluate(0));

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (int update = 0; update < config.updates_per_epoch; ++update) {
      std::vector<Episode> batch;
      batch.reserve(task.prompts.size() * config.rollouts_per_prompt);
      for (const auto& prompt : task.prompts) {
        for (int r = 0; r < config.rollouts_per_prompt; ++r) {
          batch.push_back(episode_rollout(task, head, task.draft, task.target, prompt,
                                          rollout_rng));
        }
      }
      const HeadGradient grad =
          policy_gradient(head, head, batch, config.lambda, config.clip_eps);
      for (std::size_t i = 0; i < head.weights.size(); ++i) {
        head.weights[i] += config.learning_rate * grad.weights[i];
      }
      head.bias += config.learning_rate * grad.bias;

      double max_param = std::abs(head.bias);
      for (double w : head.weights) max_param = std::max(max_param, std::abs(w));
      if (max_param > 1e6) throw Error("training diverged: parameter magnitude above 1e6");
    }
    result.curve.push_back(evaluate(epoch));
  }
  result.head = std::move(head);
  return result;
}

}  // namespace speclab
