#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "speclab/model.hpp"
#include "speclab/prob.hpp"
#include "speclab/rng.hpp"

namespace speclab {

/// Context features for the weight head: the draft and target conditional
/// probability vectors concatenated, dimension 2V.
using FeatureVector = std::vector<double>;

FeatureVector make_features(std::span<const double> q, std::span<const double> p);

/// Single-layer sigmoid head: w = sigmoid(weights . features + bias).
struct EnsembleHead {
  std::vector<double> weights;
  double bias = 0.0;

  static EnsembleHead zeros(int dim) { return EnsembleHead{std::vector<double>(dim, 0.0), 0.0}; }
  int dim() const { return static_cast<int>(weights.size()); }

  std::string to_json() const;
  static EnsembleHead from_json(const std::string& text);
};

/// Mixture weight in (0,1). Throws DimensionError on feature size mismatch.
double forward(const EnsembleHead& head, std::span<const double> features);

/// Gradient of `forward` w.r.t. (weights, bias): w(1-w) * (features, 1).
struct HeadGradient {
  std::vector<double> weights;
  double bias = 0.0;

  void accumulate(const HeadGradient& other, double scale);
  void scale(double s);
  double max_abs() const;
};

struct EpisodeStep {
  FeatureVector features;
  ProbVector q;
  ProbVector p;
  ProbVector nu;       // w*p + (1-w)*q under the rollout head
  double w = 0.0;
  TokenId token = 0;
  double log_nu_token = 0.0;
};

/// One training rollout: tokens sampled directly from the dynamic mixture
/// (no accept/reject at training time), terminal 0/1 reward, and the
/// acceptance regularizer sum_t (1 - TV(q_t, nu_t)).
struct Episode {
  std::vector<TokenId> prompt;
  std::vector<EpisodeStep> steps;
  double reward = 0.0;
  double regularizer = 0.0;
};

struct TrainConfig {
  double lambda = 0.3;         // regularizer strength, > 0
  double learning_rate = 5e-4;
  int rollouts_per_prompt = 4;
  double clip_eps = 0.2;       // in (0,1)
  int epochs = 2;
  int updates_per_epoch = 1;   // passes over the prompt set per epoch
  int eval_episodes = 100;     // decode evaluations after each epoch
  int eval_draft_len = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Synthetic sequence task: the reward is 1 iff every critical position
/// emits the target model's greedy token for the realized prefix.
struct SyntheticTask {
  ConditionalModel draft;
  ConditionalModel target;
  std::vector<std::vector<TokenId>> prompts;
  std::vector<int> critical_positions;  // 1-based steps, all < horizon
  int horizon = 0;

  void validate() const;
  /// 1.0 iff sequence[c-1] == argmax target(. | prompt + sequence[0..c-2]) at
  /// every critical position c.
  double reward(std::span<const TokenId> prompt, std::span<const TokenId> sequence) const;
};

/// Knobs for the bundled critical-token task. The defaults give a V=8
/// order-1 pair that cycles through tokens 0..6; the row after token 6 is
/// the one place where draft and target disagree hard, and positions that
/// normally land on that row are the critical ones.
struct CriticalTokenTaskParams {
  int vocab = 8;
  int horizon = 32;
  std::vector<int> critical_positions = {7, 14, 21, 28};
  double cycle_mass = 0.8;      // shared argmax mass on free rows
  double critical_target_mass = 0.9;  // target mass on the cycle restart
  double critical_draft_leak = 0.02;  // draft mass left on the restart token
};

SyntheticTask make_critical_token_task(const CriticalTokenTaskParams& params = {});

/// Samples a full episode from the dynamic mixture induced by `head`.
Episode episode_rollout(const SyntheticTask& task, const EnsembleHead& head,
                        const ConditionalModel& draft, const ConditionalModel& target,
                        std::span<const TokenId> prompt, Rng& rng);

/// Mean over episodes of reward + lambda * regularizer.
double objective_value(std::span<const Episode> episodes, double lambda);

/// Ascent gradient of the clipped policy surrogate (ratio of current to
/// rollout-time mixture probabilities, batch-normalized advantage) plus the
/// exact pathwise gradient of the acceptance regularizer.
HeadGradient policy_gradient(const EnsembleHead& head_old, const EnsembleHead& head,
                             std::span<const Episode> episodes, double lambda, double clip_eps);

/// Clipped-surrogate objective that `policy_gradient` differentiates;
/// exposed so gradients can be finite-difference checked.
double surrogate_value(const EnsembleHead& head_old, const EnsembleHead& head,
                       std::span<const Episode> episodes, double lambda, double clip_eps);

struct EpochStats {
  int epoch = 0;
  double mean_reward = 0.0;
  double acceptance_rate = 0.0;
  double mean_w = 0.0;
  double objective = 0.0;
};

struct TrainResult {
  EnsembleHead head;
  std::vector<EpochStats> curve;
};

/// Plain gradient-ascent training loop; deterministic given config.seed.
/// The per-epoch curve is measured with speculative decodes under the
/// dynamic rule. Throws on parameter divergence (|theta| > 1e6).
TrainResult train(const SyntheticTask& task, const TrainConfig& config);

}  // namespace speclab
