#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "speclab/head.hpp"
#include "speclab/model.hpp"
#include "speclab/verify.hpp"

namespace speclab {

/// Everything a batch experiment needs: the model pair (either generated
/// from the spec fields or supplied directly), decode geometry, episode
/// count, cost-model parameters, and the seed.
struct ExperimentConfig {
  // Model generation knobs; ignored when `models` is set.
  int vocab = 8;
  int order = 1;
  double temperature = 1.0;
  double alpha = 1.0;        // Dirichlet concentration of the target rows
  double perturb_eps = 0.3;  // draft = perturb_model(target, eps)
  std::uint64_t model_seed = 42;

  struct ModelPair {
    ConditionalModel draft;
    ConditionalModel target;
  };
  std::optional<ModelPair> models;

  std::vector<std::vector<TokenId>> prompts;  // default: one all-zeros prompt of length k

  int draft_len = 5;
  int t_max = 64;
  int episodes = 200;

  double c_draft = 1.0;
  double c_target = 10.0;
  double c_verify = 0.0;

  std::uint64_t seed = 7;
  int workers = 1;

  std::optional<SyntheticTask> task;  // when set, models/prompts come from the task

  void validate() const;
  ModelPair build_models() const;
  std::vector<std::vector<TokenId>> effective_prompts(int order) const;
};

/// One aggregated result row for a rule.
struct ReportRow {
  std::string rule;
  std::string param;  // w, leniency, or "dynamic"
  double acceptance_rate = 0.0;
  double acc_ci = 0.0;
  double mean_tn = 0.0;
  double tn_ci = 0.0;
  double tokens_per_round = 0.0;
  double tv_bias = 0.0;  // exact one-step average over table rows
  double reward = 0.0;   // NaN when no task is configured
  double reward_ci = 0.0;
  double cost_time = 0.0;
  int episodes = 0;
  std::uint64_t seed = 0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;

  /// CSV with the fixed column order:
  /// rule,w,acceptance_rate,acc_ci,mean_tn,tn_ci,tokens_per_round,tv_bias,
  /// reward,reward_ci,cost_time,episodes,seed
  std::string to_csv() const;
  std::string to_json() const;
};

/// Decodes `episodes` runs per rule with paired per-episode seeds and
/// aggregates one row per rule.
ExperimentReport run_experiment(const ExperimentConfig& config,
                                const std::vector<AcceptRule>& rules);

struct ParetoPoint {
  double w = 0.0;
  double rejection_prob = 0.0;  // exact one-step average over rows
  double tv_bias = 0.0;         // exact TV(induced, p) average over rows
  double tv_qp = 0.0;           // average TV(q, p) over rows
  double max_abs_residual = 0.0;
};

struct SweepResult {
  std::vector<ParetoPoint> points;
  ExperimentReport report;
};

/// Static-weight sweep: exact per-w Pareto quantities plus simulated rows.
SweepResult sweep_static_w(const ExperimentConfig& config, const std::vector<double>& w_grid);

/// Aligned multi-rule comparison (>= 2 rules) on identical models, prompts
/// and per-episode seeds.
ExperimentReport compare_rules(const ExperimentConfig& config,
                               const std::vector<AcceptRule>& rules);

}  // namespace speclab
