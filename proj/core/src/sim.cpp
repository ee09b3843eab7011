#include "speclab/sim.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "speclab/errors.hpp"
#include "speclab/metrics.hpp"
#include "speclab/parallel.hpp"

namespace speclab {

void ExperimentConfig::validate() const {
  if (episodes < 1) throw InvalidArgumentError("experiment config: episodes must be >= 1");
  if (draft_len < 1) throw InvalidArgumentError("experiment config: draft_len must be >= 1");
  if (t_max < 1) throw InvalidArgumentError("experiment config: t_max must be >= 1");
  if (c_draft < 0 || c_target < 0 || c_verify < 0) {
    throw InvalidArgumentError("experiment config: costs must be nonnegative");
  }
  if (task) task->validate();
  if (!models && !task) {
    if (vocab < 2) throw InvalidArgumentError("experiment config: vocab must be >= 2");
    if (order < 0) throw InvalidArgumentError("experiment config: order must be >= 0");
    if (!(perturb_eps >= 0.0 && perturb_eps <= 1.0)) {
      throw InvalidArgumentError("experiment config: perturb_eps must lie in [0,1]");
    }
  }
}

ExperimentConfig::ModelPair ExperimentConfig::build_models() const {
  if (task) return {task->draft, task->target};
  if (models) return *models;
  Rng target_rng(derive_seed(model_seed, 0xA));
  ConditionalModel target = random_markov_model(Vocab{vocab}, order, alpha, target_rng);
  target.set_temperature(temperature);
  Rng draft_rng(derive_seed(model_seed, 0xB));
  ConditionalModel draft = perturb_model(target, perturb_eps, draft_rng);
  return {std::move(draft), std::move(target)};
}

std::vector<std::vector<TokenId>> ExperimentConfig::effective_prompts(int model_order) const {
  if (task && !task->prompts.empty()) return task->prompts;
  if (!prompts.empty()) return prompts;
  return {std::vector<TokenId>(model_order, 0)};
}

namespace {

std::string rule_param(const AcceptRule& rule) {
  std::ostringstream os;
  os.precision(12);
  switch (rule.kind) {
    case RuleKind::Lossless:
      os << 1.0;
      break;
    case RuleKind::StaticEnsemble:
      os << rule.weight;
      break;
    case RuleKind::Leniency:
      os << rule.leniency;
      break;
    case RuleKind::Dynamic:
      return "dynamic";
  }
  return os.str();
}

/// Exact one-step TV(induced, p), averaged uniformly over the target's
/// table rows (draft row looked up for the same context).
double exact_tv_bias(const ConditionalModel& draft, const ConditionalModel& target,
                     const AcceptRule& rule) {
  double total = 0.0;
  std::size_t rows = 0;
  for (const std::string& key : target.context_keys()) {
    const std::vector<TokenId> ctx_tokens = ConditionalModel::parse_context_key(key);
    const Context ctx{ctx_tokens, target.order()};
    const ProbVector p = cond_dist(target, ctx);
    const Context dctx{ctx_tokens, draft.order()};
    const ProbVector q = cond_dist(draft, dctx);
    const VerificationStep step = rule_step(rule, q, p);
    total += tv_distance(induced_token_dist(q, p, step), p);
    ++rows;
  }
  return rows > 0 ? total / static_cast<double>(rows) : 0.0;
}

ReportRow aggregate_row(const ExperimentConfig& config, const AcceptRule& rule,
                        const ExperimentConfig::ModelPair& pair,
                        const std::vector<std::vector<TokenId>>& prompts) {
  std::vector<DecodeTrace> traces(config.episodes);
  parallel_for(config.episodes, config.workers, [&](std::size_t e) {
    Rng rng(derive_seed(config.seed, e));
    const auto& prompt = prompts[e % prompts.size()];
    DecodeTrace trace =
        decode(pair.draft, pair.target, rule, prompt, config.t_max, config.draft_len, rng);
    if (config.task) trace.reward = config.task->reward(prompt, trace.generated);
    traces[e] = std::move(trace);
  });

  ReportRow row;
  row.rule = rule.label();
  row.param = rule_param(rule);
  row.episodes = config.episodes;
  row.seed = config.seed;
  if (config.episodes >= 2) {
    auto [acc, acc_ci] = mc_estimate(traces, TraceStatistic::AcceptanceRate);
    auto [tn, tn_ci] = mc_estimate(traces, TraceStatistic::MeanTN);
    auto [tpr, tpr_ci] = mc_estimate(traces, TraceStatistic::TokensPerRound);
    row.acceptance_rate = acc;
    row.acc_ci = acc_ci;
    row.mean_tn = tn;
    row.tn_ci = tn_ci;
    row.tokens_per_round = tpr;
    (void)tpr_ci;
    if (config.task) {
      auto [rew, rew_ci] = mc_estimate(traces, TraceStatistic::Reward);
      row.reward = rew;
      row.reward_ci = rew_ci;
    } else {
      row.reward = std::numeric_limits<double>::quiet_NaN();
      row.reward_ci = 0.0;
    }
  } else {
    const DecodeTrace& t = traces.front();
    const std::int64_t verified = t.totals.accepted + t.totals.rejected;
    row.acceptance_rate =
        verified > 0 ? static_cast<double>(t.totals.accepted) / static_cast<double>(verified)
                     : 0.0;
    row.mean_tn = t.rounds.empty() ? 0.0
                                   : static_cast<double>(t.totals.accepted) /
                                         static_cast<double>(t.rounds.size());
    row.tokens_per_round = t.rounds.empty() ? 0.0
                                            : static_cast<double>(t.generated.size()) /
                                                  static_cast<double>(t.rounds.size());
    row.reward = t.reward.value_or(std::numeric_limits<double>::quiet_NaN());
  }
  double cost = 0.0;
  for (const DecodeTrace& t : traces) {
    cost += cost_model_time(t, config.c_draft, config.c_target, config.c_verify);
  }
  row.cost_time = cost / static_cast<double>(config.episodes);
  row.tv_bias = exact_tv_bias(pair.draft, pair.target, rule);
  return row;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config,
                                const std::vector<AcceptRule>& rules) {
  config.validate();
  if (rules.empty()) throw InvalidArgumentError("run_experiment: no rules configured");
  const ExperimentConfig::ModelPair pair = config.build_models();
  const auto prompts = config.effective_prompts(pair.target.order());
  if (prompts.empty()) throw InvalidArgumentError("run_experiment: empty prompt set");

  ExperimentReport report;
  for (const AcceptRule& rule : rules) {
    report.rows.push_back(aggregate_row(config, rule, pair, prompts));
  }
  return report;
}

SweepResult sweep_static_w(const ExperimentConfig& config, const std::vector<double>& w_grid) {
  config.validate();
  if (w_grid.empty()) throw InvalidArgumentError("sweep_static_w: empty grid");
  for (double w : w_grid) {
    if (!(w >= 0.0 && w <= 1.0)) {
      throw InvalidArgumentError("sweep_static_w: grid value outside [0,1]");
    }
  }
  const ExperimentConfig::ModelPair pair = config.build_models();
  const auto prompts = config.effective_prompts(pair.target.order());
  if (prompts.empty()) throw InvalidArgumentError("sweep_static_w: empty prompt set");

  SweepResult result;
  for (double w : w_grid) {
    const AcceptRule rule = AcceptRule::static_ensemble(w);
    ParetoPoint point;
    point.w = w;
    std::size_t rows = 0;
    for (const std::string& key : pair.target.context_keys()) {
      const std::vector<TokenId> ctx_tokens = ConditionalModel::parse_context_key(key);
      const Context tctx{ctx_tokens, pair.target.order()};
      const Context dctx{ctx_tokens, pair.draft.order()};
      const ProbVector p = cond_dist(pair.target, tctx);
      const ProbVector q = cond_dist(pair.draft, dctx);
      const VerificationStep step = ensemble_step(q, p, w);
      point.rejection_prob += rejection_prob(q, step);
      point.tv_bias += tv_distance(induced_token_dist(q, p, step), p);
      point.tv_qp += tv_distance(q, p);
      point.max_abs_residual =
          std::max(point.max_abs_residual, std::abs(pareto_residual(q, p, step)));
      ++rows;
    }
    if (rows > 0) {
      point.rejection_prob /= static_cast<double>(rows);
      point.tv_bias /= static_cast<double>(rows);
      point.tv_qp /= static_cast<double>(rows);
    }
    result.points.push_back(point);
    result.report.rows.push_back(aggregate_row(config, rule, pair, prompts));
  }
  return result;
}

ExperimentReport compare_rules(const ExperimentConfig& config,
                               const std::vector<AcceptRule>& rules) {
  if (rules.size() < 2) throw InvalidArgumentError("compare_rules: need at least 2 rules");
  return run_experiment(config, rules);
}

namespace {

void append_csv_number(std::ostringstream& os, double value) {
  if (std::isnan(value)) {
    os << "nan";
  } else {
    os << value;
  }
}

}  // namespace

std::string ExperimentReport::to_csv() const {
  std::ostringstream os;
  os.precision(12);
  os << "rule,w,acceptance_rate,acc_ci,mean_tn,tn_ci,tokens_per_round,tv_bias,"
        "reward,reward_ci,cost_time,episodes,seed\n";
  for (const ReportRow& r : rows) {
    os << r.rule << ',' << r.param << ',';
    append_csv_number(os, r.acceptance_rate);
    os << ',';
    append_csv_number(os, r.acc_ci);
    os << ',';
    append_csv_number(os, r.mean_tn);
    os << ',';
    append_csv_number(os, r.tn_ci);
    os << ',';
    append_csv_number(os, r.tokens_per_round);
    os << ',';
    append_csv_number(os, r.tv_bias);
    os << ',';
    append_csv_number(os, r.reward);
    os << ',';
    append_csv_number(os, r.reward_ci);
    os << ',';
    append_csv_number(os, r.cost_time);
    os << ',' << r.episodes << ',' << r.seed << '\n';
  }
  return os.str();
}

std::string ExperimentReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const ReportRow& r : rows) {
    nlohmann::json j;
    j["rule"] = r.rule;
    j["w"] = r.param;
    j["acceptance_rate"] = r.acceptance_rate;
    j["acc_ci"] = r.acc_ci;
    j["mean_tn"] = r.mean_tn;
    j["tn_ci"] = r.tn_ci;
    j["tokens_per_round"] = r.tokens_per_round;
    j["tv_bias"] = r.tv_bias;
    if (std::isnan(r.reward)) {
      j["reward"] = nullptr;
    } else {
      j["reward"] = r.reward;
    }
    j["reward_ci"] = r.reward_ci;
    j["cost_time"] = r.cost_time;
    j["episodes"] = r.episodes;
    j["seed"] = r.seed;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace speclab
