#include "speclab/verify.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "speclab/errors.hpp"

namespace speclab {

AcceptRule AcceptRule::static_ensemble(double w) {
  if (!(w >= 0.0 && w <= 1.0)) {
    throw InvalidArgumentError("static ensemble weight must lie in [0,1]");
  }
  return {RuleKind::StaticEnsemble, w, 1.0, {}};
}

AcceptRule AcceptRule::lenient(double l) {
  if (!(l >= 1.0)) throw InvalidArgumentError("leniency must be >= 1");
  return {RuleKind::Leniency, 1.0, l, {}};
}

std::string AcceptRule::label() const {
  switch (kind) {
    case RuleKind::Lossless:
      return "lossless";
    case RuleKind::StaticEnsemble:
      return "ensemble";
    case RuleKind::Leniency:
      return "leniency";
    case RuleKind::Dynamic:
      return "dynamic";
  }
  return "unknown";
}

namespace {

/// Builds (b, P) for verification distribution `nu` against draft `q`:
/// b = min{1, nu/q} (1 where q = 0), P = [nu - q]_+ normalized.
VerificationStep make_step(const ProbVector& q, const ProbVector& nu) {
  if (q.size() != nu.size()) throw DimensionError("verification step: length mismatch");
  VerificationStep step;
  step.accept_prob.resize(q.size());
  ProbVector residual(q.size());
  double residual_mass = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    step.accept_prob[i] = q[i] > 0.0 ? std::min(1.0, nu[i] / q[i]) : 1.0;
    residual[i] = std::max(nu[i] - q[i], 0.0);
    residual_mass += residual[i];
  }
  if (residual_mass > 0.0) {
    for (double& r : residual) r /= residual_mass;
    step.fallback = std::move(residual);
  } else {
    step.degenerate_fallback = true;
    step.fallback.assign(q.size(), 0.0);
  }
  return step;
}

}  // namespace

VerificationStep lossless_step(const ProbVector& q, const ProbVector& p) {
  return make_step(q, p);
}

ProbVector static_ensemble_dist(const ProbVector& q, const ProbVector& p, double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw InvalidArgumentError("ensemble weight outside [0,1]");
  return mix(q, p, w);
}

VerificationStep ensemble_step(const ProbVector& q, const ProbVector& p, double w) {
  VerificationStep step = make_step(q, static_ensemble_dist(q, p, w));
  step.weight_used = w;
  return step;
}

VerificationStep dynamic_step(const ProbVector& q, const ProbVector& p, const EnsembleHead& head,
                              std::span<const double> h_q, std::span<const double> h_p) {
  FeatureVector features(h_q.begin(), h_q.end());
  features.insert(features.end(), h_p.begin(), h_p.end());
  const double w = forward(head, features);
  VerificationStep step = make_step(q, mix(q, p, w));
  step.weight_used = w;
  return step;
}

VerificationStep leniency_step(const ProbVector& q, const ProbVector& p, double l) {
  if (!(l >= 1.0)) throw InvalidArgumentError("leniency must be >= 1");
  if (q.size() != p.size()) throw DimensionError("leniency step: length mismatch");
  VerificationStep step = make_step(q, p);  // fallback stays [p-q]_+ normalized
  for (std::size_t i = 0; i < q.size(); ++i) {
    step.accept_prob[i] = q[i] > 0.0 ? std::min(1.0, l * p[i] / q[i]) : 1.0;
  }
  return step;
}

VerificationStep rule_step(const AcceptRule& rule, const ProbVector& q, const ProbVector& p) {
  switch (rule.kind) {
    case RuleKind::Lossless:
      return lossless_step(q, p);
    case RuleKind::StaticEnsemble:
      return ensemble_step(q, p, rule.weight);
    case RuleKind::Leniency:
      return leniency_step(q, p, rule.leniency);
    case RuleKind::Dynamic:
      return dynamic_step(q, p, rule.head, q, p);
  }
  throw InvalidArgumentError("unknown rule kind");
}

ProbVector induced_token_dist(const ProbVector& q, const ProbVector& p,
                              const VerificationStep& step) {
  if (q.size() != step.accept_prob.size()) throw DimensionError("induced dist: length mismatch");
  (void)p;  // the induced law depends on p only through the step
  ProbVector out(q.size());
  double accept_mass = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    out[i] = q[i] * step.accept_prob[i];
    accept_mass += out[i];
  }
  const double reject_mass = std::max(0.0, 1.0 - accept_mass);
  if (!step.degenerate_fallback) {
    for (std::size_t i = 0; i < q.size(); ++i) out[i] += reject_mass * step.fallback[i];
  }
  return out;
}

namespace {

TokenId sample_from(const ProbVector& dist, Rng& rng) {
  const double u = rng.uniform01();
  double cum = 0.0;
  TokenId last_positive = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] > 0.0) last_positive = static_cast<TokenId>(i);
    cum += dist[i];
    if (u < cum) return static_cast<TokenId>(i);
  }
  return last_positive;
}

/// The distribution the rule is trying to emit at one position: p for
/// lossless and lenience, the (possibly dynamic) mixture for ensembles.
ProbVector intended_dist(const AcceptRule& rule, const ProbVector& q, const ProbVector& p) {
  switch (rule.kind) {
    case RuleKind::Lossless:
    case RuleKind::Leniency:
      return p;
    case RuleKind::StaticEnsemble:
      return mix(q, p, rule.weight);
    case RuleKind::Dynamic: {
      const FeatureVector features = make_features(q, p);
      return mix(q, p, forward(rule.head, features));
    }
  }
  throw InvalidArgumentError("unknown rule kind");
}

}  // namespace

RoundResult lossy_sd_round(const ConditionalModel& draft, const ConditionalModel& target,
                           const AcceptRule& rule, std::span<const TokenId> prefix, int n_draft,
                           Rng& rng) {
  if (n_draft < 1) throw InvalidArgumentError("lossy_sd_round: draft length must be >= 1");

  RoundResult round;
  std::vector<TokenId> path(prefix.begin(), prefix.end());
  std::vector<ProbVector> draft_dists;
  draft_dists.reserve(n_draft);

  Context ctx{path, draft.order()};
  for (int t = 0; t < n_draft; ++t) {
    ctx.tokens = path;
    ProbVector q_t = cond_dist(draft, ctx);
    const TokenId tok = sample_from(q_t, rng);
    draft_dists.push_back(std::move(q_t));
    round.drafted.push_back(tok);
    path.push_back(tok);
  }

  // Target conditionals along the drafted path (parallel verification).
  std::vector<TokenId> verified(prefix.begin(), prefix.end());
  Context tctx{verified, target.order()};
  for (int t = 0; t < n_draft; ++t) {
    tctx.tokens = verified;
    const ProbVector p_t = cond_dist(target, tctx);
    const ProbVector& q_t = draft_dists[t];
    const VerificationStep step = rule_step(rule, q_t, p_t);
    if (step.weight_used) round.weights.push_back(*step.weight_used);

    const TokenId tok = round.drafted[t];
    const double u = rng.uniform01();
    if (u < step.accept_prob[tok]) {
      round.emitted.push_back(tok);
      verified.push_back(tok);
      ++round.accepted_count;
      continue;
    }
    round.rejection_position = t + 1;
    if (step.degenerate_fallback) {
      throw DegenerateFallbackError("rejected with zero rejection mass");
    }
    round.emitted.push_back(sample_from(step.fallback, rng));
    return round;
  }

  // All N accepted: bonus token from the rule's intended distribution.
  tctx.tokens = verified;
  const ProbVector p_next = cond_dist(target, tctx);
  Context dctx{verified, draft.order()};
  const ProbVector q_next = cond_dist(draft, dctx);
  round.emitted.push_back(sample_from(intended_dist(rule, q_next, p_next), rng));
  return round;
}

DecodeTrace decode(const ConditionalModel& draft, const ConditionalModel& target,
                   const AcceptRule& rule, std::span<const TokenId> prompt, int t_max, int n_draft,
                   Rng& rng) {
  if (t_max < 1) throw InvalidArgumentError("decode: t_max must be >= 1");
  if (n_draft < 1) throw InvalidArgumentError("decode: draft length must be >= 1");

  DecodeTrace trace;
  trace.prompt.assign(prompt.begin(), prompt.end());
  std::vector<TokenId> path(prompt.begin(), prompt.end());

  while (static_cast<int>(trace.generated.size()) < t_max) {
    const int remaining = t_max - static_cast<int>(trace.generated.size());
    const int block = std::min(n_draft, remaining - 1);

    RoundResult round;
    if (block >= 1) {
      round = lossy_sd_round(draft, target, rule, path, block, rng);
    } else {
      // Budget of one token left: sample it from the intended distribution.
      Context tctx{path, target.order()};
      Context dctx{path, draft.order()};
      const ProbVector p_t = cond_dist(target, tctx);
      const ProbVector q_t = cond_dist(draft, dctx);
      round.emitted.push_back(sample_from(intended_dist(rule, q_t, p_t), rng));
    }

    trace.totals.draft_calls += static_cast<std::int64_t>(round.drafted.size());
    trace.totals.target_calls += 1;
    trace.totals.accepted += round.accepted_count;
    trace.totals.rejected += round.rejection_position ? 1 : 0;
    for (TokenId tok : round.emitted) {
      trace.generated.push_back(tok);
      path.push_back(tok);
    }
    trace.rounds.push_back(std::move(round));
  }
  return trace;
}

std::string DecodeTrace::to_json() const {
  nlohmann::json j;
  j["prompt"] = prompt;
  j["generated"] = generated;
  nlohmann::json rounds_json = nlohmann::json::array();
  for (const RoundResult& r : rounds) {
    nlohmann::json rj;
    rj["drafted"] = r.drafted;
    rj["accepted_count"] = r.accepted_count;
    if (r.rejection_position) {
      rj["rejection_position"] = *r.rejection_position;
    } else {
      rj["rejection_position"] = nullptr;
    }
    rj["emitted"] = r.emitted;
    rj["weights"] = r.weights;
    rounds_json.push_back(std::move(rj));
  }
  j["rounds"] = std::move(rounds_json);
  j["totals"] = {{"draft_calls", totals.draft_calls},
                 {"target_calls", totals.target_calls},
                 {"accepted", totals.accepted},
                 {"rejected", totals.rejected}};
  if (reward) j["reward"] = *reward;
  return j.dump(2);
}

DecodeTrace DecodeTrace::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  DecodeTrace trace;
  trace.prompt = j.at("prompt").get<std::vector<TokenId>>();
  trace.generated = j.at("generated").get<std::vector<TokenId>>();
  for (const auto& rj : j.at("rounds")) {
    RoundResult r;
    r.drafted = rj.at("drafted").get<std::vector<TokenId>>();
    r.accepted_count = rj.at("accepted_count").get<int>();
    if (!rj.at("rejection_position").is_null()) {
      r.rejection_position = rj.at("rejection_position").get<int>();
    }
    r.emitted = rj.at("emitted").get<std::vector<TokenId>>();
    r.weights = rj.at("weights").get<std::vector<double>>();
    trace.rounds.push_back(std::move(r));
  }
  const auto& tj = j.at("totals");
  trace.totals.draft_calls = tj.at("draft_calls").get<std::int64_t>();
  trace.totals.target_calls = tj.at("target_calls").get<std::int64_t>();
  trace.totals.accepted = tj.at("accepted").get<std::int64_t>();
  trace.totals.rejected = tj.at("rejected").get<std::int64_t>();
  if (j.contains("reward")) trace.reward = j.at("reward").get<double>();
  return trace;
}

}  // namespace speclab
