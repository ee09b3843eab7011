#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "speclab/head.hpp"
#include "speclab/model.hpp"
#include "speclab/prob.hpp"
#include "speclab/rng.hpp"

namespace speclab {

enum class RuleKind { Lossless, StaticEnsemble, Leniency, Dynamic };

/// Verification policy: which accept rule / fallback pair a decode uses.
struct AcceptRule {
  RuleKind kind = RuleKind::Lossless;
  double weight = 1.0;    // StaticEnsemble: w in [0,1]
  double leniency = 1.0;  // Leniency: l >= 1
  EnsembleHead head;      // Dynamic

  static AcceptRule lossless() { return {RuleKind::Lossless, 1.0, 1.0, {}}; }
  static AcceptRule static_ensemble(double w);
  static AcceptRule lenient(double l);
  static AcceptRule dynamic(EnsembleHead h) { return {RuleKind::Dynamic, 1.0, 1.0, std::move(h)}; }

  std::string label() const;
};

/// Per-token accept probabilities b_t plus the fallback distribution P_t.
/// When the rejection probability is exactly zero the fallback carries no
/// information; it is flagged degenerate and must never be sampled.
struct VerificationStep {
  std::vector<double> accept_prob;
  ProbVector fallback;
  bool degenerate_fallback = false;
  std::optional<double> weight_used;
};

/// Standard rule: accept with min{1, p/q}, fall back to [p-q]_+ normalized.
/// Accept probability is 1 wherever q(x) = 0.
VerificationStep lossless_step(const ProbVector& q, const ProbVector& p);

/// nu = w*p + (1-w)*q.
ProbVector static_ensemble_dist(const ProbVector& q, const ProbVector& p, double w);

/// Verifies against the static mixture: accept min{1, nu/q}, fall back to
/// [nu-q]_+ normalized. Rejection probability is w*TV(q,p).
VerificationStep ensemble_step(const ProbVector& q, const ProbVector& p, double w);

/// Ensemble step whose weight comes from the head applied to (h_q, h_p).
VerificationStep dynamic_step(const ProbVector& q, const ProbVector& p, const EnsembleHead& head,
                              std::span<const double> h_q, std::span<const double> h_p);

/// Lenience baseline: accept min{1, l*p/q}, fall back to [p-q]_+ normalized.
VerificationStep leniency_step(const ProbVector& q, const ProbVector& p, double l);

/// Evaluates `rule` at one position.
VerificationStep rule_step(const AcceptRule& rule, const ProbVector& q, const ProbVector& p);

/// Exact one-step law of the emitted token:
/// sum_x q(x) b(x) delta_x + (1 - sum_x q(x) b(x)) P_t.
ProbVector induced_token_dist(const ProbVector& q, const ProbVector& p,
                              const VerificationStep& step);

/// One draft-verify round over a block of N drafted tokens.
struct RoundResult {
  std::vector<TokenId> drafted;
  int accepted_count = 0;                 // T_N
  std::optional<int> rejection_position;  // 1-based; equals T_N + 1 when present
  std::vector<TokenId> emitted;           // exactly T_N + 1 tokens
  std::vector<double> weights;            // w used at each evaluated step, if any
};

struct DecodeTotals {
  std::int64_t draft_calls = 0;   // drafted tokens
  std::int64_t target_calls = 0;  // verification rounds
  std::int64_t accepted = 0;
  std::int64_t rejected = 0;
};

/// Full record of a decoding run.
struct DecodeTrace {
  std::vector<TokenId> prompt;
  std::vector<TokenId> generated;
  std::vector<RoundResult> rounds;
  DecodeTotals totals;
  std::optional<double> reward;  // set by task-aware experiment drivers

  std::string to_json() const;
  static DecodeTrace from_json(const std::string& text);
};

/// Drafts N tokens, verifies left to right, emits the accepted prefix plus
/// one extra token: the fallback sample on rejection, or a fresh sample from
/// the rule's intended distribution when all N pass.
RoundResult lossy_sd_round(const ConditionalModel& draft, const ConditionalModel& target,
                           const AcceptRule& rule, std::span<const TokenId> prefix, int n_draft,
                           Rng& rng);

/// Runs rounds until exactly t_max tokens have been generated. The final
/// round's draft block is shortened so no round overshoots the budget.
DecodeTrace decode(const ConditionalModel& draft, const ConditionalModel& target,
                   const AcceptRule& rule, std::span<const TokenId> prompt, int t_max, int n_draft,
                   Rng& rng);

}  // namespace speclab
