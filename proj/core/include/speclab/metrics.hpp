#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "speclab/model.hpp"
#include "speclab/prob.hpp"
#include "speclab/verify.hpp"

namespace speclab {

/// Total variation distance: 0.5 * sum |u - v| = 1 - sum min{u, v}.
double tv_distance(std::span<const double> u, std::span<const double> v);

/// 1 - sum_x q(x) b(x).
double rejection_prob(const ProbVector& q, const VerificationStep& step);

/// rejection_prob + TV(induced, p) - TV(q, p). Zero on the Pareto front.
double pareto_residual(const ProbVector& q, const ProbVector& p, const VerificationStep& step);

/// Conditional law of an accepted token: min{q,p} / (1 - TV(q,p)).
/// Throws DegenerateKernelError when the supports are disjoint (TV = 1).
ProbVector min_kernel(const ProbVector& q, const ProbVector& p);

enum class AcceptLengthMethod { Factorized, BruteForce, MonteCarlo };

struct AcceptLengthResult {
  double expected = 0.0;  // in [0, N]
  AcceptLengthMethod method = AcceptLengthMethod::BruteForce;
  double ci_halfwidth = 0.0;  // Monte Carlo only
};

inline constexpr std::size_t kDefaultEnumCap = 1'000'000;

/// Literal enumeration over all V^N draft sequences: each sequence
/// contributes q(x_{1:N}) * sum_t prod_{i<=t} b_i(x_i) with the standard
/// capped accept probabilities. Authoritative oracle.
AcceptLengthResult expected_accept_length_brute(const ConditionalModel& draft,
                                                const ConditionalModel& target,
                                                std::span<const TokenId> prefix, int n_draft,
                                                std::size_t enum_cap = kDefaultEnumCap);

/// Factorized expected acceptance length: sum_t of the expectation, under
/// the min-kernel sequence measure, of the running product of per-prefix
/// (1 - TV) survival factors. A prefix with TV = 1 contributes zero
/// continuation mass. Matches the brute-force oracle to 1e-10.
AcceptLengthResult expected_accept_length_factorized(const ConditionalModel& draft,
                                                     const ConditionalModel& target,
                                                     std::span<const TokenId> prefix, int n_draft,
                                                     std::size_t enum_cap = kDefaultEnumCap);

/// Enumerated tail probabilities P(T_N >= t) for t = 1..N.
std::vector<double> accept_tail_probs(const ConditionalModel& draft,
                                      const ConditionalModel& target,
                                      std::span<const TokenId> prefix, int n_draft,
                                      std::size_t enum_cap = kDefaultEnumCap);

/// sum_{t=0}^{N} beta^t, the i.i.d. closed form for expected tokens per
/// round; equals E[T_N] + 1 when the per-step acceptance is a constant beta.
double expected_tokens_per_round_iid(double beta, int n_draft);

/// Per-trace statistics. AcceptanceRate is accepted draft tokens over
/// verified draft tokens (verification stops at the first rejection), the
/// empirical counterpart of the Lemma-1 acceptance law.
enum class TraceStatistic { AcceptanceRate, MeanTN, TokensPerRound, Reward };

/// Sample mean and 3-sigma normal half-width of a per-trace statistic.
/// Requires at least two traces.
std::pair<double, double> mc_estimate(std::span<const DecodeTrace> traces, TraceStatistic stat);

/// Abstract decoding cost: sum over rounds of
/// drafted * c_draft + c_target + c_verify.
double cost_model_time(const DecodeTrace& trace, double c_draft, double c_target, double c_verify);

}  // namespace speclab
