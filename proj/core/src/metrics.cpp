#include "speclab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "speclab/errors.hpp"

namespace speclab {

double tv_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DimensionError("tv_distance: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += std::abs(u[i] - v[i]);
  return 0.5 * acc;
}

double rejection_prob(const ProbVector& q, const VerificationStep& step) {
  if (q.size() != step.accept_prob.size()) throw DimensionError("rejection_prob: length mismatch");
  double accept_mass = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) accept_mass += q[i] * step.accept_prob[i];
  return 1.0 - accept_mass;
}

double pareto_residual(const ProbVector& q, const ProbVector& p, const VerificationStep& step) {
  const ProbVector induced = induced_token_dist(q, p, step);
  return rejection_prob(q, step) + tv_distance(induced, p) - tv_distance(q, p);
}

ProbVector min_kernel(const ProbVector& q, const ProbVector& p) {
  if (q.size() != p.size()) throw DimensionError("min_kernel: length mismatch");
  ProbVector out(q.size());
  double overlap = 0.0;  // sum min{q,p} = 1 - TV(q,p)
  for (std::size_t i = 0; i < q.size(); ++i) {
    out[i] = std::min(q[i], p[i]);
    overlap += out[i];
  }
  if (!(overlap > 0.0)) {
    throw DegenerateKernelError("min_kernel undefined: distributions are disjoint (TV = 1)");
  }
  for (double& x : out) x /= overlap;
  return out;
}

namespace {

std::size_t checked_enum_size(int vocab, int n_draft, std::size_t cap) {
  std::size_t total = 1;
  for (int i = 0; i < n_draft; ++i) {
    if (total > cap / static_cast<std::size_t>(vocab)) {
      throw ResourceError("enumeration of " + std::to_string(vocab) + "^" +
                          std::to_string(n_draft) + " sequences exceeds cap");
    }
    total *= static_cast<std::size_t>(vocab);
  }
  return total;
}

}  // namespace

AcceptLengthResult expected_accept_length_brute(const ConditionalModel& draft,
                                                const ConditionalModel& target,
                                                std::span<const TokenId> prefix, int n_draft,
                                                std::size_t enum_cap) {
  if (n_draft < 1) throw InvalidArgumentError("expected_accept_length_brute: N must be >= 1");
  const int vocab = draft.vocab_size();
  const std::size_t total = checked_enum_size(vocab, n_draft, enum_cap);

  double expected = 0.0;
  std::vector<TokenId> seq(n_draft, 0);
  std::vector<TokenId> path(prefix.begin(), prefix.end());
  for (std::size_t s = 0; s < total; ++s) {
    std::size_t rem = s;
    for (int i = n_draft - 1; i >= 0; --i) {
      seq[i] = static_cast<TokenId>(rem % vocab);
      rem /= vocab;
    }
    path.resize(prefix.size());
    double seq_prob = 1.0;     // q(x_{1:N})
    double accept_prod = 1.0;  // prod_{i<=t} b_i(x_i)
    double conditional = 0.0;  // E[T_N | x_{1:N}] = sum_t accept_prod
    for (int t = 0; t < n_draft; ++t) {
      Context dctx{path, draft.order()};
      Context tctx{path, target.order()};
      const ProbVector q_t = cond_dist(draft, dctx);
      const ProbVector p_t = cond_dist(target, tctx);
      const TokenId x = seq[t];
      seq_prob *= q_t[x];
      accept_prod *= q_t[x] > 0.0 ? std::min(1.0, p_t[x] / q_t[x]) : 1.0;
      conditional += accept_prod;
      path.push_back(x);
    }
    expected += seq_prob * conditional;
  }
  return {expected, AcceptLengthMethod::BruteForce, 0.0};
}

namespace {

/// Walks the min-kernel tree: at depth d the node carries the kernel mass
/// of its prefix and the running product of (1 - TV) factors for the
/// prefixes seen so far. Each node adds mass * product * (1 - TV_here) to
/// S_{d+1}.
void factorized_walk(const ConditionalModel& draft, const ConditionalModel& target,
                     std::vector<TokenId>& path, int depth, int n_draft, double kernel_mass,
                     double survival_prod, std::vector<double>& per_step) {
  Context dctx{path, draft.order()};
  Context tctx{path, target.order()};
  const ProbVector q_t = cond_dist(draft, dctx);
  const ProbVector p_t = cond_dist(target, tctx);
  const double tv = tv_distance(q_t, p_t);
  per_step[depth] += kernel_mass * survival_prod * (1.0 - tv);
  if (depth + 1 >= n_draft) return;
  if (!(1.0 - tv > 0.0)) return;  // disjoint prefix: zero continuation mass
  const ProbVector kernel = min_kernel(q_t, p_t);
  for (int x = 0; x < static_cast<int>(kernel.size()); ++x) {
    if (kernel[x] <= 0.0) continue;
    path.push_back(static_cast<TokenId>(x));
    factorized_walk(draft, target, path, depth + 1, n_draft, kernel_mass * kernel[x],
                    survival_prod * (1.0 - tv), per_step);
    path.pop_back();
  }
}

}  // namespace

AcceptLengthResult expected_accept_length_factorized(const ConditionalModel& draft,
                                                     const ConditionalModel& target,
                                                     std::span<const TokenId> prefix, int n_draft,
                                                     std::size_t enum_cap) {
  if (n_draft < 1) throw InvalidArgumentError("expected_accept_length_factorized: N must be >= 1");
  checked_enum_size(draft.vocab_size(), n_draft, enum_cap);
  std::vector<double> per_step(n_draft, 0.0);  // per_step[t-1] = S_t
  std::vector<TokenId> path(prefix.begin(), prefix.end());
  factorized_walk(draft, target, path, 0, n_draft, 1.0, 1.0, per_step);
  double expected = 0.0;
  for (double s : per_step) expected += s;
  return {expected, AcceptLengthMethod::Factorized, 0.0};
}

namespace {

void tail_walk(const ConditionalModel& draft, const ConditionalModel& target,
               std::vector<TokenId>& path, int depth, int n_draft, double min_prod,
               std::vector<double>& tails) {
  Context dctx{path, draft.order()};
  Context tctx{path, target.order()};
  const ProbVector q_t = cond_dist(draft, dctx);
  const ProbVector p_t = cond_dist(target, tctx);
  for (int x = 0; x < static_cast<int>(q_t.size()); ++x) {
    const double m = std::min(q_t[x], p_t[x]);
    if (m <= 0.0) continue;
    tails[depth] += min_prod * m;
    if (depth + 1 < n_draft) {
      path.push_back(static_cast<TokenId>(x));
      tail_walk(draft, target, path, depth + 1, n_draft, min_prod * m, tails);
      path.pop_back();
    }
  }
}

}  // namespace

std::vector<double> accept_tail_probs(const ConditionalModel& draft,
                                      const ConditionalModel& target,
                                      std::span<const TokenId> prefix, int n_draft,
                                      std::size_t enum_cap) {
  if (n_draft < 1) throw InvalidArgumentError("accept_tail_probs: N must be >= 1");
  checked_enum_size(draft.vocab_size(), n_draft, enum_cap);
  std::vector<double> tails(n_draft, 0.0);  // tails[t-1] = P(T_N >= t)
  std::vector<TokenId> path(prefix.begin(), prefix.end());
  tail_walk(draft, target, path, 0, n_draft, 1.0, tails);
  return tails;
}

double expected_tokens_per_round_iid(double beta, int n_draft) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw InvalidArgumentError("expected_tokens_per_round_iid: beta outside [0,1]");
  }
  if (n_draft < 0) throw InvalidArgumentError("expected_tokens_per_round_iid: N must be >= 0");
  double sum = 0.0;
  double term = 1.0;
  for (int t = 0; t <= n_draft; ++t) {
    sum += term;
    term *= beta;
  }
  return sum;
}

namespace {

double trace_statistic(const DecodeTrace& trace, TraceStatistic stat) {
  switch (stat) {
    case TraceStatistic::AcceptanceRate: {
      // Accepted draft tokens over draft tokens that reached verification
      // (verification stops at the first rejection, so the denominator is
      // accepted + rejection events). Estimates the Lemma-1 law.
      const std::int64_t verified = trace.totals.accepted + trace.totals.rejected;
      return verified > 0 ? static_cast<double>(trace.totals.accepted) /
                                static_cast<double>(verified)
                          : 0.0;
    }
    case TraceStatistic::MeanTN:
      return trace.rounds.empty() ? 0.0
                                  : static_cast<double>(trace.totals.accepted) /
                                        static_cast<double>(trace.rounds.size());
    case TraceStatistic::TokensPerRound:
      return trace.rounds.empty() ? 0.0
                                  : static_cast<double>(trace.generated.size()) /
                                        static_cast<double>(trace.rounds.size());
    case TraceStatistic::Reward:
      if (!trace.reward) throw InvalidArgumentError("mc_estimate: trace carries no reward");
      return *trace.reward;
  }
  throw InvalidArgumentError("unknown trace statistic");
}

}  // namespace

std::pair<double, double> mc_estimate(std::span<const DecodeTrace> traces, TraceStatistic stat) {
  if (traces.size() < 2) throw InvalidArgumentError("mc_estimate: need at least 2 traces");
  const double n = static_cast<double>(traces.size());
  double mean = 0.0;
  for (const DecodeTrace& t : traces) mean += trace_statistic(t, stat);
  mean /= n;
  double var = 0.0;
  for (const DecodeTrace& t : traces) {
    const double d = trace_statistic(t, stat) - mean;
    var += d * d;
  }
  var /= (n - 1.0);
  const double ci = 3.0 * std::sqrt(var / n);
  return {mean, ci};
}

double cost_model_time(const DecodeTrace& trace, double c_draft, double c_target,
                       double c_verify) {
  if (c_draft < 0.0 || c_target < 0.0 || c_verify < 0.0) {
    throw InvalidArgumentError("cost_model_time: costs must be nonnegative");
  }
  double total = 0.0;
  for (const RoundResult& r : trace.rounds) {
    total += static_cast<double>(r.drafted.size()) * c_draft + c_target + c_verify;
  }
  return total;
}

}  // namespace speclab
