#include "speclab/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "speclab/errors.hpp"

namespace speclab {
namespace {

const ProbVector kQ = {0.7, 0.3};
const ProbVector kP = {0.4, 0.6};

ConditionalModel unigram(ProbVector row) {
  ConditionalModel m(Vocab{static_cast<int>(row.size())}, 0, 1.0);
  m.set_row({}, std::move(row));
  return m;
}

TEST(TvDistance, KnownValues) {
  const ProbVector one_hot_a = {1.0, 0.0};
  const ProbVector one_hot_b = {0.0, 1.0};
  EXPECT_DOUBLE_EQ(tv_distance(kQ, kQ), 0.0);
  EXPECT_DOUBLE_EQ(tv_distance(one_hot_a, one_hot_b), 1.0);
  EXPECT_NEAR(tv_distance(kQ, kP), 0.3, 1e-15);
}

TEST(TvDistance, LengthMismatchRejected) {
  const ProbVector two = {0.5, 0.5};
  const ProbVector one = {1.0};
  EXPECT_THROW(tv_distance(two, one), DimensionError);
}

TEST(TvDistance, SymmetryTriangleAndMinIdentity) {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const int v = 2 + static_cast<int>(rng.next_u64() % 10);
    const ProbVector a = dirichlet(rng, v, 1.0);
    const ProbVector b = dirichlet(rng, v, 1.0);
    const ProbVector c = dirichlet(rng, v, 1.0);
    EXPECT_NEAR(tv_distance(a, b), tv_distance(b, a), 1e-15);
    EXPECT_LE(tv_distance(a, c), tv_distance(a, b) + tv_distance(b, c) + 1e-12);
    double min_sum = 0.0;
    for (int i = 0; i < v; ++i) min_sum += std::min(a[i], b[i]);
    EXPECT_NEAR(tv_distance(a, b), 1.0 - min_sum, 1e-12);
  }
}

TEST(RejectionProb, KnownValues) {
  EXPECT_NEAR(rejection_prob(kQ, lossless_step(kQ, kP)), 0.3, 1e-15);
  EXPECT_NEAR(rejection_prob(kQ, ensemble_step(kQ, kP, 0.5)), 0.15, 1e-15);
  EXPECT_NEAR(rejection_prob(kQ, lossless_step(kQ, kQ)), 0.0, 1e-15);
}

TEST(ParetoResidual, ZeroOnEnsembleFront) {
  Rng rng(22);
  for (int trial = 0; trial < 1000; ++trial) {
    const int v = 2 + static_cast<int>(rng.next_u64() % 15);
    const ProbVector q = dirichlet(rng, v, 1.0);
    const ProbVector p = dirichlet(rng, v, 1.0);
    const double w = rng.uniform01();
    EXPECT_LT(std::abs(pareto_residual(q, p, ensemble_step(q, p, w))), 1e-12);
  }
}

TEST(ParetoResidual, EndpointsHaveOneVanishingTerm) {
  const VerificationStep lossless = ensemble_step(kQ, kP, 1.0);
  EXPECT_LT(tv_distance(induced_token_dist(kQ, kP, lossless), kP), 1e-15);
  EXPECT_LT(std::abs(pareto_residual(kQ, kP, lossless)), 1e-12);

  const VerificationStep accept_all = ensemble_step(kQ, kP, 0.0);
  EXPECT_LT(std::abs(rejection_prob(kQ, accept_all)), 1e-15);
  EXPECT_LT(std::abs(pareto_residual(kQ, kP, accept_all)), 1e-12);
}

TEST(ParetoResidual, LeniencyStaysAboveTheFront) {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const int v = 2 + static_cast<int>(rng.next_u64() % 6);
    const ProbVector q = dirichlet(rng, v, 1.0);
    const ProbVector p = dirichlet(rng, v, 1.0);
    const double l = 1.0 + 2.0 * rng.uniform01();
    EXPECT_GE(pareto_residual(q, p, leniency_step(q, p, l)), -1e-12);
  }
}

TEST(MinKernel, KnownValues) {
  const ProbVector m = min_kernel(kQ, kP);
  EXPECT_NEAR(m[0], 4.0 / 7.0, 1e-15);
  EXPECT_NEAR(m[1], 3.0 / 7.0, 1e-15);
  const ProbVector same = min_kernel(kP, kP);
  EXPECT_NEAR(same[0], kP[0], 1e-15);
  EXPECT_NEAR(same[1], kP[1], 1e-15);
}

TEST(MinKernel, DisjointSupportsSignalDegenerateKernel) {
  EXPECT_THROW(min_kernel({1.0, 0.0}, {0.0, 1.0}), DegenerateKernelError);
}

TEST(MinKernel, BayesEnumerationOfAcceptedTokens) {
  Rng rng(24);
  for (int trial = 0; trial < 300; ++trial) {
    const int v = 2 + static_cast<int>(rng.next_u64() % 10);
    const ProbVector q = dirichlet(rng, v, 1.0);
    const ProbVector p = dirichlet(rng, v, 1.0);
    const VerificationStep step = lossless_step(q, p);
    ProbVector accepted(v);
    double mass = 0.0;
    for (int x = 0; x < v; ++x) {
      accepted[x] = q[x] * step.accept_prob[x];
      mass += accepted[x];
    }
    for (double& a : accepted) a /= mass;
    const ProbVector kernel = min_kernel(q, p);
    for (int x = 0; x < v; ++x) EXPECT_NEAR(accepted[x], kernel[x], 1e-12);
  }
}

TEST(ExpectedAcceptLength, IdenticalModelsAcceptEverything) {
  Rng rng(25);
  const ConditionalModel m = random_markov_model(Vocab{3}, 1, 1.0, rng);
  const std::vector<TokenId> prefix = {0};
  EXPECT_NEAR(expected_accept_length_brute(m, m, prefix, 4).expected, 4.0, 1e-9);
  EXPECT_NEAR(expected_accept_length_factorized(m, m, prefix, 4).expected, 4.0, 1e-9);
}

TEST(ExpectedAcceptLength, ConstantBetaGeometricSum) {
  const ConditionalModel draft = unigram(kQ);
  const ConditionalModel target = unigram(kP);
  const double expected = 0.7 + 0.49 + 0.343;
  EXPECT_NEAR(expected_accept_length_brute(draft, target, {}, 3).expected, expected, 1e-12);
  EXPECT_NEAR(expected_accept_length_factorized(draft, target, {}, 3).expected, expected, 1e-12);
}

TEST(ExpectedAcceptLength, FactorizedMatchesBruteOnRandomInstances) {
  Rng rng(26);
  for (int trial = 0; trial < 40; ++trial) {
    const int v = 2 + static_cast<int>(rng.next_u64() % 3);
    const int k = static_cast<int>(rng.next_u64() % 2);
    const int n = 3 + static_cast<int>(rng.next_u64() % 4);
    const ConditionalModel target = random_markov_model(Vocab{v}, k, 1.0, rng);
    const ConditionalModel draft = random_markov_model(Vocab{v}, k, 1.0, rng);
    const std::vector<TokenId> prefix(k, 0);
    const double brute = expected_accept_length_brute(draft, target, prefix, n).expected;
    const double fact = expected_accept_length_factorized(draft, target, prefix, n).expected;
    EXPECT_NEAR(brute, fact, 1e-10);
    EXPECT_GE(brute, 0.0);
    EXPECT_LE(brute, n + 1e-12);
  }
}

TEST(ExpectedAcceptLength, EnumerationCapSignalsResourceError) {
  Rng rng(27);
  const ConditionalModel m = random_markov_model(Vocab{8}, 1, 1.0, rng);
  const std::vector<TokenId> prefix = {0};
  EXPECT_THROW(expected_accept_length_brute(m, m, prefix, 8, 1000), ResourceError);
}

TEST(AcceptTailProbs, ConstantBetaPowersAndMonotone) {
  const ConditionalModel draft = unigram(kQ);
  const ConditionalModel target = unigram(kP);
  const std::vector<double> tails = accept_tail_probs(draft, target, {}, 5);
  double beta_t = 1.0;
  for (std::size_t t = 0; t < tails.size(); ++t) {
    beta_t *= 0.7;
    EXPECT_NEAR(tails[t], beta_t, 1e-12);
    if (t > 0) EXPECT_LE(tails[t], tails[t - 1] + 1e-15);
  }
}

TEST(AcceptTailProbs, RandomInstancesNonIncreasing) {
  Rng rng(28);
  for (int trial = 0; trial < 30; ++trial) {
    const int v = 2 + static_cast<int>(rng.next_u64() % 3);
    const ConditionalModel target = random_markov_model(Vocab{v}, 1, 1.0, rng);
    const ConditionalModel draft = random_markov_model(Vocab{v}, 1, 1.0, rng);
    const std::vector<TokenId> prefix = {0};
    const std::vector<double> tails = accept_tail_probs(draft, target, prefix, 6);
    for (std::size_t t = 1; t < tails.size(); ++t) {
      EXPECT_LE(tails[t], tails[t - 1] + 1e-15);
    }
  }
}

TEST(ExpectedTokensPerRound, ClosedFormValues) {
  EXPECT_DOUBLE_EQ(expected_tokens_per_round_iid(0.0, 4), 1.0);
  EXPECT_DOUBLE_EQ(expected_tokens_per_round_iid(1.0, 5), 6.0);
  EXPECT_NEAR(expected_tokens_per_round_iid(0.7, 3), 2.533, 1e-12);
}

TEST(ExpectedTokensPerRound, MatchesBruteExpectationPlusOne) {
  const ConditionalModel draft = unigram(kQ);
  const ConditionalModel target = unigram(kP);
  const double e_tn = expected_accept_length_brute(draft, target, {}, 3).expected;
  EXPECT_NEAR(expected_tokens_per_round_iid(0.7, 3), e_tn + 1.0, 1e-12);
}

DecodeTrace single_round_trace(const RoundResult& round) {
  DecodeTrace trace;
  trace.generated = round.emitted;
  trace.totals.draft_calls = static_cast<std::int64_t>(round.drafted.size());
  trace.totals.target_calls = 1;
  trace.totals.accepted = round.accepted_count;
  trace.totals.rejected = round.rejection_position ? 1 : 0;
  trace.rounds = {round};
  return trace;
}

TEST(McEstimate, DegenerateAndTrivialCases) {
  Rng model_rng(29);
  const ConditionalModel target = random_markov_model(Vocab{3}, 0, 1.0, model_rng);
  const ConditionalModel draft = random_markov_model(Vocab{3}, 0, 1.0, model_rng);
  Rng rng(30);
  const RoundResult round =
      lossy_sd_round(draft, target, AcceptRule::static_ensemble(0.0), {}, 3, rng);
  const std::vector<DecodeTrace> identical(10, single_round_trace(round));
  const auto [acc, ci] = mc_estimate(identical, TraceStatistic::AcceptanceRate);
  EXPECT_DOUBLE_EQ(acc, 1.0);  // accept-all
  EXPECT_DOUBLE_EQ(ci, 0.0);   // identical traces

  EXPECT_THROW(mc_estimate(std::vector<DecodeTrace>{}, TraceStatistic::MeanTN),
               InvalidArgumentError);
  EXPECT_THROW(mc_estimate(std::vector<DecodeTrace>(1, identical[0]), TraceStatistic::MeanTN),
               InvalidArgumentError);
}

TEST(McEstimate, LosslessAcceptanceRateCoversLemmaOneValue) {
  // Pooled over 1e5 rounds, accepted / verified estimates 1 - TV = 0.7.
  const ConditionalModel draft = unigram(kQ);
  const ConditionalModel target = unigram(kP);
  Rng rng(31);
  std::int64_t accepted = 0, verified = 0;
  std::vector<DecodeTrace> traces;
  traces.reserve(2000);
  for (int i = 0; i < 100000; ++i) {
    const RoundResult r = lossy_sd_round(draft, target, AcceptRule::lossless(), {}, 5, rng);
    accepted += r.accepted_count;
    verified += r.accepted_count + (r.rejection_position ? 1 : 0);
    if (i < 2000) traces.push_back(single_round_trace(r));
  }
  const double pooled = static_cast<double>(accepted) / static_cast<double>(verified);
  const double sigma = std::sqrt(0.7 * 0.3 / static_cast<double>(verified));
  EXPECT_NEAR(pooled, 0.7, 3.0 * sigma);

  // The per-trace CI machinery covers the brute oracle for mean T_N.
  const auto [mean_tn, tn_ci] = mc_estimate(traces, TraceStatistic::MeanTN);
  const double exact = expected_accept_length_brute(draft, target, {}, 5).expected;
  EXPECT_NEAR(mean_tn, exact, tn_ci);
}

TEST(McEstimate, MeanTnCoverageOverRepeatedBatches) {
  const ConditionalModel draft = unigram(kQ);
  const ConditionalModel target = unigram(kP);
  const double exact = expected_accept_length_brute(draft, target, {}, 3).expected;
  Rng rng(32);
  int covered = 0;
  for (int batch = 0; batch < 100; ++batch) {
    std::vector<DecodeTrace> traces;
    traces.reserve(1000);
    for (int i = 0; i < 1000; ++i) {
      traces.push_back(
          single_round_trace(lossy_sd_round(draft, target, AcceptRule::lossless(), {}, 3, rng)));
    }
    const auto [mean_tn, ci] = mc_estimate(traces, TraceStatistic::MeanTN);
    if (std::abs(mean_tn - exact) <= ci) ++covered;
  }
  EXPECT_GE(covered, 97);  // 3-sigma coverage is ~99.7% per batch
}

TEST(CostModelTime, Arithmetic) {
  Rng model_rng(33);
  const ConditionalModel target = random_markov_model(Vocab{3}, 0, 1.0, model_rng);
  Rng rng(34);
  const RoundResult round =
      lossy_sd_round(target, target, AcceptRule::lossless(), {}, 5, rng);
  const DecodeTrace trace = single_round_trace(round);
  EXPECT_DOUBLE_EQ(cost_model_time(trace, 1.0, 10.0, 0.0), 15.0);
  EXPECT_DOUBLE_EQ(cost_model_time(trace, 0.0, 10.0, 0.0), 10.0);
  EXPECT_THROW(cost_model_time(trace, -1.0, 0.0, 0.0), InvalidArgumentError);
}

TEST(CostModelTime, AcceptAllCheaperThanLosslessAtFixedBudget) {
  Rng model_rng(35);
  const ConditionalModel target = random_markov_model(Vocab{6}, 1, 0.5, model_rng);
  const ConditionalModel draft = perturb_model(target, 0.6, model_rng);
  double cost_accept_all = 0.0, cost_lossless = 0.0;
  const std::vector<TokenId> prompt = {0};
  for (int i = 0; i < 50; ++i) {
    Rng rng_a(derive_seed(100, i)), rng_b(derive_seed(100, i));
    cost_accept_all += cost_model_time(
        decode(draft, target, AcceptRule::static_ensemble(0.0), prompt, 64, 5, rng_a), 1, 10, 0);
    cost_lossless += cost_model_time(
        decode(draft, target, AcceptRule::lossless(), prompt, 64, 5, rng_b), 1, 10, 0);
  }
  EXPECT_LT(cost_accept_all, cost_lossless);
}

}  // namespace
}  // namespace speclab
