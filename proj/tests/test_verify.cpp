#include "speclab/verify.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "speclab/errors.hpp"
#include "speclab/metrics.hpp"

namespace speclab {
namespace {

const ProbVector kQ = {0.7, 0.3};
const ProbVector kP = {0.4, 0.6};

ConditionalModel unigram(ProbVector row) {
  ConditionalModel m(Vocab{static_cast<int>(row.size())}, 0, 1.0);
  m.set_row({}, std::move(row));
  return m;
}

TEST(LosslessStep, StandardPair) {
  const VerificationStep step = lossless_step(kQ, kP);
  EXPECT_NEAR(step.accept_prob[0], 4.0 / 7.0, 1e-15);
  EXPECT_DOUBLE_EQ(step.accept_prob[1], 1.0);
  EXPECT_FALSE(step.degenerate_fallback);
  EXPECT_DOUBLE_EQ(step.fallback[0], 0.0);
  EXPECT_DOUBLE_EQ(step.fallback[1], 1.0);
}

TEST(LosslessStep, EqualDistributionsAcceptEverything) {
  const VerificationStep step = lossless_step(kQ, kQ);
  for (double b : step.accept_prob) EXPECT_DOUBLE_EQ(b, 1.0);
  EXPECT_TRUE(step.degenerate_fallback);
  EXPECT_NEAR(rejection_prob(kQ, step), 0.0, 1e-15);
}

TEST(LosslessStep, DisjointSupports) {
  const VerificationStep step = lossless_step({1.0, 0.0}, {0.0, 1.0});
  EXPECT_DOUBLE_EQ(step.accept_prob[0], 0.0);
  EXPECT_DOUBLE_EQ(step.accept_prob[1], 1.0);  // q = 0 convention, never drafted
  EXPECT_DOUBLE_EQ(step.fallback[1], 1.0);
}

TEST(StaticEnsembleDist, EndpointsAndMidpoint) {
  EXPECT_EQ(static_ensemble_dist(kQ, kP, 1.0), kP);
  EXPECT_EQ(static_ensemble_dist(kQ, kP, 0.0), kQ);
  const ProbVector mid = static_ensemble_dist(kQ, kP, 0.5);
  EXPECT_NEAR(mid[0], 0.55, 1e-15);
  EXPECT_NEAR(mid[1], 0.45, 1e-15);
}

TEST(EnsembleStep, RejectionProbabilityIsWTimesTv) {
  const VerificationStep step = ensemble_step(kQ, kP, 0.5);
  EXPECT_NEAR(rejection_prob(kQ, step), 0.15, 1e-15);
  EXPECT_DOUBLE_EQ(step.fallback[0], 0.0);
  EXPECT_DOUBLE_EQ(step.fallback[1], 1.0);
  EXPECT_TRUE(step.weight_used.has_value());
  EXPECT_DOUBLE_EQ(*step.weight_used, 0.5);
}

TEST(EnsembleStep, WeightOneReducesToLossless) {
  const VerificationStep ens = ensemble_step(kQ, kP, 1.0);
  const VerificationStep loss = lossless_step(kQ, kP);
  EXPECT_EQ(ens.accept_prob, loss.accept_prob);
  EXPECT_EQ(ens.fallback, loss.fallback);
  EXPECT_EQ(ens.degenerate_fallback, loss.degenerate_fallback);
}

TEST(EnsembleStep, WeightZeroAcceptsEverything) {
  const VerificationStep step = ensemble_step(kQ, kP, 0.0);
  for (double b : step.accept_prob) EXPECT_DOUBLE_EQ(b, 1.0);
  EXPECT_TRUE(step.degenerate_fallback);
}

TEST(EnsembleStep, EqualDistributionsAcceptEverything) {
  const VerificationStep step = ensemble_step(kQ, kQ, 0.5);
  for (double b : step.accept_prob) EXPECT_DOUBLE_EQ(b, 1.0);
}

TEST(EnsembleStep, WeightOutsideUnitIntervalRejected) {
  EXPECT_THROW(ensemble_step(kQ, kP, 1.2), InvalidArgumentError);
  EXPECT_THROW(ensemble_step(kQ, kP, -0.2), InvalidArgumentError);
}

TEST(DynamicStep, ZeroHeadMatchesHalfWeightEnsemble) {
  const EnsembleHead head = EnsembleHead::zeros(4);
  const VerificationStep dyn = dynamic_step(kQ, kP, head, kQ, kP);
  const VerificationStep ens = ensemble_step(kQ, kP, 0.5);
  ASSERT_TRUE(dyn.weight_used.has_value());
  EXPECT_DOUBLE_EQ(*dyn.weight_used, 0.5);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(dyn.accept_prob[i], ens.accept_prob[i], 1e-15);
    EXPECT_NEAR(dyn.fallback[i], ens.fallback[i], 1e-15);
  }
}

TEST(DynamicStep, LargeBiasSaturatesToLossless) {
  EnsembleHead head = EnsembleHead::zeros(4);
  head.bias = 30.0;
  const VerificationStep dyn = dynamic_step(kQ, kP, head, kQ, kP);
  EXPECT_GT(*dyn.weight_used, 1.0 - 1e-9);
  const VerificationStep loss = lossless_step(kQ, kP);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(dyn.accept_prob[i], loss.accept_prob[i], 1e-9);
}

TEST(DynamicStep, LargeNegativeBiasSaturatesToAcceptAll) {
  EnsembleHead head = EnsembleHead::zeros(4);
  head.bias = -30.0;
  const VerificationStep dyn = dynamic_step(kQ, kP, head, kQ, kP);
  EXPECT_LT(*dyn.weight_used, 1e-9);
  for (double b : dyn.accept_prob) EXPECT_NEAR(b, 1.0, 1e-9);
}

TEST(DynamicStep, FeatureDimensionMismatchRejected) {
  const EnsembleHead head = EnsembleHead::zeros(6);
  EXPECT_THROW(dynamic_step(kQ, kP, head, kQ, kP), DimensionError);
}

TEST(LeniencyStep, FactorScalesAcceptance) {
  const VerificationStep step = leniency_step(kQ, kP, 1.5);
  EXPECT_NEAR(step.accept_prob[0], 6.0 / 7.0, 1e-15);
  EXPECT_DOUBLE_EQ(step.accept_prob[1], 1.0);
  EXPECT_DOUBLE_EQ(step.fallback[1], 1.0);
}

TEST(LeniencyStep, UnitFactorReducesToLossless) {
  const VerificationStep len = leniency_step(kQ, kP, 1.0);
  const VerificationStep loss = lossless_step(kQ, kP);
  EXPECT_EQ(len.accept_prob, loss.accept_prob);
  EXPECT_EQ(len.fallback, loss.fallback);
}

TEST(LeniencyStep, HugeFactorAcceptsEverything) {
  const VerificationStep step = leniency_step(kQ, kP, 1e9);
  for (double b : step.accept_prob) EXPECT_DOUBLE_EQ(b, 1.0);
}

TEST(LeniencyStep, FactorBelowOneRejected) {
  EXPECT_THROW(leniency_step(kQ, kP, 0.9), InvalidArgumentError);
}

TEST(InducedTokenDist, EnsembleMatchesIntendedMixture) {
  const VerificationStep step = ensemble_step(kQ, kP, 0.5);
  const ProbVector induced = induced_token_dist(kQ, kP, step);
  EXPECT_NEAR(induced[0], 0.55, 1e-12);
  EXPECT_NEAR(induced[1], 0.45, 1e-12);
}

TEST(InducedTokenDist, LosslessMatchesTarget) {
  const VerificationStep step = lossless_step(kQ, kP);
  const ProbVector induced = induced_token_dist(kQ, kP, step);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(induced[i], kP[i], 1e-12);
}

TEST(InducedTokenDist, AcceptAllMatchesDraft) {
  const VerificationStep step = ensemble_step(kQ, kP, 0.0);
  const ProbVector induced = induced_token_dist(kQ, kP, step);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(induced[i], kQ[i], 1e-12);
}

TEST(VerifyProperties, RandomPairsSatisfyExactLaws) {
  Rng rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    const int v = 2 + static_cast<int>(rng.next_u64() % 15);
    const ProbVector q = dirichlet(rng, v, 1.0);
    const ProbVector p = dirichlet(rng, v, 1.0);
    const double w = rng.uniform01();
    const double tv = tv_distance(q, p);

    const VerificationStep step = ensemble_step(q, p, w);
    const ProbVector induced = induced_token_dist(q, p, step);
    const ProbVector nu = static_ensemble_dist(q, p, w);

    double sum = 0.0;
    for (std::size_t i = 0; i < induced.size(); ++i) {
      EXPECT_GE(induced[i], 0.0);
      EXPECT_LE(induced[i], 1.0 + 1e-12);
      EXPECT_NEAR(induced[i], nu[i], 1e-12);  // ensemble correctness
      sum += induced[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_NEAR(rejection_prob(q, step), w * tv, 1e-12);  // Lemma 1

    const ProbVector lossless_induced = induced_token_dist(q, p, lossless_step(q, p));
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(lossless_induced[i], p[i], 1e-12);
  }
}

TEST(VerifyProperties, AcceptanceMonotoneNonIncreasingInWeight) {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const ProbVector q = dirichlet(rng, 6, 1.0);
    const ProbVector p = dirichlet(rng, 6, 1.0);
    double prev = 2.0;
    for (int i = 0; i <= 10; ++i) {
      const double w = i / 10.0;
      const double accept = 1.0 - rejection_prob(q, ensemble_step(q, p, w));
      EXPECT_LE(accept, prev + 1e-15);
      prev = accept;
    }
  }
}

TEST(LossySdRound, AcceptAllRuleAcceptsFullBlock) {
  Rng model_rng(1);
  const ConditionalModel target = random_markov_model(Vocab{4}, 1, 1.0, model_rng);
  const ConditionalModel draft = random_markov_model(Vocab{4}, 1, 1.0, model_rng);
  Rng rng(5);
  const std::vector<TokenId> prefix = {0};
  for (int i = 0; i < 50; ++i) {
    const RoundResult r =
        lossy_sd_round(draft, target, AcceptRule::static_ensemble(0.0), prefix, 4, rng);
    EXPECT_EQ(r.accepted_count, 4);
    EXPECT_FALSE(r.rejection_position.has_value());
    EXPECT_EQ(r.emitted.size(), 5u);
  }
}

TEST(LossySdRound, IdenticalModelsLosslessAcceptsFullBlock) {
  Rng model_rng(2);
  const ConditionalModel target = random_markov_model(Vocab{3}, 1, 1.0, model_rng);
  Rng rng(6);
  const std::vector<TokenId> prefix = {0};
  for (int i = 0; i < 50; ++i) {
    const RoundResult r = lossy_sd_round(target, target, AcceptRule::lossless(), prefix, 3, rng);
    EXPECT_EQ(r.accepted_count, 3);
  }
}

TEST(LossySdRound, EmissionCountIsAcceptedPlusOne) {
  Rng model_rng(3);
  const ConditionalModel target = random_markov_model(Vocab{4}, 1, 0.5, model_rng);
  const ConditionalModel draft = random_markov_model(Vocab{4}, 1, 0.5, model_rng);
  Rng rng(7);
  const std::vector<TokenId> prefix = {2};
  for (int i = 0; i < 300; ++i) {
    const RoundResult r = lossy_sd_round(draft, target, AcceptRule::lossless(), prefix, 5, rng);
    EXPECT_EQ(r.emitted.size(), static_cast<std::size_t>(r.accepted_count) + 1);
    if (r.rejection_position) EXPECT_EQ(*r.rejection_position, r.accepted_count + 1);
    EXPECT_EQ(r.drafted.size(), 5u);
  }
}

TEST(LossySdRound, MeanAcceptedMatchesGeometricOracle) {
  // Unigram pair with constant beta = 0.7: E[T_3] = 0.7 + 0.49 + 0.343.
  const ConditionalModel draft = unigram({0.7, 0.3});
  const ConditionalModel target = unigram({0.4, 0.6});
  Rng rng(11);
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const RoundResult r = lossy_sd_round(draft, target, AcceptRule::lossless(), {}, 3, rng);
    sum += r.accepted_count;
    sum_sq += static_cast<double>(r.accepted_count) * r.accepted_count;
  }
  const double mean = sum / n;
  const double var = (sum_sq - n * mean * mean) / (n - 1);
  const double expected = 0.7 + 0.49 + 0.343;
  EXPECT_NEAR(mean, expected, 3.0 * std::sqrt(var / n));
}

TEST(Decode, SingleTokenBudget) {
  Rng model_rng(4);
  const ConditionalModel target = random_markov_model(Vocab{3}, 0, 1.0, model_rng);
  const ConditionalModel draft = random_markov_model(Vocab{3}, 0, 1.0, model_rng);
  Rng rng(8);
  const DecodeTrace trace = decode(draft, target, AcceptRule::lossless(), {}, 1, 4, rng);
  EXPECT_EQ(trace.generated.size(), 1u);
  EXPECT_EQ(trace.rounds.size(), 1u);
}

TEST(Decode, ExactBudgetAndBookkeeping) {
  Rng model_rng(5);
  const ConditionalModel target = random_markov_model(Vocab{4}, 1, 1.0, model_rng);
  const ConditionalModel draft = perturb_model(target, 0.4, model_rng);
  Rng rng(9);
  const std::vector<TokenId> prompt = {0};
  for (int t_max : {1, 2, 5, 17, 64}) {
    const DecodeTrace trace =
        decode(draft, target, AcceptRule::static_ensemble(0.7), prompt, t_max, 5, rng);
    EXPECT_EQ(static_cast<int>(trace.generated.size()), t_max);
    std::int64_t drafted = 0, accepted = 0, rejected = 0;
    std::size_t emitted = 0;
    for (const RoundResult& r : trace.rounds) {
      drafted += static_cast<std::int64_t>(r.drafted.size());
      accepted += r.accepted_count;
      rejected += r.rejection_position ? 1 : 0;
      emitted += r.emitted.size();
      EXPECT_EQ(r.emitted.size(), static_cast<std::size_t>(r.accepted_count) + 1);
    }
    EXPECT_EQ(trace.totals.draft_calls, drafted);
    EXPECT_EQ(trace.totals.target_calls, static_cast<std::int64_t>(trace.rounds.size()));
    EXPECT_EQ(trace.totals.accepted, accepted);
    EXPECT_EQ(trace.totals.rejected, rejected);
    EXPECT_EQ(emitted, trace.generated.size());
  }
}

TEST(Decode, LosslessJointDistributionMatchesTarget) {
  // V=2, k=0: under the lossless rule the emitted pair (x1, x2) must be two
  // independent draws from the target row.
  const ConditionalModel draft = unigram({0.7, 0.3});
  const ConditionalModel target = unigram({0.4, 0.6});
  Rng rng(13);
  const int n = 100000;
  int counts[2][2] = {{0, 0}, {0, 0}};
  for (int i = 0; i < n; ++i) {
    const DecodeTrace trace = decode(draft, target, AcceptRule::lossless(), {}, 2, 3, rng);
    counts[trace.generated[0]][trace.generated[1]]++;
  }
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const double cell = (a == 0 ? 0.4 : 0.6) * (b == 0 ? 0.4 : 0.6);
      const double sigma = std::sqrt(cell * (1 - cell) / n);
      EXPECT_NEAR(static_cast<double>(counts[a][b]) / n, cell, 3.0 * sigma);
    }
  }
}

TEST(DecodeTrace, JsonRoundTrip) {
  Rng model_rng(6);
  const ConditionalModel target = random_markov_model(Vocab{4}, 1, 1.0, model_rng);
  const ConditionalModel draft = perturb_model(target, 0.3, model_rng);
  Rng rng(10);
  const std::vector<TokenId> prompt = {1};
  DecodeTrace trace = decode(draft, target, AcceptRule::static_ensemble(0.5), prompt, 12, 3, rng);
  trace.reward = 1.0;
  const DecodeTrace back = DecodeTrace::from_json(trace.to_json());
  EXPECT_EQ(back.prompt, trace.prompt);
  EXPECT_EQ(back.generated, trace.generated);
  EXPECT_EQ(back.rounds.size(), trace.rounds.size());
  for (std::size_t i = 0; i < trace.rounds.size(); ++i) {
    EXPECT_EQ(back.rounds[i].drafted, trace.rounds[i].drafted);
    EXPECT_EQ(back.rounds[i].accepted_count, trace.rounds[i].accepted_count);
    EXPECT_EQ(back.rounds[i].rejection_position, trace.rounds[i].rejection_position);
    EXPECT_EQ(back.rounds[i].emitted, trace.rounds[i].emitted);
    EXPECT_EQ(back.rounds[i].weights, trace.rounds[i].weights);
  }
  EXPECT_EQ(back.totals.draft_calls, trace.totals.draft_calls);
  EXPECT_EQ(back.totals.target_calls, trace.totals.target_calls);
  ASSERT_TRUE(back.reward.has_value());
  EXPECT_DOUBLE_EQ(*back.reward, 1.0);
}

}  // namespace
}  // namespace speclab
