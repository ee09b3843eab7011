#include "speclab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "json.hpp"
#include "speclab/errors.hpp"
#include "speclab/metrics.hpp"
#include "speclab/model.hpp"
#include "speclab/parallel.hpp"
#include "speclab/prob.hpp"
#include "speclab/rng.hpp"
#include "speclab/verify.hpp"

namespace speclab {

namespace {

struct PairInstance {
  ProbVector q;
  ProbVector p;
};

PairInstance random_pair(Rng& rng, int min_vocab = 2, int max_vocab = 16) {
  const int v = min_vocab + static_cast<int>(rng.next_u64() % (max_vocab - min_vocab + 1));
  return {dirichlet(rng, v, 1.0), dirichlet(rng, v, 1.0)};
}

std::string instance_json(const std::string& check, const PairInstance& inst, double w,
                          double error) {
  nlohmann::json j;
  j["check"] = check;
  j["q"] = inst.q;
  j["p"] = inst.p;
  j["w"] = w;
  j["error"] = error;
  return j.dump(2);
}

struct WorstCase {
  double error = 0.0;
  std::string instance;
  std::mutex mutex;

  void offer(double err, const std::string& check, const PairInstance& inst, double w) {
    std::lock_guard<std::mutex> lock(mutex);
    if (err > error || instance.empty()) {
      error = std::max(error, err);
      instance = instance_json(check, inst, w, err);
    }
  }
};

/// Negative-control mutation: inflate the accept probabilities (breaks the
/// acceptance law) and swap the residual fallback for a uniform one (moves
/// the pair off the Pareto front).
void mutate_step(VerificationStep& step) {
  for (double& b : step.accept_prob) b = std::min(1.0, 1.02 * b);
  if (!step.degenerate_fallback) {
    const double u = 1.0 / static_cast<double>(step.fallback.size());
    for (double& f : step.fallback) f = u;
  }
}

const std::vector<double> kWeightGrid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

}  // namespace

TheoryReport run_theory_checks(int instances, std::uint64_t seed, int workers, bool inject_bug) {
  if (instances < 1) throw InvalidArgumentError("theory checks: instances must be >= 1");
  TheoryReport report;

  auto finish_check = [&report](const std::string& name, WorstCase& worst, double tol,
                                const std::string& detail) {
    report.checks.push_back({name, worst.error < tol, worst.error, tol, detail});
    if (worst.error >= tol && report.failing_instance_json.empty()) {
      report.failing_instance_json = worst.instance;
    }
  };

  // Proposition 1: rejection + TV(induced, p) = TV(q, p) at every weight.
  {
    WorstCase worst;
    parallel_for(instances, workers, [&](std::size_t i) {
      Rng rng(derive_seed(seed, 0x100 + i));
      const PairInstance inst = random_pair(rng);
      for (double w : kWeightGrid) {
        VerificationStep step = ensemble_step(inst.q, inst.p, w);
        if (inject_bug) mutate_step(step);
        const double err = std::abs(pareto_residual(inst.q, inst.p, step));
        worst.offer(err, "pareto_identity", inst, w);
      }
    });
    finish_check("Proposition 1 (Pareto identity)", worst, 1e-12,
                 "max |rejection + TV(induced,p) - TV(q,p)|");
  }

  // Lemma 1: acceptance probability equals 1 - w TV(q, p).
  {
    WorstCase worst;
    parallel_for(instances, workers, [&](std::size_t i) {
      Rng rng(derive_seed(seed, 0x200 + i));
      const PairInstance inst = random_pair(rng);
      const double tv = tv_distance(inst.q, inst.p);
      for (double w : kWeightGrid) {
        VerificationStep step = ensemble_step(inst.q, inst.p, w);
        if (inject_bug) mutate_step(step);
        const double accept = 1.0 - rejection_prob(inst.q, step);
        const double err = std::abs(accept - (1.0 - w * tv));
        worst.offer(err, "acceptance_law", inst, w);
      }
    });
    finish_check("Lemma 1 (acceptance law)", worst, 1e-12, "max |accept - (1 - w TV)|");
  }

  // Lossless exactness: induced one-step law equals p.
  {
    WorstCase worst;
    parallel_for(instances, workers, [&](std::size_t i) {
      Rng rng(derive_seed(seed, 0x300 + i));
      const PairInstance inst = random_pair(rng);
      const VerificationStep step = lossless_step(inst.q, inst.p);
      const ProbVector induced = induced_token_dist(inst.q, inst.p, step);
      double err = 0.0;
      for (std::size_t x = 0; x < induced.size(); ++x) {
        err = std::max(err, std::abs(induced[x] - inst.p[x]));
      }
      worst.offer(err, "lossless_exact", inst, 1.0);
    });
    finish_check("Lossless exactness", worst, 1e-12, "max |induced - p| entrywise");
  }

  // Lemma 2: the conditional law of an accepted token is the min-kernel.
  {
    WorstCase worst;
    parallel_for(instances, workers, [&](std::size_t i) {
      Rng rng(derive_seed(seed, 0x400 + i));
      const PairInstance inst = random_pair(rng);
      const VerificationStep step = lossless_step(inst.q, inst.p);
      ProbVector accept_law(inst.q.size());
      double accept_mass = 0.0;
      for (std::size_t x = 0; x < inst.q.size(); ++x) {
        accept_law[x] = inst.q[x] * step.accept_prob[x];
        accept_mass += accept_law[x];
      }
      for (double& a : accept_law) a /= accept_mass;
      const ProbVector kernel = min_kernel(inst.q, inst.p);
      double err = 0.0;
      for (std::size_t x = 0; x < kernel.size(); ++x) {
        err = std::max(err, std::abs(accept_law[x] - kernel[x]));
      }
      worst.offer(err, "min_kernel", inst, 1.0);
    });
    finish_check("Lemma 2 (min-kernel)", worst, 1e-12,
                 "max |accepted-law - min-kernel| entrywise");
  }

  // Theorem 2: factorized expected acceptance length equals brute force.
  {
    const int model_instances = std::max(1, instances / 10);
    WorstCase worst;
    parallel_for(model_instances, workers, [&](std::size_t i) {
      Rng rng(derive_seed(seed, 0x500 + i));
      const int v = 2 + static_cast<int>(rng.next_u64() % 3);       // V in {2,3,4}
      const int k = static_cast<int>(rng.next_u64() % 2);           // k in {0,1}
      const int n = 3 + 2 * static_cast<int>(rng.next_u64() % 3);   // N in {3,5,7}
      const ConditionalModel target = random_markov_model(Vocab{v}, k, 1.0, rng);
      const ConditionalModel draft = random_markov_model(Vocab{v}, k, 1.0, rng);
      const std::vector<TokenId> prefix(k, 0);
      const double brute = expected_accept_length_brute(draft, target, prefix, n).expected;
      const double fact = expected_accept_length_factorized(draft, target, prefix, n).expected;
      const double err = std::abs(brute - fact);
      PairInstance inst{draft.base_row(prefix), target.base_row(prefix)};
      worst.offer(err, "expected_length", inst, static_cast<double>(n));
    });
    finish_check("Theorem 2 (expected acceptance length)", worst, 1e-10,
                 "max |factorized - brute|");
  }

  // Position decay: enumerated tails never increase with the step index.
  {
    const int model_instances = std::max(1, instances / 10);
    WorstCase worst;
    parallel_for(model_instances, workers, [&](std::size_t i) {
      Rng rng(derive_seed(seed, 0x600 + i));
      const int v = 2 + static_cast<int>(rng.next_u64() % 3);
      const int k = static_cast<int>(rng.next_u64() % 2);
      const ConditionalModel target = random_markov_model(Vocab{v}, k, 1.0, rng);
      const ConditionalModel draft = random_markov_model(Vocab{v}, k, 1.0, rng);
      const std::vector<TokenId> prefix(k, 0);
      const std::vector<double> tails = accept_tail_probs(draft, target, prefix, 6);
      double err = 0.0;
      for (std::size_t t = 1; t < tails.size(); ++t) {
        err = std::max(err, tails[t] - tails[t - 1]);
      }
      PairInstance inst{draft.base_row(prefix), target.base_row(prefix)};
      worst.offer(std::max(err, 0.0), "position_decay", inst, 0.0);
    });
    finish_check("Position decay (tail monotonicity)", worst, 1e-15,
                 "max increase of P(T >= t) in t");
  }

  return report;
}

}  // namespace speclab
