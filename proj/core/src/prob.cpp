#include "speclab/prob.hpp"

#include <cmath>
#include <string>

#include "speclab/errors.hpp"

namespace speclab {

bool is_prob_vector(std::span<const double> v, double tol) {
  if (v.empty()) return false;
  double sum = 0.0;
  for (double x : v) {
    if (!(x >= 0.0) || !std::isfinite(x)) return false;
    sum += x;
  }
  return std::abs(sum - 1.0) <= tol;
}

void validate_prob_vector(std::span<const double> v, const char* what) {
  if (!is_prob_vector(v)) {
    throw InvalidArgumentError(std::string(what) + ": not a valid probability vector");
  }
}

ProbVector normalized(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    throw InvalidArgumentError("normalized: nonpositive total mass");
  }
  ProbVector out(v.begin(), v.end());
  for (double& x : out) x /= sum;
  return out;
}

int argmax(std::span<const double> v) {
  if (v.empty()) throw InvalidArgumentError("argmax: empty vector");
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

ProbVector mix(std::span<const double> q, std::span<const double> p, double w) {
  if (q.size() != p.size()) throw DimensionError("mix: length mismatch");
  ProbVector out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = w * p[i] + (1.0 - w) * q[i];
  return out;
}

}  // namespace speclab
