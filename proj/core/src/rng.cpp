#include "speclab/rng.hpp"

#include "speclab/errors.hpp"

namespace speclab {

std::vector<double> dirichlet(Rng& rng, int dim, double alpha) {
  if (dim < 1) throw InvalidArgumentError("dirichlet: dim must be >= 1");
  if (!(alpha > 0.0)) throw InvalidArgumentError("dirichlet: alpha must be > 0");
  std::vector<double> out(dim);
  double sum = 0.0;
  for (double& x : out) {
    x = rng.gamma(alpha);
    sum += x;
  }
  if (sum <= 0.0) {
    // All gammas underflowed (tiny alpha); fall back to a one-hot draw.
    std::size_t i = rng.next_u64() % out.size();
    for (double& x : out) x = 0.0;
    out[i] = 1.0;
    return out;
  }
  for (double& x : out) x /= sum;
  return out;
}

}  // namespace speclab
