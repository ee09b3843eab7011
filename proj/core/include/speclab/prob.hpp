#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace speclab {

/// Discrete distribution over a finite vocabulary. Entries are nonnegative
/// and sum to 1 within kProbSumTol.
using ProbVector = std::vector<double>;

using TokenId = std::int32_t;

inline constexpr double kProbSumTol = 1e-9;

/// True iff entries are nonnegative and sum to 1 within tol.
bool is_prob_vector(std::span<const double> v, double tol = kProbSumTol);

/// Throws InvalidArgumentError if `v` is not a valid probability vector.
void validate_prob_vector(std::span<const double> v, const char* what);

/// Rescales to sum 1. Throws InvalidArgumentError on nonpositive total mass.
ProbVector normalized(std::span<const double> v);

/// Index of the largest entry; ties broken by lowest index.
int argmax(std::span<const double> v);

/// w*p + (1-w)*q elementwise.
ProbVector mix(std::span<const double> q, std::span<const double> p, double w);

}  // namespace speclab
