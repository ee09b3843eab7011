#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "speclab/prob.hpp"
#include "speclab/rng.hpp"

namespace speclab {

struct Vocab {
  int size = 2;  // V >= 2
};

/// Prefix of generated tokens together with the model order that bounds how
/// much of it matters. Only the last `window` tokens influence a lookup.
struct Context {
  std::vector<TokenId> tokens;
  int window = 0;
};

/// Tabular autoregressive model of fixed order k: every context of length
/// <= k that the model knows maps to a distribution over the vocabulary.
/// Temperature is applied at query time; the stored rows are the base
/// distributions.
class ConditionalModel {
 public:
  ConditionalModel() = default;
  ConditionalModel(Vocab vocab, int order, double temperature);

  int vocab_size() const { return vocab_.size; }
  int order() const { return order_; }
  double temperature() const { return temperature_; }
  void set_temperature(double t);

  /// Registers the base distribution for a context (length <= order).
  void set_row(std::span<const TokenId> context, ProbVector row);

  bool has_row(std::span<const TokenId> context) const;
  const ProbVector& base_row(std::span<const TokenId> context) const;

  std::size_t row_count() const { return table_.size(); }

  /// Table keys in deterministic (sorted) order.
  std::vector<std::string> context_keys() const;
  const ProbVector& base_row_by_key(const std::string& key) const;

  /// Dash-joined token ids; empty string for the empty context.
  static std::string context_key(std::span<const TokenId> context);
  static std::vector<TokenId> parse_context_key(const std::string& key);

  std::string to_json() const;
  static ConditionalModel from_json(const std::string& text);

 private:
  friend ProbVector cond_dist(const ConditionalModel&, const Context&);

  Vocab vocab_;
  int order_ = 0;
  double temperature_ = 1.0;
  std::unordered_map<std::string, ProbVector> table_;
};

/// Temperature-adjusted conditional distribution given the last
/// min(window, |tokens|) tokens of the context. Pure function of its inputs.
/// Throws ModelError when the context key is absent from the table.
ProbVector cond_dist(const ConditionalModel& model, const Context& ctx);

/// Samples one token from cond_dist by inverse CDF. Reproducible per seed.
TokenId sample_token(const ConditionalModel& model, const Context& ctx, Rng& rng);

inline constexpr std::size_t kDefaultTableCap = 1'000'000;

/// Dense order-k model whose V^k rows are independent symmetric
/// Dirichlet(alpha) draws. Throws ResourceError when V^k exceeds `table_cap`.
ConditionalModel random_markov_model(Vocab vocab, int order, double alpha, Rng& rng,
                                     std::size_t table_cap = kDefaultTableCap);

/// Mixes every row of `base` with fresh Dirichlet(1) noise:
/// row' = (1-eps)*row + eps*noise. eps = 0 returns an exact copy.
ConditionalModel perturb_model(const ConditionalModel& base, double eps, Rng& rng);

}  // namespace speclab
