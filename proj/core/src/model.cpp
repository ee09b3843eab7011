#include "speclab/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "json.hpp"
#include "speclab/errors.hpp"

namespace speclab {

ConditionalModel::ConditionalModel(Vocab vocab, int order, double temperature)
    : vocab_(vocab), order_(order), temperature_(temperature) {
  if (vocab.size < 2) throw ModelError("vocab size must be >= 2");
  if (order < 0) throw ModelError("order must be >= 0");
  if (!(temperature >= 0.0)) throw ModelError("temperature must be >= 0");
}

void ConditionalModel::set_temperature(double t) {
  if (!(t >= 0.0)) throw ModelError("temperature must be >= 0");
  temperature_ = t;
}

std::string ConditionalModel::context_key(std::span<const TokenId> context) {
  std::string key;
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (i > 0) key += '-';
    key += std::to_string(context[i]);
  }
  return key;
}

std::vector<TokenId> ConditionalModel::parse_context_key(const std::string& key) {
  std::vector<TokenId> out;
  if (key.empty()) return out;
  std::size_t pos = 0;
  while (pos <= key.size()) {
    std::size_t dash = key.find('-', pos);
    if (dash == std::string::npos) dash = key.size();
    out.push_back(static_cast<TokenId>(std::stol(key.substr(pos, dash - pos))));
    pos = dash + 1;
    if (dash == key.size()) break;
  }
  return out;
}

void ConditionalModel::set_row(std::span<const TokenId> context, ProbVector row) {
  if (static_cast<int>(context.size()) > order_) {
    throw ModelError("context longer than model order");
  }
  if (static_cast<int>(row.size()) != vocab_.size) {
    throw ModelError("row length does not match vocab size");
  }
  validate_prob_vector(row, "model row");
  table_[context_key(context)] = std::move(row);
}

bool ConditionalModel::has_row(std::span<const TokenId> context) const {
  return table_.count(context_key(context)) > 0;
}

const ProbVector& ConditionalModel::base_row(std::span<const TokenId> context) const {
  auto it = table_.find(context_key(context));
  if (it == table_.end()) {
    throw ModelError("unknown context key '" + context_key(context) + "'");
  }
  return it->second;
}

std::vector<std::string> ConditionalModel::context_keys() const {
  std::vector<std::string> keys;
  keys.reserve(table_.size());
  for (const auto& [k, _] : table_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

const ProbVector& ConditionalModel::base_row_by_key(const std::string& key) const {
  auto it = table_.find(key);
  if (it == table_.end()) throw ModelError("unknown context key '" + key + "'");
  return it->second;
}

namespace {

ProbVector apply_temperature(const ProbVector& row, double t) {
  if (t == 1.0) return row;
  if (t == 0.0) {
    // Argmax limit; ties resolved toward the lowest token id.
    ProbVector out(row.size(), 0.0);
    out[argmax(row)] = 1.0;
    return out;
  }
  ProbVector out(row.size());
  double sum = 0.0;
  const double inv_t = 1.0 / t;
  for (std::size_t i = 0; i < row.size(); ++i) {
    out[i] = row[i] > 0.0 ? std::pow(row[i], inv_t) : 0.0;
    sum += out[i];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    throw ModelError("temperature scaling produced no usable mass");
  }
  for (double& x : out) x /= sum;
  return out;
}

}  // namespace

ProbVector cond_dist(const ConditionalModel& model, const Context& ctx) {
  const int window = std::min(ctx.window, model.order());
  const std::size_t len = std::min<std::size_t>(ctx.tokens.size(), window);
  std::span<const TokenId> tail(ctx.tokens.data() + (ctx.tokens.size() - len), len);
  for (TokenId t : tail) {
    if (t < 0 || t >= model.vocab_size()) {
      throw ModelError("context token " + std::to_string(t) + " outside vocab");
    }
  }
  return apply_temperature(model.base_row(tail), model.temperature());
}

TokenId sample_token(const ConditionalModel& model, const Context& ctx, Rng& rng) {
  const ProbVector dist = cond_dist(model, ctx);
  const double u = rng.uniform01();
  double cum = 0.0;
  TokenId last_positive = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] > 0.0) last_positive = static_cast<TokenId>(i);
    cum += dist[i];
    if (u < cum) return static_cast<TokenId>(i);
  }
  return last_positive;  // u landed in the tail rounding gap
}

namespace {

std::size_t dense_context_count(int vocab, int order, std::size_t cap) {
  std::size_t count = 1;
  for (int i = 0; i < order; ++i) {
    if (count > cap / static_cast<std::size_t>(vocab)) {
      throw ResourceError("dense table of " + std::to_string(vocab) + "^" +
                          std::to_string(order) + " contexts exceeds cap");
    }
    count *= static_cast<std::size_t>(vocab);
  }
  if (count > cap) throw ResourceError("dense table exceeds cap");
  return count;
}

}  // namespace

ConditionalModel random_markov_model(Vocab vocab, int order, double alpha, Rng& rng,
                                     std::size_t table_cap) {
  if (!(alpha > 0.0)) throw InvalidArgumentError("random_markov_model: alpha must be > 0");
  const std::size_t rows = dense_context_count(vocab.size, order, table_cap);
  ConditionalModel model(vocab, order, 1.0);
  std::vector<TokenId> ctx(order, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t rem = r;
    for (int i = order - 1; i >= 0; --i) {
      ctx[i] = static_cast<TokenId>(rem % vocab.size);
      rem /= vocab.size;
    }
    model.set_row(ctx, dirichlet(rng, vocab.size, alpha));
  }
  return model;
}

ConditionalModel perturb_model(const ConditionalModel& base, double eps, Rng& rng) {
  if (!(eps >= 0.0 && eps <= 1.0)) {
    throw InvalidArgumentError("perturb_model: eps must lie in [0,1]");
  }
  ConditionalModel out(Vocab{base.vocab_size()}, base.order(), base.temperature());
  for (const std::string& key : base.context_keys()) {
    const ProbVector& row = base.base_row_by_key(key);
    const std::vector<TokenId> ctx = ConditionalModel::parse_context_key(key);
    if (eps == 0.0) {
      out.set_row(ctx, row);
      continue;
    }
    const std::vector<double> noise = dirichlet(rng, base.vocab_size(), 1.0);
    ProbVector mixed(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
      mixed[i] = (1.0 - eps) * row[i] + eps * noise[i];
    }
    out.set_row(ctx, std::move(mixed));
  }
  return out;
}

std::string ConditionalModel::to_json() const {
  nlohmann::json j;
  j["vocab_size"] = vocab_.size;
  j["order"] = order_;
  j["temperature"] = temperature_;
  nlohmann::json rows = nlohmann::json::object();
  for (const std::string& key : context_keys()) rows[key] = table_.at(key);
  j["rows"] = std::move(rows);
  return j.dump(2);
}

ConditionalModel ConditionalModel::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ModelError(std::string("model JSON parse error: ") + e.what());
  }
  try {
    ConditionalModel model(Vocab{j.at("vocab_size").get<int>()}, j.at("order").get<int>(),
                           j.at("temperature").get<double>());
    for (const auto& [key, row] : j.at("rows").items()) {
      model.set_row(parse_context_key(key), row.get<ProbVector>());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("model JSON field error: ") + e.what());
  }
}

}  // namespace speclab
