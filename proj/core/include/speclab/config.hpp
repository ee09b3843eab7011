#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace speclab {

/// Flat key=value configuration with a fixed key registry. Unknown keys in
/// files or overrides are reported with their path. Serialization is
/// idempotent: load -> override -> save -> load is a fixed point.
class Config {
 public:
  /// Registry of all known keys with their defaults.
  static Config defaults();

  void load_file(const std::string& path);
  void parse_text(const std::string& text, const std::string& origin);
  /// Applies one "key=value" override; the key must already exist.
  void set_override(const std::string& assignment);
  void save_file(const std::string& path) const;
  std::string to_text() const;

  bool has(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  /// Comma-separated list of doubles; empty string -> empty list.
  std::vector<double> get_double_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace speclab
