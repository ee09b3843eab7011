#include "speclab/config.hpp"

#include <fstream>
#include <sstream>

#include "speclab/errors.hpp"

namespace speclab {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

Config Config::defaults() {
  Config c;
  // Model pair.
  c.values_["model.vocab"] = "8";
  c.values_["model.order"] = "1";
  c.values_["model.temperature"] = "1.0";
  c.values_["model.alpha"] = "1.0";
  c.values_["model.perturb_eps"] = "0.3";
  c.values_["model.seed"] = "42";
  c.values_["model.draft_path"] = "";
  c.values_["model.target_path"] = "";
  // Decode geometry.
  c.values_["decode.draft_len"] = "5";
  c.values_["decode.t_max"] = "64";
  c.values_["decode.episodes"] = "200";
  c.values_["decode.prompt"] = "";  // dash-joined ids; empty -> k zeros
  c.values_["decode.rule"] = "lossless";
  // Rules for `compare`.
  c.values_["rules.list"] = "lossless,ensemble:0.5,ensemble:0.0";
  c.values_["rules.head_path"] = "";
  // Static sweep.
  c.values_["sweep.grid"] = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
  // Cost model.
  c.values_["cost.draft"] = "1.0";
  c.values_["cost.target"] = "10.0";
  c.values_["cost.verify"] = "0.0";
  // Training; calibrated for the bundled critical-token task.
  c.values_["train.lambda"] = "0.03";
  c.values_["train.learning_rate"] = "0.1";
  c.values_["train.rollouts_per_prompt"] = "32";
  c.values_["train.clip_eps"] = "0.2";
  c.values_["train.epochs"] = "2";
  c.values_["train.updates_per_epoch"] = "1000";
  c.values_["train.eval_episodes"] = "1000";
  c.values_["train.eval_draft_len"] = "5";
  // Bundled critical-token task.
  c.values_["task.vocab"] = "8";
  c.values_["task.horizon"] = "32";
  c.values_["task.critical_positions"] = "7,14,21,28";
  c.values_["task.cycle_mass"] = "0.8";
  c.values_["task.critical_target_mass"] = "0.9";
  c.values_["task.critical_draft_leak"] = "0.02";
  // Theory verification.
  c.values_["verify.instances"] = "1000";
  // Run-wide.
  c.values_["seed"] = "7";
  c.values_["workers"] = "1";
  return c;
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  parse_text(buffer.str(), path);
}

void Config::parse_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (values_.find(key) == values_.end()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown config key '" + key +
                        "'");
    }
    values_[key] = value;
  }
}

void Config::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  if (values_.find(key) == values_.end()) {
    throw ConfigError("override references unknown config key '" + key + "'");
  }
  values_[key] = value;
}

void Config::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file '" + path + "'");
  out << to_text();
}

std::string Config::to_text() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) os << key << " = " << value << "\n";
  return os.str();
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string& Config::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  const std::string& raw = get_string(key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + raw + "' is not a number");
  }
}

std::int64_t Config::get_int(const std::string& key) const {
  const std::string& raw = get_string(key);
  try {
    std::size_t pos = 0;
    const std::int64_t v = std::stoll(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + raw + "' is not an integer");
  }
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string& raw = get_string(key);
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + raw + "' is not an unsigned integer");
  }
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  const std::string& raw = get_string(key);
  std::vector<double> out;
  if (trim(raw).empty()) return out;
  std::istringstream in(raw);
  std::string item;
  while (std::getline(in, item, ',')) {
    const std::string t = trim(item);
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(t, &pos));
      if (pos != t.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': '" + t + "' is not a number");
    }
  }
  return out;
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

}  // namespace speclab
