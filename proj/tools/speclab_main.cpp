// speclab: speculative-decoding laboratory over synthetic tabular models.
//
// Subcommands:
//   verify-theory   exact invariant suite (Pareto identity, acceptance law,
//                   min-kernel, expected acceptance length, position decay)
//   sweep           static-ensemble weight sweep with Pareto points
//   compare         aligned multi-rule comparison
//   train           train the dynamic ensemble head on the bundled task
//   decode          single decode, trace written as JSON
//   bench           cost-model time vs acceptance series
//
// Exit codes: 0 success, 1 invariant failure, 2 usage/config error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "speclab/config.hpp"
#include "speclab/errors.hpp"
#include "speclab/head.hpp"
#include "speclab/metrics.hpp"
#include "speclab/model.hpp"
#include "speclab/sim.hpp"
#include "speclab/theory.hpp"
#include "speclab/verify.hpp"

namespace {

using namespace speclab;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = "out";
  std::uint64_t seed = 7;
  bool seed_given = false;
  int workers = 1;
  bool workers_given = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Key=value config file");
  cmd->add_option("--set", args.overrides, "Override config key (key=value, repeatable)");
  cmd->add_option("--out", args.out_dir, "Output directory");
  cmd->add_option("--seed", args.seed, "Run seed")->each([&args](const std::string&) {
    args.seed_given = true;
  });
  cmd->add_option("--workers", args.workers, "Worker threads (0 = hardware)")
      ->each([&args](const std::string&) { args.workers_given = true; });
}

Config load_config(const CommonArgs& args) {
  Config config = Config::defaults();
  if (!args.config_path.empty()) config.load_file(args.config_path);
  for (const std::string& o : args.overrides) config.set_override(o);
  if (args.seed_given) config.set("seed", std::to_string(args.seed));
  if (args.workers_given) config.set("workers", std::to_string(args.workers));
  return config;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write output file '" + path.string() + "'");
  out << content;
}

std::vector<TokenId> parse_prompt(const std::string& text, int order) {
  if (text.empty()) return std::vector<TokenId>(order, 0);
  std::vector<TokenId> prompt;
  for (TokenId t : ConditionalModel::parse_context_key(text)) prompt.push_back(t);
  return prompt;
}

ExperimentConfig experiment_from_config(const Config& config) {
  ExperimentConfig exp;
  exp.vocab = static_cast<int>(config.get_int("model.vocab"));
  exp.order = static_cast<int>(config.get_int("model.order"));
  exp.temperature = config.get_double("model.temperature");
  exp.alpha = config.get_double("model.alpha");
  exp.perturb_eps = config.get_double("model.perturb_eps");
  exp.model_seed = config.get_u64("model.seed");

  const std::string draft_path = config.get_string("model.draft_path");
  const std::string target_path = config.get_string("model.target_path");
  if (!draft_path.empty() != !target_path.empty()) {
    throw ConfigError("model.draft_path and model.target_path must be set together");
  }
  if (!draft_path.empty()) {
    auto read = [](const std::string& p) {
      std::ifstream in(p);
      if (!in) throw ConfigError("cannot open model file '" + p + "'");
      std::stringstream ss;
      ss << in.rdbuf();
      return ConditionalModel::from_json(ss.str());
    };
    exp.models = ExperimentConfig::ModelPair{read(draft_path), read(target_path)};
  }

  exp.draft_len = static_cast<int>(config.get_int("decode.draft_len"));
  exp.t_max = static_cast<int>(config.get_int("decode.t_max"));
  exp.episodes = static_cast<int>(config.get_int("decode.episodes"));
  const std::string prompt_text = config.get_string("decode.prompt");
  if (!prompt_text.empty()) {
    exp.prompts = {parse_prompt(prompt_text, exp.order)};
  }
  exp.c_draft = config.get_double("cost.draft");
  exp.c_target = config.get_double("cost.target");
  exp.c_verify = config.get_double("cost.verify");
  exp.seed = config.get_u64("seed");
  exp.workers = static_cast<int>(config.get_int("workers"));
  return exp;
}

AcceptRule parse_rule(const std::string& text, const Config& config) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (name == "lossless") return AcceptRule::lossless();
  if (name == "ensemble") {
    if (arg.empty()) throw ConfigError("rule 'ensemble' needs a weight, e.g. ensemble:0.5");
    return AcceptRule::static_ensemble(std::stod(arg));
  }
  if (name == "accept-all") return AcceptRule::static_ensemble(0.0);
  if (name == "leniency") {
    if (arg.empty()) throw ConfigError("rule 'leniency' needs a factor, e.g. leniency:1.5");
    return AcceptRule::lenient(std::stod(arg));
  }
  if (name == "dynamic") {
    const std::string head_path = config.get_string("rules.head_path");
    if (head_path.empty()) throw ConfigError("rule 'dynamic' needs rules.head_path");
    std::ifstream in(head_path);
    if (!in) throw ConfigError("cannot open head file '" + head_path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return AcceptRule::dynamic(EnsembleHead::from_json(ss.str()));
  }
  throw ConfigError("unknown rule '" + text + "'");
}

std::vector<AcceptRule> parse_rule_list(const Config& config) {
  std::vector<AcceptRule> rules;
  std::istringstream in(config.get_string("rules.list"));
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) rules.push_back(parse_rule(item, config));
  }
  return rules;
}

CriticalTokenTaskParams task_params_from_config(const Config& config) {
  CriticalTokenTaskParams params;
  params.vocab = static_cast<int>(config.get_int("task.vocab"));
  params.horizon = static_cast<int>(config.get_int("task.horizon"));
  params.critical_positions.clear();
  for (double c : config.get_double_list("task.critical_positions")) {
    params.critical_positions.push_back(static_cast<int>(c));
  }
  params.cycle_mass = config.get_double("task.cycle_mass");
  params.critical_target_mass = config.get_double("task.critical_target_mass");
  params.critical_draft_leak = config.get_double("task.critical_draft_leak");
  return params;
}

TrainConfig train_config_from_config(const Config& config) {
  TrainConfig tc;
  tc.lambda = config.get_double("train.lambda");
  tc.learning_rate = config.get_double("train.learning_rate");
  tc.rollouts_per_prompt = static_cast<int>(config.get_int("train.rollouts_per_prompt"));
  tc.clip_eps = config.get_double("train.clip_eps");
  tc.epochs = static_cast<int>(config.get_int("train.epochs"));
  tc.updates_per_epoch = static_cast<int>(config.get_int("train.updates_per_epoch"));
  tc.eval_episodes = static_cast<int>(config.get_int("train.eval_episodes"));
  tc.eval_draft_len = static_cast<int>(config.get_int("train.eval_draft_len"));
  tc.seed = config.get_u64("seed");
  return tc;
}

/// Minimal standalone SVG line chart; enough to eyeball a sweep.
std::string svg_line_chart(const std::vector<double>& xs, const std::vector<double>& ys,
                           const std::string& x_label, const std::string& y_label) {
  const double width = 640, height = 420, margin = 60;
  double x_min = xs.front(), x_max = xs.front(), y_min = ys.front(), y_max = ys.front();
  for (double x : xs) {
    x_min = std::min(x_min, x);
    x_max = std::max(x_max, x);
  }
  for (double y : ys) {
    y_min = std::min(y_min, y);
    y_max = std::max(y_max, y);
  }
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max == y_min) y_max = y_min + 1;
  auto px = [&](double x) { return margin + (x - x_min) / (x_max - x_min) * (width - 2 * margin); };
  auto py = [&](double y) {
    return height - margin - (y - y_min) / (y_max - y_min) * (height - 2 * margin);
  };
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
     << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin
     << "' y2='" << height - margin << "' stroke='black'/>\n";
  os << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
     << height - margin << "' stroke='black'/>\n";
  os << "<polyline fill='none' stroke='steelblue' stroke-width='2' points='";
  for (std::size_t i = 0; i < xs.size(); ++i) os << px(xs[i]) << ',' << py(ys[i]) << ' ';
  os << "'/>\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    os << "<circle cx='" << px(xs[i]) << "' cy='" << py(ys[i]) << "' r='3' fill='steelblue'/>\n";
  }
  os << "<text x='" << width / 2 << "' y='" << height - margin / 3
     << "' text-anchor='middle' font-size='14'>" << x_label << "</text>\n";
  os << "<text x='" << margin / 3 << "' y='" << height / 2 << "' text-anchor='middle' "
     << "font-size='14' transform='rotate(-90 " << margin / 3 << ' ' << height / 2 << ")'>"
     << y_label << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

int cmd_verify_theory(const CommonArgs& args, int instances, bool inject_bug) {
  if (instances < 1) throw ConfigError("--instances must be >= 1");
  const Config config = load_config(args);
  const TheoryReport report = run_theory_checks(
      instances, config.get_u64("seed"), static_cast<int>(config.get_int("workers")), inject_bug);
  for (const TheoremCheck& check : report.checks) {
    std::printf("%s  %-42s max error %.3e (tol %.1e)  %s\n", check.passed ? "PASS" : "FAIL",
                check.name.c_str(), check.max_error, check.tolerance, check.detail.c_str());
  }
  if (!report.all_passed()) {
    const std::filesystem::path path = std::filesystem::path(args.out_dir) / "failing_instance.json";
    write_file(path, report.failing_instance_json);
    std::fprintf(stderr, "invariant failure; worst instance written to %s\n",
                 path.string().c_str());
    return 1;
  }
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  const Config config = load_config(args);
  const ExperimentConfig exp = experiment_from_config(config);
  const std::vector<double> grid = config.get_double_list("sweep.grid");
  const SweepResult result = sweep_static_w(exp, grid);

  const std::filesystem::path out(args.out_dir);
  write_file(out / "sweep_report.csv", result.report.to_csv());
  write_file(out / "sweep_report.json", result.report.to_json());

  std::ostringstream points;
  points.precision(12);
  points << "w,rejection_prob,tv_bias,tv_qp,max_abs_residual\n";
  for (const ParetoPoint& p : result.points) {
    points << p.w << ',' << p.rejection_prob << ',' << p.tv_bias << ',' << p.tv_qp << ','
           << p.max_abs_residual << '\n';
  }
  write_file(out / "pareto_points.csv", points.str());

  std::ostringstream acc_series, quality_series;
  acc_series.precision(12);
  quality_series.precision(12);
  acc_series << "w,acceptance_rate\n";
  quality_series << "cost_time,tv_bias\n";
  std::vector<double> ws, accs;
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    acc_series << result.points[i].w << ',' << result.report.rows[i].acceptance_rate << '\n';
    quality_series << result.report.rows[i].cost_time << ',' << result.points[i].tv_bias << '\n';
    ws.push_back(result.points[i].w);
    accs.push_back(result.report.rows[i].acceptance_rate);
  }
  write_file(out / "plot_acceptance_vs_w.csv", acc_series.str());
  write_file(out / "plot_quality_vs_cost.csv", quality_series.str());
  write_file(out / "sweep_acceptance.svg",
             svg_line_chart(ws, accs, "ensemble weight w", "acceptance rate"));

  double max_residual = 0.0;
  for (const ParetoPoint& p : result.points) {
    max_residual = std::max(max_residual, p.max_abs_residual);
  }
  std::printf("sweep: %zu points, max |pareto residual| = %.3e\n", result.points.size(),
              max_residual);
  return 0;
}

int cmd_compare(const CommonArgs& args) {
  const Config config = load_config(args);
  const ExperimentConfig exp = experiment_from_config(config);
  const std::vector<AcceptRule> rules = parse_rule_list(config);
  const ExperimentReport report = compare_rules(exp, rules);
  const std::filesystem::path out(args.out_dir);
  write_file(out / "compare_report.csv", report.to_csv());
  write_file(out / "compare_report.json", report.to_json());
  std::printf("%s", report.to_csv().c_str());
  return 0;
}

int cmd_train(const CommonArgs& args) {
  const Config config = load_config(args);
  const SyntheticTask task = make_critical_token_task(task_params_from_config(config));
  const TrainConfig tc = train_config_from_config(config);
  const TrainResult result = train(task, tc);

  std::ostringstream curve;
  curve.precision(12);
  curve << "epoch,mean_reward,acceptance_rate,mean_w,objective\n";
  for (const EpochStats& s : result.curve) {
    curve << s.epoch << ',' << s.mean_reward << ',' << s.acceptance_rate << ',' << s.mean_w << ','
          << s.objective << '\n';
  }
  const std::filesystem::path out(args.out_dir);
  write_file(out / "train_curve.csv", curve.str());
  write_file(out / "head.json", result.head.to_json());
  const EpochStats& last = result.curve.back();
  std::printf("train: final reward %.4f acceptance %.4f mean_w %.4f objective %.4f\n",
              last.mean_reward, last.acceptance_rate, last.mean_w, last.objective);
  return 0;
}

int cmd_decode(const CommonArgs& args) {
  const Config config = load_config(args);
  const ExperimentConfig exp = experiment_from_config(config);
  const auto pair = exp.build_models();
  const AcceptRule rule = parse_rule(config.get_string("decode.rule"), config);
  const auto prompts = exp.effective_prompts(pair.target.order());
  Rng rng(exp.seed);
  const DecodeTrace trace =
      decode(pair.draft, pair.target, rule, prompts.front(), exp.t_max, exp.draft_len, rng);
  const std::filesystem::path out(args.out_dir);
  write_file(out / "trace.json", trace.to_json());
  std::printf("decode: %zu tokens in %zu rounds (%lld accepted / %lld drafted)\n",
              trace.generated.size(), trace.rounds.size(),
              static_cast<long long>(trace.totals.accepted),
              static_cast<long long>(trace.totals.draft_calls));
  return 0;
}

int cmd_bench(const CommonArgs& args) {
  const Config config = load_config(args);
  const ExperimentConfig exp = experiment_from_config(config);
  const std::vector<double> grid = config.get_double_list("sweep.grid");
  const SweepResult result = sweep_static_w(exp, grid);

  std::ostringstream series;
  series.precision(12);
  series << "acceptance_rate,cost_time,w\n";
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    series << result.report.rows[i].acceptance_rate << ',' << result.report.rows[i].cost_time
           << ',' << result.points[i].w << '\n';
  }
  const std::filesystem::path out(args.out_dir);
  write_file(out / "bench_cost_vs_acceptance.csv", series.str());
  std::printf("bench: %zu points written\n", result.points.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speculative-decoding laboratory"};
  app.require_subcommand(1);

  CommonArgs args;
  int instances = 1000;
  bool inject_bug = false;

  CLI::App* verify_cmd = app.add_subcommand("verify-theory", "Run the exact invariant suite");
  add_common(verify_cmd, args);
  verify_cmd->add_option("--instances", instances, "Random instances per check");
  verify_cmd->add_flag("--inject-bug", inject_bug, "Negative control: mutate the rule")
      ->group("");  // hidden

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Static ensemble weight sweep");
  add_common(sweep_cmd, args);
  CLI::App* compare_cmd = app.add_subcommand("compare", "Compare verification rules");
  add_common(compare_cmd, args);
  CLI::App* train_cmd = app.add_subcommand("train", "Train the dynamic ensemble head");
  add_common(train_cmd, args);
  CLI::App* decode_cmd = app.add_subcommand("decode", "Run one decode and dump the trace");
  add_common(decode_cmd, args);
  CLI::App* bench_cmd = app.add_subcommand("bench", "Cost-model time vs acceptance series");
  add_common(bench_cmd, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (verify_cmd->parsed()) return cmd_verify_theory(args, instances, inject_bug);
    if (sweep_cmd->parsed()) return cmd_sweep(args);
    if (compare_cmd->parsed()) return cmd_compare(args);
    if (train_cmd->parsed()) return cmd_train(args);
    if (decode_cmd->parsed()) return cmd_decode(args);
    if (bench_cmd->parsed()) return cmd_bench(args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
