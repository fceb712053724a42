#include "sctlab/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "sctlab/config.hpp"
#include "sctlab/errors.hpp"
#include "sctlab/grad_check.hpp"
#include "sctlab/training.hpp"

namespace sctlab::cli {

using nlohmann::json;

namespace {

constexpr std::uint64_t kInitSalt = 0x696e6974;

class Logger {
 public:
  explicit Logger(std::ostream& err) : err_(err), t0_(std::chrono::steady_clock::now()) {}
  void info(std::string_view event, json fields = json::object()) const {
    fields["level"] = "info";
    fields["event"] = event;
    fields["elapsed_s"] =
        std::round(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count() *
                   1000.0) /
        1000.0;
    err_ << fields.dump() << '\n' << std::flush;
  }

 private:
  std::ostream& err_;
  std::chrono::steady_clock::time_point t0_;
};

void error_line(std::ostream& err, std::string_view kind, std::string_view message) {
  err << json{{"level", "error"}, {"error", kind}, {"message", message}}.dump() << '\n';
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  return f;
}

/// Writes to `path`, or to `out` when the path is empty.
void emit(const std::string& path, std::ostream& out, const std::string& text) {
  if (path.empty()) {
    out << text;
    return;
  }
  auto f = open_out(path);
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::vector<double> parse_rates(const std::string& text) {
  std::vector<double> rates;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double p = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), p);
    if (ec != std::errc() || ptr != item.data() + item.size()) {
      throw cfg::ConfigError("bad blend rate '" + item + "'");
    }
    rates.push_back(p);
  }
  if (rates.empty()) throw cfg::ConfigError("no blend rates given");
  return rates;
}

void check_env(const cfg::RunConfig& config, env::Task model_task) {
  if (!config.is_explicit("env.task") || config.task() == model_task) return;
  throw DimensionError("model expects " + std::string(env::task_name(model_task)) +
                       " observations of " + std::to_string(env::predator_obs_dim(model_task)) +
                       " dims, env " + std::string(env::task_name(config.task())) + " provides " +
                       std::to_string(env::predator_obs_dim(config.task())));
}

/// Shared state of one invocation: flag overrides are applied after the
/// config file regardless of their position on the command line.
struct Invocation {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;

  void bind(CLI::App* app, const std::string& flag, const std::string& key,
            const std::string& help) {
    app->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { flags.emplace_back(key, v); }, help);
  }

  /// Base (inherited) values must already be in `config`.
  void finish(cfg::RunConfig& config) const {
    if (!config_path.empty()) config.load_file(config_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw cfg::ConfigError("--set expects key=value, got '" + s + "'");
      config.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [key, value] : flags) config.set(key, value);
    if (!config.is_explicit("seed")) {
      if (const char* env_seed = std::getenv("SCTLAB_SEED"); env_seed && *env_seed) {
        config.set("seed", env_seed);
      }
    }
  }
};

eval::Anchors anchors_for(const std::string& sidecar, const std::string& out_path,
                          const cfg::RunConfig& config) {
  std::filesystem::path p = sidecar;
  if (p.empty()) {
    p = std::filesystem::path(out_path).parent_path() / "anchors.json";
  }
  return eval::cached_anchors(p, config.task(), config.env());
}

eval::PredatorFactory factory(const model::Model& m) {
  return [&m]() -> std::unique_ptr<policy::PredatorPolicy> { return m.make_agent(); };
}

eval::RolloutOptions rollout_options(const cfg::RunConfig& config) {
  eval::RolloutOptions o;
  o.episodes = config.at("eval.episodes");
  o.eps = config.at("eval.eps");
  o.jobs = config.at("eval.jobs");
  o.seed = config.seed();
  o.env = config.env();
  if (o.episodes == 0) throw cfg::ConfigError("[eval] episodes must be positive");
  return o;
}

std::string level_of(const json& meta) {
  if (meta.contains("run") && meta["run"].contains("data")) {
    return meta["run"]["data"].value("level", "");
  }
  return "";
}

int gen_data(const Invocation& inv, const std::string& out_path, std::ostream&, const Logger& log) {
  cfg::RunConfig config;
  inv.finish(config);
  const auto ds = data::generate(config.task(), config.level(), config.transitions(), config.seed(),
                                 config.env(), config.tree());
  data::save(ds, out_path);
  log.info("gen-data", {{"out", out_path},
                        {"episodes", ds.episodes.size()},
                        {"mean_return", ds.header.mean_return}});
  return 0;
}

int train_cmd(const Invocation& inv, const std::string& data_path, const std::string& out_path,
              const std::string& metrics_path, std::ostream& out, const Logger& log) {
  const auto ds = data::load(data_path);
  cfg::RunConfig config;
  config.inherit(ds.header.run_config, "env");
  inv.finish(config);
  if (config.is_explicit("env.task") && config.task() != ds.header.task) {
    throw DimensionError("dataset is " + std::string(env::task_name(ds.header.task)) +
                         ", config asks for " + std::string(env::task_name(config.task())));
  }
  config.set("env.task", env::task_name(ds.header.task));
  config.set("data.level", data::level_name(ds.header.level));
  std::size_t n = 0;
  for (const auto& e : ds.episodes) n += e.size();
  config.set_json("data.transitions", n);

  auto tc = config.train();
  tc.checkpoint = out_path;
  const auto m = model::Model::create(config.model(), ds.header.task, ds.header.normalizer,
                                      ds.header.mean_return, derive_seed(config.seed(), kInitSalt));
  log.info("train-start", {{"variant", model::variant_name(m->variant())},
                           {"parameters", m->num_parameters()},
                           {"steps", tc.steps_per_epoch * tc.epochs}});
  const auto result = train::train(*m, ds, tc, [&](const train::MetricRow& r) {
    log.info("train", {{"step", r.step},
                       {"belief_loss", r.loss.belief},
                       {"policy_loss", r.loss.policy},
                       {"total", r.loss.total},
                       {"lr", r.lr}});
  });
  std::ostringstream csv;
  train::write_metrics_csv(csv, result.metrics);
  emit(metrics_path, out, csv.str());
  log.info("train-done", {{"out", out_path}, {"total", result.last.total}});
  return 0;
}

int eval_cmd(const Invocation& inv, const std::string& model_path, const std::string& out_path,
             const std::string& anchors_path, std::ostream& out, const Logger& log) {
  const auto loaded = model::load_model(model_path);
  cfg::RunConfig config;
  if (loaded.meta.contains("run")) config.inherit(loaded.meta["run"], "env");
  config.set_json("env.task", std::string(env::task_name(loaded.model->task())));
  // Inherited task only; an explicit --env must still match the model.
  cfg::RunConfig probe;
  inv.finish(probe);
  check_env(probe, loaded.model->task());
  inv.finish(config);

  const auto& m = *loaded.model;
  const auto anchors = anchors_for(anchors_path, out_path, config);
  const auto spec = policy::PolicySpec::parse(config.at("eval.prey").get<std::string>());
  auto report = eval::rollout_eval(factory(m), spec, m.task(), anchors, rollout_options(config));
  report.model = std::filesystem::path(model_path).stem().string();
  report.variant = std::string(model::variant_name(m.variant()));
  report.level = level_of(loaded.meta);
  report.run_config = config.tree();
  emit(out_path, out, eval::to_json(report).dump(2) + "\n");
  json fields = {{"opponent", report.opponent},
                 {"score_mean", report.score_mean},
                 {"score_std", report.score_std}};
  fields["accuracy"] = report.accuracy ? json(*report.accuracy) : json(nullptr);
  log.info("eval", fields);
  return 0;
}

int sweep_cmd(const Invocation& inv, const std::string& model_path, const std::string& out_path,
              const std::string& anchors_path, std::ostream& out, const Logger& log) {
  const auto loaded = model::load_model(model_path);
  cfg::RunConfig config;
  if (loaded.meta.contains("run")) config.inherit(loaded.meta["run"], "env");
  config.set_json("env.task", std::string(env::task_name(loaded.model->task())));
  cfg::RunConfig probe;
  inv.finish(probe);
  check_env(probe, loaded.model->task());
  inv.finish(config);

  const auto& m = *loaded.model;
  const auto anchors = anchors_for(anchors_path, out_path, config);
  const auto rates = parse_rates(config.at("eval.rates").get<std::string>());
  const auto rows = eval::blend_sweep(factory(m), m.task(), rates, anchors, rollout_options(config));
  std::ostringstream csv;
  csv << "p,score_mean,score_std,accuracy,episodes\n";
  csv.precision(17);
  for (const auto& r : rows) {
    csv << r.p << ',' << r.score_mean << ',' << r.score_std << ',';
    if (r.accuracy) csv << *r.accuracy;
    csv << ',' << r.episodes << '\n';
    log.info("sweep", {{"p", r.p}, {"score_mean", r.score_mean}});
  }
  emit(out_path, out, csv.str());
  return 0;
}

int gradcheck_cmd(const Invocation& inv, std::ostream& out, std::ostream& err) {
  cfg::RunConfig config;
  inv.finish(config);
  auto mc = config.model();
  mc.transformer.d_model = 8;
  mc.transformer.n_layers = 1;
  mc.transformer.n_heads = 1;
  mc.transformer.context_len = 4;
  mc.transformer.dropout = 0.0;
  mc.bc = {4, 8, 2, 0.0};
  const auto env_cfg = config.env();
  const auto ds = data::generate(config.task(), data::Level::Expert,
                                 static_cast<std::size_t>(env_cfg.episode_length), config.seed(),
                                 env_cfg);
  const auto m = model::Model::create(mc, config.task(), ds.header.normalizer,
                                      ds.header.mean_return, derive_seed(config.seed(), kInitSalt));
  // A short batch with weights scaled up from the 0.02 init keeps relu inputs
  // and gradients clear of the finite-difference noise floor.
  const auto all = train::all_windows(ds, m->window_len());
  const std::vector<data::WindowRef> windows{all[3], all[all.size() / 2], all.back()};
  const tf::ForwardOptions no_dropout{false, 0};
  num::GradCheckOptions opts;
  opts.seed = config.seed();
  std::vector<num::Tensor> params;
  for (const auto& p : m->parameters()) {
    num::Tensor t = p.tensor;
    for (auto& v : t.mutable_values()) v *= 3.0;
    params.push_back(t);
  }
  const auto r =
      num::grad_check([&] { return m->loss(ds, windows, no_dropout).total; }, params, opts);
  out << json{{"variant", std::string(model::variant_name(mc.variant))},
              {"max_rel_error", r.max_rel_error},
              {"coords", r.coords_checked},
              {"kinks", r.kinks}}
             .dump()
      << '\n';
  if (r.max_rel_error > 1e-4) {
    error_line(err, "gradcheck", "max relative error " + std::to_string(r.max_rel_error) +
                                     " exceeds 1e-4");
    return 1;
  }
  return 0;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
}

std::string plot_data(const std::vector<std::string>& sweeps) {
  std::ostringstream csv;
  csv << "series,p,score_mean,score_std,accuracy,episodes\n";
  for (const auto& path : sweeps) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    std::getline(in, line);
    if (line.rfind("p,score_mean", 0) != 0) throw ParseError("'" + path + "' is not a sweep CSV");
    const std::string series = std::filesystem::path(path).stem().string();
    while (std::getline(in, line)) {
      if (!line.empty()) csv << series << ',' << line << '\n';
    }
  }
  return csv.str();
}

int report_cmd(const std::vector<std::string>& inputs, const std::vector<std::string>& sweeps,
               const std::string& out_path, const std::string& accuracy_path,
               const std::string& plot_path, std::ostream& out) {
  if (inputs.empty() && sweeps.empty()) throw cfg::ConfigError("report needs inputs");
  if (!inputs.empty()) {
    std::vector<eval::EvalReport> reports;
    for (const auto& p : inputs) reports.push_back(eval::report_from_json(read_json(p)));
    emit(out_path, out, render_table(reports, Metric::Score));
    if (!accuracy_path.empty()) emit(accuracy_path, out, render_table(reports, Metric::Accuracy));
  }
  if (!sweeps.empty()) emit(plot_path, out, plot_data(sweeps));
  return 0;
}

int rank_of(const std::vector<std::string>& order, const std::string& name) {
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] == name) return static_cast<int>(i);
  }
  return static_cast<int>(order.size());
}

}  // namespace

std::string render_table(const std::vector<eval::EvalReport>& reports, Metric metric) {
  if (reports.empty()) throw std::invalid_argument("no reports to tabulate");
  const auto& first = reports.front();
  for (const auto& r : reports) {
    if (r.task != first.task) throw std::invalid_argument("reports mix tasks");
    if (!(r.anchors == first.anchors)) {
      throw std::invalid_argument("inconsistent anchors: " + eval::to_json(first.anchors).dump() +
                                  " vs " + eval::to_json(r.anchors).dump());
    }
  }
  static const std::vector<std::string> kColumns{"expert", "alt-expert", "still", "random", "blend"};
  static const std::vector<std::string> kLevels{"expert", "medium", "random"};
  static const std::vector<std::string> kModels{"sct", "cmadt", "madt", "bc"};

  using RowKey = std::tuple<int, std::string, int, std::string>;
  std::map<RowKey, std::map<std::string, std::string>> rows;
  std::vector<std::string> columns;
  for (const auto& r : reports) {
    if (metric == Metric::Accuracy && !r.accuracy) continue;
    const std::string col = policy::PolicySpec::parse(r.opponent).column();
    std::string cell;
    if (metric == Metric::Score) {
      cell = fixed(r.score_mean, 2) + " ± " + fixed(r.score_std, 2);
    } else {
      std::vector<double> accs;
      for (const auto& e : r.records) {
        if (e.accuracy) accs.push_back(*e.accuracy);
      }
      cell = fixed(*r.accuracy, 3) + " ± " + fixed(eval::mean_std(accs).second, 3);
    }
    const RowKey key{rank_of(kLevels, r.level), r.level, rank_of(kModels, r.variant), r.variant};
    auto& row = rows[key];
    if (!row.emplace(col, cell).second) {
      throw std::invalid_argument("two reports for level '" + r.level + "', model '" + r.variant +
                                  "', opponent '" + col + "'");
    }
    if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
  }
  std::stable_sort(columns.begin(), columns.end(), [](const auto& a, const auto& b) {
    return rank_of(kColumns, a) < rank_of(kColumns, b);
  });

  std::ostringstream csv;
  csv << "level,model";
  for (const auto& c : columns) csv << ',' << c;
  csv << '\n';
  for (const auto& [key, cells] : rows) {
    csv << std::get<1>(key) << ',' << std::get<3>(key);
    for (const auto& c : columns) {
      csv << ',';
      if (auto it = cells.find(c); it != cells.end()) csv << it->second;
    }
    csv << '\n';
  }
  return csv.str();
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"sctlab: offline multi-agent sequence models on predator-prey tasks", "sctlab"};
  app.require_subcommand(1);
  app.fallthrough();
  Invocation inv;
  app.add_option("--config", inv.config_path, "TOML config file, or an artifact to replay");
  app.add_option("--set", inv.sets, "Override any config key: section.key=value");
  inv.bind(&app, "--seed", "seed", "Global seed (falls back to SCTLAB_SEED)");

  std::string out_path, data_path, model_path, metrics_path, anchors_path, accuracy_path, plot_path;
  std::vector<std::string> inputs, sweeps;

  auto* gen = app.add_subcommand("gen-data", "Roll out scripted teams into a dataset");
  inv.bind(gen, "--env", "env.task", "simple-tag or simple-world");
  inv.bind(gen, "--level", "data.level", "expert, medium or random");
  inv.bind(gen, "--transitions", "data.transitions", "Number of transitions");
  gen->add_option("--out", out_path, "Dataset file (JSON lines)")->required();

  auto* tr = app.add_subcommand("train", "Train a model on a dataset");
  inv.bind(tr, "--model", "model.variant", "sct, cmadt, madt or bc");
  tr->add_option("--data", data_path, "Dataset file")->required();
  tr->add_option("--out", out_path, "Checkpoint file")->required();
  tr->add_option("--metrics", metrics_path, "Metrics CSV (default: stdout)");
  inv.bind(tr, "--env", "env.task", "Expected task");
  inv.bind(tr, "--epochs", "train.epochs", "Epochs");
  inv.bind(tr, "--steps", "train.steps", "Steps per epoch");
  inv.bind(tr, "--batch", "train.batch", "Windows per step");
  inv.bind(tr, "--lr", "train.lr", "Base learning rate");
  inv.bind(tr, "--wd", "train.wd", "Weight decay");
  inv.bind(tr, "--warmup", "train.warmup", "Warmup steps");

  auto add_eval_flags = [&](CLI::App* sub) {
    sub->add_option("--model", model_path, "Checkpoint file")->required();
    sub->add_option("--anchors", anchors_path, "Anchor sidecar (default: next to --out)");
    inv.bind(sub, "--env", "env.task", "Task to evaluate on");
    inv.bind(sub, "--episodes", "eval.episodes", "Episodes per opponent");
    inv.bind(sub, "--eps", "eval.eps", "Prediction accuracy radius");
    inv.bind(sub, "--jobs", "eval.jobs", "Worker threads");
  };
  auto* ev = app.add_subcommand("eval", "Roll a checkpoint against one opponent");
  add_eval_flags(ev);
  inv.bind(ev, "--prey", "eval.prey", "Opponent spec, e.g. blend:0.5");
  ev->add_option("--out", out_path, "Report JSON (default: stdout)");

  auto* sw = app.add_subcommand("sweep", "Score a checkpoint across blend rates");
  add_eval_flags(sw);
  inv.bind(sw, "--p", "eval.rates", "Comma-separated blend rates");
  sw->add_option("--out", out_path, "Sweep CSV (default: stdout)");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of a small model's loss");
  inv.bind(gc, "--model", "model.variant", "sct, cmadt, madt or bc");
  inv.bind(gc, "--env", "env.task", "Task");

  auto* rp = app.add_subcommand("report", "Pivot eval reports into a level-by-model CSV table");
  rp->add_option("reports", inputs, "Eval report JSON files");
  rp->add_option("--sweep", sweeps, "Sweep CSVs to merge into line-plot data");
  rp->add_option("--out", out_path, "Score table CSV (default: stdout)");
  rp->add_option("--accuracy-out", accuracy_path, "Prediction-accuracy table CSV");
  rp->add_option("--plot-out", plot_path, "Line-plot CSV for --sweep inputs (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  const Logger log(err);
  try {
    if (gen->parsed()) return gen_data(inv, out_path, out, log);
    if (tr->parsed()) return train_cmd(inv, data_path, out_path, metrics_path, out, log);
    if (ev->parsed()) return eval_cmd(inv, model_path, out_path, anchors_path, out, log);
    if (sw->parsed()) return sweep_cmd(inv, model_path, out_path, anchors_path, out, log);
    if (gc->parsed()) return gradcheck_cmd(inv, out, err);
    if (rp->parsed()) return report_cmd(inputs, sweeps, out_path, accuracy_path, plot_path, out);
  } catch (const cfg::ConfigError& e) {
    error_line(err, "usage", e.what());
    return 2;
  } catch (const DimensionError& e) {
    error_line(err, "dimension", e.what());
    return 1;
  } catch (const ParseError& e) {
    error_line(err, "parse", e.what());
    return 1;
  } catch (const NumericError& e) {
    error_line(err, "numeric", e.what());
    return 1;
  } catch (const std::exception& e) {
    error_line(err, "failure", e.what());
    return 1;
  }
  return 2;
}

}  // namespace sctlab::cli
