#include "sctlab/config.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <fstream>
#include <sstream>

#include "sctlab/errors.hpp"

namespace sctlab::cfg {

using nlohmann::json;

namespace {

json defaults() {
  const env::EnvConfig e;
  const model::ModelConfig m;
  const train::TrainConfig t;
  return {
      {"seed", 0},
      {"env",
       {{"task", "simple-tag"},
        {"dt", e.dt},
        {"damping", e.damping},
        {"contact_stiffness", e.contact_stiffness},
        {"contact_margin", e.contact_margin},
        {"predator_radius", e.predator_radius},
        {"prey_radius", e.prey_radius},
        {"obstacle_radius", e.obstacle_radius},
        {"food_radius", e.food_radius},
        {"predator_accel", e.predator_accel},
        {"prey_accel", e.prey_accel},
        {"predator_max_speed", e.predator_max_speed},
        {"prey_max_speed", e.prey_max_speed},
        {"boundary", e.boundary},
        {"landmark_separation", e.landmark_separation},
        {"episode_length", e.episode_length}}},
      {"data", {{"level", "expert"}, {"transitions", 50000}}},
      {"model",
       {{"variant", "sct"},
        {"d_model", m.transformer.d_model},
        {"layers", m.transformer.n_layers},
        {"heads", m.transformer.n_heads},
        {"context", m.transformer.context_len},
        {"dropout", m.transformer.dropout},
        {"belief_weight", m.belief_weight},
        {"bc_history", m.bc.history},
        {"bc_hidden", m.bc.hidden},
        {"bc_layers", m.bc.layers}}},
      {"train",
       {{"batch", t.batch},
        {"steps", t.steps_per_epoch},
        {"epochs", t.epochs},
        {"lr", t.lr},
        {"wd", t.weight_decay},
        {"warmup", t.warmup},
        {"clip_norm", t.clip_norm},
        {"log_every", t.log_every}}},
      {"eval",
       {{"prey", "expert"},
        {"episodes", 100},
        {"eps", 0.5},
        {"jobs", 1},
        {"rates", "1,0.7,0.5,0.3,0"}}},
  };
}

json::json_pointer pointer(std::string_view key) {
  std::string p = "/" + std::string(key);
  for (auto& c : p) {
    if (c == '.') c = '/';
  }
  return json::json_pointer(p);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("bad value '" + std::string(text) + "' for " + std::string(key));
  }
  return value;
}

void check_enum(std::string_view key, const std::string& value) {
  try {
    if (key == "env.task") env::parse_task(value);
    if (key == "data.level") data::parse_level(value);
    if (key == "model.variant") model::parse_variant(value);
    if (key == "eval.prey") policy::PolicySpec::parse(value);
  } catch (const std::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

}  // namespace

RunConfig::RunConfig() : tree_(defaults()) {}

const json& RunConfig::at(std::string_view key) const {
  const auto p = pointer(key);
  if (!tree_.contains(p) || tree_.at(p).is_object()) {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
  return tree_.at(p);
}

void RunConfig::set(std::string_view key, std::string_view text) {
  const json& current = at(key);
  json value;
  if (current.is_number_unsigned() || current.is_number_integer()) {
    value = parse_number<std::uint64_t>(key, text);
  } else if (current.is_number_float()) {
    value = parse_number<double>(key, text);
  } else if (current.is_boolean()) {
    if (text != "true" && text != "false") {
      throw ConfigError("bad value '" + std::string(text) + "' for " + std::string(key));
    }
    value = text == "true";
  } else {
    value = std::string(text);
  }
  set_json(key, value);
}

void RunConfig::set_json(std::string_view key, const json& value) {
  const json& current = at(key);
  json v = value;
  if (current.is_number_float() && v.is_number()) v = v.get<double>();
  const bool same_kind =
      (current.is_number_float() && v.is_number_float()) ||
      (current.is_number_integer() && v.is_number_integer() && v.get<std::int64_t>() >= 0) ||
      (current.is_string() && v.is_string()) || (current.is_boolean() && v.is_boolean());
  if (!same_kind) {
    throw ConfigError("wrong type for " + std::string(key) + ": " + v.dump());
  }
  if (v.is_number_integer()) v = v.get<std::uint64_t>();
  if (v.is_string()) check_enum(key, v.get<std::string>());
  tree_[pointer(key)] = v;
  explicit_.insert(std::string(key));
}

void RunConfig::load_toml(std::istream& in, const std::string& source) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    if (item.parents.size() > 1) throw ConfigError(source + ": nested section " + item.fullname());
    if (item.inputs.size() != 1) {
      throw ConfigError(source + ": expected one value for " + item.fullname());
    }
    try {
      set(item.fullname(), item.inputs.front());
    } catch (const ConfigError& e) {
      throw ConfigError(source + ": " + e.what());
    }
  }
}

json embedded_run_config(const json& artifact) {
  if (artifact.contains("run_config")) return artifact.at("run_config");
  if (artifact.contains("meta") && artifact.at("meta").contains("run")) {
    return artifact.at("meta").at("run");
  }
  throw ParseError("no embedded run config");
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
  std::string first;
  while (in && first.empty()) {
    std::getline(in, first);
    first.erase(0, first.find_first_not_of(" \t\r"));
  }
  if (first.empty() || first.front() != '{') {
    in.clear();
    in.seekg(0);
    load_toml(in, path.string());
    return;
  }
  // JSON artifact; datasets keep the header on the first line.
  json artifact;
  try {
    artifact = json::parse(first);
  } catch (const json::exception&) {
    in.clear();
    in.seekg(0);
    try {
      artifact = json::parse(in);
    } catch (const json::exception& e) {
      throw ParseError("config '" + path.string() + "': " + e.what());
    }
  }
  const json flat = embedded_run_config(artifact).flatten();
  for (const auto& [pointer_text, value] : flat.items()) {
    std::string key = pointer_text.substr(1);
    for (auto& c : key) {
      if (c == '/') c = '.';
    }
    set_json(key, value);
  }
}

void RunConfig::inherit(const json& run, std::string_view section) {
  const std::string name(section);
  if (!run.contains(name)) return;
  for (const auto& [key, value] : run.at(name).items()) {
    const std::string full = name + "." + key;
    if (is_explicit(full)) continue;
    set_json(full, value);
    explicit_.erase(full);
  }
}

std::uint64_t RunConfig::seed() const { return at("seed").get<std::uint64_t>(); }

env::Task RunConfig::task() const { return env::parse_task(at("env.task").get<std::string>()); }

env::EnvConfig RunConfig::env() const {
  const json& e = tree_.at("env");
  env::EnvConfig c;
  c.dt = e.at("dt");
  c.damping = e.at("damping");
  c.contact_stiffness = e.at("contact_stiffness");
  c.contact_margin = e.at("contact_margin");
  c.predator_radius = e.at("predator_radius");
  c.prey_radius = e.at("prey_radius");
  c.obstacle_radius = e.at("obstacle_radius");
  c.food_radius = e.at("food_radius");
  c.predator_accel = e.at("predator_accel");
  c.prey_accel = e.at("prey_accel");
  c.predator_max_speed = e.at("predator_max_speed");
  c.prey_max_speed = e.at("prey_max_speed");
  c.boundary = e.at("boundary");
  c.landmark_separation = e.at("landmark_separation");
  c.episode_length = e.at("episode_length");
  return c;
}

data::Level RunConfig::level() const { return data::parse_level(at("data.level").get<std::string>()); }

std::size_t RunConfig::transitions() const { return at("data.transitions"); }

model::ModelConfig RunConfig::model() const {
  const json& m = tree_.at("model");
  model::ModelConfig c;
  c.variant = model::parse_variant(m.at("variant").get<std::string>());
  c.transformer.d_model = m.at("d_model");
  c.transformer.n_layers = m.at("layers");
  c.transformer.n_heads = m.at("heads");
  c.transformer.context_len = m.at("context");
  c.transformer.dropout = m.at("dropout");
  c.belief_weight = m.at("belief_weight");
  c.bc.history = m.at("bc_history");
  c.bc.hidden = m.at("bc_hidden");
  c.bc.layers = m.at("bc_layers");
  c.bc.dropout = c.transformer.dropout;
  try {
    c.transformer.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("[model] ") + e.what());
  }
  return c;
}

train::TrainConfig RunConfig::train() const {
  const json& t = tree_.at("train");
  train::TrainConfig c;
  c.batch = t.at("batch");
  c.steps_per_epoch = t.at("steps");
  c.epochs = t.at("epochs");
  c.lr = t.at("lr");
  c.weight_decay = t.at("wd");
  c.warmup = t.at("warmup");
  c.clip_norm = t.at("clip_norm");
  c.log_every = t.at("log_every");
  c.seed = seed();
  c.run_config = tree_;
  if (c.batch == 0 || c.steps_per_epoch == 0 || c.epochs == 0 || c.log_every == 0) {
    throw ConfigError("[train] batch, steps, epochs and log_every must be positive");
  }
  return c;
}

}  // namespace sctlab::cfg
