#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

#include "sctlab/dataset.hpp"
#include "sctlab/env.hpp"
#include "sctlab/models.hpp"
#include "sctlab/training.hpp"

namespace sctlab::cfg {

/// Unknown key, wrong value type or unparsable value. The CLI maps it to a
/// usage failure.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Merged key-value tree. Keys are "seed" or "section.name" with sections
/// env, data, model, train and eval; every key has a typed default.
class RunConfig {
 public:
  RunConfig();

  /// Parses `text` according to the key's type.
  void set(std::string_view key, std::string_view text);
  void set_json(std::string_view key, const nlohmann::json& value);

  /// TOML-style text: top-level keys, then [section] blocks of key = value.
  void load_toml(std::istream& in, const std::string& source = "<config>");
  /// A .toml file, or any artifact (dataset, checkpoint, report) whose
  /// embedded run config is replayed.
  void load_file(const std::filesystem::path& path);

  /// Takes the keys of one section of an artifact's run config as new
  /// defaults; later file or flag settings still override them.
  void inherit(const nlohmann::json& run, std::string_view section);

  bool is_explicit(std::string_view key) const { return explicit_.count(std::string(key)) > 0; }
  const nlohmann::json& tree() const { return tree_; }
  const nlohmann::json& at(std::string_view key) const;

  std::uint64_t seed() const;
  env::Task task() const;
  env::EnvConfig env() const;
  data::Level level() const;
  std::size_t transitions() const;
  model::ModelConfig model() const;
  train::TrainConfig train() const;

 private:
  nlohmann::json tree_;
  std::set<std::string> explicit_;
};

/// The run config embedded in an artifact: the "run_config" field of a
/// dataset header or eval report, or "meta.run" of a checkpoint.
nlohmann::json embedded_run_config(const nlohmann::json& artifact);

}  // namespace sctlab::cfg
