#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "sctlab/env.hpp"
#include "sctlab/random.hpp"

namespace sctlab::data {

using env::Observation;
using env::Task;
using env::Vec2;

inline constexpr int kDatasetFormatVersion = 1;

enum class Level { Expert, Medium, Random };

Level parse_level(std::string_view name);
std::string_view level_name(Level level);

/// One recorded step. `rtg` is the predators' team reward-to-go.
struct Transition {
  int t = 1;
  double rtg = 0.0;
  std::array<Observation, env::kNumPredators> obs;
  Vec2 prey_action;
  std::array<Vec2, env::kNumPredators> pred_actions;
  env::Rewards rewards{};

  friend bool operator==(const Transition&, const Transition&) = default;
};

using Episode = std::vector<Transition>;

/// Per-dimension observation statistics and reward-to-go scaling, fitted on
/// the training data and applied at train and test time.
struct Normalizer {
  std::vector<double> obs_mean;
  std::vector<double> obs_std;
  double rtg_mean = 0.0;
  double rtg_std = 1.0;

  Observation obs(const Observation& raw) const;
  double rtg(double raw) const { return (raw - rtg_mean) / rtg_std; }

  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

struct DatasetHeader {
  int version = kDatasetFormatVersion;
  Task task = Task::SimpleTag;
  Level level = Level::Expert;
  std::size_t obs_dim = 0;
  int episode_length = env::kEpisodeLength;
  std::size_t episodes = 0;
  std::uint64_t seed = 0;
  /// Mean undiscounted team return per episode; the evaluation RTG target.
  double mean_return = 0.0;
  Normalizer normalizer;
  /// Effective run configuration that produced the file.
  nlohmann::json run_config = nlohmann::json::object();
  std::string tool_version;

  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Episode> episodes;

  std::size_t num_transitions() const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Fills `rtg` backward: rtg(T) = r(T), rtg(t) = r(t) + rtg(t+1), r the team reward.
void assign_reward_to_go(Episode& episode);

Normalizer fit_normalizer(const std::vector<Episode>& episodes);

/// Rolls out predators of the given level against the expert prey. `n_transitions` must be a
/// positive multiple of the episode length.
Dataset generate(Task task, Level level, std::size_t n_transitions, std::uint64_t seed,
                 const env::EnvConfig& config = {},
                 const nlohmann::json& run_config = nlohmann::json::object());

/// Window of consecutive steps [start, start + length) of one episode.
struct WindowRef {
  std::size_t episode = 0;
  std::size_t start = 0;
  std::size_t length = 0;

  std::size_t end() const { return start + length; }
  friend bool operator==(const WindowRef&, const WindowRef&) = default;
};

/// Window of up to `context_len` steps ending at step index `end_index`
/// (0-based, inclusive), clipped at the episode start.
WindowRef window_ending_at(std::size_t episode, std::size_t end_index, std::size_t context_len);

/// Uniformly samples (episode, end-index) pairs. Windows never cross episodes.
std::vector<WindowRef> sample_windows(const Dataset& ds, std::size_t batch,
                                      std::size_t context_len, Rng& rng);

/// JSON-lines: one header object, then one object per transition.
void save(const Dataset& ds, const std::filesystem::path& path);
Dataset load(const std::filesystem::path& path);

nlohmann::json to_json(const Normalizer& n);
Normalizer normalizer_from_json(const nlohmann::json& j);
nlohmann::json header_to_json(const DatasetHeader& header);
DatasetHeader header_from_json(const nlohmann::json& j);

}  // namespace sctlab::data
