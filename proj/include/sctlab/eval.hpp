#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sctlab/env.hpp"
#include "sctlab/policies.hpp"

namespace sctlab::eval {

using env::Task;
using env::Vec2;

inline constexpr std::size_t kDefaultEpisodes = 100;
inline constexpr double kDefaultEpsilon = 0.5;
inline constexpr std::uint64_t kAnchorSeed = 0x616e63686f72;

/// Returns of scripted expert and uniform-random predators against the
/// expert prey, averaged over `episodes` rollouts.
struct Anchors {
  Task task = Task::SimpleTag;
  double expert = 0.0;
  double random = 0.0;
  std::size_t episodes = 0;

  friend bool operator==(const Anchors&, const Anchors&) = default;
};

nlohmann::json to_json(const Anchors& a);
Anchors anchors_from_json(const nlohmann::json& j);

Anchors compute_anchors(Task task, std::size_t episodes = kDefaultEpisodes,
                        std::uint64_t seed = kAnchorSeed, const env::EnvConfig& config = {});

/// Reads the sidecar if it exists and matches `task`; otherwise computes the
/// anchors and writes it.
Anchors cached_anchors(const std::filesystem::path& sidecar, Task task,
                       const env::EnvConfig& config = {});

/// 100 · (S − S_random) / (S_expert − S_random).
double normalized_score(double score, const Anchors& anchors);

/// Fraction of steps whose conjecture lies strictly within `eps` (L2) of the
/// realized prey action.
double prediction_accuracy(std::span<const Vec2> conjectures, std::span<const Vec2> truth,
                           double eps = kDefaultEpsilon);

struct EpisodeRecord {
  std::uint64_t seed = 0;
  double team_return = 0.0;
  double score = 0.0;
  std::size_t catches = 0;
  std::optional<double> accuracy;

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct EvalReport {
  std::string model;
  std::string variant;
  std::string level;
  Task task = Task::SimpleTag;
  std::string opponent;
  std::size_t episodes = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  double score_mean = 0.0;
  double score_std = 0.0;
  std::optional<double> accuracy;
  double eps = kDefaultEpsilon;
  Anchors anchors;
  std::vector<EpisodeRecord> records;
  nlohmann::json run_config = nlohmann::json::object();
  std::string tool_version;
};

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

using PredatorFactory = std::function<std::unique_ptr<policy::PredatorPolicy>()>;

struct RolloutOptions {
  std::size_t episodes = kDefaultEpisodes;
  std::uint64_t seed = 0;
  double eps = kDefaultEpsilon;
  /// Worker threads; results are merged in seed order.
  std::size_t jobs = 1;
  env::EnvConfig env;
};

/// Plays `episodes` games of the predators built by `make_predators` against
/// `opponent`. Episode e uses seed derive_seed(options.seed, e).
EvalReport rollout_eval(const PredatorFactory& make_predators, const policy::PolicySpec& opponent,
                        Task task, const Anchors& anchors, const RolloutOptions& options = {});

struct SweepRow {
  double p = 0.0;
  double score_mean = 0.0;
  double score_std = 0.0;
  std::optional<double> accuracy;
  std::size_t episodes = 0;
};

inline const std::vector<double> kDefaultBlendRates{1.0, 0.7, 0.5, 0.3, 0.0};

std::vector<SweepRow> blend_sweep(const PredatorFactory& make_predators, Task task,
                                  const std::vector<double>& rates, const Anchors& anchors,
                                  const RolloutOptions& options = {});

/// Sample mean and (n−1) standard deviation.
std::pair<double, double> mean_std(std::span<const double> xs);

}  // namespace sctlab::eval
