#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <vector>

#include "sctlab/dataset.hpp"
#include "sctlab/models.hpp"

namespace sctlab::train {

struct TrainConfig {
  std::size_t batch = 64;
  std::size_t steps_per_epoch = 2000;
  std::size_t epochs = 1;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  std::size_t warmup = 2000;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;
  std::size_t log_every = 100;
  /// Written at every epoch end when non-empty.
  std::filesystem::path checkpoint;
  /// Stored verbatim in checkpoints.
  nlohmann::json run_config = nlohmann::json::object();
};

/// Full-length schedule of the reference setup, divided by `factor`.
TrainConfig desk_scaled(std::size_t factor, std::size_t epochs = 1);

struct MetricRow {
  std::size_t step = 0;
  model::LossBreakdown loss;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<MetricRow> metrics;
  std::size_t steps = 0;
  model::LossBreakdown last;
  num::OptimizerState optimizer;
};

/// Samples windows, runs the teacher-forced loss, clips and steps AdamW.
/// Throws NumericError on a non-finite loss or gradient; checkpoints already
/// written stay untouched.
TrainResult train(model::Model& model, const data::Dataset& ds, const TrainConfig& config,
                  const std::function<void(const MetricRow&)>& on_log = {});

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);

struct ProbeConfig {
  std::size_t max_steps = 10000;
  double lr = 1e-3;
  std::size_t warmup = 100;
  /// Windows per step; 0 uses every window of the dataset each step.
  std::size_t batch = 0;
  /// Stops once the full-batch total loss falls below this.
  double target = 1e-5;
  /// Stops when the loss has not improved by 1% for this many steps.
  std::size_t patience = 2000;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  model::LossBreakdown loss;
  std::size_t steps = 0;
};

/// Fits a tiny dataset with dropout off; reports the full-batch loss at the end.
/// The full batch is the smallest window set that scores every transition.
ProbeResult overfit_probe(model::Model& model, const data::Dataset& tiny,
                          const ProbeConfig& config = {});

/// Every window the model can be trained on: one per (episode, end step).
std::vector<data::WindowRef> all_windows(const data::Dataset& ds, std::size_t context_len);

}  // namespace sctlab::train
