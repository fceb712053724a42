#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string_view>

#include "sctlab/checkpoint.hpp"
#include "sctlab/dataset.hpp"
#include "sctlab/policies.hpp"
#include "sctlab/transformer.hpp"

namespace sctlab::model {

using num::ParameterList;
using num::Tensor;

enum class Variant { SCT, CMADT, MADT, BC };

Variant parse_variant(std::string_view name);
std::string_view variant_name(Variant v);

struct BcConfig {
  /// Steps of observation history fed to the MLP.
  std::size_t history = 20;
  std::size_t hidden = 128;
  std::size_t layers = 3;
  double dropout = 0.1;

  friend bool operator==(const BcConfig&, const BcConfig&) = default;
};

struct ModelConfig {
  Variant variant = Variant::SCT;
  tf::TransformerConfig transformer;
  BcConfig bc;
  double belief_weight = 1.0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Modality order within one timestep.
enum Modality : std::size_t { kRtg = 0, kObs1 = 1, kObs2 = 2, kObs3 = 3, kPreyAct = 4, kAct1 = 5 };

std::size_t tokens_per_step(Variant v);
bool has_belief_head(Variant v);

struct LossBreakdown {
  double belief = 0.0;
  double policy = 0.0;
  double total = 0.0;
};

struct LossTerms {
  Tensor belief;
  Tensor policy;
  Tensor total;
  LossBreakdown values() const;
};

/// Predator controller backed by a trained model. The conjecture hook, when
/// set, replaces the model's conjectured prey action before it is used.
class ModelAgent : public policy::PredatorPolicy {
 public:
  using ConjectureHook = std::function<env::Vec2(std::size_t t, env::Vec2 predicted)>;
  void set_conjecture_hook(ConjectureHook hook) { hook_ = std::move(hook); }

 protected:
  ConjectureHook hook_;
};

class Model {
 public:
  Model(ModelConfig config, env::Task task, data::Normalizer normalizer, double rtg_target);
  virtual ~Model() = default;

  static std::unique_ptr<Model> create(const ModelConfig& config, env::Task task,
                                       const data::Normalizer& normalizer, double rtg_target,
                                       std::uint64_t seed);

  virtual ParameterList parameters() const = 0;
  /// Teacher-forced loss over every step of every window.
  virtual LossTerms loss(const data::Dataset& ds, std::span<const data::WindowRef> windows,
                         const tf::ForwardOptions& options) const = 0;
  virtual std::unique_ptr<ModelAgent> make_agent() const = 0;

  Variant variant() const { return config_.variant; }
  const ModelConfig& config() const { return config_; }
  env::Task task() const { return task_; }
  std::size_t obs_dim() const { return env::predator_obs_dim(task_); }
  const data::Normalizer& normalizer() const { return normalizer_; }
  double rtg_target() const { return rtg_target_; }
  /// Window length the model trains on (context length, or BC history).
  std::size_t window_len() const;
  std::size_t num_parameters() const;

 protected:
  ModelConfig config_;
  env::Task task_;
  data::Normalizer normalizer_;
  double rtg_target_;
};

/// One timestep as the transformer variants see it. Missing trailing fields
/// make a partial step (the step currently being decided).
struct StepInput {
  double rtg = 0.0;
  std::array<env::Observation, env::kNumPredators> obs;
  std::optional<env::Vec2> prey;
  std::optional<policy::PredatorActions> actions;
};

/// SCT, CMADT and MADT: a shared causal core with variant-specific heads.
class TransformerModel final : public Model {
 public:
  TransformerModel(ModelConfig config, env::Task task, data::Normalizer normalizer,
                   double rtg_target, std::uint64_t seed);

  ParameterList parameters() const override;
  LossTerms loss(const data::Dataset& ds, std::span<const data::WindowRef> windows,
                 const tf::ForwardOptions& options) const override;
  std::unique_ptr<ModelAgent> make_agent() const override;

  const tf::CausalTransformer& core() const { return core_; }
  /// Input width of the belief head (0 when the variant has none).
  std::size_t belief_input_dim() const;
  std::size_t action_input_dim() const;

  /// Appends one step (raw values; normalization applied here) to the current
  /// sequence of `batch`, in the variant's token order. Throws when a later
  /// field is present without an earlier one.
  void append_step(tf::TokenBatch& batch, std::size_t step, const StepInput& in) const;
  tf::TokenBatch make_batch() const;

  /// Row indices into the hidden states for the observation and prey tokens
  /// of each predicted step.
  struct StepRows {
    std::array<std::vector<std::size_t>, env::kNumPredators> obs;
    std::vector<std::size_t> prey;
  };
  Tensor belief(const Tensor& hidden, const StepRows& rows) const;
  std::array<Tensor, env::kNumPredators> actions(const Tensor& hidden, const StepRows& rows) const;

  const Tensor& belief_weight() const { return belief_w_; }
  const Tensor& belief_bias() const { return belief_b_; }

 private:
  tf::CausalTransformer core_;
  Tensor belief_w_, belief_b_;
  std::array<Tensor, env::kNumPredators> action_w_, action_b_;
};

class BcModel final : public Model {
 public:
  BcModel(ModelConfig config, env::Task task, data::Normalizer normalizer, double rtg_target,
          std::uint64_t seed);

  ParameterList parameters() const override;
  LossTerms loss(const data::Dataset& ds, std::span<const data::WindowRef> windows,
                 const tf::ForwardOptions& options) const override;
  std::unique_ptr<ModelAgent> make_agent() const override;

  std::size_t input_dim() const;
  /// Rows of flattened, normalized, front-zero-padded histories → n × 6.
  Tensor forward(const Tensor& inputs, const tf::ForwardOptions& options) const;
  /// Flattens up to `history` steps (oldest first) of normalized observations.
  std::vector<double> encode_history(
      std::span<const std::array<env::Observation, env::kNumPredators>> steps) const;

 private:
  std::vector<Tensor> weights_, biases_;
};

/// Writes the model (plus optional optimizer state and extra metadata) as a
/// checkpoint tagged with its variant.
void save_model(const std::filesystem::path& path, const Model& model,
                const num::OptimizerState* optimizer = nullptr,
                const nlohmann::json& extra = nlohmann::json::object());

struct LoadedModel {
  std::unique_ptr<Model> model;
  std::optional<num::OptimizerState> optimizer;
  nlohmann::json meta;
};

/// Refuses checkpoints of another variant when `expected` is given.
LoadedModel load_model(const std::filesystem::path& path,
                       std::optional<Variant> expected = std::nullopt);

}  // namespace sctlab::model
