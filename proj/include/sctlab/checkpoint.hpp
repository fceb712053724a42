#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "sctlab/optim.hpp"
#include "sctlab/tensor.hpp"

namespace sctlab::num {

inline constexpr int kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  int version = kCheckpointVersion;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<StoredTensor> params;
  std::optional<OptimizerState> optimizer;
};

/// One JSON document whose first key is the integer format version.
void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                      const ParameterList& params, const OptimizerState* optimizer = nullptr);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies stored values into `params`, matching by name; names and shapes
/// must agree exactly.
void assign_parameters(const ParameterList& params, const Checkpoint& ckpt);

}  // namespace sctlab::num
