#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sctlab/dataset.hpp"
#include "sctlab/random.hpp"
#include "sctlab/tensor.hpp"

namespace sctlab::testing {

inline num::Tensor random_param(num::Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(num::shape_size(shape));
  for (auto& x : v) x = scale * rng.normal();
  return num::Tensor::parameter(std::move(shape), std::move(v));
}

inline num::Tensor random_constant(num::Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(num::shape_size(shape));
  for (auto& x : v) x = scale * rng.normal();
  return num::Tensor::constant(std::move(shape), std::move(v));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sctlab_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Expert-level episodes against the still prey, so every prey action is (0, 0).
inline data::Dataset still_prey_dataset(std::size_t episodes, std::uint64_t seed) {
  auto ds = data::generate(env::Task::SimpleTag, data::Level::Expert,
                           episodes * env::kEpisodeLength, seed);
  for (auto& ep : ds.episodes)
    for (auto& tr : ep) tr.prey_action = {0.0, 0.0};
  return ds;
}

}  // namespace sctlab::testing
