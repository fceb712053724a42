#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "sctlab/env.hpp"
#include "sctlab/random.hpp"

namespace sctlab::policy {

using env::Observation;
using env::Task;
using env::Vec2;

using PredatorObservations = std::array<Observation, env::kNumPredators>;
using PredatorActions = std::array<Vec2, env::kNumPredators>;

enum class Kind { Expert, AltExpert, Medium, Random, Still, Blend };

/// Parsed form of strings such as "expert", "medium:0.4", "random", "still",
/// "blend:0.5" and "alt-expert".
struct PolicySpec {
  Kind kind = Kind::Expert;
  double blend_p = 0.0;
  double noise_scale = 0.4;
  std::uint64_t seed = 0;

  static PolicySpec parse(std::string_view text);
  std::string to_string() const;
  /// Short label used as a report column ("blend" for any blend rate).
  std::string column() const;

  friend bool operator==(const PolicySpec&, const PolicySpec&) = default;
};

struct EvasionGains {
  double repulsion = 1.0;
  double obstacle = 0.5;
  double centering = 0.7;
  double centering_radius = 0.8;
  double wall_growth = 30.0;
  double food = 0.5;
  /// Only the nearest predator repels when set (gain set B).
  bool nearest_only = false;
  /// Sideways dodge added perpendicular to the nearest predator's bearing.
  double dodge = 0.0;
};

/// Evader used by the "alt-expert" prey.
EvasionGains alt_evasion_gains();

struct PursuitGains {
  double lead = 0.3;
  double encircle_radius = 0.15;
  /// Distance below which the encircling offset shrinks linearly to zero.
  double close_in = 0.5;
  double gain = 5.0;
};

/// Deterministic evasion from the prey's own observation.
Vec2 expert_prey(const Observation& prey_obs, Task task, const EvasionGains& gains = {});

/// Encircling pursuit: predator k steers toward the predicted prey position
/// offset by an angle of 120°·k.
PredatorActions expert_predators(const PredatorObservations& obs, Task task,
                                 const PursuitGains& gains = {});

/// Independent greedy pursuit straight at the prey (comparison baseline).
PredatorActions greedy_predators(const PredatorObservations& obs, Task task);

/// Encircling target of predator k relative to itself, before gain and clip.
Vec2 pursuit_target(const Observation& predator_obs, int k, Task task,
                    const PursuitGains& gains = {});

/// Prey position relative to a predator, read from its observation.
Vec2 prey_offset(const Observation& predator_obs, Task task);

class PreyPolicy {
 public:
  virtual ~PreyPolicy() = default;
  virtual void begin_episode(std::uint64_t seed) = 0;
  virtual Vec2 act(const Observation& prey_obs) = 0;
  /// True when the last `act` used the expert arm (blend policies only).
  virtual bool last_was_expert() const { return false; }
};

/// Uniform controller interface for the predator team; scripted policies and
/// trained models both implement it.
class PredatorPolicy {
 public:
  virtual ~PredatorPolicy() = default;
  virtual void begin_episode(std::uint64_t seed) = 0;
  virtual PredatorActions act(const PredatorObservations& obs) = 0;
  /// Team reward realized by the last action.
  virtual void record_outcome(double /*team_reward*/) {}
  /// Conjectured prey action behind the last `act`, if the controller forms one.
  virtual std::optional<Vec2> conjecture() const { return std::nullopt; }
};

std::unique_ptr<PreyPolicy> make_prey_policy(const PolicySpec& spec, Task task);
std::unique_ptr<PredatorPolicy> make_predator_policy(const PolicySpec& spec, Task task);

}  // namespace sctlab::policy
