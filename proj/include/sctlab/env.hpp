#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sctlab/errors.hpp"

namespace sctlab {

namespace env {

enum class Task { SimpleTag, SimpleWorld };

Task parse_task(std::string_view name);
std::string_view task_name(Task task);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  friend bool operator==(Vec2, Vec2) = default;

  double norm() const { return std::hypot(x, y); }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
};

Vec2 clip_action(Vec2 a);

inline constexpr int kNumAgents = 4;
inline constexpr int kNumPredators = 3;
inline constexpr int kPreyId = 3;
inline constexpr int kEpisodeLength = 25;

/// Physics constants; every field is overridable from the [env] config section.
struct EnvConfig {
  double dt = 0.1;
  double damping = 0.25;
  double contact_stiffness = 100.0;
  double contact_margin = 0.01;
  double predator_radius = 0.05;
  double prey_radius = 0.045;
  double obstacle_radius = 0.2;
  double food_radius = 0.03;
  double predator_accel = 3.0;
  double prey_accel = 4.0;
  double predator_max_speed = 1.0;
  double prey_max_speed = 1.3;
  double boundary = 0.9;
  double landmark_separation = 0.4;
  int episode_length = kEpisodeLength;

  double radius(int agent) const { return agent == kPreyId ? prey_radius : predator_radius; }
  double accel(int agent) const { return agent == kPreyId ? prey_accel : predator_accel; }
  double max_speed(int agent) const {
    return agent == kPreyId ? prey_max_speed : predator_max_speed;
  }
};

/// Agents 0..2 are predators, agent 3 is the prey.
struct WorldState {
  Task task = Task::SimpleTag;
  std::array<Vec2, kNumAgents> pos{};
  std::array<Vec2, kNumAgents> vel{};
  std::vector<Vec2> obstacles;
  std::vector<Vec2> food;
  /// Index of the step about to be executed, in [1, T].
  int t = 1;
  /// Set once step T has been executed.
  bool finished = false;
  std::uint64_t seed = 0;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

using JointAction = std::array<Vec2, kNumAgents>;
using Rewards = std::array<double, kNumAgents>;
using Observation = std::vector<double>;

struct StepResult {
  WorldState state;
  Rewards rewards{};
  bool done = false;
};

std::size_t num_obstacles(Task task);
std::size_t num_food(Task task);
std::size_t prey_obs_dim(Task task);
std::size_t predator_obs_dim(Task task);
std::size_t obs_dim(Task task, int agent);

WorldState reset(Task task, std::uint64_t seed, const EnvConfig& config = {});

/// Advances one step. Actions are clipped to [−1, 1]² first.
/// Throws StateError when the episode has already finished.
StepResult step(const WorldState& state, const JointAction& action, const EnvConfig& config = {});

/// Per-agent rewards evaluated on a (post-integration) state.
Rewards reward(const WorldState& state, const EnvConfig& config = {});

/// Predator team reward: sum of the three predator rewards.
double team_reward(const Rewards& rewards);

/// Whether predator i currently overlaps the prey.
std::array<bool, kNumPredators> catches(const WorldState& state, const EnvConfig& config = {});

/// Out-of-map penalty for one position, ≤ 0.
double boundary_penalty(Vec2 pos, const EnvConfig& config = {});

/// Local observation of `agent`; relative quantities are target − self.
Observation observe(const WorldState& state, int agent);

}  // namespace env
}  // namespace sctlab
