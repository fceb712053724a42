#include "sctlab/env.hpp"

#include <algorithm>
#include <cmath>

#include "sctlab/random.hpp"
#include "sctlab/tensor.hpp"

namespace sctlab::env {

Task parse_task(std::string_view name) {
  if (name == "simple-tag") return Task::SimpleTag;
  if (name == "simple-world") return Task::SimpleWorld;
  throw std::invalid_argument("unknown env '" + std::string(name) +
                              "' (expected simple-tag or simple-world)");
}

std::string_view task_name(Task task) {
  return task == Task::SimpleTag ? "simple-tag" : "simple-world";
}

Vec2 clip_action(Vec2 a) {
  auto clip = [](double v) { return std::isfinite(v) ? std::clamp(v, -1.0, 1.0) : 0.0; };
  return {clip(a.x), clip(a.y)};
}

std::size_t num_obstacles(Task task) { return task == Task::SimpleTag ? 2 : 1; }
std::size_t num_food(Task task) { return task == Task::SimpleTag ? 0 : 2; }
std::size_t prey_obs_dim(Task task) { return task == Task::SimpleTag ? 14 : 16; }
std::size_t predator_obs_dim(Task task) { return task == Task::SimpleTag ? 16 : 24; }

std::size_t obs_dim(Task task, int agent) {
  if (agent < 0 || agent >= kNumAgents) {
    throw IndexError("agent id " + std::to_string(agent) + " out of range");
  }
  return agent == kPreyId ? prey_obs_dim(task) : predator_obs_dim(task);
}

WorldState reset(Task task, std::uint64_t seed, const EnvConfig& config) {
  Rng rng(derive_seed(seed, 0x656e76));
  WorldState s;
  s.task = task;
  s.seed = seed;

  std::vector<Vec2> landmarks;
  const std::size_t n_landmarks = num_obstacles(task) + num_food(task);
  while (landmarks.size() < n_landmarks) {
    const Vec2 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    const bool clear = std::all_of(landmarks.begin(), landmarks.end(), [&](Vec2 q) {
      return (p - q).norm() >= config.landmark_separation;
    });
    if (clear) landmarks.push_back(p);
  }
  s.obstacles.assign(landmarks.begin(), landmarks.begin() + num_obstacles(task));
  s.food.assign(landmarks.begin() + num_obstacles(task), landmarks.end());

  for (int i = 0; i < kNumAgents; ++i) {
    // Agents never start inside an obstacle.
    for (;;) {
      const Vec2 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      const bool clear = std::all_of(s.obstacles.begin(), s.obstacles.end(), [&](Vec2 o) {
        return (p - o).norm() >= config.radius(i) + config.obstacle_radius;
      });
      if (clear) {
        s.pos[i] = p;
        break;
      }
    }
  }
  return s;
}

namespace {

// Soft contact force on body a from body b (MPE-style smoothed penetration).
Vec2 contact_force(Vec2 pa, Vec2 pb, double min_dist, const EnvConfig& config) {
  const Vec2 delta = pa - pb;
  const double dist = std::max(delta.norm(), 1e-9);
  const double k = config.contact_margin;
  const double x = -(dist - min_dist) / k;
  // softplus(x)·k, written to avoid overflow for deep penetration.
  const double penetration = k * (x > 30.0 ? x : std::log1p(std::exp(x)));
  return (config.contact_stiffness * penetration / dist) * delta;
}

}  // namespace

StepResult step(const WorldState& state, const JointAction& action, const EnvConfig& config) {
  if (state.finished) {
    throw StateError("step() called on a finished episode (t=" + std::to_string(state.t) + ")");
  }
  WorldState next = state;

  std::array<Vec2, kNumAgents> force{};
  for (int i = 0; i < kNumAgents; ++i) force[i] = config.accel(i) * clip_action(action[i]);
  for (int i = 0; i < kNumAgents; ++i) {
    for (int j = i + 1; j < kNumAgents; ++j) {
      const Vec2 f = contact_force(state.pos[i], state.pos[j],
                                   config.radius(i) + config.radius(j), config);
      force[i] += f;
      force[j] += -1.0 * f;
    }
    for (const Vec2& o : state.obstacles) {
      force[i] += contact_force(state.pos[i], o, config.radius(i) + config.obstacle_radius, config);
    }
  }

  for (int i = 0; i < kNumAgents; ++i) {
    Vec2 v = (1.0 - config.damping) * state.vel[i] + config.dt * force[i];
    const double speed = v.norm();
    if (speed > config.max_speed(i)) v = (config.max_speed(i) / speed) * v;
    Vec2 p = state.pos[i] + config.dt * v;

    // Obstacles are rigid: project any residual overlap onto the surface and
    // drop the inward velocity component. Repeated passes settle agents wedged
    // between two touching obstacles.
    for (int pass = 0; pass < 64; ++pass) {
      bool moved = false;
      for (const Vec2& o : state.obstacles) {
        const double min_dist = config.radius(i) + config.obstacle_radius;
        const Vec2 d = p - o;
        const double dist = d.norm();
        if (dist < min_dist) {
          const Vec2 n = dist > 1e-12 ? (1.0 / dist) * d : Vec2{1.0, 0.0};
          p = o + min_dist * n;
          const double inward = v.dot(n);
          if (inward < 0.0) v = v - inward * n;
          moved = true;
        }
      }
      if (!moved) break;
    }
    next.pos[i] = p;
    next.vel[i] = v;
  }

  StepResult result;
  result.rewards = reward(next, config);
  result.done = state.t >= config.episode_length;
  if (result.done) {
    next.finished = true;
  } else {
    next.t = state.t + 1;
  }
  result.state = std::move(next);
  return result;
}

double boundary_penalty(Vec2 pos, const EnvConfig& config) {
  double penalty = 0.0;
  for (double c : {pos.x, pos.y}) {
    const double excess = std::abs(c) - config.boundary;
    if (excess > 0.0) penalty -= std::min(std::exp(2.0 * excess) - 1.0, 10.0);
  }
  return penalty;
}

std::array<bool, kNumPredators> catches(const WorldState& state, const EnvConfig& config) {
  std::array<bool, kNumPredators> out{};
  for (int i = 0; i < kNumPredators; ++i) {
    out[i] = (state.pos[i] - state.pos[kPreyId]).norm() <
             config.predator_radius + config.prey_radius;
  }
  return out;
}

Rewards reward(const WorldState& state, const EnvConfig& config) {
  const double collision = state.task == Task::SimpleTag ? 10.0 : 5.0;
  const auto hit = catches(state, config);
  const Vec2 prey = state.pos[kPreyId];

  Rewards r{};
  double prey_reward = 0.0;
  for (int i = 0; i < kNumPredators; ++i) {
    const double dist = (state.pos[i] - prey).norm();
    prey_reward += 0.1 * dist;
    if (hit[i]) {
      prey_reward -= collision;
      r[i] = collision;
    } else {
      r[i] = -dist;
    }
  }
  prey_reward += boundary_penalty(prey, config);
  for (const Vec2& f : state.food) {
    if ((prey - f).norm() < config.prey_radius + config.food_radius) prey_reward += 2.0;
  }
  r[kPreyId] = prey_reward;
  return r;
}

double team_reward(const Rewards& rewards) {
  return rewards[0] + rewards[1] + rewards[2];
}

Observation observe(const WorldState& s, int agent) {
  const std::size_t dim = obs_dim(s.task, agent);
  Observation o;
  o.reserve(dim);
  auto push = [&o](Vec2 v) {
    o.push_back(v.x);
    o.push_back(v.y);
  };
  const Vec2 self = s.pos[agent];
  push(s.vel[agent]);
  push(self);
  for (const Vec2& obstacle : s.obstacles) push(obstacle - self);
  for (const Vec2& f : s.food) push(f - self);
  for (int j = 0; j < kNumAgents; ++j) {
    if (j != agent) push(s.pos[j] - self);
  }
  if (agent != kPreyId) {
    if (s.task == Task::SimpleTag) {
      push(s.vel[kPreyId]);
    } else {
      for (int j = 0; j < kNumAgents; ++j) {
        if (j != agent) push(s.vel[j]);
      }
      const Vec2 prey = s.pos[kPreyId];
      o.push_back((prey - self).norm());
      const double bound = 1.0;
      o.push_back(std::abs(prey.x) <= bound && std::abs(prey.y) <= bound ? 1.0 : 0.0);
    }
  }
  if (o.size() != dim) throw std::logic_error("observation layout mismatch");
  return o;
}

}  // namespace sctlab::env
