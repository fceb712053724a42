#include "sctlab/policies.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "sctlab/tensor.hpp"

namespace sctlab::policy {

namespace {

struct Layout {
  std::size_t obstacles;
  std::size_t food;
  std::size_t others;
  std::size_t n_obstacles;
  std::size_t n_food;
};

Layout layout(Task task) {
  const std::size_t n_obs = env::num_obstacles(task);
  const std::size_t n_food = env::num_food(task);
  return {4, 4 + 2 * n_obs, 4 + 2 * n_obs + 2 * n_food, n_obs, n_food};
}

Vec2 at(const Observation& o, std::size_t i) { return {o[i], o[i + 1]}; }

void require_dim(const Observation& o, std::size_t dim, const char* who) {
  if (o.size() != dim) {
    throw DimensionError(std::string(who) + ": observation has " + std::to_string(o.size()) +
                         " entries, expected " + std::to_string(dim));
  }
}

// Inverse-square push away from a body at relative position `rel`.
Vec2 repel(Vec2 rel, double weight) {
  const double d = std::max(rel.norm(), 1e-3);
  return (-weight / (d * d * d)) * rel;
}

Vec2 unit(Vec2 v) {
  const double n = v.norm();
  return n > 1e-12 ? (1.0 / n) * v : Vec2{};
}

double parse_number(std::string_view text, std::string_view spec) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw std::invalid_argument("bad number in policy spec '" + std::string(spec) + "'");
  }
  return value;
}

}  // namespace

PolicySpec PolicySpec::parse(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  const std::string_view arg = colon == std::string_view::npos ? "" : text.substr(colon + 1);
  PolicySpec spec;
  if (name == "expert") {
    spec.kind = Kind::Expert;
  } else if (name == "alt-expert") {
    spec.kind = Kind::AltExpert;
  } else if (name == "medium") {
    spec.kind = Kind::Medium;
    if (!arg.empty()) spec.noise_scale = parse_number(arg, text);
    if (!(spec.noise_scale > 0.0)) {
      throw std::invalid_argument("medium noise scale must be positive");
    }
    return spec;
  } else if (name == "random") {
    spec.kind = Kind::Random;
  } else if (name == "still") {
    spec.kind = Kind::Still;
  } else if (name == "blend") {
    spec.kind = Kind::Blend;
    if (arg.empty()) throw std::invalid_argument("blend needs a rate, e.g. blend:0.5");
    spec.blend_p = parse_number(arg, text);
    if (spec.blend_p < 0.0 || spec.blend_p > 1.0) {
      throw std::invalid_argument("blend rate must lie in [0, 1]");
    }
    return spec;
  } else {
    throw std::invalid_argument("unknown policy '" + std::string(text) + "'");
  }
  if (!arg.empty()) {
    throw std::invalid_argument("policy '" + std::string(name) + "' takes no argument");
  }
  return spec;
}

std::string PolicySpec::to_string() const {
  std::ostringstream out;
  switch (kind) {
    case Kind::Expert: return "expert";
    case Kind::AltExpert: return "alt-expert";
    case Kind::Medium: out << "medium:" << noise_scale; return out.str();
    case Kind::Random: return "random";
    case Kind::Still: return "still";
    case Kind::Blend: out << "blend:" << blend_p; return out.str();
  }
  return "?";
}

std::string PolicySpec::column() const {
  switch (kind) {
    case Kind::Blend: return "blend";
    case Kind::Medium: return "medium";
    default: return to_string();
  }
}

EvasionGains alt_evasion_gains() {
  EvasionGains g;
  g.repulsion = 0.6;
  g.obstacle = 0.8;
  g.centering = 1.0;
  g.centering_radius = 0.7;
  g.nearest_only = true;
  g.dodge = 0.6;
  return g;
}

Vec2 expert_prey(const Observation& o, Task task, const EvasionGains& gains) {
  require_dim(o, env::prey_obs_dim(task), "expert_prey");
  const Layout l = layout(task);
  Vec2 force;

  std::size_t nearest = 0;
  double nearest_dist = INFINITY;
  for (std::size_t k = 0; k < env::kNumPredators; ++k) {
    const double d = at(o, l.others + 2 * k).norm();
    if (d < nearest_dist) {
      nearest_dist = d;
      nearest = k;
    }
  }
  for (std::size_t k = 0; k < env::kNumPredators; ++k) {
    if (gains.nearest_only && k != nearest) continue;
    force += repel(at(o, l.others + 2 * k), gains.repulsion);
  }
  if (gains.dodge != 0.0) {
    const Vec2 bearing = unit(at(o, l.others + 2 * nearest));
    force += gains.dodge * Vec2{-bearing.y, bearing.x};
  }
  for (std::size_t k = 0; k < l.n_obstacles; ++k) {
    force += repel(at(o, l.obstacles + 2 * k), gains.obstacle);
  }
  // Per-coordinate pull toward the center past the radius; it grows
  // exponentially with the excess so the prey cannot be chased off the map.
  const Vec2 pos = at(o, 2);
  const auto centering = [&](double c) {
    const double excess = std::abs(c) - gains.centering_radius;
    return excess > 0.0 ? -std::copysign(gains.centering * std::exp(gains.wall_growth * excess), c) : 0.0;
  };
  force += Vec2{centering(pos.x), centering(pos.y)};
  if (l.n_food > 0) {
    Vec2 best = at(o, l.food);
    for (std::size_t k = 1; k < l.n_food; ++k) {
      const Vec2 f = at(o, l.food + 2 * k);
      if (f.norm() < best.norm()) best = f;
    }
    force += gains.food * unit(best);
  }
  const double n = force.norm();
  return n > 1.0 ? (1.0 / n) * force : force;
}

Vec2 prey_offset(const Observation& o, Task task) {
  require_dim(o, env::predator_obs_dim(task), "prey_offset");
  return at(o, layout(task).others + 4);
}

namespace {

Vec2 prey_velocity(const Observation& o, Task task) {
  return task == Task::SimpleTag ? at(o, 14) : at(o, layout(task).others + 6 + 4);
}

}  // namespace

Vec2 pursuit_target(const Observation& o, int k, Task task, const PursuitGains& gains) {
  const Vec2 predicted = prey_offset(o, task) + gains.lead * prey_velocity(o, task);
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / 3.0;
  // The ring contracts as the predator closes in so it ends on the prey.
  const double shrink = std::min(1.0, predicted.norm() / gains.close_in);
  return predicted + (gains.encircle_radius * shrink) * Vec2{std::cos(angle), std::sin(angle)};
}

PredatorActions expert_predators(const PredatorObservations& obs, Task task,
                                 const PursuitGains& gains) {
  PredatorActions out;
  for (int k = 0; k < env::kNumPredators; ++k) {
    const Vec2 target = pursuit_target(obs[k], k, task, gains);
    out[k] = env::clip_action(gains.gain * target);
  }
  return out;
}

PredatorActions greedy_predators(const PredatorObservations& obs, Task task) {
  PredatorActions out;
  for (int k = 0; k < env::kNumPredators; ++k) {
    out[k] = env::clip_action(5.0 * prey_offset(obs[k], task));
  }
  return out;
}

namespace {

Vec2 uniform_action(Rng& rng) { return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)}; }

class ScriptedPrey final : public PreyPolicy {
 public:
  ScriptedPrey(PolicySpec spec, Task task) : spec_(spec), task_(task) {}

  void begin_episode(std::uint64_t seed) override {
    rng_ = Rng(derive_seed(spec_.seed, seed, 0x70726579));
  }

  Vec2 act(const Observation& o) override {
    last_expert_ = false;
    switch (spec_.kind) {
      case Kind::Expert: return expert_prey(o, task_);
      case Kind::AltExpert: return expert_prey(o, task_, alt_evasion_gains());
      case Kind::Medium: {
        const Vec2 a = expert_prey(o, task_);
        const double nx = rng_.normal(), ny = rng_.normal();
        return env::clip_action(a + spec_.noise_scale * Vec2{nx, ny});
      }
      case Kind::Random: return uniform_action(rng_);
      case Kind::Still: return {};
      case Kind::Blend: {
        // Both arms draw every step so the random stream does not depend on
        // which arm was chosen.
        const bool expert = rng_.bernoulli(spec_.blend_p);
        const Vec2 random = uniform_action(rng_);
        last_expert_ = expert;
        return expert ? expert_prey(o, task_) : random;
      }
    }
    return {};
  }

  bool last_was_expert() const override { return last_expert_; }

 private:
  PolicySpec spec_;
  Task task_;
  Rng rng_;
  bool last_expert_ = false;
};

class ScriptedPredators final : public PredatorPolicy {
 public:
  ScriptedPredators(PolicySpec spec, Task task) : spec_(spec), task_(task) {}

  void begin_episode(std::uint64_t seed) override {
    rng_ = Rng(derive_seed(spec_.seed, seed, 0x70726564));
  }

  PredatorActions act(const PredatorObservations& obs) override {
    PredatorActions out{};
    switch (spec_.kind) {
      case Kind::Expert: return expert_predators(obs, task_);
      case Kind::AltExpert: return greedy_predators(obs, task_);
      case Kind::Medium: {
        out = expert_predators(obs, task_);
        for (auto& a : out) {
          const double nx = rng_.normal(), ny = rng_.normal();
          a = env::clip_action(a + spec_.noise_scale * Vec2{nx, ny});
        }
        return out;
      }
      case Kind::Random:
        for (auto& a : out) a = uniform_action(rng_);
        return out;
      case Kind::Still: return out;
      case Kind::Blend: {
        const bool expert = rng_.bernoulli(spec_.blend_p);
        for (auto& a : out) a = uniform_action(rng_);
        return expert ? expert_predators(obs, task_) : out;
      }
    }
    return out;
  }

 private:
  PolicySpec spec_;
  Task task_;
  Rng rng_;
};

}  // namespace

std::unique_ptr<PreyPolicy> make_prey_policy(const PolicySpec& spec, Task task) {
  return std::make_unique<ScriptedPrey>(spec, task);
}

std::unique_ptr<PredatorPolicy> make_predator_policy(const PolicySpec& spec, Task task) {
  return std::make_unique<ScriptedPredators>(spec, task);
}

}  // namespace sctlab::policy
