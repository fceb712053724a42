#include "sctlab/dataset.hpp"

#include <cmath>
#include <fstream>

#include "sctlab/errors.hpp"
#include "sctlab/policies.hpp"

namespace sctlab::data {

using nlohmann::json;

Level parse_level(std::string_view name) {
  if (name == "expert") return Level::Expert;
  if (name == "medium") return Level::Medium;
  if (name == "random") return Level::Random;
  throw std::invalid_argument("unknown dataset level '" + std::string(name) + "'");
}

std::string_view level_name(Level level) {
  switch (level) {
    case Level::Expert: return "expert";
    case Level::Medium: return "medium";
    case Level::Random: return "random";
  }
  return "?";
}

Observation Normalizer::obs(const Observation& raw) const {
  if (raw.size() != obs_mean.size()) {
    throw DimensionError("normalizer fitted for " + std::to_string(obs_mean.size()) +
                         "-dim observations, got " + std::to_string(raw.size()));
  }
  Observation out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - obs_mean[i]) / obs_std[i];
  return out;
}

std::size_t Dataset::num_transitions() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.size();
  return n;
}

void assign_reward_to_go(Episode& episode) {
  double acc = 0.0;
  for (auto it = episode.rbegin(); it != episode.rend(); ++it) {
    acc += env::team_reward(it->rewards);
    it->rtg = acc;
  }
}

Normalizer fit_normalizer(const std::vector<Episode>& episodes) {
  Normalizer n;
  std::size_t dim = 0;
  std::size_t count = 0;
  double rtg_sum = 0.0, rtg_sq = 0.0;
  std::vector<double> sum, sq;
  for (const auto& ep : episodes) {
    for (const auto& tr : ep) {
      for (const auto& o : tr.obs) {
        if (dim == 0) {
          dim = o.size();
          sum.assign(dim, 0.0);
          sq.assign(dim, 0.0);
        }
        for (std::size_t i = 0; i < dim; ++i) {
          sum[i] += o[i];
          sq[i] += o[i] * o[i];
        }
        ++count;
      }
      rtg_sum += tr.rtg;
      rtg_sq += tr.rtg * tr.rtg;
    }
  }
  if (count == 0) throw std::invalid_argument("fit_normalizer: no transitions");
  const double c = static_cast<double>(count);
  n.obs_mean.resize(dim);
  n.obs_std.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    n.obs_mean[i] = sum[i] / c;
    const double var = std::max(0.0, sq[i] / c - n.obs_mean[i] * n.obs_mean[i]);
    n.obs_std[i] = std::sqrt(var) > 1e-6 ? std::sqrt(var) : 1.0;
  }
  const double steps = c / env::kNumPredators;
  n.rtg_mean = rtg_sum / steps;
  const double rtg_var = std::max(0.0, rtg_sq / steps - n.rtg_mean * n.rtg_mean);
  n.rtg_std = std::sqrt(rtg_var) > 1e-6 ? std::sqrt(rtg_var) : 1.0;
  return n;
}

Dataset generate(Task task, Level level, std::size_t n_transitions, std::uint64_t seed,
                 const env::EnvConfig& config, const json& run_config) {
  const auto T = static_cast<std::size_t>(config.episode_length);
  if (n_transitions == 0 || n_transitions % T != 0) {
    throw std::invalid_argument("transition count " + std::to_string(n_transitions) +
                                " is not a positive multiple of the episode length " +
                                std::to_string(T));
  }
  const auto spec = policy::PolicySpec::parse(level_name(level));
  auto predators = policy::make_predator_policy(spec, task);
  // The prey is always the expert evader, so the level only varies the
  // predators whose return the dataset records.
  auto prey = policy::make_prey_policy(policy::PolicySpec{}, task);

  Dataset ds;
  const std::size_t n_episodes = n_transitions / T;
  ds.episodes.reserve(n_episodes);
  double total_return = 0.0;
  for (std::size_t e = 0; e < n_episodes; ++e) {
    const std::uint64_t episode_seed = derive_seed(seed, e);
    auto state = env::reset(task, episode_seed, config);
    predators->begin_episode(episode_seed);
    prey->begin_episode(episode_seed);
    Episode episode;
    episode.reserve(T);
    for (;;) {
      Transition tr;
      tr.t = state.t;
      for (int i = 0; i < env::kNumPredators; ++i) tr.obs[i] = env::observe(state, i);
      tr.pred_actions = predators->act(tr.obs);
      tr.prey_action = env::clip_action(prey->act(env::observe(state, env::kPreyId)));
      for (auto& a : tr.pred_actions) a = env::clip_action(a);
      const auto result = env::step(
          state, {tr.pred_actions[0], tr.pred_actions[1], tr.pred_actions[2], tr.prey_action},
          config);
      tr.rewards = result.rewards;
      episode.push_back(std::move(tr));
      state = result.state;
      if (result.done) break;
    }
    assign_reward_to_go(episode);
    total_return += episode.front().rtg;
    ds.episodes.push_back(std::move(episode));
  }

  auto& h = ds.header;
  h.task = task;
  h.level = level;
  h.obs_dim = env::predator_obs_dim(task);
  h.episode_length = config.episode_length;
  h.episodes = n_episodes;
  h.seed = seed;
  h.mean_return = total_return / static_cast<double>(n_episodes);
  h.normalizer = fit_normalizer(ds.episodes);
  h.run_config = run_config;
  h.tool_version = kToolVersion;
  return ds;
}

WindowRef window_ending_at(std::size_t episode, std::size_t end_index, std::size_t context_len) {
  const std::size_t length = std::min(context_len, end_index + 1);
  return {episode, end_index + 1 - length, length};
}

std::vector<WindowRef> sample_windows(const Dataset& ds, std::size_t batch,
                                      std::size_t context_len, Rng& rng) {
  if (ds.episodes.empty()) throw std::invalid_argument("sample_windows: empty dataset");
  if (context_len == 0 || context_len > static_cast<std::size_t>(ds.header.episode_length)) {
    throw std::invalid_argument("sample_windows: context length " + std::to_string(context_len) +
                                " outside [1, " + std::to_string(ds.header.episode_length) + "]");
  }
  std::vector<WindowRef> out;
  out.reserve(batch);
  // Uniform over transitions, so episodes are weighted by length.
  const std::size_t total = ds.num_transitions();
  std::vector<std::size_t> offsets;
  offsets.reserve(ds.episodes.size());
  std::size_t acc = 0;
  for (const auto& e : ds.episodes) {
    offsets.push_back(acc);
    acc += e.size();
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t k = rng.below(total);
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), k);
    const std::size_t episode = static_cast<std::size_t>(it - offsets.begin()) - 1;
    out.push_back(window_ending_at(episode, k - offsets[episode], context_len));
  }
  return out;
}

namespace {

json vec(Vec2 v) { return json::array({v.x, v.y}); }

Vec2 to_vec(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ParseError("expected a 2-vector");
  return {j[0].get<double>(), j[1].get<double>()};
}

json transition_to_json(std::size_t episode, const Transition& tr) {
  json obs = json::array();
  for (const auto& o : tr.obs) obs.push_back(o);
  json actions = json::array();
  for (const auto& a : tr.pred_actions) actions.push_back(vec(a));
  return {{"ep", episode},         {"t", tr.t},          {"rtg", tr.rtg},
          {"obs", obs},            {"prey_action", vec(tr.prey_action)},
          {"pred_actions", actions}, {"rewards", tr.rewards}};
}

Transition transition_from_json(const json& j, std::size_t obs_dim) {
  Transition tr;
  tr.t = j.at("t").get<int>();
  tr.rtg = j.at("rtg").get<double>();
  const auto& obs = j.at("obs");
  if (obs.size() != env::kNumPredators) throw ParseError("transition must hold 3 observations");
  for (int i = 0; i < env::kNumPredators; ++i) {
    tr.obs[i] = obs[i].get<Observation>();
    if (tr.obs[i].size() != obs_dim) {
      throw DimensionError("observation of predator " + std::to_string(i) + " has " +
                           std::to_string(tr.obs[i].size()) + " entries, header says " +
                           std::to_string(obs_dim));
    }
  }
  tr.prey_action = to_vec(j.at("prey_action"));
  const auto& actions = j.at("pred_actions");
  if (actions.size() != env::kNumPredators) throw ParseError("transition must hold 3 actions");
  for (int i = 0; i < env::kNumPredators; ++i) tr.pred_actions[i] = to_vec(actions[i]);
  tr.rewards = j.at("rewards").get<env::Rewards>();
  return tr;
}

}  // namespace

json to_json(const Normalizer& n) {
  return {{"obs_mean", n.obs_mean},
          {"obs_std", n.obs_std},
          {"rtg_mean", n.rtg_mean},
          {"rtg_std", n.rtg_std}};
}

Normalizer normalizer_from_json(const json& j) {
  Normalizer n;
  n.obs_mean = j.at("obs_mean").get<std::vector<double>>();
  n.obs_std = j.at("obs_std").get<std::vector<double>>();
  n.rtg_mean = j.at("rtg_mean").get<double>();
  n.rtg_std = j.at("rtg_std").get<double>();
  if (n.obs_mean.size() != n.obs_std.size()) throw DimensionError("normalizer mean/std sizes differ");
  for (double s : n.obs_std) {
    if (!(s > 0.0)) throw ParseError("normalizer std must be positive");
  }
  if (!(n.rtg_std > 0.0)) throw ParseError("normalizer rtg std must be positive");
  return n;
}

json header_to_json(const DatasetHeader& h) {
  return {{"format", "sctlab-dataset"},
          {"version", h.version},
          {"env", env::task_name(h.task)},
          {"level", level_name(h.level)},
          {"obs_dim", h.obs_dim},
          {"episode_length", h.episode_length},
          {"episodes", h.episodes},
          {"seed", h.seed},
          {"mean_return", h.mean_return},
          {"normalizer", to_json(h.normalizer)},
          {"run_config", h.run_config},
          {"tool_version", h.tool_version}};
}

DatasetHeader header_from_json(const json& j) {
  if (j.value("format", "") != "sctlab-dataset") throw ParseError("not an sctlab dataset");
  DatasetHeader h;
  h.version = j.at("version").get<int>();
  if (h.version != kDatasetFormatVersion) {
    throw ParseError("dataset format version " + std::to_string(h.version) +
                     " unsupported (expected " + std::to_string(kDatasetFormatVersion) + ")");
  }
  h.task = env::parse_task(j.at("env").get<std::string>());
  h.level = parse_level(j.at("level").get<std::string>());
  h.obs_dim = j.at("obs_dim").get<std::size_t>();
  if (h.obs_dim != env::predator_obs_dim(h.task)) {
    throw DimensionError("header obs_dim " + std::to_string(h.obs_dim) + " does not match " +
                         std::string(env::task_name(h.task)) + " predators (" +
                         std::to_string(env::predator_obs_dim(h.task)) + ")");
  }
  h.episode_length = j.at("episode_length").get<int>();
  h.episodes = j.at("episodes").get<std::size_t>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.mean_return = j.at("mean_return").get<double>();
  h.normalizer = normalizer_from_json(j.at("normalizer"));
  if (h.normalizer.obs_mean.size() != h.obs_dim) {
    throw DimensionError("normalizer dimension does not match header obs_dim");
  }
  h.run_config = j.value("run_config", json::object());
  h.tool_version = j.value("tool_version", "");
  return h;
}

void save(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << header_to_json(ds.header).dump() << '\n';
  for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
    for (const auto& tr : ds.episodes[e]) out << transition_to_json(e, tr).dump() << '\n';
  }
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

Dataset load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("dataset '" + path.string() + "' is empty");
  Dataset ds;
  try {
    ds.header = header_from_json(json::parse(line));
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
      }
      const auto ep = j.at("ep").get<std::size_t>();
      if (ep >= ds.header.episodes) {
        throw ParseError("line " + std::to_string(line_no) + ": episode index out of range");
      }
      if (ep == ds.episodes.size()) ds.episodes.emplace_back();
      if (ep + 1 != ds.episodes.size()) {
        throw ParseError("line " + std::to_string(line_no) + ": episodes out of order");
      }
      ds.episodes.back().push_back(transition_from_json(j, ds.header.obs_dim));
    }
  } catch (const json::exception& e) {
    throw ParseError("dataset '" + path.string() + "': " + e.what());
  }
  if (ds.episodes.size() != ds.header.episodes) {
    throw ParseError("dataset '" + path.string() + "' is truncated: header declares " +
                     std::to_string(ds.header.episodes) + " episodes, found " +
                     std::to_string(ds.episodes.size()));
  }
  for (const auto& e : ds.episodes) {
    if (e.size() != static_cast<std::size_t>(ds.header.episode_length)) {
      throw ParseError("dataset '" + path.string() + "' is truncated: episode of " +
                       std::to_string(e.size()) + " steps");
    }
  }
  return ds;
}

}  // namespace sctlab::data
