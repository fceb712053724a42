#include "sctlab/eval.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "sctlab/errors.hpp"
#include "sctlab/random.hpp"

namespace sctlab::eval {

using nlohmann::json;

json to_json(const Anchors& a) {
  return {{"env", env::task_name(a.task)},
          {"expert", a.expert},
          {"random", a.random},
          {"episodes", a.episodes}};
}

Anchors anchors_from_json(const json& j) {
  Anchors a;
  a.task = env::parse_task(j.at("env").get<std::string>());
  a.expert = j.at("expert").get<double>();
  a.random = j.at("random").get<double>();
  a.episodes = j.at("episodes").get<std::size_t>();
  return a;
}

std::pair<double, double> mean_std(std::span<const double> xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

namespace {

struct EpisodeOutcome {
  double team_return = 0.0;
  std::size_t catches = 0;
  std::vector<Vec2> conjectures;
  std::vector<Vec2> prey_actions;
};

EpisodeOutcome play(policy::PredatorPolicy& predators, policy::PreyPolicy& prey, Task task,
                    std::uint64_t seed, const env::EnvConfig& config) {
  EpisodeOutcome out;
  auto state = env::reset(task, seed, config);
  predators.begin_episode(seed);
  prey.begin_episode(seed);
  for (;;) {
    policy::PredatorObservations obs;
    for (int i = 0; i < env::kNumPredators; ++i) obs[i] = env::observe(state, i);
    const auto acts = predators.act(obs);
    const Vec2 prey_act = env::clip_action(prey.act(env::observe(state, env::kPreyId)));
    if (const auto c = predators.conjecture()) {
      out.conjectures.push_back(*c);
      out.prey_actions.push_back(prey_act);
    }
    const auto result = env::step(state, {acts[0], acts[1], acts[2], prey_act}, config);
    const double r = env::team_reward(result.rewards);
    predators.record_outcome(r);
    out.team_return += r;
    for (bool hit : env::catches(result.state, config)) out.catches += hit ? 1 : 0;
    state = result.state;
    if (result.done) break;
  }
  return out;
}

double mean_return(policy::PredatorPolicy& predators, Task task, std::size_t episodes,
                   std::uint64_t seed, const env::EnvConfig& config) {
  auto prey = policy::make_prey_policy({}, task);
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    total += play(predators, *prey, task, derive_seed(seed, e), config).team_return;
  }
  return total / static_cast<double>(episodes);
}

}  // namespace

Anchors compute_anchors(Task task, std::size_t episodes, std::uint64_t seed,
                        const env::EnvConfig& config) {
  if (episodes == 0) throw std::invalid_argument("anchors need at least one episode");
  Anchors a;
  a.task = task;
  a.episodes = episodes;
  policy::PolicySpec random;
  random.kind = policy::Kind::Random;
  a.expert = mean_return(*policy::make_predator_policy({}, task), task, episodes, seed, config);
  a.random = mean_return(*policy::make_predator_policy(random, task), task, episodes, seed, config);
  return a;
}

Anchors cached_anchors(const std::filesystem::path& sidecar, Task task,
                       const env::EnvConfig& config) {
  if (std::filesystem::exists(sidecar)) {
    std::ifstream in(sidecar);
    try {
      const json j = json::parse(in);
      const std::string key(env::task_name(task));
      if (j.contains(key)) return anchors_from_json(j.at(key));
    } catch (const json::exception& e) {
      throw ParseError("anchor file '" + sidecar.string() + "': " + e.what());
    }
  }
  const Anchors a = compute_anchors(task, kDefaultEpisodes, kAnchorSeed, config);
  json all = json::object();
  if (std::filesystem::exists(sidecar)) {
    std::ifstream in(sidecar);
    all = json::parse(in);
  }
  all[std::string(env::task_name(task))] = to_json(a);
  std::ofstream out(sidecar, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write anchor file '" + sidecar.string() + "'");
  out << all.dump(2) << '\n';
  return a;
}

double normalized_score(double score, const Anchors& anchors) {
  const double span = anchors.expert - anchors.random;
  if (!std::isfinite(span) || std::abs(span) < 1e-12) {
    throw NumericError("degenerate score anchors: expert " + std::to_string(anchors.expert) +
                       ", random " + std::to_string(anchors.random));
  }
  return 100.0 * (score - anchors.random) / span;
}

double prediction_accuracy(std::span<const Vec2> conjectures, std::span<const Vec2> truth,
                           double eps) {
  if (conjectures.size() != truth.size()) {
    throw DimensionError("prediction_accuracy: " + std::to_string(conjectures.size()) +
                         " conjectures vs " + std::to_string(truth.size()) + " actions");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("prediction_accuracy: eps must be positive");
  if (truth.empty()) throw std::invalid_argument("prediction_accuracy: no steps");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if ((conjectures[i] - truth[i]).norm() < eps) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

EvalReport rollout_eval(const PredatorFactory& make_predators, const policy::PolicySpec& opponent,
                        Task task, const Anchors& anchors, const RolloutOptions& options) {
  if (anchors.task != task) throw std::invalid_argument("anchors belong to another task");
  if (options.episodes == 0) throw std::invalid_argument("need at least one episode");
  std::vector<EpisodeOutcome> outcomes(options.episodes);
  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, options.episodes));
  auto worker = [&](std::size_t first) {
    auto predators = make_predators();
    auto prey = policy::make_prey_policy(opponent, task);
    for (std::size_t e = first; e < options.episodes; e += jobs) {
      outcomes[e] = play(*predators, *prey, task, derive_seed(options.seed, e), options.env);
    }
  };
  if (jobs == 1) {
    worker(0);
  } else {
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(jobs);
    for (std::size_t j = 0; j < jobs; ++j) {
      threads.emplace_back([&, j] {
        try {
          worker(j);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  EvalReport r;
  r.task = task;
  r.opponent = opponent.to_string();
  r.episodes = options.episodes;
  r.eps = options.eps;
  r.anchors = anchors;
  r.tool_version = kToolVersion;
  std::vector<double> returns, scores, accs;
  for (std::size_t e = 0; e < outcomes.size(); ++e) {
    const auto& o = outcomes[e];
    EpisodeRecord rec;
    rec.seed = derive_seed(options.seed, e);
    rec.team_return = o.team_return;
    rec.score = normalized_score(o.team_return, anchors);
    rec.catches = o.catches;
    if (!o.conjectures.empty()) {
      rec.accuracy = prediction_accuracy(o.conjectures, o.prey_actions, options.eps);
      accs.push_back(*rec.accuracy);
    }
    returns.push_back(rec.team_return);
    scores.push_back(rec.score);
    r.records.push_back(rec);
  }
  std::tie(r.mean_return, r.std_return) = mean_std(returns);
  std::tie(r.score_mean, r.score_std) = mean_std(scores);
  if (!accs.empty()) r.accuracy = mean_std(accs).first;
  return r;
}

std::vector<SweepRow> blend_sweep(const PredatorFactory& make_predators, Task task,
                                  const std::vector<double>& rates, const Anchors& anchors,
                                  const RolloutOptions& options) {
  std::vector<SweepRow> rows;
  for (double p : rates) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("blend rates must lie in [0, 1]");
    policy::PolicySpec spec;
    spec.kind = policy::Kind::Blend;
    spec.blend_p = p;
    const auto r = rollout_eval(make_predators, spec, task, anchors, options);
    rows.push_back({p, r.score_mean, r.score_std, r.accuracy, r.episodes});
  }
  return rows;
}

json to_json(const EvalReport& r) {
  json records = json::array();
  for (const auto& e : r.records) {
    json j = {{"seed", e.seed},
              {"return", e.team_return},
              {"score", e.score},
              {"catches", e.catches}};
    j["accuracy"] = e.accuracy ? json(*e.accuracy) : json(nullptr);
    records.push_back(std::move(j));
  }
  return {{"model", r.model},
          {"variant", r.variant},
          {"level", r.level},
          {"env", env::task_name(r.task)},
          {"opponent", r.opponent},
          {"episodes", r.episodes},
          {"mean_return", r.mean_return},
          {"std_return", r.std_return},
          {"score_mean", r.score_mean},
          {"score_std", r.score_std},
          {"accuracy", r.accuracy ? json(*r.accuracy) : json(nullptr)},
          {"eps", r.eps},
          {"anchors", to_json(r.anchors)},
          {"records", std::move(records)},
          {"run_config", r.run_config},
          {"tool_version", r.tool_version}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  try {
    r.model = j.at("model").get<std::string>();
    r.variant = j.at("variant").get<std::string>();
    r.level = j.at("level").get<std::string>();
    r.task = env::parse_task(j.at("env").get<std::string>());
    r.opponent = j.at("opponent").get<std::string>();
    r.episodes = j.at("episodes").get<std::size_t>();
    r.mean_return = j.at("mean_return").get<double>();
    r.std_return = j.at("std_return").get<double>();
    r.score_mean = j.at("score_mean").get<double>();
    r.score_std = j.at("score_std").get<double>();
    if (!j.at("accuracy").is_null()) r.accuracy = j["accuracy"].get<double>();
    r.eps = j.at("eps").get<double>();
    r.anchors = anchors_from_json(j.at("anchors"));
    for (const auto& e : j.at("records")) {
      EpisodeRecord rec;
      rec.seed = e.at("seed").get<std::uint64_t>();
      rec.team_return = e.at("return").get<double>();
      rec.score = e.at("score").get<double>();
      rec.catches = e.at("catches").get<std::size_t>();
      if (!e.at("accuracy").is_null()) rec.accuracy = e["accuracy"].get<double>();
      r.records.push_back(rec);
    }
    r.run_config = j.value("run_config", json::object());
    r.tool_version = j.value("tool_version", "");
  } catch (const json::exception& e) {
    throw ParseError(std::string("eval report: ") + e.what());
  }
  return r;
}

}  // namespace sctlab::eval
