#include "sctlab/models.hpp"

#include <deque>

#include "sctlab/errors.hpp"

namespace sctlab::model {

using nlohmann::json;

Variant parse_variant(std::string_view name) {
  if (name == "sct") return Variant::SCT;
  if (name == "cmadt") return Variant::CMADT;
  if (name == "madt") return Variant::MADT;
  if (name == "bc") return Variant::BC;
  throw std::invalid_argument("unknown model '" + std::string(name) + "'");
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::SCT: return "sct";
    case Variant::CMADT: return "cmadt";
    case Variant::MADT: return "madt";
    case Variant::BC: return "bc";
  }
  return "?";
}

json to_json(const ModelConfig& c) {
  return {{"variant", variant_name(c.variant)},
          {"transformer", tf::to_json(c.transformer)},
          {"bc",
           {{"history", c.bc.history},
            {"hidden", c.bc.hidden},
            {"layers", c.bc.layers},
            {"dropout", c.bc.dropout}}},
          {"belief_weight", c.belief_weight}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.transformer = tf::transformer_config_from_json(j.at("transformer"));
  const auto& bc = j.at("bc");
  c.bc.history = bc.at("history").get<std::size_t>();
  c.bc.hidden = bc.at("hidden").get<std::size_t>();
  c.bc.layers = bc.at("layers").get<std::size_t>();
  c.bc.dropout = bc.at("dropout").get<double>();
  c.belief_weight = j.at("belief_weight").get<double>();
  return c;
}

std::size_t tokens_per_step(Variant v) {
  switch (v) {
    case Variant::SCT:
    case Variant::CMADT: return 8;
    case Variant::MADT: return 7;
    case Variant::BC: return 0;
  }
  return 0;
}

bool has_belief_head(Variant v) { return v == Variant::SCT || v == Variant::CMADT; }

LossBreakdown LossTerms::values() const { return {belief.item(), policy.item(), total.item()}; }

Model::Model(ModelConfig config, env::Task task, data::Normalizer normalizer, double rtg_target)
    : config_(std::move(config)),
      task_(task),
      normalizer_(std::move(normalizer)),
      rtg_target_(rtg_target) {
  if (normalizer_.obs_mean.size() != obs_dim()) {
    throw DimensionError("normalizer has " + std::to_string(normalizer_.obs_mean.size()) +
                         " observation entries, " + std::string(env::task_name(task_)) +
                         " predators have " + std::to_string(obs_dim()));
  }
}

std::unique_ptr<Model> Model::create(const ModelConfig& config, env::Task task,
                                     const data::Normalizer& normalizer, double rtg_target,
                                     std::uint64_t seed) {
  if (config.variant == Variant::BC) {
    return std::make_unique<BcModel>(config, task, normalizer, rtg_target, seed);
  }
  return std::make_unique<TransformerModel>(config, task, normalizer, rtg_target, seed);
}

std::size_t Model::window_len() const {
  return config_.variant == Variant::BC ? config_.bc.history : config_.transformer.context_len;
}

std::size_t Model::num_parameters() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

namespace {

std::vector<std::size_t> modality_dims(Variant v, std::size_t obs_dim) {
  std::vector<std::size_t> dims{1, obs_dim, obs_dim, obs_dim};
  if (has_belief_head(v)) dims.push_back(2);
  for (int i = 0; i < env::kNumPredators; ++i) dims.push_back(2);
  return dims;
}

std::array<double, 2> raw(env::Vec2 v) { return {v.x, v.y}; }

env::Vec2 row_vec(const Tensor& t, std::size_t r) { return {t[2 * r], t[2 * r + 1]}; }

Tensor squared_error_mean(const Tensor& pred, const std::vector<double>& target, std::size_t m) {
  return num::scale(num::squared_error(pred, Tensor::constant(pred.shape(), target)),
                    1.0 / static_cast<double>(m));
}

}  // namespace

TransformerModel::TransformerModel(ModelConfig config, env::Task task, data::Normalizer normalizer,
                                   double rtg_target, std::uint64_t seed)
    : Model(std::move(config), task, std::move(normalizer), rtg_target),
      core_([&] {
        Rng rng(derive_seed(seed, 0x6d6f64656c));
        return tf::CausalTransformer(config_.transformer, modality_dims(config_.variant, obs_dim()),
                                     tokens_per_step(config_.variant), rng);
      }()) {
  if (config_.variant == Variant::BC) throw std::invalid_argument("BC is not a transformer variant");
  Rng rng(derive_seed(seed, 0x6865616473));
  if (has_belief_head(config_.variant)) {
    belief_w_ = tf::init_matrix(belief_input_dim(), 2, rng);
    belief_b_ = tf::zeros_param(2);
  }
  for (int i = 0; i < env::kNumPredators; ++i) {
    action_w_[i] = tf::init_matrix(action_input_dim(), 2, rng);
    action_b_[i] = tf::zeros_param(2);
  }
}

std::size_t TransformerModel::belief_input_dim() const {
  return has_belief_head(config_.variant) ? env::kNumPredators * config_.transformer.d_model : 0;
}

std::size_t TransformerModel::action_input_dim() const {
  const std::size_t d = config_.transformer.d_model;
  return config_.variant == Variant::SCT ? 2 * d : d;
}

ParameterList TransformerModel::parameters() const {
  ParameterList out = core_.parameters();
  if (has_belief_head(config_.variant)) {
    out.push_back({"head.belief.w", belief_w_, true});
    out.push_back({"head.belief.b", belief_b_, false});
  }
  for (int i = 0; i < env::kNumPredators; ++i) {
    out.push_back({"head.action" + std::to_string(i) + ".w", action_w_[i], true});
    out.push_back({"head.action" + std::to_string(i) + ".b", action_b_[i], false});
  }
  return out;
}

tf::TokenBatch TransformerModel::make_batch() const {
  return tf::TokenBatch(modality_dims(config_.variant, obs_dim()));
}

void TransformerModel::append_step(tf::TokenBatch& batch, std::size_t step,
                                   const StepInput& in) const {
  const bool prey_token = has_belief_head(config_.variant);
  if (prey_token && in.actions && !in.prey) {
    throw std::invalid_argument("predator action tokens must follow the prey-action token");
  }
  const double rtg = normalizer_.rtg(in.rtg);
  batch.push(kRtg, step, std::span<const double>(&rtg, 1));
  for (int i = 0; i < env::kNumPredators; ++i) {
    const auto o = normalizer_.obs(in.obs[i]);
    batch.push(kObs1 + i, step, o);
  }
  if (prey_token && in.prey) {
    const auto p = raw(*in.prey);
    batch.push(kPreyAct, step, p);
  }
  if (in.actions) {
    const std::size_t first = prey_token ? kAct1 : kPreyAct;
    for (int i = 0; i < env::kNumPredators; ++i) {
      const auto a = raw((*in.actions)[i]);
      batch.push(first + i, step, a);
    }
  }
}

Tensor TransformerModel::belief(const Tensor& hidden, const StepRows& rows) const {
  if (!has_belief_head(config_.variant)) throw StateError("MADT has no belief head");
  std::array<Tensor, env::kNumPredators> h;
  for (int i = 0; i < env::kNumPredators; ++i) h[i] = num::gather_rows(hidden, rows.obs[i]);
  return num::tanh(num::linear(num::concat_cols(h), belief_w_, belief_b_));
}

std::array<Tensor, env::kNumPredators> TransformerModel::actions(const Tensor& hidden,
                                                                 const StepRows& rows) const {
  std::array<Tensor, env::kNumPredators> out;
  Tensor prey;
  if (config_.variant == Variant::SCT) prey = num::gather_rows(hidden, rows.prey);
  for (int i = 0; i < env::kNumPredators; ++i) {
    Tensor h = num::gather_rows(hidden, rows.obs[i]);
    if (config_.variant == Variant::SCT) {
      const Tensor parts[] = {prey, h};
      h = num::concat_cols(parts);
    }
    out[i] = num::tanh(num::linear(h, action_w_[i], action_b_[i]));
  }
  return out;
}

LossTerms TransformerModel::loss(const data::Dataset& ds, std::span<const data::WindowRef> windows,
                                 const tf::ForwardOptions& options) const {
  if (ds.header.task != task_) throw DimensionError("dataset task does not match the model");
  if (windows.empty()) throw std::invalid_argument("loss needs at least one window");
  const std::size_t tps = tokens_per_step(config_.variant);
  tf::TokenBatch batch = make_batch();
  std::vector<std::pair<std::size_t, std::size_t>> steps;  // (sequence, step in window)
  std::vector<double> prey_target;
  std::array<std::vector<double>, env::kNumPredators> act_target;
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto& w = windows[b];
    const auto& ep = ds.episodes.at(w.episode);
    if (w.length == 0 || w.end() > ep.size() || w.length > config_.transformer.context_len) {
      throw IndexError("window outside episode or context");
    }
    batch.start_sequence();
    for (std::size_t k = 0; k < w.length; ++k) {
      const auto& tr = ep[w.start + k];
      append_step(batch, k, {tr.rtg, tr.obs, tr.prey_action, tr.pred_actions});
      steps.emplace_back(b, k);
      prey_target.insert(prey_target.end(), {tr.prey_action.x, tr.prey_action.y});
      for (int i = 0; i < env::kNumPredators; ++i) {
        act_target[i].insert(act_target[i].end(), {tr.pred_actions[i].x, tr.pred_actions[i].y});
      }
    }
  }
  StepRows rows;
  for (const auto& [b, k] : steps) {
    for (int i = 0; i < env::kNumPredators; ++i) rows.obs[i].push_back(batch.row(b, k * tps + 1 + i));
    if (has_belief_head(config_.variant)) rows.prey.push_back(batch.row(b, k * tps + kPreyAct));
  }
  const std::size_t m = steps.size();
  const Tensor hidden = core_.forward(batch, options);

  LossTerms out;
  const auto acts = actions(hidden, rows);
  out.policy = squared_error_mean(acts[0], act_target[0], m);
  for (int i = 1; i < env::kNumPredators; ++i) {
    out.policy = num::add(out.policy, squared_error_mean(acts[i], act_target[i], m));
  }
  if (has_belief_head(config_.variant)) {
    out.belief = squared_error_mean(belief(hidden, rows), prey_target, m);
    out.total = num::add(num::scale(out.belief, config_.belief_weight), out.policy);
  } else {
    out.belief = Tensor::scalar(0.0);
    out.total = out.policy;
  }
  return out;
}

namespace {

class TransformerAgent final : public ModelAgent {
 public:
  explicit TransformerAgent(const TransformerModel& model) : model_(model) {}

  void begin_episode(std::uint64_t) override {
    history_.clear();
    rtg_ = model_.rtg_target();
    t_ = 0;
    conjecture_.reset();
  }

  policy::PredatorActions act(const policy::PredatorObservations& obs) override {
    const std::size_t context = model_.config().transformer.context_len;
    while (history_.size() >= context) history_.pop_front();
    const Variant v = model_.variant();
    const std::size_t tps = tokens_per_step(v);
    const std::size_t k = history_.size();

    StepInput current{rtg_, obs, std::nullopt, std::nullopt};
    auto build = [&](const StepInput& last) {
      tf::TokenBatch batch = model_.make_batch();
      batch.start_sequence();
      for (std::size_t s = 0; s < history_.size(); ++s) model_.append_step(batch, s, history_[s]);
      model_.append_step(batch, k, last);
      return batch;
    };
    TransformerModel::StepRows rows;
    auto fill_rows = [&](const tf::TokenBatch& batch) {
      for (int i = 0; i < env::kNumPredators; ++i) rows.obs[i] = {batch.row(0, k * tps + 1 + i)};
      if (current.prey) rows.prey = {batch.row(0, k * tps + kPreyAct)};
    };

    const tf::ForwardOptions eval{false, 0};
    auto batch = build(current);
    fill_rows(batch);
    Tensor hidden = model_.core().forward(batch, eval);
    env::Vec2 conjecture{};
    if (has_belief_head(v)) {
      conjecture = row_vec(model_.belief(hidden, rows), 0);
      if (hook_) conjecture = hook_(t_, conjecture);
      conjecture_ = conjecture;
      current.prey = conjecture;
    }
    if (v == Variant::SCT) {
      // Second pass with the conjecture in place as the prey-action token.
      batch = build(current);
      fill_rows(batch);
      hidden = model_.core().forward(batch, eval);
    }
    const auto heads = model_.actions(hidden, rows);
    policy::PredatorActions out;
    for (int i = 0; i < env::kNumPredators; ++i) out[i] = row_vec(heads[i], 0);
    current.prey = conjecture;
    current.actions = out;
    history_.push_back(current);
    ++t_;
    return out;
  }

  void record_outcome(double team_reward) override { rtg_ -= team_reward; }

  std::optional<env::Vec2> conjecture() const override { return conjecture_; }

 private:
  const TransformerModel& model_;
  std::deque<StepInput> history_;
  double rtg_ = 0.0;
  std::size_t t_ = 0;
  std::optional<env::Vec2> conjecture_;
};

}  // namespace

std::unique_ptr<ModelAgent> TransformerModel::make_agent() const {
  return std::make_unique<TransformerAgent>(*this);
}

BcModel::BcModel(ModelConfig config, env::Task task, data::Normalizer normalizer,
                 double rtg_target, std::uint64_t seed)
    : Model(std::move(config), task, std::move(normalizer), rtg_target) {
  const auto& bc = config_.bc;
  if (bc.history == 0 || bc.hidden == 0 || bc.layers == 0) {
    throw std::invalid_argument("BC sizes must be positive");
  }
  if (bc.dropout < 0.0 || bc.dropout >= 1.0) throw std::invalid_argument("dropout must lie in [0, 1)");
  Rng rng(derive_seed(seed, 0x6263));
  std::size_t in = input_dim();
  for (std::size_t l = 0; l < bc.layers; ++l) {
    weights_.push_back(tf::init_matrix(in, bc.hidden, rng));
    biases_.push_back(tf::zeros_param(bc.hidden));
    in = bc.hidden;
  }
  weights_.push_back(tf::init_matrix(in, 2 * env::kNumPredators, rng));
  biases_.push_back(tf::zeros_param(2 * env::kNumPredators));
}

std::size_t BcModel::input_dim() const {
  return config_.bc.history * obs_dim() * env::kNumPredators;
}

ParameterList BcModel::parameters() const {
  ParameterList out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back({"mlp" + std::to_string(l) + ".w", weights_[l], true});
    out.push_back({"mlp" + std::to_string(l) + ".b", biases_[l], false});
  }
  return out;
}

Tensor BcModel::forward(const Tensor& inputs, const tf::ForwardOptions& options) const {
  if (inputs.cols() != input_dim()) {
    throw DimensionError("BC expects " + std::to_string(input_dim()) + " inputs, got " +
                         std::to_string(inputs.cols()));
  }
  Tensor x = inputs;
  for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
    x = num::dropout(num::relu(num::linear(x, weights_[l], biases_[l])), config_.bc.dropout,
                     options.training, derive_seed(options.seed, l));
  }
  return num::tanh(num::linear(x, weights_.back(), biases_.back()));
}

std::vector<double> BcModel::encode_history(
    std::span<const std::array<env::Observation, env::kNumPredators>> steps) const {
  const std::size_t h = config_.bc.history;
  const std::size_t per_step = obs_dim() * env::kNumPredators;
  std::vector<double> out(h * per_step, 0.0);
  const std::size_t n = std::min(h, steps.size());
  const std::size_t first = steps.size() - n;
  for (std::size_t s = 0; s < n; ++s) {
    auto it = out.begin() + static_cast<std::ptrdiff_t>((h - n + s) * per_step);
    for (const auto& o : steps[first + s]) {
      const auto z = normalizer_.obs(o);
      it = std::copy(z.begin(), z.end(), it);
    }
  }
  return out;
}

LossTerms BcModel::loss(const data::Dataset& ds, std::span<const data::WindowRef> windows,
                        const tf::ForwardOptions& options) const {
  if (ds.header.task != task_) throw DimensionError("dataset task does not match the model");
  if (windows.empty()) throw std::invalid_argument("loss needs at least one window");
  std::vector<double> inputs, target;
  inputs.reserve(windows.size() * input_dim());
  std::vector<std::array<env::Observation, env::kNumPredators>> hist;
  for (const auto& w : windows) {
    const auto& ep = ds.episodes.at(w.episode);
    if (w.length == 0 || w.end() > ep.size()) throw IndexError("window outside episode");
    hist.clear();
    for (std::size_t s = w.start; s < w.end(); ++s) hist.push_back(ep[s].obs);
    const auto x = encode_history(hist);
    inputs.insert(inputs.end(), x.begin(), x.end());
    for (const auto& a : ep[w.end() - 1].pred_actions) target.insert(target.end(), {a.x, a.y});
  }
  const std::size_t m = windows.size();
  const Tensor pred = forward(Tensor::constant({m, input_dim()}, std::move(inputs)), options);
  LossTerms out;
  out.belief = Tensor::scalar(0.0);
  out.policy = squared_error_mean(pred, target, m);
  out.total = out.policy;
  return out;
}

namespace {

class BcAgent final : public ModelAgent {
 public:
  explicit BcAgent(const BcModel& model) : model_(model) {}

  void begin_episode(std::uint64_t) override { history_.clear(); }

  policy::PredatorActions act(const policy::PredatorObservations& obs) override {
    history_.push_back(obs);
    if (history_.size() > model_.config().bc.history) history_.erase(history_.begin());
    const auto x = model_.encode_history(history_);
    const Tensor out = model_.forward(Tensor::constant({1, x.size()}, x), {false, 0});
    policy::PredatorActions a;
    for (int i = 0; i < env::kNumPredators; ++i) a[i] = row_vec(out, static_cast<std::size_t>(i));
    return a;
  }

 private:
  const BcModel& model_;
  std::vector<std::array<env::Observation, env::kNumPredators>> history_;
};

}  // namespace

std::unique_ptr<ModelAgent> BcModel::make_agent() const { return std::make_unique<BcAgent>(*this); }

void save_model(const std::filesystem::path& path, const Model& model,
                const num::OptimizerState* optimizer, const json& extra) {
  json meta = {{"variant", variant_name(model.variant())},
               {"env", env::task_name(model.task())},
               {"model", to_json(model.config())},
               {"normalizer", data::to_json(model.normalizer())},
               {"rtg_target", model.rtg_target()},
               {"tool_version", kToolVersion}};
  for (const auto& [k, v] : extra.items()) meta[k] = v;
  num::write_checkpoint(path, meta, model.parameters(), optimizer);
}

LoadedModel load_model(const std::filesystem::path& path, std::optional<Variant> expected) {
  auto ckpt = num::read_checkpoint(path);
  LoadedModel out;
  try {
    const auto& meta = ckpt.meta;
    const Variant v = parse_variant(meta.at("variant").get<std::string>());
    if (expected && *expected != v) {
      throw std::invalid_argument("checkpoint '" + path.string() + "' holds a " +
                                  std::string(variant_name(v)) + " model, expected " +
                                  std::string(variant_name(*expected)));
    }
    const ModelConfig config = model_config_from_json(meta.at("model"));
    if (config.variant != v) throw ParseError("checkpoint variant tags disagree");
    out.model = Model::create(config, env::parse_task(meta.at("env").get<std::string>()),
                              data::normalizer_from_json(meta.at("normalizer")),
                              meta.at("rtg_target").get<double>(), 0);
    out.meta = meta;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint '" + path.string() + "': " + e.what());
  }
  num::assign_parameters(out.model->parameters(), ckpt);
  out.optimizer = std::move(ckpt.optimizer);
  return out;
}

}  // namespace sctlab::model
