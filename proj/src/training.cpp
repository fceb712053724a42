#include "sctlab/training.hpp"

#include <cmath>
#include <ostream>

#include "sctlab/errors.hpp"
#include "sctlab/optim.hpp"

namespace sctlab::train {

TrainConfig desk_scaled(std::size_t factor, std::size_t epochs) {
  if (factor == 0) throw std::invalid_argument("desk scale factor must be positive");
  TrainConfig c;
  c.steps_per_epoch = 10000 / factor;
  c.warmup = 10000 / factor;
  c.epochs = epochs;
  return c;
}

namespace {

void check_finite(const model::LossBreakdown& l, std::size_t step) {
  if (!std::isfinite(l.total) || !std::isfinite(l.belief) || !std::isfinite(l.policy)) {
    throw NumericError("non-finite loss at step " + std::to_string(step));
  }
}

}  // namespace

TrainResult train(model::Model& model, const data::Dataset& ds, const TrainConfig& config,
                  const std::function<void(const MetricRow&)>& on_log) {
  if (ds.header.task != model.task()) {
    throw DimensionError("dataset is " + std::string(env::task_name(ds.header.task)) +
                         ", model expects " + std::string(env::task_name(model.task())));
  }
  if (config.batch == 0) throw std::invalid_argument("batch must be positive");
  const auto params = model.parameters();
  num::AdamW opt(params, {config.lr, config.weight_decay, config.warmup});
  Rng rng(derive_seed(config.seed, 0x747261696e));
  TrainResult result;
  const std::size_t total = config.steps_per_epoch * config.epochs;
  for (std::size_t step = 1; step <= total; ++step) {
    const auto windows = data::sample_windows(ds, config.batch, model.window_len(), rng);
    num::zero_grads(params);
    model::LossBreakdown loss;
    try {
      const auto terms = model.loss(ds, windows, {true, derive_seed(config.seed, step)});
      loss = terms.values();
      check_finite(loss, step);
      terms.total.backward();
    } catch (const NumericError& e) {
      throw NumericError("training aborted at step " + std::to_string(step) + ": " + e.what());
    }
    if (config.clip_norm > 0.0) num::clip_grad_norm(params, config.clip_norm);
    const double lr = opt.step();
    result.last = loss;
    result.steps = step;
    if (step % config.log_every == 0 || step == total) {
      MetricRow row{step, loss, lr};
      result.metrics.push_back(row);
      if (on_log) on_log(row);
    }
    if (step % config.steps_per_epoch == 0 && !config.checkpoint.empty()) {
      const auto& st = opt.state();
      model::save_model(config.checkpoint, model, &st,
                        {{"run", config.run_config},
                         {"train", {{"step", step}, {"epoch", step / config.steps_per_epoch}}}});
    }
  }
  result.optimizer = opt.state();
  return result;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "step,belief_loss,policy_loss,total,lr\n";
  const auto old = out.precision(17);
  for (const auto& r : rows) {
    out << r.step << ',' << r.loss.belief << ',' << r.loss.policy << ',' << r.loss.total << ','
        << r.lr << '\n';
  }
  out.precision(old);
}

std::vector<data::WindowRef> all_windows(const data::Dataset& ds, std::size_t context_len) {
  std::vector<data::WindowRef> out;
  for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
    for (std::size_t t = 0; t < ds.episodes[e].size(); ++t) {
      out.push_back(data::window_ending_at(e, t, context_len));
    }
  }
  return out;
}

namespace {

// Smallest full batch that scores every transition. Transformer losses cover every step of a
// window, so back-to-back windows per episode suffice; BC predicts only a window's last step.
std::vector<data::WindowRef> probe_windows(const model::Model& model, const data::Dataset& ds) {
  const std::size_t len = model.window_len();
  if (model.variant() == model::Variant::BC) return all_windows(ds, len);
  std::vector<data::WindowRef> out;
  for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
    const std::size_t n = ds.episodes[e].size();
    for (std::size_t end = std::min(len, n); ; end = std::min(end + len, n)) {
      out.push_back(data::window_ending_at(e, end - 1, len));
      if (end == n) break;
    }
  }
  return out;
}

}  // namespace

ProbeResult overfit_probe(model::Model& model, const data::Dataset& tiny, const ProbeConfig& config) {
  if (tiny.episodes.size() > 10) throw std::invalid_argument("overfit probe takes at most 10 episodes");
  const auto params = model.parameters();
  num::AdamW opt(params, {config.lr, 0.0, config.warmup});
  const auto everything = probe_windows(model, tiny);
  Rng rng(derive_seed(config.seed, 0x70726f6265));
  const tf::ForwardOptions no_dropout{false, 0};

  double best = INFINITY;
  std::size_t best_step = 0;
  ProbeResult result;
  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    const auto windows = config.batch == 0
                             ? everything
                             : data::sample_windows(tiny, config.batch, model.window_len(), rng);
    num::zero_grads(params);
    const auto terms = model.loss(tiny, windows, no_dropout);
    const double loss = terms.total.item();
    if (!std::isfinite(loss)) throw NumericError("overfit probe diverged");
    terms.total.backward();
    opt.step();
    result.steps = step;
    if (config.batch == 0) {
      if (loss < config.target) break;
      if (loss < best * 0.99) {
        best = loss;
        best_step = step;
      } else if (step - best_step >= config.patience) {
        break;
      }
    } else if (step % 100 == 0) {
      const double full = model.loss(tiny, everything, no_dropout).total.item();
      if (full < config.target) break;
      if (full < best * 0.99) {
        best = full;
        best_step = step;
      } else if (step - best_step >= config.patience) {
        break;
      }
    }
  }
  result.loss = model.loss(tiny, everything, no_dropout).values();
  return result;
}

}  // namespace sctlab::train
