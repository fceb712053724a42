#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "sctlab/training.hpp"

using namespace sctlab;
using namespace sctlab::train;
using model::Model;
using model::Variant;

namespace {

const data::Dataset& expert_data() {
  static const auto ds = data::generate(env::Task::SimpleTag, data::Level::Expert, 500, 8);
  return ds;
}

std::unique_ptr<Model> make(Variant v, const data::Dataset& ds, std::uint64_t seed = 1) {
  model::ModelConfig c;
  c.variant = v;
  c.transformer.d_model = 16;
  c.transformer.n_layers = 2;
  c.bc.hidden = 32;
  return Model::create(c, ds.header.task, ds.header.normalizer, ds.header.mean_return, seed);
}

TrainConfig quick(std::size_t steps) {
  TrainConfig c;
  c.batch = 4;
  c.steps_per_epoch = steps;
  c.lr = 1e-3;
  c.warmup = 10;
  c.log_every = 5;
  c.seed = 3;
  return c;
}

std::vector<std::vector<double>> snapshot(const Model& m) {
  std::vector<std::vector<double>> out;
  for (const auto& p : m.parameters())
    out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

std::string csv(const std::vector<MetricRow>& rows) {
  std::ostringstream s;
  write_metrics_csv(s, rows);
  return s.str();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(TrainConfig, DefaultsAndDeskScale) {
  const TrainConfig c;
  EXPECT_EQ(c.batch, 64u);
  EXPECT_EQ(c.lr, 1e-4);
  EXPECT_EQ(c.weight_decay, 1e-4);
  EXPECT_EQ(c.clip_norm, 1.0);
  EXPECT_EQ(c.log_every, 100u);
  const auto d = desk_scaled(5);
  EXPECT_EQ(d.steps_per_epoch, 2000u);
  EXPECT_EQ(d.warmup, 2000u);
  EXPECT_EQ(desk_scaled(1, 10).steps_per_epoch, 10000u);
  EXPECT_EQ(desk_scaled(1, 10).epochs, 10u);
  EXPECT_THROW(desk_scaled(0), std::invalid_argument);
}

TEST(Train, ZeroLearningRateLeavesWeightsUntouched) {
  for (Variant v : {Variant::SCT, Variant::BC}) {
    auto m = make(v, expert_data());
    const auto before = snapshot(*m);
    auto cfg = quick(12);
    cfg.lr = 0.0;
    train::train(*m, expert_data(), cfg);
    EXPECT_EQ(snapshot(*m), before) << model::variant_name(v);
  }
}

TEST(Train, SameSeedSameMetricsAndWeights) {
  auto a = make(Variant::SCT, expert_data());
  auto b = make(Variant::SCT, expert_data());
  const auto ra = train::train(*a, expert_data(), quick(20));
  const auto rb = train::train(*b, expert_data(), quick(20));
  EXPECT_EQ(csv(ra.metrics), csv(rb.metrics));
  EXPECT_EQ(snapshot(*a), snapshot(*b));

  auto c = make(Variant::SCT, expert_data());
  auto other = quick(20);
  other.seed = 4;
  EXPECT_NE(csv(train::train(*c, expert_data(), other).metrics), csv(ra.metrics));
}

TEST(Train, WarmupLrIsLoggedExactly) {
  auto m = make(Variant::MADT, expert_data());
  auto cfg = quick(15);
  cfg.log_every = 1;
  const auto r = train::train(*m, expert_data(), cfg);
  ASSERT_EQ(r.metrics.size(), 15u);
  for (const auto& row : r.metrics) {
    EXPECT_EQ(row.lr, 1e-3 * std::min(1.0, static_cast<double>(row.step) / 10.0)) << row.step;
  }
}

TEST(Train, LogsEveryNStepsAndTheLast) {
  auto m = make(Variant::BC, expert_data());
  auto cfg = quick(12);
  const auto r = train::train(*m, expert_data(), cfg);
  std::vector<std::size_t> steps;
  for (const auto& row : r.metrics) steps.push_back(row.step);
  EXPECT_EQ(steps, (std::vector<std::size_t>{5, 10, 12}));
  EXPECT_EQ(r.steps, 12u);
  for (const auto& row : r.metrics) EXPECT_EQ(row.loss.total, row.loss.belief + row.loss.policy);
}

TEST(Train, MetricsCsvColumns) {
  std::vector<MetricRow> rows{{100, {0.5, 0.25, 0.75}, 1e-4}};
  EXPECT_EQ(csv(rows), "step,belief_loss,policy_loss,total,lr\n100,0.5,0.25,0.75,0.0001\n");
}

TEST(Train, TaskMismatchIsADimensionError) {
  const auto world = data::generate(env::Task::SimpleWorld, data::Level::Random, 50, 1);
  auto m = make(Variant::SCT, expert_data());
  EXPECT_THROW(train::train(*m, world, quick(2)), DimensionError);
}

TEST(Train, CheckpointsAtEpochEnds) {
  const auto dir = sctlab::testing::temp_dir("train_ckpt");
  auto m = make(Variant::CMADT, expert_data());
  auto cfg = quick(3);
  cfg.epochs = 2;
  cfg.checkpoint = dir / "m.ckpt";
  cfg.run_config = {{"note", "x"}};
  train::train(*m, expert_data(), cfg);
  const auto back = model::load_model(cfg.checkpoint, Variant::CMADT);
  EXPECT_EQ(back.meta.at("train").at("step"), 6);
  EXPECT_EQ(back.meta.at("train").at("epoch"), 2);
  EXPECT_EQ(back.meta.at("run").at("note"), "x");
  ASSERT_TRUE(back.optimizer.has_value());
  EXPECT_EQ(back.optimizer->step_count, 6u);
  EXPECT_EQ(snapshot(*back.model), snapshot(*m));
}

TEST(Train, NonFiniteLossAbortsAndKeepsLastCheckpoint) {
  const auto dir = sctlab::testing::temp_dir("train_nan");
  auto m = make(Variant::SCT, expert_data());
  auto cfg = quick(2);
  cfg.checkpoint = dir / "m.ckpt";
  train::train(*m, expert_data(), cfg);
  const auto good = slurp(cfg.checkpoint);

  num::Tensor w = m->parameters().back().tensor;
  w.mutable_values()[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train::train(*m, expert_data(), cfg), NumericError);
  EXPECT_EQ(slurp(cfg.checkpoint), good);
}

TEST(Probe, RejectsLargeDatasets) {
  auto m = make(Variant::BC, expert_data());
  EXPECT_THROW(overfit_probe(*m, expert_data()), std::invalid_argument);
}

TEST(Probe, FitsTwoDeterministicEpisodes) {
  // Scripted experts against the expert prey are deterministic given the seed.
  const auto tiny = data::generate(env::Task::SimpleTag, data::Level::Expert, 50, 3);
  ASSERT_EQ(tiny.episodes.size(), 2u);
  for (Variant v : {Variant::SCT, Variant::MADT, Variant::BC}) {
    model::ModelConfig c;
    c.variant = v;
    c.transformer.d_model = 32;
    auto m = Model::create(c, tiny.header.task, tiny.header.normalizer, tiny.header.mean_return, 1);
    ProbeConfig pc;
    pc.target = 5e-4;
    const auto r = overfit_probe(*m, tiny, pc);
    EXPECT_LE(r.steps, 10000u);
    EXPECT_LT(v == Variant::SCT ? r.loss.total : r.loss.policy, 1e-3)
        << model::variant_name(v) << " after " << r.steps << " steps";
  }
}
