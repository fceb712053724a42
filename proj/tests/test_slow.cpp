// Desk-scale training runs (about half an hour on one core). Registered as a
// single ctest entry so the trained models are shared between tests.
#include <gtest/gtest.h>

#include <map>

#include "sctlab/eval.hpp"
#include "sctlab/training.hpp"

using namespace sctlab;
using model::Variant;

namespace {

const data::Dataset& expert_data() {
  static const auto ds = data::generate(env::Task::SimpleTag, data::Level::Expert, 50000, 11);
  return ds;
}

struct Trained {
  std::unique_ptr<model::Model> model;
  train::TrainResult result;
};

const Trained& trained(Variant v) {
  static std::map<Variant, Trained> cache;
  auto it = cache.find(v);
  if (it != cache.end()) return it->second;
  model::ModelConfig mc;
  mc.variant = v;
  mc.transformer.d_model = 32;
  const auto& ds = expert_data();
  Trained t;
  t.model = model::Model::create(mc, ds.header.task, ds.header.normalizer, ds.header.mean_return, 1);
  train::TrainConfig tc;
  tc.batch = 32;
  tc.steps_per_epoch = 5000;
  tc.lr = 1e-3;
  tc.warmup = 300;
  tc.seed = 5;
  tc.log_every = 100;
  t.result = train::train(*t.model, ds, tc);
  return cache.emplace(v, std::move(t)).first->second;
}

double accuracy_vs(const model::Model& m, const char* prey) {
  static const auto anchors = eval::compute_anchors(env::Task::SimpleTag);
  const auto r = eval::rollout_eval(
      [&m] { return std::unique_ptr<policy::PredatorPolicy>(m.make_agent()); },
      policy::PolicySpec::parse(prey), env::Task::SimpleTag, anchors, {100, 77});
  return r.accuracy.value();
}

}  // namespace

TEST(DeskTraining, SctLossHalvesBetweenStep100And5000) {
  const auto& metrics = trained(Variant::SCT).result.metrics;
  ASSERT_EQ(metrics.front().step, 100u);
  ASSERT_EQ(metrics.back().step, 5000u);
  EXPECT_LE(metrics.back().loss.total, 0.5 * metrics.front().loss.total)
      << "step 100: " << metrics.front().loss.total << ", step 5000: " << metrics.back().loss.total;
}

TEST(DeskTraining, SctPredictsTheExpertPrey) {
  EXPECT_GE(accuracy_vs(*trained(Variant::SCT).model, "expert"), 0.9);
}

TEST(DeskTraining, CmadtForecastsLikeSct) {
  const double sct = accuracy_vs(*trained(Variant::SCT).model, "expert");
  const double cmadt = accuracy_vs(*trained(Variant::CMADT).model, "expert");
  EXPECT_NEAR(cmadt, sct, 0.1);
}
