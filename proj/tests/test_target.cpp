#include <gtest/gtest.h>

#include <cmath>

#include "mmia/dataset/blur.hpp"
#include "mmia/dataset/split.hpp"
#include "mmia/dataset/synthetic.hpp"
#include "mmia/target/store.hpp"
#include "support/tempdir.hpp"

using namespace mmia;
using mmia::testing::TempDir;

namespace {

BackboneSpec tiny_backbone() {
  BackboneSpec b;
  b.input = {16, 16, 1};
  b.conv_channels = {4, 8};
  b.hidden = 32;
  b.embedding = 16;
  return b;
}

const Corpus& tiny_corpus() {
  static const Corpus c = [] {
    SyntheticSpec s;
    s.classes = 8;
    s.per_class = 12;
    s.shape = {16, 16, 1};
    return synthesize_corpus(s);
  }();
  return c;
}

DatasetSplit tiny_split() { return split_feature_extraction(tiny_corpus(), 2, 20, 5); }

TrainConfig quick_config(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.update_epochs = 4;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST(Snapshots, DefaultScheduleEpochs) {
  EXPECT_EQ(detail::schedule_epochs(default_schedule(), 100), (std::vector<int>{0, 25, 50, 75, 100}));
  EXPECT_EQ(detail::schedule_epochs({1.0}, 100), (std::vector<int>{100}));
  EXPECT_EQ(detail::schedule_epochs({0.0}, 100), (std::vector<int>{0}));
  EXPECT_THROW(detail::schedule_epochs({0.5, 0.25}, 100), PreconditionError);
  EXPECT_THROW(detail::schedule_epochs({1.5}, 100), PreconditionError);
  EXPECT_THROW(detail::schedule_epochs({}, 100), PreconditionError);
}

TEST(Snapshots, UpslopeSetShape) {
  const auto split = tiny_split();
  const auto set = train_with_snapshots(split, ModelKind::feature_extractor, tiny_backbone(), quick_config(8),
                                        default_schedule());
  ASSERT_EQ(set.alpha(), 5u);
  EXPECT_EQ(set.scenario, Scenario::upslope);
  std::set<std::string> tags;
  for (std::size_t i = 0; i < set.alpha(); ++i) {
    EXPECT_EQ(set.snapshots[i].output_dim(), 16u);
    EXPECT_EQ(set.snapshots[i].backbone_id(), set.final_model().backbone_id());
    tags.insert(set.snapshots[i].stage_tag());
  }
  EXPECT_EQ(tags.size(), 5u);
  EXPECT_EQ(set.stages[2].epoch, 4);
  EXPECT_TRUE(std::isnan(set.stages[0].train_loss));
}

TEST(Snapshots, SingleAndUntrainedSchedules) {
  const auto split = tiny_split();
  const auto single = train_with_snapshots(split, ModelKind::classifier, tiny_backbone(), quick_config(2), {1.0});
  ASSERT_EQ(single.alpha(), 1u);
  EXPECT_EQ(single.stages[0].epoch, 2);
  const auto init = train_with_snapshots(split, ModelKind::classifier, tiny_backbone(), quick_config(2), {0.0});
  ASSERT_EQ(init.alpha(), 1u);
  EXPECT_EQ(init.final_model().iterations(), 0);
}

TEST(Snapshots, HeldInLossMostlyDecreases) {
  const auto split = tiny_split();
  for (auto kind : {ModelKind::feature_extractor, ModelKind::classifier}) {
    auto cfg = quick_config(20);
    cfg.dropout_rate = 0.2;
    const auto set = train_with_snapshots(split, kind, tiny_backbone(), cfg, default_schedule());
    int inversions = 0;
    for (std::size_t i = 1; i < set.alpha(); ++i) inversions += set.stages[i].eval_loss > set.stages[i - 1].eval_loss;
    EXPECT_LE(inversions, 1) << to_string(kind);
    EXPECT_LT(set.stages.back().eval_loss, set.stages.front().eval_loss) << to_string(kind);
  }
}

TEST(Snapshots, SnapshotsAreDeepCopies) {
  const auto split = tiny_split();
  const auto set = train_with_snapshots(split, ModelKind::feature_extractor, tiny_backbone(), quick_config(2),
                                        {0.0, 1.0});
  const auto& img = split.probe.front().pixels;
  EXPECT_NE(set.snapshots[0].query(img), set.snapshots[1].query(img));
}

TEST(Query, DeterministicShapesAndSoftmax) {
  const auto split = tiny_split();
  TargetModel fe(ModelKind::feature_extractor, BackboneSpec{}, {0, 1, 2}, 4, 0.5, 3);
  const Image big({32, 32, 1}, 0.3f);
  const auto y = fe.query(big);
  EXPECT_EQ(y.size(), 64u);
  EXPECT_EQ(fe.query(big), y);

  TargetModel clf(ModelKind::classifier, tiny_backbone(), {0, 1, 2, 3, 4}, 1, 0.5, 3);
  for (const auto& s : split.probe) {
    const auto p = clf.query(s.pixels);
    ASSERT_EQ(p.size(), 5u);
    double sum = 0;
    for (float v : p) {
      EXPECT_GE(v, 0.0f);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-5);
  }
  EXPECT_THROW(clf.query(big), ShapeError);
}

TEST(Query, DropoutOnlyInTraining) {
  TargetModel m(ModelKind::classifier, tiny_backbone(), {0, 1}, 1, 0.5, 8);
  const auto x = stack_images({&tiny_corpus()[0].pixels, &tiny_corpus()[1].pixels});
  auto& net = m.backbone();
  const auto a = net.forward(x, nn::Phase::train);
  const auto b = net.forward(x, nn::Phase::train);
  EXPECT_GT((a - b).norm(), 0.0f);
  EXPECT_EQ(net.infer(x), net.infer(x));
}

TEST(Store, RoundTripIsBitExact) {
  TempDir dir;
  const auto split = tiny_split();
  const auto set = train_with_snapshots(split, ModelKind::feature_extractor, tiny_backbone(), quick_config(4),
                                        {0.0, 0.5, 1.0});
  save_snapshot_set(set, dir.path());
  const auto back = load_snapshot_set(dir.path());
  ASSERT_EQ(back.alpha(), set.alpha());
  EXPECT_EQ(back.scenario, set.scenario);
  EXPECT_EQ(back.seed, set.seed);
  for (std::size_t i = 0; i < set.alpha(); ++i) {
    EXPECT_EQ(back.snapshots[i].stage_tag(), set.snapshots[i].stage_tag());
    EXPECT_EQ(back.stages[i].epoch, set.stages[i].epoch);
    for (const auto& s : split.probe) EXPECT_EQ(back.snapshots[i].query(s.pixels), set.snapshots[i].query(s.pixels));
  }
  EXPECT_TRUE(std::isnan(back.stages[0].train_loss));
  EXPECT_THROW(load_snapshot_set(dir / "missing"), IngestError);
}

TEST(Update, ThreeStagesAndExtendedClassifier) {
  const auto split = tiny_split();
  const auto cfg = quick_config(3);
  const auto base = train_with_snapshots(split, ModelKind::classifier, tiny_backbone(), cfg, {1.0});
  std::vector<ImageSample> fresh;
  for (const auto& s : split.probe) {
    if (s.class_label == split.probe.front().class_label) fresh.push_back(craft_blurred(s));
  }
  const auto set = run_update_scenario(base, split, fresh, cfg);
  ASSERT_EQ(set.alpha(), 3u);
  EXPECT_EQ(set.scenario, Scenario::update);
  EXPECT_EQ((std::vector<int>{set.stages[0].epoch, set.stages[1].epoch, set.stages[2].epoch}),
            (std::vector<int>{0, 2, 4}));
  for (const auto& m : set.snapshots) EXPECT_EQ(m.output_dim(), base.final_model().output_dim() + 1);
  EXPECT_EQ(set.added_classes, (std::vector<int>{fresh.front().class_label}));

  TempDir dir;
  save_snapshot_set(set, dir.path());
  const auto back = load_snapshot_set(dir.path());
  EXPECT_EQ(back.final_model().labels(), set.final_model().labels());
  EXPECT_EQ(back.final_model().query(fresh[0].pixels), set.final_model().query(fresh[0].pixels));
}

TEST(Update, Preconditions) {
  const auto split = tiny_split();
  const auto cfg = quick_config(1);
  const auto base = train_with_snapshots(split, ModelKind::feature_extractor, tiny_backbone(), cfg, {1.0});
  EXPECT_THROW(run_update_scenario(base, split, {}, cfg), PreconditionError);
  std::vector<ImageSample> natural{split.probe.front()};
  EXPECT_THROW(run_update_scenario(base, split, natural, cfg), PreconditionError);
  std::vector<ImageSample> collide{craft_blurred(split.target_train.front())};
  EXPECT_THROW(run_update_scenario(base, split, collide, cfg), PreconditionError);
}

TEST(Downslope, RemovesClassesAndRecordsThem) {
  const auto split = tiny_split();
  const auto set = run_downslope_scenario(split, ModelKind::classifier, tiny_backbone(), 2, quick_config(4),
                                          default_schedule());
  ASSERT_EQ(set.alpha(), 5u);
  EXPECT_EQ(set.scenario, Scenario::downslope);
  ASSERT_EQ(set.removed_classes.size(), 2u);
  const auto train_classes = class_set(split.target_train);
  EXPECT_EQ(set.final_model().output_dim(), train_classes.size() - 2);
  for (int c : set.removed_classes) {
    EXPECT_EQ(train_classes.count(c), 1u);
    EXPECT_FALSE(set.final_model().index_of(c).has_value());
  }
  const auto control = run_downslope_scenario(split, ModelKind::classifier, tiny_backbone(), 0, quick_config(1),
                                              {1.0});
  EXPECT_TRUE(control.removed_classes.empty());
  EXPECT_EQ(control.final_model().output_dim(), train_classes.size());
  EXPECT_THROW(run_downslope_scenario(split, ModelKind::classifier, tiny_backbone(), 6, quick_config(1), {1.0}),
               PreconditionError);
}

TEST(Training, DeterministicUnderSeed) {
  const auto split = tiny_split();
  const auto a = train_with_snapshots(split, ModelKind::feature_extractor, tiny_backbone(), quick_config(2), {1.0});
  const auto b = train_with_snapshots(split, ModelKind::feature_extractor, tiny_backbone(), quick_config(2), {1.0});
  EXPECT_EQ(a.final_model().query(split.probe[0].pixels), b.final_model().query(split.probe[0].pixels));
}
