#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mmia/dataset/synthetic.hpp"
#include "mmia/evaluation/attacks.hpp"
#include "support/tempdir.hpp"

using namespace mmia;
using namespace mmia::eval;
using mmia::testing::TempDir;

namespace {

nn::Matrix<float> random_templates(Eigen::Index n, Eigen::Index m, Rng& rng, int levels = 0) {
  nn::Matrix<float> t(n, m);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    // a few discrete levels produce exact distance ties
    t.data()[i] = levels ? static_cast<float>(uniform_index(rng, static_cast<std::size_t>(levels)))
                         : static_cast<float>(standard_normal(rng));
  }
  return t;
}

// ---- oracles, written independently of the library code ----

/// Largest observed distance accepting at most far*N impostors; s_1/2 if none.
double oracle_threshold(const std::vector<double>& d, double far) {
  const double n = static_cast<double>(d.size());
  double best = -1;
  for (double cand : d) {
    long accepted = 0;
    for (double x : d) accepted += x <= cand;
    if (static_cast<double>(accepted) <= far * n + 1e-9 && cand > best) best = cand;
  }
  if (best >= 0) return best;
  return *std::min_element(d.begin(), d.end()) / 2;
}

double dist(const nn::Matrix<float>& a, Eigen::Index i, const nn::Matrix<float>& b, Eigen::Index j) {
  return std::sqrt((a.row(i).cast<double>() - b.row(j).cast<double>()).squaredNorm());
}

std::pair<std::size_t, std::size_t> oracle_rank1(const nn::Matrix<float>& gallery, const std::vector<GalleryEntry>& e,
                                                 const nn::Matrix<float>& recon) {
  std::size_t tp = 0, trials = 0;
  for (Eigen::Index i = 0; i < gallery.rows(); ++i) {
    std::size_t same = 0;
    for (const auto& x : e) same += x.class_label == e[static_cast<std::size_t>(i)].class_label;
    if (same < 2) continue;
    std::vector<std::pair<double, std::string>> cands;
    std::map<std::string, int> cls;
    for (Eigen::Index j = 0; j < gallery.rows(); ++j) {
      if (j == i) continue;
      cands.emplace_back(dist(recon, i, gallery, j), e[static_cast<std::size_t>(j)].sample_id);
      cls[e[static_cast<std::size_t>(j)].sample_id] = e[static_cast<std::size_t>(j)].class_label;
    }
    std::sort(cands.begin(), cands.end());
    ++trials;
    tp += cls[cands.front().second] == e[static_cast<std::size_t>(i)].class_label;
  }
  return {tp, trials};
}

}  // namespace

// ---- distance ----

TEST(L2, AnalyticValues) {
  EXPECT_EQ(l2_distance({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_DOUBLE_EQ(l2_distance({0, 0}, {3, 4}), 5.0);
  EXPECT_THROW(l2_distance({0, 0}, {1}), ShapeError);
}

TEST(L2, SymmetryAndTriangle) {
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    TemplateVector a(6), b(6), c(6);
    for (auto* v : {&a, &b, &c})
      for (auto& x : *v) x = static_cast<float>(standard_normal(rng));
    EXPECT_EQ(l2_distance(a, b), l2_distance(b, a));
    EXPECT_LE(l2_distance(a, c), l2_distance(a, b) + l2_distance(b, c) + 1e-12);
  }
}

// ---- threshold ----

TEST(Threshold, DistinctOneToHundred) {
  std::vector<double> d(100);
  std::iota(d.begin(), d.end(), 1.0);
  const auto t = compute_far_threshold(d);
  EXPECT_EQ(t.t, 1.0);
  EXPECT_EQ(t.accepted, 1u);
  EXPECT_DOUBLE_EQ(t.empirical_far(), 0.01);
  EXPECT_EQ(t.calibration_size, 100u);
}

TEST(Threshold, AllTiedRejectsEverything) {
  const auto t = compute_far_threshold(std::vector<double>(100, 5.0));
  EXPECT_EQ(t.t, 2.5);
  EXPECT_EQ(t.accepted, 0u);
}

TEST(Threshold, UniformScanOracle) {
  Rng rng(2);
  std::vector<double> d(1000);
  for (auto& x : d) x = uniform01(rng);
  const auto t = compute_far_threshold(d);
  std::vector<double> sorted = d;
  std::sort(sorted.begin(), sorted.end());
  auto far_at = [&](double th) {
    return static_cast<double>(std::count_if(d.begin(), d.end(), [&](double x) { return x <= th; })) / 1000.0;
  };
  EXPECT_LE(far_at(t.t), 0.01);
  const auto next = std::upper_bound(sorted.begin(), sorted.end(), t.t);
  ASSERT_NE(next, sorted.end());
  EXPECT_GT(far_at(*next), 0.01);
}

TEST(Threshold, MatchesBruteForceOn50Instances) {
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    const std::size_t n = 1 + uniform_index(rng, 400);
    std::vector<double> d(n);
    const bool ties = k % 2 == 0;
    for (auto& x : d) x = ties ? 0.5 + static_cast<double>(uniform_index(rng, 20)) : uniform01(rng) + 0.01;
    const double far = k % 3 == 0 ? 0.05 : 0.01;
    EXPECT_EQ(compute_far_threshold(d, far).t, oracle_threshold(d, far)) << "instance " << k;
  }
}

TEST(Threshold, Errors) {
  EXPECT_THROW(compute_far_threshold({}), PreconditionError);
  EXPECT_THROW(compute_far_threshold({0.0, 1.0}), PreconditionError);
  EXPECT_THROW(compute_far_threshold({-1.0}), PreconditionError);
}

TEST(Impostors, CrossClassPairsAndSubsampling) {
  Rng rng(4);
  const auto t = random_templates(10, 3, rng);
  const std::vector<int> labels{0, 0, 0, 1, 1, 1, 1, 2, 2, 2};
  const auto all = impostor_distances(t, labels, 100000, 1);
  EXPECT_EQ(all.size(), 3u * 4 + 3 * 3 + 4 * 3);
  const auto some = impostor_distances(t, labels, 10, 1);
  EXPECT_EQ(some.size(), 10u);
  EXPECT_EQ(some, impostor_distances(t, labels, 10, 1));
  for (double x : some) EXPECT_NE(std::find(all.begin(), all.end(), x), all.end());
  EXPECT_THROW(impostor_distances(t, std::vector<int>(10, 0), 100, 1), PreconditionError);
}

// ---- Type1 ----

TEST(Type1, ForcedDistances) {
  nn::Matrix<float> orig = nn::Matrix<float>::Zero(10, 1), re(10, 1);
  for (int i = 0; i < 10; ++i) re(i, 0) = static_cast<float>(0.1 * (i + 1));
  const auto c = type1_count(orig, re, 0.35);
  EXPECT_EQ(c.tp, 3u);
  EXPECT_EQ(c.trials, 10u);
  EXPECT_EQ(c.value(), 0.3);
}

TEST(Type1, MatchesBruteForceOn50Instances) {
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const auto n = static_cast<Eigen::Index>(2 + uniform_index(rng, 199));
    const auto orig = random_templates(n, 8, rng, k % 2 ? 3 : 0), re = random_templates(n, 8, rng, k % 2 ? 3 : 0);
    std::vector<double> d;
    for (Eigen::Index i = 0; i < n; ++i) d.push_back(dist(orig, i, re, i));
    const double t = d[uniform_index(rng, d.size())];
    std::size_t tp = 0;
    for (double x : d) tp += x <= t;
    const auto c = type1_count(orig, re, t);
    EXPECT_EQ(c.tp, tp);
    EXPECT_EQ(c.trials, static_cast<std::size_t>(n));
  }
}

TEST(Type1, IdentityReconstructionIsAlwaysAccepted) {
  BackboneSpec b;
  b.input = {16, 16, 1};
  b.conv_channels = {4};
  b.hidden = 16;
  b.embedding = 8;
  const TargetModel model(ModelKind::feature_extractor, b, {0, 1}, 4, 0.0, 3);
  SyntheticSpec s;
  s.classes = 2;
  s.per_class = 5;
  s.shape = {16, 16, 1};
  const auto corpus = synthesize_corpus(s);
  std::vector<Image> imgs;
  for (const auto& x : corpus) imgs.push_back(x.pixels);
  const auto y = reembed(model, imgs);
  const auto c = type1_count(y, reembed(model, imgs), 0.0);
  EXPECT_EQ(c.value(), 1.0);
}

// ---- Rank-1 ----

TEST(Rank1, ForcedArgmin) {
  const std::vector<GalleryEntry> e{{"a1", 0}, {"a2", 0}, {"b1", 1}};
  nn::Matrix<float> gallery(3, 1);
  gallery << 0.0f, 0.3f, 0.5f;
  nn::Matrix<float> recon = gallery;
  recon(0, 0) = 0.0f;  // d(a2)=0.3, d(b1)=0.5
  auto c = rank1_count(gallery, e, recon);
  // a1 -> a2 at 0.3 beats b1 at 0.5 (tp); a2 -> b1 at 0.2 beats a1 at 0.3; b1 is a singleton
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.trials, 2u);
  EXPECT_EQ(c.skipped, 1u);
  gallery << 0.0f, 0.6f, 0.5f;
  recon = gallery;
  c = rank1_count(gallery, e, recon);
  // a1 -> b1 at 0.5 beats a2 at 0.6
  EXPECT_EQ(c.tp, 0u);
}

TEST(Rank1, TiesGoToSmallestSampleId) {
  const std::vector<GalleryEntry> e{{"p", 0}, {"q", 0}, {"a", 1}, {"z", 0}};
  nn::Matrix<float> gallery(4, 1);
  gallery << 9.0f, 1.0f, 1.0f, 5.0f;
  nn::Matrix<float> recon(4, 1);
  recon << 1.0f, 0.0f, 0.0f, 0.0f;
  // probe p: q and a both at 0 -> "a" (class 1) wins
  const auto c = rank1_count(gallery, e, recon);
  EXPECT_EQ(c.tp, 0u);
  EXPECT_EQ(oracle_rank1(gallery, e, recon).first, c.tp);
  EXPECT_EQ(c.trials, 3u);
}

TEST(Rank1, MatchesBruteForceOn50Instances) {
  Rng rng(6);
  for (int k = 0; k < 50; ++k) {
    const std::size_t n = 2 + uniform_index(rng, 199);
    const int classes = 1 + static_cast<int>(uniform_index(rng, n));
    std::vector<GalleryEntry> e;
    for (std::size_t i = 0; i < n; ++i) {
      char id[16];
      std::snprintf(id, sizeof id, "s%04zu", uniform_index(rng, 10000) * 1000 + i);
      e.push_back({id, static_cast<int>(uniform_index(rng, static_cast<std::size_t>(classes)))});
    }
    const int levels = k % 2 ? 2 : 0;
    const auto gallery = random_templates(static_cast<Eigen::Index>(n), 4, rng, levels);
    const auto recon = random_templates(static_cast<Eigen::Index>(n), 4, rng, levels);
    const auto [tp, trials] = oracle_rank1(gallery, e, recon);
    if (trials == 0) {
      EXPECT_THROW(rank1_count(gallery, e, recon), PreconditionError);
      continue;
    }
    const auto c = rank1_count(gallery, e, recon);
    EXPECT_EQ(c.tp, tp) << "instance " << k;
    EXPECT_EQ(c.trials, trials) << "instance " << k;
    EXPECT_EQ(c.trials + c.skipped, n);
  }
}

TEST(Rank1, AllSingletonsIsAnError) {
  const std::vector<GalleryEntry> e{{"a", 0}, {"b", 1}};
  const nn::Matrix<float> g = nn::Matrix<float>::Zero(2, 2);
  EXPECT_THROW(rank1_count(g, e, g), PreconditionError);
}

// ---- label and decision counts ----

TEST(Counts, UniformPredictionsNearOneOverClasses) {
  Rng rng(7);
  std::vector<int> predicted, expected;
  for (int i = 0; i < 4000; ++i) {
    predicted.push_back(static_cast<int>(uniform_index(rng, 8)));
    expected.push_back(static_cast<int>(uniform_index(rng, 8)));
  }
  const auto c = label_match_count(predicted, expected);
  // binomial sd at p=1/8, n=4000 is about 0.0052
  EXPECT_NEAR(c.value(), 0.125, 0.03);
  EXPECT_EQ(c.value(), static_cast<double>(c.tp) / static_cast<double>(c.trials));
}

TEST(Counts, CoinFlipAttacker) {
  Rng rng(8);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 400; ++i) {
    scores.push_back(uniform01(rng));
    labels.push_back(i % 2);
  }
  EXPECT_NEAR(decision_count(scores, labels).value(), 0.5, 0.05);
  std::vector<double> perfect;
  for (int l : labels) perfect.push_back(l ? 0.9 : 0.1);
  EXPECT_EQ(decision_count(perfect, labels).value(), 1.0);
}

// ---- reports ----

TEST(Reports, CsvRoundTripIsExact) {
  const ReportContext ctx{"upslope", "srwal", "final", 5, "0+1+2+3+4", 3, "abc123"};
  std::vector<EvalReport> reports{make_report("type1", Count{2, 3, 0}, ctx), make_report("rank1", Count{7, 9, 1}, ctx)};
  EXPECT_EQ(reports[0].value, 2.0 / 3.0);
  TempDir dir;
  write_reports_csv(reports, dir / "r.csv");
  EXPECT_EQ(read_reports_csv(dir / "r.csv"), reports);
  write_reports_csv(read_reports_csv(dir / "r.csv"), dir / "s.csv");
  std::ifstream a(dir / "r.csv"), b(dir / "s.csv");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());
  write_reports_json(reports, dir / "r.json");
  std::ifstream j(dir / "r.json");
  EXPECT_EQ(nlohmann::json::parse(j).get<std::vector<EvalReport>>(), reports);
  EXPECT_THROW(read_reports_csv(dir / "missing.csv"), IngestError);
}

TEST(Ablation, RunsPerSubsetAndRejectsEmpty) {
  SnapshotSet set;
  BackboneSpec b;
  b.input = {16, 16, 1};
  b.conv_channels = {2};
  b.hidden = 4;
  b.embedding = 3;
  for (int i = 0; i < 5; ++i) {
    set.snapshots.emplace_back(ModelKind::feature_extractor, b, std::vector<int>{0, 1}, 4, 0.0, i);
    set.stages.push_back({"s", 0.0, i, 0, 0});
  }
  std::vector<std::size_t> seen;
  const auto reports = snapshot_ablation(set, {{1, 2}, {0, 1, 2, 3, 4}}, [&](const SnapshotSet& sub) {
    seen.push_back(sub.alpha());
    return make_report("type1", Count{sub.alpha(), 10, 0}, {});
  });
  EXPECT_EQ(seen, (std::vector<std::size_t>{2, 5}));
  EXPECT_EQ(reports[0].subset, "1+2");
  EXPECT_EQ(reports[1].subset, "0+1+2+3+4");
  EXPECT_EQ(reports[1].alpha, 5u);
  auto noop = [](const SnapshotSet&) { return EvalReport{}; };
  EXPECT_THROW(snapshot_ablation(set, {{}}, noop), PreconditionError);
  EXPECT_THROW(snapshot_ablation(set, {}, noop), PreconditionError);
}
