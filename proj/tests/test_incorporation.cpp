#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mmia/dataset/split.hpp"
#include "mmia/dataset/synthetic.hpp"
#include "mmia/incorporation/bank_io.hpp"
#include "support/tempdir.hpp"

using namespace mmia;

namespace {

VectorTuple make_tuple(std::size_t alpha, std::size_t m, float base = 1.0f) {
  VectorTuple t{"s", 0, {}};
  for (std::size_t a = 0; a < alpha; ++a) {
    TemplateVector v(m);
    for (std::size_t j = 0; j < m; ++j) v[j] = base + static_cast<float>(a * m + j);
    t.vectors.push_back(v);
  }
  return t;
}

double abs_sum_outside(const AugmentedVector& v, std::size_t m) {
  double s = 0;
  for (std::size_t k = 0; k < v.data.size(); ++k) {
    if (k / m + 1 != *v.slot_index) s += std::abs(v.data[k]);
  }
  return s;
}

/// Chi-square survival function for 4 degrees of freedom (closed form).
double chi2_sf_df4(double x) { return std::exp(-x / 2) * (1 + x / 2); }

std::vector<int> slot_counts(std::size_t alpha, int draws, std::uint64_t seed, bool structured) {
  const auto t = make_tuple(alpha, 3);
  Rng rng(seed);
  std::vector<int> counts(alpha, 0);
  for (int n = 0; n < draws; ++n) {
    const auto v = structured ? make_structured_random(t, rng, true) : make_rand(t, rng);
    ++counts[*v.slot_index - 1];
  }
  return counts;
}

}  // namespace

TEST(Rand, SingleModelAlwaysFirst) {
  const auto t = make_tuple(1, 4);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto v = make_rand(t, rng);
    EXPECT_EQ(v.data, t.vectors[0]);
    EXPECT_EQ(*v.slot_index, 1u);
    EXPECT_EQ(v.mode, Mode::rand);
  }
}

TEST(Rand, BinomialSlotFrequencies) {
  // sd = sqrt(10000 * 0.2 * 0.8) = 40; 3 sd = 120 (within the 150 band).
  for (int c : slot_counts(5, 10000, 3, false)) EXPECT_NEAR(c, 2000, 150);
}

TEST(Rand, ReproducibleUnderSeed) {
  const auto t = make_tuple(5, 2);
  Rng a(77), b(77);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(make_rand(t, a).slot_index, make_rand(t, b).slot_index);
}

TEST(Concat, Definition) {
  VectorTuple t{"s", 0, {{1, 2, 3}, {4, 5, 6}}};
  const auto v = make_concat(t);
  EXPECT_EQ(v.data, (std::vector<float>{1, 2, 3, 4, 5, 6}));
  EXPECT_FALSE(v.slot_index.has_value());
  EXPECT_EQ(make_concat(make_tuple(1, 4)).data, make_tuple(1, 4).vectors[0]);
}

TEST(Concat, SlotExtractionRoundTrips) {
  const auto t = make_tuple(5, 7, -3.5f);
  const auto v = make_concat(t);
  for (std::size_t i = 1; i <= 5; ++i) EXPECT_EQ(slot(v, i, 7), t.vectors[i - 1]);
}

TEST(StructuredRandom, Definition) {
  VectorTuple t{"s", 0, {{1, 1}, {7, 9}, {3, 3}}};
  Rng rng(0);
  bool seen = false;
  for (int n = 0; n < 200 && !seen; ++n) {
    const auto v = make_structured_random(t, rng, false);
    if (*v.slot_index != 2) continue;
    seen = true;
    EXPECT_EQ(v.data, (std::vector<float>{0, 0, 7, 9, 0, 0}));
    EXPECT_EQ(v.mode, Mode::sr);
  }
  EXPECT_TRUE(seen);
  EXPECT_EQ(make_structured_random(t, rng, true).mode, Mode::srwal);
}

TEST(StructuredRandom, ZeroSlotsAreExactlyZero) {
  const auto t = make_tuple(5, 6, 0.25f);
  Rng rng(9);
  for (int n = 0; n < 5000; ++n) {
    const auto v = make_structured_random(t, rng, n % 2 == 0);
    ASSERT_EQ(v.data.size(), 30u);
    EXPECT_EQ(abs_sum_outside(v, 6), 0.0);
    EXPECT_EQ(slot(v, *v.slot_index, 6), t.vectors[*v.slot_index - 1]);
  }
}

TEST(StructuredRandom, BinomialSlotFrequencies) {
  for (int c : slot_counts(5, 10000, 4, true)) EXPECT_NEAR(c, 2000, 150);
}

TEST(StructuredRandom, ChiSquareUniformity) {
  const int n = 100000;
  const auto counts = slot_counts(5, n, 2024, true);
  double chi2 = 0;
  for (int c : counts) chi2 += (c - n / 5.0) * (c - n / 5.0) / (n / 5.0);
  EXPECT_GT(chi2_sf_df4(chi2), 0.001) << "chi2=" << chi2;
  EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), 0), n);
}

TEST(TestInput, SrwalFinalGoesToLastSlot) {
  const auto v = make_test_input(TemplateVector{1, 1}, 5, Mode::srwal);
  EXPECT_EQ(v.data, (std::vector<float>{0, 0, 0, 0, 0, 0, 0, 0, 1, 1}));
  EXPECT_EQ(*v.slot_index, 5u);
}

TEST(TestInput, ConcatAllMatchesConcat) {
  const auto t = make_tuple(4, 3);
  const auto inputs = make_test_inputs(t, Mode::concat, ModelsForTest::all);
  ASSERT_EQ(inputs.size(), 1u);
  EXPECT_EQ(inputs[0].data, make_concat(t).data);
  const auto fin = make_test_inputs(t, Mode::concat, ModelsForTest::final_only);
  EXPECT_EQ(slot(fin[0], 4, 3), t.vectors[3]);
  EXPECT_EQ(slot(fin[0], 1, 3), TemplateVector(3, 0.0f));
}

TEST(TestInput, RandFinalIsUnchanged) {
  const auto t = make_tuple(5, 4);
  const auto inputs = make_test_inputs(t, Mode::rand, ModelsForTest::final_only);
  ASSERT_EQ(inputs.size(), 1u);
  EXPECT_EQ(inputs[0].data, t.vectors[4]);
}

TEST(TestInput, StructuredAllGivesOneInputPerSlot) {
  const auto t = make_tuple(3, 2);
  const auto inputs = make_test_inputs(t, Mode::sr, ModelsForTest::all);
  ASSERT_EQ(inputs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(*inputs[i].slot_index, i + 1);
    EXPECT_EQ(slot(inputs[i], i + 1, 2), t.vectors[i]);
    EXPECT_EQ(abs_sum_outside(inputs[i], 2), 0.0);
  }
}

TEST(TestInput, AvailabilityMismatch) {
  EXPECT_THROW(make_test_input(TemplateVector{1, 2}, 3, Mode::sr, ModelsForTest::all), PreconditionError);
  EXPECT_THROW(make_test_inputs(make_tuple(3, 2), Mode::rand, ModelsForTest::all), PreconditionError);
}

TEST(Bank, BuildsOneTuplePerProbeImage) {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.per_class = 5;
  spec.shape = {16, 16, 1};
  const auto corpus = synthesize_corpus(spec);
  const auto split = split_feature_extraction(corpus, 1, 5, 1);
  BackboneSpec b;
  b.input = spec.shape;
  b.conv_channels = {4};
  b.hidden = 8;
  b.embedding = 6;
  TrainConfig cfg;
  cfg.epochs = 4;
  const auto set = train_with_snapshots(split, ModelKind::feature_extractor, b, cfg, default_schedule());
  const auto bank = build_vector_bank(set, split.probe);
  ASSERT_EQ(bank.size(), 5u);
  for (std::size_t i = 0; i < bank.size(); ++i) {
    EXPECT_EQ(bank[i].alpha(), 5u);
    EXPECT_EQ(bank[i].m(), 6u);
    EXPECT_EQ(bank[i].sample_id, split.probe[i].sample_id);
    for (std::size_t a = 0; a < 5; ++a) {
      // batched and single-row products may differ in the last ulp
      const auto single = set.snapshots[a].query(split.probe[i].pixels);
      for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(bank[i].vectors[a][j], single[j], 1e-5);
    }
  }
  EXPECT_EQ(build_vector_bank(set.subset({4}), split.probe)[0].alpha(), 1u);
  EXPECT_THROW(build_vector_bank(set, {}), PreconditionError);
}

TEST(Bank, CsvRoundTripIsExact) {
  mmia::testing::TempDir dir;
  VectorBank bank;
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    VectorTuple t{"id" + std::to_string(i), i % 3, {}};
    for (int a = 0; a < 3; ++a) {
      TemplateVector v(4);
      for (auto& x : v) x = static_cast<float>(standard_normal(rng) * 1e3);
      t.vectors.push_back(v);
    }
    bank.push_back(t);
  }
  bank[0].vectors[0][0] = 1e-39f;  // subnormal
  write_vector_bank(bank, dir / "b.csv");
  const auto back = read_vector_bank(dir / "b.csv");
  ASSERT_EQ(back.bank.size(), bank.size());
  EXPECT_TRUE(back.members.empty());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    EXPECT_EQ(back.bank[i].sample_id, bank[i].sample_id);
    EXPECT_EQ(back.bank[i].class_label, bank[i].class_label);
    EXPECT_EQ(back.bank[i].vectors, bank[i].vectors);
  }
  std::vector<int> members(bank.size());
  for (std::size_t i = 0; i < members.size(); ++i) members[i] = static_cast<int>(i % 2);
  write_vector_bank(bank, dir / "mi.csv", &members);
  EXPECT_EQ(read_vector_bank(dir / "mi.csv").members, members);
}

TEST(Bank, MalformedCsvFails) {
  mmia::testing::TempDir dir;
  std::ofstream(dir / "bad.csv") << "sample_id,class_label,alpha,m,values\nx,0,2,2,1,2,3\n";
  EXPECT_THROW(read_vector_bank(dir / "bad.csv"), IngestError);
  EXPECT_THROW(read_vector_bank(dir / "none.csv"), IngestError);
}
