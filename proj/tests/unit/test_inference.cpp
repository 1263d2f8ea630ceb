#include <gtest/gtest.h>

#include <random>
#include <set>
#include <tuple>

#include "geovid/corpus.hpp"
#include "geovid/error.hpp"
#include "geovid/inference.hpp"
#include "oracles.hpp"

using namespace geovid;

namespace {

std::array<double, 3> random_simplex(std::mt19937_64& rng) {
  std::gamma_distribution<double> g(0.7, 1.0);
  std::array<double, 3> p{g(rng) + 1e-9, g(rng) + 1e-9, g(rng) + 1e-9};
  const double s = p[0] + p[1] + p[2];
  for (auto& v : p) v /= s;
  return p;
}

std::vector<LevelPrediction> random_levels(std::mt19937_64& rng) {
  std::vector<LevelPrediction> out(std::uniform_int_distribution<int>(1, 5)(rng));
  for (auto& l : out) {
    l.main = random_simplex(rng);
    l.subvertical = random_simplex(rng);
    l.homogeneity = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
  }
  return out;
}

ClassifierBundle constant_bundle() {
  // One single-leaf tree per member so posteriors are fixed but not uniform.
  ClassifierBundle b = empty_bundle();
  auto leaf = [](double v) {
    TreeNode n;
    n.value = v;
    return DecisionTree({n});
  };
  b.main[2].trees.push_back(leaf(1.0));
  b.subvertical[1].trees.push_back(leaf(0.5));
  b.homogeneity.trees.push_back(leaf(2.0));
  return b;
}

}  // namespace

TEST(Inference, FusionMatchesFormulaOnRandomInputs) {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto levels = random_levels(rng);
    const FusionResult r = fuse_hierarchy_posteriors(levels);
    ASSERT_FALSE(r.unweighted_fallback);
    for (bool sub : {false, true}) {
      const auto ref = oracle::fusion_formula(levels, sub);
      const auto& got = sub ? r.posterior.subvertical : r.posterior.main;
      double sum = 0;
      for (int k = 0; k < 3; ++k) {
        ASSERT_NEAR(got[k], static_cast<double>(ref[k]), 1e-12);
        double lo = 1, hi = 0;
        for (const auto& l : levels) {
          const double v = sub ? l.subvertical[k] : l.main[k];
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        ASSERT_GE(got[k], lo - 1e-12);
        ASSERT_LE(got[k], hi + 1e-12);
        sum += got[k];
      }
      ASSERT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(Inference, FusionIdentityAndScaleInvariance) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    auto levels = random_levels(rng);
    const auto single = fuse_hierarchy_posteriors(std::span(levels).first(1)).posterior;
    for (int k = 0; k < 3; ++k) ASSERT_NEAR(single.main[k], levels[0].main[k], 1e-12);
    const auto base = fuse_hierarchy_posteriors(levels).posterior;
    const double c = std::uniform_real_distribution<double>(0.01, 100)(rng);
    for (auto& l : levels) l.homogeneity *= c;
    const auto scaled = fuse_hierarchy_posteriors(levels).posterior;
    for (int k = 0; k < 3; ++k) ASSERT_NEAR(base.main[k], scaled.main[k], 1e-12);
  }
}

TEST(Inference, FusionFallsBackWhenAllHomogeneitiesAreZero) {
  std::vector<LevelPrediction> levels(2);
  levels[0].main = {1, 0, 0};
  levels[1].main = {0, 1, 0};
  levels[0].subvertical = levels[1].subvertical = {0, 0, 1};
  const auto r = fuse_hierarchy_posteriors(levels);
  EXPECT_TRUE(r.unweighted_fallback);
  EXPECT_DOUBLE_EQ(r.posterior.main[0], 0.5);
  EXPECT_THROW(fuse_hierarchy_posteriors({}), Error);
}

TEST(Inference, TemporalAggregateUsesFirstWindowFrames) {
  std::vector<ClassPosterior> frames(4);
  frames[0].main = {1, 0, 0};
  frames[1].main = {0, 1, 0};
  frames[2].main = {0, 1, 0};
  frames[3].main = {0, 0, 1};
  const auto w1 = temporal_aggregate(frames, 1);
  EXPECT_EQ(w1.main, (std::array<double, 3>{1, 0, 0}));
  const auto w2 = temporal_aggregate(frames, 2);
  EXPECT_DOUBLE_EQ(w2.main[0], 0.5);
  const auto w25 = temporal_aggregate(frames, 25);  // clipped to the lifetime
  EXPECT_DOUBLE_EQ(w25.main[1], 0.5);
  EXPECT_DOUBLE_EQ(w25.main[2], 0.25);
  EXPECT_THROW(temporal_aggregate({}, 3), Error);
}

TEST(Inference, ArgmaxTiesResolveToClassOrder) {
  EXPECT_EQ(argmax3({0.4, 0.4, 0.2}), 0);
  EXPECT_EQ(argmax3({0.2, 0.4, 0.4}), 1);
  EXPECT_EQ(argmax3({0.1, 0.2, 0.7}), 2);
}

TEST(Inference, ClassifierCallsCountUniqueSegmentFramePairs) {
  PrepareOptions po;
  po.level_fractions = {0.1, 0.2};
  const auto v = prepare_video(oracle::random_block_video(31, 32, 24, 8), std::nullopt, po);
  const ClassifierBundle b = constant_bundle();
  for (int window : {1, 3, 25}) {
    InferenceConfig cfg;
    cfg.window = window;
    const auto labeling = label_video(v.hierarchy, v.features, b, cfg);

    const auto& base = v.hierarchy.base();
    const auto life = supervoxel_lifetimes(base);
    std::set<std::tuple<int, int, RegionId>> unique;
    for (RegionId s = 0; s < base.num_supervoxels; ++s) {
      for (int j = life[s].first; j <= std::min(life[s].second, life[s].first + window - 1); ++j) {
        for (int level : {1, 2}) unique.emplace(level, j, v.hierarchy.region_of_supervoxel(s, level));
      }
    }
    EXPECT_EQ(labeling.classifier_calls, unique.size()) << window;
    EXPECT_LT(labeling.classifier_calls, base.labels.size());
  }
}

TEST(Inference, LabelingUsesFusedPosteriors) {
  PrepareOptions po;
  po.level_fractions = {0.1, 0.2};
  const auto v = prepare_video(oracle::random_block_video(32, 24, 16, 4), std::nullopt, po);
  const auto labeling = label_video(v.hierarchy, v.features, constant_bundle(), {});
  ASSERT_EQ(labeling.supervoxels.size(), v.hierarchy.base().num_supervoxels);
  for (const auto& s : labeling.supervoxels) {
    EXPECT_EQ(s.main, GeoLabel::Vertical);
    ASSERT_TRUE(s.subvertical.has_value());
    EXPECT_EQ(*s.subvertical, GeoLabel::Porous);
  }
  const auto leaf = labeling.voxel_labels(v.hierarchy.base());
  for (auto l : leaf) ASSERT_EQ(l, GeoLabel::Porous);

  InferenceConfig missing;
  missing.level_fractions = {0.3};
  try {
    label_video(v.hierarchy, v.features, constant_bundle(), missing);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingDependency);
  }
  ClassifierBundle stale = constant_bundle();
  stale.feature_layout_version = 0;
  EXPECT_THROW(label_video(v.hierarchy, v.features, stale, {}), Error);
}

TEST(Inference, WriteLabelingOutputs) {
  oracle::TempDir dir;
  PrepareOptions po;
  po.level_fractions = {0.1, 0.2};
  const auto v = prepare_video(oracle::random_block_video(33, 16, 12, 3), std::nullopt, po);
  const auto labeling = label_video(v.hierarchy, v.features, constant_bundle(), {});
  write_labeling(dir / "pred", v.hierarchy.base(), labeling);
  EXPECT_TRUE(std::filesystem::exists(dir / "pred" / "labels.json"));
  const Frame f = read_png(dir / "pred" / "pred" / "frame_000002.png");
  EXPECT_EQ(f.at(0, 0), label_color(GeoLabel::Porous));
  EXPECT_TRUE(std::filesystem::exists(dir / "pred" / "conf" / "object" / "frame_000000.png"));
}
