#include <gtest/gtest.h>

#include <random>

#include "geovid/annotation.hpp"
#include "geovid/error.hpp"
#include "oracles.hpp"

using namespace geovid;

namespace {

/// One-frame strip whose supervoxel s covers volumes[s] consecutive pixels.
Oversegmentation strip(const std::vector<int>& volumes) {
  Oversegmentation base;
  for (std::size_t s = 0; s < volumes.size(); ++s) base.labels.insert(base.labels.end(), volumes[s], RegionId(s));
  base.width = static_cast<int>(base.labels.size());
  base.height = 1;
  base.frames = 1;
  base.num_supervoxels = static_cast<std::uint32_t>(volumes.size());
  return base;
}

/// Random nested hierarchy over a random label volume.
SegmentationHierarchy random_hierarchy(std::mt19937_64& rng, int levels) {
  const std::uint32_t n = std::uniform_int_distribution<std::uint32_t>(2, 40)(rng);
  Oversegmentation base;
  base.width = 12;
  base.height = 10;
  base.frames = 3;
  base.num_supervoxels = n;
  base.labels.resize(360);
  for (std::size_t i = 0; i < base.labels.size(); ++i) {
    base.labels[i] = i < n ? RegionId(i) : std::uniform_int_distribution<RegionId>(0, n - 1)(rng);
  }
  std::vector<std::vector<RegionId>> parents;
  std::vector<double> fractions;
  std::uint32_t count = n;
  for (int l = 1; l <= levels; ++l) {
    const std::uint32_t next = std::max<std::uint32_t>(1, count / 2);
    std::vector<RegionId> p(count);
    for (std::uint32_t r = 0; r < count; ++r) p[r] = r < next ? r : std::uniform_int_distribution<RegionId>(0, next - 1)(rng);
    parents.push_back(std::move(p));
    fractions.push_back(0.2 * l);
    count = next;
  }
  return SegmentationHierarchy(std::move(base), std::move(parents), std::move(fractions), 10);
}

}  // namespace

TEST(Annotation, LabelNamesAndClassMaps) {
  for (int i = 0; i < kNumLabels; ++i) {
    const auto l = static_cast<GeoLabel>(i);
    EXPECT_EQ(parse_label(to_string(l)), l);
  }
  EXPECT_FALSE(parse_label("tree").has_value());
  EXPECT_EQ(main_label(GeoLabel::Porous), GeoLabel::Vertical);
  EXPECT_EQ(main_label(GeoLabel::Mix), GeoLabel::Mix);
  EXPECT_TRUE(is_subvertical(GeoLabel::Object));
  EXPECT_FALSE(is_subvertical(GeoLabel::Vertical));
  EXPECT_EQ(main_index(GeoLabel::Vertical), 2);
  EXPECT_EQ(main_index(GeoLabel::Solid), -1);
  EXPECT_EQ(subvertical_index(GeoLabel::Object), 2);
  EXPECT_EQ(subvertical_index(GeoLabel::Sky), -1);
  EXPECT_FALSE(is_annotation_label(GeoLabel::Vertical));
}

TEST(Annotation, ExactlyNinetyFivePercentIsMix) {
  // 19 of 20 voxels = 95% exactly: not strictly more, so Mix.
  SegmentationHierarchy h(strip({19, 1}), {{0, 0}}, {1.0}, 1);
  GroundTruth gt{"v", {{0, GeoLabel::Sky}, {1, GeoLabel::Ground}}};
  EXPECT_EQ(propagate_labels(h, gt)[1][0], GeoLabel::Mix);
  // 39 of 40 = 97.5%.
  SegmentationHierarchy h2(strip({39, 1}), {{0, 0}}, {1.0}, 1);
  EXPECT_EQ(propagate_labels(h2, gt)[1][0], GeoLabel::Sky);
}

TEST(Annotation, VolumeWeightedNotCountWeighted) {
  // Three small Ground supervoxels against one large Sky supervoxel.
  SegmentationHierarchy h(strip({100, 1, 1, 1}), {{0, 0, 0, 0}}, {1.0}, 1);
  GroundTruth gt{"v", {{0, GeoLabel::Sky}, {1, GeoLabel::Ground}, {2, GeoLabel::Ground}, {3, GeoLabel::Ground}}};
  EXPECT_EQ(propagate_labels(h, gt)[1][0], GeoLabel::Sky);
}

TEST(Annotation, MixSupervoxelsCountAsTheirOwnClass) {
  SegmentationHierarchy h(strip({10, 90}), {{0, 0}}, {1.0}, 1);
  GroundTruth gt{"v", {{0, GeoLabel::Mix}, {1, GeoLabel::Solid}}};
  EXPECT_EQ(propagate_labels(h, gt)[1][0], GeoLabel::Mix);
}

TEST(Annotation, UnlabeledSupervoxelThrows) {
  SegmentationHierarchy h(strip({3, 3}), {{0, 0}}, {1.0}, 1);
  try {
    propagate_labels(h, GroundTruth{"v", {{0, GeoLabel::Sky}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnlabeledSupervoxel);
  }
}

TEST(Annotation, PropagationMatchesVoxelCountingOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const auto h = random_hierarchy(rng, 3);
    GroundTruth gt{"v", {}};
    for (RegionId s = 0; s < h.base().num_supervoxels; ++s) {
      // Mostly Sky so that pure and near-pure regions occur.
      const int r = std::uniform_int_distribution<int>(0, 9)(rng);
      gt.level0[s] = r < 7 ? GeoLabel::Sky : static_cast<GeoLabel>(r - 6);
    }
    EXPECT_EQ(propagate_labels(h, gt), oracle::brute_force_labels(h, gt)) << "trial " << trial;
  }
}

TEST(Annotation, AnnotateFromPixels) {
  const auto base = strip({20, 40});
  std::vector<GeoLabel> px(60, GeoLabel::Ground);
  px[0] = GeoLabel::Sky;  // 19/20 Ground in supervoxel 0 -> Mix
  const GroundTruth gt = annotate_from_pixels(base, px, "x");
  EXPECT_EQ(gt.video_id, "x");
  EXPECT_EQ(gt.level0.at(0), GeoLabel::Mix);
  EXPECT_EQ(gt.level0.at(1), GeoLabel::Ground);
  EXPECT_THROW(annotate_from_pixels(base, std::vector<GeoLabel>(5), "x"), Error);
}

TEST(Annotation, GroundTruthRoundTrip) {
  oracle::TempDir dir;
  GroundTruth gt{"clip", {{0, GeoLabel::Sky}, {4, GeoLabel::Porous}, {9, GeoLabel::Mix}}};
  write_ground_truth(dir / "gt.json", gt);
  const GroundTruth back = read_ground_truth(dir / "gt.json");
  EXPECT_EQ(back.video_id, "clip");
  EXPECT_EQ(back.level0, gt.level0);
}

TEST(Annotation, SessionLabelsAllDescendants) {
  oracle::TempDir dir;
  // Supervoxels 0..3; level 1 joins {0,1} and {2,3}; level 2 joins everything.
  SegmentationHierarchy h(strip({2, 2, 2, 2}), {{0, 0, 1, 1}, {0, 0}}, {0.5, 1.0}, 2);
  AnnotationSession s(h, dir / "gt.json", "clip");
  EXPECT_FALSE(s.complete());
  EXPECT_EQ(s.handle_label_update(1, 1, GeoLabel::Solid).affected_supervoxels, 2u);
  EXPECT_EQ(s.ground_truth().level0.at(2), GeoLabel::Solid);
  EXPECT_EQ(s.ground_truth().level0.count(0), 0u);
  EXPECT_EQ(s.handle_label_update(0, 2, GeoLabel::Sky).affected_supervoxels, 4u);
  EXPECT_TRUE(s.complete());
  EXPECT_EQ(s.handle_label_update(3, 0, GeoLabel::Object).affected_supervoxels, 1u);

  // Persisted after every update.
  const GroundTruth disk = read_ground_truth(dir / "gt.json");
  EXPECT_EQ(disk.level0.at(3), GeoLabel::Object);
  EXPECT_EQ(disk.level0.at(0), GeoLabel::Sky);
  AnnotationSession reopened(h, dir / "gt.json", "clip");
  EXPECT_TRUE(reopened.complete());

  try {
    s.handle_label_update(5, 1, GeoLabel::Sky);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownRegion);
  }
  try {
    s.handle_label_update(0, 1, GeoLabel::Vertical);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidLabelForLevel);
  }
}

TEST(Annotation, ClassStatistics) {
  LabeledVideo v;
  v.gt.level0 = {{0, GeoLabel::Sky}, {1, GeoLabel::Solid}, {2, GeoLabel::Object}, {3, GeoLabel::Mix}};
  v.volumes = {10, 30, 10, 50};
  const auto st = class_statistics({v});
  EXPECT_EQ(st.total_segments, 4u);
  EXPECT_DOUBLE_EQ(st.main_segments.at(GeoLabel::Sky), 0.25);
  EXPECT_DOUBLE_EQ(st.main_segments.at(GeoLabel::Vertical), 0.5);
  EXPECT_DOUBLE_EQ(st.main_area.at(GeoLabel::Mix), 0.5);
  EXPECT_DOUBLE_EQ(st.sub_area.at(GeoLabel::Solid), 0.75);
  EXPECT_FALSE(render_class_statistics(st).empty());
}
