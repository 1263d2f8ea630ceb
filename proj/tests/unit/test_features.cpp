#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "geovid/error.hpp"
#include "geovid/features.hpp"
#include "oracles.hpp"

using namespace geovid;
namespace L = geovid::layout;

namespace {

constexpr int kW = 32, kH = 16, kT = 6;
constexpr int kSq = 4;

int square_left(int t) { return 4 + t; }
bool in_square(int x, int y, int t) { return x >= square_left(t) && x < square_left(t) + kSq && y >= 6 && y < 6 + kSq; }

/// Two supervoxels: a 4x4 square translating (1,0) px/frame over a static background.
SegmentationHierarchy moving_square_hierarchy() {
  Oversegmentation base;
  base.width = kW;
  base.height = kH;
  base.frames = kT;
  base.num_supervoxels = 2;
  base.labels.resize(std::size_t(kW) * kH * kT);
  for (int t = 0; t < kT; ++t) {
    for (int y = 0; y < kH; ++y) {
      for (int x = 0; x < kW; ++x) base.labels[base.voxel(x, y, t)] = in_square(x, y, t) ? 1 : 0;
    }
  }
  return SegmentationHierarchy(std::move(base), {{0, 1}}, {1.0}, 1);
}

/// Exact j -> j-d flows: square pixels move back by d, background is still.
MotionCache moving_square_cache(bool moving) {
  std::vector<std::array<std::optional<FlowField>, 3>> flows(kT);
  for (int j = 0; j < kT; ++j) {
    for (int o = 0; o < 3; ++o) {
      const int d = L::kOffsets[o];
      if (j - d < 0) continue;
      FlowField f = FlowField::zeros(kW, kH, j, j - d);
      if (moving) {
        for (int y = 0; y < kH; ++y) {
          for (int x = 0; x < kW; ++x) {
            if (in_square(x, y, j)) f.u[f.index(x, y)] = static_cast<float>(-d);
          }
        }
      }
      flows[j][o] = std::move(f);
    }
  }
  return MotionCache(std::move(flows));
}

SegmentSlice slice_of(const SegmentationHierarchy& h, int j, RegionId r) {
  for (auto& s : frame_slices(h, 1, j)) {
    if (s.region == r) return s;
  }
  throw std::runtime_error("no slice");
}

}  // namespace

TEST(Features, MotionLayoutMatchesBlockDimensions) {
  EXPECT_EQ(L::kDiffHist - L::kFlowHist, 16 * 3);
  EXPECT_EQ(L::kRelMeanFlow - L::kDiffHist, 16 * 2 * 3 * 3);
  EXPECT_EQ(L::kMeanLocChange - L::kRelMeanFlow, 2 * 3);
  EXPECT_EQ(L::kPercentileLocChange - L::kMeanLocChange, 2 * 3);
  EXPECT_EQ(L::kLocChangeMagnitude - L::kPercentileLocChange, 2 * 2 * 3);
  EXPECT_EQ(L::kMotionDims - L::kLocChangeMagnitude, 1 * 3);
  EXPECT_EQ(L::kMotionDims, 363);
  EXPECT_EQ(std::tuple_size_v<MotionVector>, 363u);
  EXPECT_EQ(std::tuple_size_v<FeatureVector>, 441u);
  EXPECT_EQ(L::kAppearance, L::kMotionDims);
  EXPECT_EQ(L::diff_hist_offset(2, 2, 1) + 16, L::kRelMeanFlow);
}

// Absolute offsets as published in FORMATS.md; any change needs a layout version bump.
TEST(Features, FieldOffsetsGolden) {
  const std::vector<std::pair<const char*, int>> fields{
      {"flow_hist", L::kFlowHist},
      {"diff_hist", L::kDiffHist},
      {"rel_mean_flow", L::kRelMeanFlow},
      {"mean_loc_change", L::kMeanLocChange},
      {"pct_loc_change", L::kPercentileLocChange},
      {"loc_change_mag", L::kLocChangeMagnitude},
      {"rgb_mean", L::kAppearance + L::kRgbMean},
      {"lab_mean", L::kAppearance + L::kLabMean},
      {"hue_sat_mean", L::kAppearance + L::kHueSatMean},
      {"lab_hist", L::kAppearance + L::kLabHist},
      {"texture_mean", L::kAppearance + L::kTextureMean},
      {"texture_entropy", L::kAppearance + L::kTextureEntropy},
      {"centroid", L::kAppearance + L::kCentroid},
      {"bbox", L::kAppearance + L::kBoundingBox},
      {"area_fraction", L::kAppearance + L::kAreaFraction},
      {"y_percentiles", L::kAppearance + L::kYPercentiles},
      {"perspective", L::kAppearance + L::kPerspective},
      {"reserved", L::kAppearance + L::kReserved},
      {"end", L::kFeatureDims}};
  std::string table;
  for (const auto& [name, off] : fields) table += std::string(name) + " " + std::to_string(off) + "\n";
  EXPECT_EQ(table,
            "flow_hist 0\ndiff_hist 48\nrel_mean_flow 336\nmean_loc_change 342\npct_loc_change 348\n"
            "loc_change_mag 360\nrgb_mean 363\nlab_mean 366\nhue_sat_mean 369\nlab_hist 371\n"
            "texture_mean 401\ntexture_entropy 413\ncentroid 414\nbbox 416\narea_fraction 420\n"
            "y_percentiles 421\nperspective 423\nreserved 424\nend 441\n");
  EXPECT_EQ(L::kFeatureLayoutVersion, 1);
}

TEST(Features, FlowHistogramMassEqualsMeanMagnitude) {
  std::mt19937_64 rng(42);
  std::normal_distribution<float> g(0.f, 2.f);
  FlowField f = FlowField::zeros(40, 30);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    f.u[i] = g(rng);
    f.v[i] = g(rng);
  }
  for (int trial = 0; trial < 1000; ++trial) {
    SegmentSlice s;
    const double keep = std::uniform_real_distribution<double>(0.01, 0.5)(rng);
    for (std::uint32_t p = 0; p < f.u.size(); ++p) {
      if (std::bernoulli_distribution(keep)(rng)) s.pixels.push_back(p);
    }
    if (s.pixels.empty()) s.pixels.push_back(trial);
    double mass = 0;
    for (double b : flow_histogram(f, s)) mass += b;
    long double ref = 0;
    for (auto p : s.pixels) ref += std::hypot(static_cast<long double>(f.u[p]), static_cast<long double>(f.v[p]));
    ASSERT_NEAR(mass, static_cast<double>(ref / s.area()), 1e-6);
  }
}

TEST(Features, OrientationBinsFollowAngle) {
  FlowField f = FlowField::zeros(4, 1);
  f.u = {1, 0, -2, 0};
  f.v = {0, 1, 0, 0};
  SegmentSlice s{0, {0, 1, 2, 3}};
  const auto h = flow_histogram(f, s);
  EXPECT_DOUBLE_EQ(h[0], 0.25);   // angle 0
  EXPECT_DOUBLE_EQ(h[4], 0.25);   // angle pi/2
  EXPECT_DOUBLE_EQ(h[8], 0.5);    // angle pi, magnitude 2
}

TEST(Features, NearestRankPercentile) {
  EXPECT_EQ(nearest_rank_percentile({5, 1, 4, 2, 3}, 10), 1);
  EXPECT_EQ(nearest_rank_percentile({5, 1, 4, 2, 3}, 90), 5);
  EXPECT_EQ(nearest_rank_percentile({5, 1, 4, 2, 3}, 50), 3);
  EXPECT_THROW(nearest_rank_percentile({}, 50), Error);
}

TEST(Features, TranslatingSegmentMotionBlocks) {
  const auto h = moving_square_hierarchy();
  const MotionCache cache = moving_square_cache(true);
  const int j = 5;
  const auto slices = frame_slices(h, 1, j);
  const MotionContext ctx = make_motion_context(h, 1, j, cache, slices);
  const MotionVector m = motion_features(ctx, slice_of(h, j, 1));
  for (int o = 0; o < 3; ++o) {
    const float d = static_cast<float>(L::kOffsets[o]);
    EXPECT_FLOAT_EQ(m[L::kRelMeanFlow + 2 * o], d);  // background mean (0,0) is the minimum
    EXPECT_FLOAT_EQ(m[L::kRelMeanFlow + 2 * o + 1], 0.f);
    EXPECT_FLOAT_EQ(m[L::kMeanLocChange + 2 * o], d);
    EXPECT_FLOAT_EQ(m[L::kMeanLocChange + 2 * o + 1], 0.f);
    // Whole mass in the angle-0 bin with magnitude d.
    EXPECT_FLOAT_EQ(m[L::kFlowHist + 16 * o], d);
  }
  EXPECT_FLOAT_EQ(m[L::kLocChangeMagnitude], 5.f);

  const MotionVector bg = motion_features(ctx, slice_of(h, j, 0));
  for (int o = 0; o < 3; ++o) EXPECT_FLOAT_EQ(bg[L::kRelMeanFlow + 2 * o], 0.f);
}

TEST(Features, MissingOffsetsCopyTheNearestAvailableBlock) {
  const auto h = moving_square_hierarchy();
  const MotionCache cache = moving_square_cache(true);
  // Frame 2: only offset 1 exists.
  const auto ctx = make_motion_context(h, 1, 2, cache, frame_slices(h, 1, 2));
  const auto m = motion_features(ctx, slice_of(h, 2, 1));
  for (int o = 1; o < 3; ++o) {
    EXPECT_FLOAT_EQ(m[L::kRelMeanFlow + 2 * o], 1.f);
    EXPECT_FLOAT_EQ(m[L::kMeanLocChange + 2 * o], 1.f);
    for (int b = 0; b < 16; ++b) EXPECT_EQ(m[L::kFlowHist + 16 * o + b], m[L::kFlowHist + b]);
  }
  // Frame 0: nothing available, all zero.
  const auto ctx0 = make_motion_context(h, 1, 0, cache, frame_slices(h, 1, 0));
  const auto m0 = motion_features(ctx0, slice_of(h, 0, 1));
  for (float v : m0) EXPECT_EQ(v, 0.f);
}

TEST(Features, StaticVideoHasZeroMotion) {
  const auto h = moving_square_hierarchy();
  const MotionCache cache = moving_square_cache(false);
  std::vector<Frame> frames;
  for (int t = 0; t < kT; ++t) {
    Frame f(kW, kH, t);
    for (int y = 0; y < kH; ++y) {
      for (int x = 0; x < kW; ++x) f.set(x, y, {static_cast<std::uint8_t>(x * 8), 100, 50});
    }
    frames.push_back(std::move(f));
  }
  // The geometry moves but the flow does not; every flow-derived entry must be 0.
  const auto feats = extract_video_features(FrameSequence(frames, "s"), h, cache, {1});
  for (int j = 0; j < kT; ++j) {
    for (const auto& rec : feats[1][j]) {
      for (int i = 0; i < L::kMeanLocChange; ++i) ASSERT_EQ(rec.x[i], 0.f) << i;
    }
  }
}

TEST(Features, AppearanceOfUniformRegion) {
  Frame f(8, 4, 0);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 8; ++x) f.set(x, y, x < 4 ? Rgb{255, 0, 0} : Rgb{0, 0, 255});
  }
  const LabFrame lab = to_working_colorspace(f);
  std::vector<RegionId> ids(32);
  SegmentSlice left{0, {}};
  for (std::uint32_t p = 0; p < 32; ++p) {
    ids[p] = (p % 8) < 4 ? 0 : 1;
    if (ids[p] == 0) left.pixels.push_back(p);
  }
  const auto a = appearance_features(left, f, lab, ids);
  EXPECT_FLOAT_EQ(a[L::kRgbMean], 1.f);
  EXPECT_FLOAT_EQ(a[L::kRgbMean + 2], 0.f);
  EXPECT_NEAR(a[L::kLabMean], 53.24, 0.05);
  EXPECT_FLOAT_EQ(a[L::kHueSatMean], 0.f);
  EXPECT_FLOAT_EQ(a[L::kHueSatMean + 1], 1.f);
  // Texture never crosses the red/blue border.
  for (int i = 0; i < 12; ++i) EXPECT_EQ(a[L::kTextureMean + i], 0.f);
  EXPECT_FLOAT_EQ(a[L::kCentroid], 0.25f);
  EXPECT_FLOAT_EQ(a[L::kCentroid + 1], 0.5f);
  EXPECT_FLOAT_EQ(a[L::kBoundingBox + 2], 0.5f);
  EXPECT_FLOAT_EQ(a[L::kAreaFraction], 0.5f);
  double hist = 0;
  for (int i = 0; i < 10; ++i) hist += a[L::kLabHist + i];
  EXPECT_NEAR(hist, 1.0, 1e-6);
}

TEST(Features, FeatureFileLayoutIsLittleEndianRecords) {
  oracle::TempDir dir;
  std::vector<SegmentFeatures> recs(2);
  recs[0].region = 3;
  recs[1].region = 0x01020304;
  for (int i = 0; i < L::kFeatureDims; ++i) {
    recs[0].x[i] = static_cast<float>(i);
    recs[1].x[i] = -0.5f * i;
  }
  write_feature_file(dir / "f.bin", recs);
  std::ifstream in(dir / "f.bin", std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ASSERT_EQ(bytes.size(), 4u + 2u * (4u + 4u * 441u));
  EXPECT_EQ((std::vector<unsigned char>(bytes.begin(), bytes.begin() + 8)),
            (std::vector<unsigned char>{2, 0, 0, 0, 3, 0, 0, 0}));
  // Second record id, then x[1] = -0.5f (0xBF000000).
  const std::size_t r1 = 4 + 4 + 4 * 441;
  EXPECT_EQ((std::vector<unsigned char>(bytes.begin() + r1, bytes.begin() + r1 + 4)),
            (std::vector<unsigned char>{4, 3, 2, 1}));
  EXPECT_EQ((std::vector<unsigned char>(bytes.begin() + r1 + 8, bytes.begin() + r1 + 12)),
            (std::vector<unsigned char>{0x00, 0x00, 0x00, 0xBF}));
  const auto back = read_feature_file(dir / "f.bin");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].region, recs[1].region);
  EXPECT_EQ(back[1].x, recs[1].x);
}

TEST(Features, ExtractCoversEveryNonEmptySlice) {
  const auto noise = oracle::random_block_video(8, kW, kH, kT);
  const auto h = moving_square_hierarchy();
  const auto feats = extract_video_features(noise, h, moving_square_cache(true), {1});
  ASSERT_EQ(feats.size(), 2u);
  EXPECT_TRUE(feats[0].empty());
  for (int j = 0; j < kT; ++j) {
    ASSERT_EQ(feats[1][j].size(), 2u);
    EXPECT_EQ(feats[1][j][0].region, 0u);
    EXPECT_EQ(feats[1][j][1].region, 1u);
    for (float v : feats[1][j][1].x) ASSERT_TRUE(std::isfinite(v));
  }
}
