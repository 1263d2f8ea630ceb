#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "geovid/dense_flow.hpp"
#include "geovid/frame_store.hpp"
#include "geovid/segmentation.hpp"

namespace geovid {

/// Frozen feature layout. Bump kFeatureLayoutVersion whenever any offset changes.
namespace layout {
inline constexpr int kFeatureLayoutVersion = 1;

inline constexpr int kOrientationBins = 16;
inline constexpr std::array<int, 3> kOffsets = {1, 3, 5};
inline constexpr std::array<int, 3> kKernelSizes = {3, 5, 7};

// Motion block.
inline constexpr int kFlowHist = 0;                                  // 16 x 3 offsets
inline constexpr int kDiffHist = kFlowHist + 16 * 3;                 // 16 x 2 x 3 kernels x 3 offsets
inline constexpr int kRelMeanFlow = kDiffHist + 16 * 2 * 3 * 3;      // 2 x 3
inline constexpr int kMeanLocChange = kRelMeanFlow + 2 * 3;          // 2 x 3
inline constexpr int kPercentileLocChange = kMeanLocChange + 2 * 3;  // 2 pct x 2 axes x 3
inline constexpr int kLocChangeMagnitude = kPercentileLocChange + 2 * 2 * 3;  // 3
inline constexpr int kMotionDims = kLocChangeMagnitude + 3;

// Appearance block, relative to kAppearance.
inline constexpr int kRgbMean = 0;
inline constexpr int kLabMean = 3;
inline constexpr int kHueSatMean = 6;
inline constexpr int kLabHist = 8;  // 10 L + 10 a + 10 b
inline constexpr int kTextureMean = 38;
inline constexpr int kTextureEntropy = 50;
inline constexpr int kCentroid = 51;
inline constexpr int kBoundingBox = 53;
inline constexpr int kAreaFraction = 57;
inline constexpr int kYPercentiles = 58;
inline constexpr int kPerspective = 60;
inline constexpr int kReserved = 61;
inline constexpr int kAppearanceDims = 78;

inline constexpr int kAppearance = kMotionDims;
inline constexpr int kFeatureDims = kMotionDims + kAppearanceDims;

static_assert(kMotionDims == 363);
static_assert(kFeatureDims == 441);

constexpr int diff_hist_offset(int offset_idx, int kernel_idx, int axis) {
  return kDiffHist + ((offset_idx * 3 + kernel_idx) * 2 + axis) * kOrientationBins;
}
}  // namespace layout

using FeatureVector = std::array<float, layout::kFeatureDims>;
using MotionVector = std::array<float, layout::kMotionDims>;
using AppearanceVector = std::array<float, layout::kAppearanceDims>;

/// Magnitude-weighted 16-bin orientation histogram of (u, v) over the slice,
/// divided by the slice area. Zero vectors contribute nothing.
std::array<double, 16> orientation_histogram(std::span<const float> u, std::span<const float> v,
                                             const SegmentSlice& slice);
std::array<double, 16> flow_histogram(const FlowField& flow, const SegmentSlice& slice);

/// Nearest-rank percentile (p in (0,100]) of an unsorted sample; copies.
double nearest_rank_percentile(std::vector<double> values, double p);

/// Motion arriving at frame j from frame j-d: the negated j -> j-d flow and
/// its differentials at every kernel size.
struct OffsetMotion {
  FlowField motion;
  std::array<FlowDifferential, 3> diffs;
};

/// Per-video motion fields, indexed [frame][offset index]; empty when j-d < 0.
class MotionCache {
 public:
  MotionCache() = default;
  MotionCache(const FrameSequence& seq, const FlowParams& params);
  /// Builds from precomputed j -> j-d flows (flows[j][o] empty when unavailable).
  explicit MotionCache(std::vector<std::array<std::optional<FlowField>, 3>> backward_flows);

  const OffsetMotion* get(int frame, int offset_idx) const;
  int frames() const { return static_cast<int>(entries_.size()); }

 private:
  std::vector<std::array<std::optional<OffsetMotion>, 3>> entries_;
};

/// Summary of a slice that location-change features need from other frames.
struct SliceGeometry {
  double cx = 0, cy = 0;
  double p10x = 0, p90x = 0, p10y = 0, p90y = 0;
};
SliceGeometry slice_geometry(const SegmentSlice& slice, int width);

/// Everything motion features need for one (frame, level).
struct MotionContext {
  int width = 0;
  int height = 0;
  /// Motion per offset (nullptr when j-d < 0).
  std::array<const OffsetMotion*, 3> offsets{};
  /// Minimum per-segment mean motion (u, v) over all slices of the frame, per offset.
  std::array<std::array<double, 2>, 3> min_mean_flow{};
  /// Geometry of each region in frame j-d, per offset; looked up by region id.
  std::array<std::vector<std::optional<SliceGeometry>>, 3> previous;
};

MotionContext make_motion_context(const SegmentationHierarchy& h, int level, int j,
                                  const MotionCache& cache,
                                  const std::vector<SegmentSlice>& slices_j);

/// 363-dim motion descriptor. Offsets that are unavailable (frame before the
/// video start, or region absent in that frame) copy the nearest available
/// offset's block; with no available offset the block is zero.
MotionVector motion_features(const MotionContext& ctx, const SegmentSlice& slice);

/// 78-dim appearance descriptor. `region_ids` is the frame's region-id map at
/// the slice's level (texture gradients never cross region borders).
AppearanceVector appearance_features(const SegmentSlice& slice, const Frame& frame,
                                     const LabFrame& lab, std::span<const RegionId> region_ids);

struct SegmentFeatures {
  RegionId region = 0;
  FeatureVector x{};
};

/// features[level][frame] -> one record per non-empty slice, ordered by region id.
using VideoFeatures = std::vector<std::vector<std::vector<SegmentFeatures>>>;

/// Extracts features for every frame at each of `levels` (indices into the hierarchy).
/// Entries for levels not requested stay empty.
VideoFeatures extract_video_features(const FrameSequence& seq, const SegmentationHierarchy& h,
                                     const MotionCache& cache, const std::vector<int>& levels);

/// Cache: u32 count, then per record u32 segment id + 441 float32; little-endian.
void write_feature_file(const std::filesystem::path& path, const std::vector<SegmentFeatures>& records);
std::vector<SegmentFeatures> read_feature_file(const std::filesystem::path& path);

}  // namespace geovid
