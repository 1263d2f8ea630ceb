#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "geovid/dense_flow.hpp"
#include "geovid/frame_store.hpp"

namespace geovid {

using RegionId = std::uint32_t;

/// Union-find with path halving and union by size.
class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n);

  std::uint32_t find(std::uint32_t x);
  /// Returns the surviving root. The larger set absorbs the smaller; on equal
  /// sizes the lower root id survives.
  std::uint32_t unite(std::uint32_t a, std::uint32_t b);
  std::uint32_t size(std::uint32_t x) { return size_[find(x)]; }
  std::size_t element_count() const { return parent_.size(); }

 private:
  std::vector<std::uint32_t> parent_;
  std::vector<std::uint32_t> size_;
};

/// Level-0 supervoxels over the width x height x frames volume.
/// Voxel (x, y, t) lives at index t*width*height + y*width + x.
struct Oversegmentation {
  int width = 0;
  int height = 0;
  int frames = 0;
  std::vector<RegionId> labels;
  std::uint32_t num_supervoxels = 0;

  std::size_t frame_area() const { return static_cast<std::size_t>(width) * height; }
  std::size_t voxel(int x, int y, int t) const {
    return static_cast<std::size_t>(t) * frame_area() + static_cast<std::size_t>(y) * width + x;
  }
  std::span<const RegionId> frame_labels(int t) const {
    return std::span<const RegionId>(labels).subspan(t * frame_area(), frame_area());
  }
};

struct SegParams {
  /// Felzenszwalb scale for the voxel graph (Lab distance units).
  double k = 150.0;
  /// Minimum supervoxel volume in voxels.
  int min_size = 60;
  /// Scale for the first region-graph iteration (chi-square units); doubles every iteration.
  double region_k = 0.05;
  /// Upper bound on region-graph iterations.
  int max_iterations = 64;
};

/// Appearance + motion descriptor of a region: a 60-bin Lab histogram
/// (20 L, 20 a, 20 b) and a 16-bin flow orientation histogram, each summing to 1.
struct RegionDescriptor {
  static constexpr int kLabBins = 20;
  static constexpr int kFlowBins = 16;
  std::array<double, 3 * kLabBins> lab_histogram{};
  std::array<double, kFlowBins> flow_histogram{};
};

/// Raw descriptor counts. Sums of member counts describe unions exactly.
struct DescriptorCounts {
  std::array<double, 3 * RegionDescriptor::kLabBins> lab{};
  std::array<double, RegionDescriptor::kFlowBins> flow{};
  double voxels = 0;

  void add(const DescriptorCounts& o);
  RegionDescriptor normalized() const;
};

/// d(a,b) = 1/2 * sum (a_i - b_i)^2 / (a_i + b_i + 1e-10) over both histograms.
double chi_square_distance(const RegionDescriptor& a, const RegionDescriptor& b);

/// Level 0 is the base oversegmentation; level l >= 1 is the partition after
/// round(level_fractions[l-1] * height) region-graph iterations.
class SegmentationHierarchy {
 public:
  SegmentationHierarchy() = default;
  SegmentationHierarchy(Oversegmentation base, std::vector<std::vector<RegionId>> parents,
                        std::vector<double> level_fractions, int height);

  const Oversegmentation& base() const { return base_; }
  int num_levels() const { return static_cast<int>(parents_.size()) + 1; }
  /// parents()[l-1][r] is the level-l region containing level-(l-1) region r.
  const std::vector<std::vector<RegionId>>& parents() const { return parents_; }
  const std::vector<double>& level_fractions() const { return level_fractions_; }
  int height() const { return height_; }

  std::uint32_t region_count(int level) const;
  /// Supervoxel -> region table for a level.
  const std::vector<RegionId>& supervoxel_map(int level) const { return svx_to_region_.at(level); }
  RegionId region_of_supervoxel(RegionId svx, int level) const {
    return svx_to_region_[level][svx];
  }
  RegionId region_at(int x, int y, int t, int level) const {
    return region_of_supervoxel(base_.labels[base_.voxel(x, y, t)], level);
  }
  /// Level whose fraction equals `fraction` within 1e-9; -1 if absent.
  int level_for_fraction(double fraction) const;

 private:
  Oversegmentation base_;
  std::vector<std::vector<RegionId>> parents_;
  std::vector<double> level_fractions_;
  int height_ = 0;
  std::vector<std::vector<RegionId>> svx_to_region_;
};

/// The 2-d footprint of a region in one frame. Pixels are row-major indices.
struct SegmentSlice {
  RegionId region = 0;
  std::vector<std::uint32_t> pixels;
  std::size_t area() const { return pixels.size(); }
};

/// flows[t] must map frame t to frame t+1 (count - 1 entries).
Oversegmentation oversegment(const FrameSequence& seq, std::span<const FlowField> flows,
                             const SegParams& params = {});

std::vector<DescriptorCounts> region_descriptor_counts(const Oversegmentation& base,
                                                       const FrameSequence& seq,
                                                       std::span<const FlowField> flows);

SegmentationHierarchy build_hierarchy(const Oversegmentation& base, const FrameSequence& seq,
                                      std::span<const FlowField> flows,
                                      const std::vector<double>& level_fractions,
                                      const SegParams& params = {});

/// Non-empty slices of frame j at a level, ordered by region id.
std::vector<SegmentSlice> frame_slices(const SegmentationHierarchy& h, int level, int j);

/// Region-id maps as RGB PNGs with id = R*65536 + G*256 + B.
void write_id_map_png(const std::filesystem::path& path, std::span<const RegionId> ids, int width,
                      int height);
std::vector<std::uint8_t> encode_id_map_png(std::span<const RegionId> ids, int width, int height);
std::vector<RegionId> read_id_map_png(const std::filesystem::path& path, int* width = nullptr,
                                      int* height = nullptr);

/// seg/L0/frame_%06d.png + hierarchy.json under `dir`.
void save_hierarchy(const std::filesystem::path& dir, const SegmentationHierarchy& h);
SegmentationHierarchy load_hierarchy(const std::filesystem::path& dir);

}  // namespace geovid
