#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geovid/segmentation.hpp"

namespace geovid {

/// Geometric classes. Declaration order is the fixed argmax tie-break order.
enum class GeoLabel : std::uint8_t { Sky, Ground, Vertical, Solid, Porous, Object, Mix };

inline constexpr std::array<GeoLabel, 3> kMainClasses = {GeoLabel::Sky, GeoLabel::Ground,
                                                         GeoLabel::Vertical};
inline constexpr std::array<GeoLabel, 3> kSubVerticalClasses = {GeoLabel::Solid, GeoLabel::Porous,
                                                                GeoLabel::Object};
inline constexpr int kNumLabels = 7;

/// Solid/Porous/Object collapse to Vertical; everything else maps to itself.
constexpr GeoLabel main_label(GeoLabel l) {
  return (l == GeoLabel::Solid || l == GeoLabel::Porous || l == GeoLabel::Object) ? GeoLabel::Vertical
                                                                                  : l;
}
constexpr bool is_subvertical(GeoLabel l) { return main_label(l) == GeoLabel::Vertical && l != GeoLabel::Vertical; }
/// Labels an annotator may assign to a supervoxel.
constexpr bool is_annotation_label(GeoLabel l) { return l != GeoLabel::Vertical; }
/// Index within kMainClasses / kSubVerticalClasses, or -1.
int main_index(GeoLabel l);
int subvertical_index(GeoLabel l);

std::string_view to_string(GeoLabel l);
/// Lowercase names: "sky", "ground", "vertical", "solid", "porous", "object", "mix".
std::optional<GeoLabel> parse_label(std::string_view name);

struct GroundTruth {
  std::string video_id;
  std::map<RegionId, GeoLabel> level0;
};

/// labels[l][r]: label of region r at hierarchy level l (level 0 = supervoxels).
using LevelLabels = std::vector<std::vector<GeoLabel>>;

/// Per-supervoxel voxel counts.
std::vector<std::uint64_t> supervoxel_volumes(const Oversegmentation& base);

/// A region gets label L when strictly more than 95% of its voxel volume
/// carries L at level 0 (Mix counts as its own class); otherwise Mix.
LevelLabels propagate_labels(const SegmentationHierarchy& h, const GroundTruth& gt);

/// Labels a supervoxel from a per-pixel label volume using the same 95% rule.
GroundTruth annotate_from_pixels(const Oversegmentation& base, const std::vector<GeoLabel>& pixel_labels,
                                 std::string video_id);

struct LabeledVideo {
  GroundTruth gt;
  std::vector<std::uint64_t> volumes;  // per supervoxel
};

/// Fractions of level-0 segments and of voxel area per class. The main table
/// covers Sky/Ground/Vertical/Mix; the sub-vertical table covers
/// Solid/Porous/Object relative to all vertical segments.
struct ClassStatistics {
  std::map<GeoLabel, double> main_segments;
  std::map<GeoLabel, double> main_area;
  std::map<GeoLabel, double> sub_segments;
  std::map<GeoLabel, double> sub_area;
  std::uint64_t total_segments = 0;
};

ClassStatistics class_statistics(const std::vector<LabeledVideo>& videos);
std::string render_class_statistics(const ClassStatistics& stats);

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& gt);
GroundTruth read_ground_truth(const std::filesystem::path& path);

struct LabelUpdateResult {
  std::size_t affected_supervoxels = 0;
};

/// Annotation session for one video: bulk-applies region labels to the
/// supervoxels underneath and persists every update atomically.
class AnnotationSession {
 public:
  AnnotationSession(SegmentationHierarchy hierarchy, std::filesystem::path labels_path,
                    std::string video_id);

  const GroundTruth& ground_truth() const { return gt_; }
  const SegmentationHierarchy& hierarchy() const { return hierarchy_; }

  LabelUpdateResult handle_label_update(RegionId region, int level, GeoLabel label);
  /// True when every supervoxel carries a label.
  bool complete() const;

 private:
  SegmentationHierarchy hierarchy_;
  std::filesystem::path labels_path_;
  GroundTruth gt_;
};

}  // namespace geovid
