#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "geovid/boosted_trees.hpp"
#include "geovid/features.hpp"
#include "geovid/segmentation.hpp"

namespace geovid {

/// Normalized main (Sky, Ground, Vertical) and sub-vertical (Solid, Porous,
/// Object) distributions for one superpixel/supervoxel.
struct ClassPosterior {
  std::array<double, 3> main{1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::array<double, 3> subvertical{1.0 / 3, 1.0 / 3, 1.0 / 3};
  RegionId entity = 0;
  std::optional<int> frame;
};

/// One hierarchy level's prediction for the segment containing a superpixel.
struct LevelPrediction {
  std::array<double, 3> main{};
  std::array<double, 3> subvertical{};
  double homogeneity = 0;
};

struct FusionResult {
  ClassPosterior posterior;
  bool unweighted_fallback = false;  // every homogeneity was zero
};

/// Homogeneity-weighted average: out_k = sum_j p_jk h_j / sum_j h_j.
FusionResult fuse_hierarchy_posteriors(std::span<const LevelPrediction> per_level);

/// Arithmetic mean over the first min(window, size) entries, renormalized.
ClassPosterior temporal_aggregate(std::span<const ClassPosterior> per_frame, int window);

/// Index of the largest entry; ties resolve to the lowest index (fixed class order).
int argmax3(const std::array<double, 3>& p);

struct InferenceConfig {
  std::vector<double> level_fractions{0.1, 0.2};
  int window = 25;
};

struct SupervoxelPrediction {
  GeoLabel main = GeoLabel::Sky;
  std::optional<GeoLabel> subvertical;  // only when main == Vertical
  ClassPosterior posterior;
};

struct VideoLabeling {
  std::vector<SupervoxelPrediction> supervoxels;
  /// Classifier invocations; one per unique (level, frame, region) consulted.
  std::size_t classifier_calls = 0;

  /// Leaf label per voxel (Sky/Ground/Solid/Porous/Object).
  std::vector<GeoLabel> voxel_labels(const Oversegmentation& base) const;
};

/// First and last frame in which every supervoxel appears.
std::vector<std::pair<int, int>> supervoxel_lifetimes(const Oversegmentation& base);

/// Looks up features of one (level, frame, region); nullptr if absent.
const FeatureVector* find_features(const VideoFeatures& features, int level, int frame, RegionId region);

/// Fuses per-level posteriors per frame, then averages over each supervoxel's
/// first `window` frames. `features` must cover the configured levels.
VideoLabeling label_video(const SegmentationHierarchy& h, const VideoFeatures& features,
                          const ClassifierBundle& bundle, const InferenceConfig& config);

/// RGB color used for a label in rendered outputs.
Rgb label_color(GeoLabel l);

/// labels.json, pred/frame_%06d.png and conf/<class>/frame_%06d.png under `dir`.
void write_labeling(const std::filesystem::path& dir, const Oversegmentation& base,
                    const VideoLabeling& labeling);

}  // namespace geovid
