#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geovid/annotation.hpp"
#include "geovid/boosted_trees.hpp"
#include "geovid/dense_flow.hpp"
#include "geovid/features.hpp"
#include "geovid/frame_store.hpp"
#include "geovid/inference.hpp"
#include "geovid/segmentation.hpp"

namespace geovid {

struct PrepareOptions {
  SegParams seg;
  FlowParams flow;
  /// Hierarchy levels to build and extract features for.
  std::vector<double> level_fractions{0.1, 0.2, 0.3, 0.4, 0.5};
};

/// A video carried through segmentation and feature extraction, optionally
/// with ground truth.
struct PreparedVideo {
  std::string id;
  FrameSequence seq;
  SegmentationHierarchy hierarchy;
  VideoFeatures features;
  /// Per-voxel leaf labels (synthetic or pixel-annotated videos).
  std::optional<std::vector<GeoLabel>> pixel_gt;
  std::optional<GroundTruth> gt;
  std::optional<LevelLabels> level_labels;

  std::vector<int> feature_levels() const;
};

/// Forward flows t -> t+1 for every consecutive pair.
std::vector<FlowField> forward_flows(const FrameSequence& seq, const FlowParams& params);

PreparedVideo prepare_video(FrameSequence seq, std::optional<std::vector<GeoLabel>> pixel_gt,
                            const PrepareOptions& options);

/// Attaches supervoxel ground truth and propagated level labels.
void attach_ground_truth(PreparedVideo& video, GroundTruth gt);

enum class FeatureSet { MotionAndAppearance, AppearanceOnly, MotionOnly };

struct ExampleOptions {
  std::vector<double> level_fractions{0.1, 0.2, 0.3, 0.4, 0.5};
  FeatureSet feature_set = FeatureSet::MotionAndAppearance;
  /// Keep only the first frame in which each region appears.
  bool first_frame_only = false;
};

/// Zeroes the feature blocks excluded by `set`.
void apply_feature_mask(std::span<float> x, FeatureSet set);

/// One row per (level, frame, region) carrying the region's propagated label.
LabeledSet training_examples(const PreparedVideo& video, const ExampleOptions& options);
void append_examples(LabeledSet& out, const PreparedVideo& video, const ExampleOptions& options);

}  // namespace geovid
