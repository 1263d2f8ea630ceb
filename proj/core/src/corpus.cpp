#include "geovid/corpus.hpp"

#include <algorithm>

#include "geovid/error.hpp"

namespace geovid {

std::vector<int> PreparedVideo::feature_levels() const {
  std::vector<int> levels;
  for (int l = 0; l < static_cast<int>(features.size()); ++l) {
    if (!features[l].empty()) levels.push_back(l);
  }
  return levels;
}

std::vector<FlowField> forward_flows(const FrameSequence& seq, const FlowParams& params) {
  std::vector<FlowField> flows;
  flows.reserve(std::max(seq.count() - 1, 0));
  for (int t = 0; t + 1 < seq.count(); ++t) flows.push_back(estimate_flow(seq[t], seq[t + 1], params));
  return flows;
}

PreparedVideo prepare_video(FrameSequence seq, std::optional<std::vector<GeoLabel>> pixel_gt,
                            const PrepareOptions& options) {
  PreparedVideo v;
  v.id = seq.source_id();
  const auto flows = forward_flows(seq, options.flow);
  const Oversegmentation base = oversegment(seq, flows, options.seg);
  v.hierarchy = build_hierarchy(base, seq, flows, options.level_fractions, options.seg);
  const MotionCache cache(seq, options.flow);
  std::vector<int> levels;
  for (int l = 1; l < v.hierarchy.num_levels(); ++l) levels.push_back(l);
  v.features = extract_video_features(seq, v.hierarchy, cache, levels);
  v.seq = std::move(seq);
  if (pixel_gt) {
    attach_ground_truth(v, annotate_from_pixels(v.hierarchy.base(), *pixel_gt, v.id));
    v.pixel_gt = std::move(pixel_gt);
  }
  return v;
}

void attach_ground_truth(PreparedVideo& video, GroundTruth gt) {
  video.level_labels = propagate_labels(video.hierarchy, gt);
  video.gt = std::move(gt);
}

void apply_feature_mask(std::span<float> x, FeatureSet set) {
  switch (set) {
    case FeatureSet::MotionAndAppearance: return;
    case FeatureSet::AppearanceOnly:
      std::fill(x.begin(), x.begin() + layout::kMotionDims, 0.f);
      return;
    case FeatureSet::MotionOnly:
      std::fill(x.begin() + layout::kAppearance, x.end(), 0.f);
      return;
  }
}

void append_examples(LabeledSet& out, const PreparedVideo& video, const ExampleOptions& options) {
  if (!video.level_labels) throw Error(ErrorCode::MissingDependency, video.id + " has no ground truth");
  for (double f : options.level_fractions) {
    const int level = video.hierarchy.level_for_fraction(f);
    if (level < 0) throw Error(ErrorCode::MissingDependency, video.id + ": no level at fraction " + std::to_string(f));
    const auto& labels = (*video.level_labels)[level];
    std::vector<bool> seen(video.hierarchy.region_count(level), false);
    const auto& per_frame = video.features.at(level);
    for (const auto& records : per_frame) {
      for (const auto& rec : records) {
        if (options.first_frame_only) {
          if (seen[rec.region]) continue;
          seen[rec.region] = true;
        }
        FeatureVector x = rec.x;
        apply_feature_mask(x, options.feature_set);
        out.append(x, labels[rec.region]);
      }
    }
  }
}

LabeledSet training_examples(const PreparedVideo& video, const ExampleOptions& options) {
  LabeledSet out;
  append_examples(out, video, options);
  return out;
}

}  // namespace geovid
