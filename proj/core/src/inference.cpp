#include "geovid/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "geovid/error.hpp"

namespace geovid {

namespace fs = std::filesystem;

namespace {

void normalize(std::array<double, 3>& p) {
  const double s = p[0] + p[1] + p[2];
  if (s > 0) {
    for (auto& v : p) v /= s;
  } else {
    p.fill(1.0 / 3);
  }
}

}  // namespace

FusionResult fuse_hierarchy_posteriors(std::span<const LevelPrediction> per_level) {
  if (per_level.empty()) throw Error(ErrorCode::InvalidSpec, "fusion needs at least one level");
  FusionResult out;
  double hsum = 0;
  for (const auto& lp : per_level) hsum += lp.homogeneity;
  out.unweighted_fallback = !(hsum > 0);
  if (out.unweighted_fallback) spdlog::warn("all homogeneities are zero; using the unweighted mean");
  auto& post = out.posterior;
  post.main.fill(0);
  post.subvertical.fill(0);
  for (const auto& lp : per_level) {
    const double w = out.unweighted_fallback ? 1.0 / per_level.size() : lp.homogeneity / hsum;
    for (int k = 0; k < 3; ++k) {
      post.main[k] += w * lp.main[k];
      post.subvertical[k] += w * lp.subvertical[k];
    }
  }
  normalize(post.main);
  normalize(post.subvertical);
  return out;
}

ClassPosterior temporal_aggregate(std::span<const ClassPosterior> per_frame, int window) {
  if (per_frame.empty()) throw Error(ErrorCode::EmptySegment, "no frames to aggregate");
  const std::size_t n = std::min<std::size_t>(per_frame.size(), static_cast<std::size_t>(std::max(window, 1)));
  ClassPosterior out;
  out.entity = per_frame.front().entity;
  out.main.fill(0);
  out.subvertical.fill(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      out.main[k] += per_frame[i].main[k] / n;
      out.subvertical[k] += per_frame[i].subvertical[k] / n;
    }
  }
  normalize(out.main);
  normalize(out.subvertical);
  return out;
}

int argmax3(const std::array<double, 3>& p) {
  int best = 0;
  for (int k = 1; k < 3; ++k) {
    if (p[k] > p[best]) best = k;
  }
  return best;
}

std::vector<GeoLabel> VideoLabeling::voxel_labels(const Oversegmentation& base) const {
  std::vector<GeoLabel> leaf(supervoxels.size());
  for (std::size_t s = 0; s < supervoxels.size(); ++s) {
    leaf[s] = supervoxels[s].subvertical.value_or(supervoxels[s].main);
  }
  std::vector<GeoLabel> out(base.labels.size());
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = leaf[base.labels[v]];
  return out;
}

std::vector<std::pair<int, int>> supervoxel_lifetimes(const Oversegmentation& base) {
  std::vector<std::pair<int, int>> life(base.num_supervoxels, {-1, -1});
  for (int t = 0; t < base.frames; ++t) {
    for (RegionId id : base.frame_labels(t)) {
      auto& [first, last] = life[id];
      if (first < 0) first = t;
      last = t;
    }
  }
  return life;
}

const FeatureVector* find_features(const VideoFeatures& features, int level, int frame, RegionId region) {
  if (level < 0 || level >= static_cast<int>(features.size())) return nullptr;
  const auto& per_frame = features[level];
  if (frame < 0 || frame >= static_cast<int>(per_frame.size())) return nullptr;
  const auto& recs = per_frame[frame];
  const auto it = std::lower_bound(recs.begin(), recs.end(), region,
                                   [](const SegmentFeatures& r, RegionId id) { return r.region < id; });
  return (it != recs.end() && it->region == region) ? &it->x : nullptr;
}

VideoLabeling label_video(const SegmentationHierarchy& h, const VideoFeatures& features,
                          const ClassifierBundle& bundle, const InferenceConfig& config) {
  if (bundle.feature_layout_version != layout::kFeatureLayoutVersion ||
      bundle.feature_dims != layout::kFeatureDims) {
    throw Error(ErrorCode::ModelMismatch, "bundle was trained on a different feature layout");
  }
  std::vector<int> levels;
  for (double f : config.level_fractions) {
    const int level = h.level_for_fraction(f);
    if (level < 0) {
      throw Error(ErrorCode::MissingDependency, "hierarchy has no level at fraction " + std::to_string(f));
    }
    levels.push_back(level);
  }
  if (levels.empty()) throw Error(ErrorCode::ConfigError, "no fusion levels configured");

  const auto& base = h.base();
  const auto lifetimes = supervoxel_lifetimes(base);
  VideoLabeling out;
  out.supervoxels.resize(base.num_supervoxels);

  // Posterior memo keyed by (level, frame, region): classifier cost scales
  // with unique segments, not with pixels or supervoxels.
  std::unordered_map<std::uint64_t, Posterior> memo;
  auto posterior_of = [&](int level, int frame, RegionId region) -> const Posterior& {
    const std::uint64_t key = (std::uint64_t(level) << 56) | (std::uint64_t(frame) << 32) | region;
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    const FeatureVector* x = find_features(features, level, frame, region);
    if (!x) {
      throw Error(ErrorCode::MissingDependency, "no features for level " + std::to_string(level) +
                                                    " frame " + std::to_string(frame));
    }
    ++out.classifier_calls;
    return memo.emplace(key, predict_posterior(bundle, *x)).first->second;
  };

  std::vector<LevelPrediction> per_level(levels.size());
  std::vector<ClassPosterior> per_frame;
  for (RegionId s = 0; s < base.num_supervoxels; ++s) {
    const auto [first, last] = lifetimes[s];
    const int end = std::min(last, first + std::max(config.window, 1) - 1);
    per_frame.clear();
    for (int j = first; j <= end; ++j) {
      for (std::size_t l = 0; l < levels.size(); ++l) {
        const Posterior& p = posterior_of(levels[l], j, h.region_of_supervoxel(s, levels[l]));
        per_level[l] = {p.main, p.subvertical, p.homogeneity};
      }
      ClassPosterior fused = fuse_hierarchy_posteriors(per_level).posterior;
      fused.entity = s;
      fused.frame = j;
      per_frame.push_back(fused);
    }
    SupervoxelPrediction& pred = out.supervoxels[s];
    pred.posterior = temporal_aggregate(per_frame, config.window);
    pred.posterior.entity = s;
    pred.main = kMainClasses[argmax3(pred.posterior.main)];
    if (pred.main == GeoLabel::Vertical) pred.subvertical = kSubVerticalClasses[argmax3(pred.posterior.subvertical)];
  }
  return out;
}

Rgb label_color(GeoLabel l) {
  switch (l) {
    case GeoLabel::Sky: return {70, 130, 220};
    case GeoLabel::Ground: return {150, 100, 50};
    case GeoLabel::Vertical: return {128, 128, 128};
    case GeoLabel::Solid: return {220, 50, 50};
    case GeoLabel::Porous: return {40, 170, 60};
    case GeoLabel::Object: return {230, 200, 30};
    case GeoLabel::Mix: return {0, 0, 0};
  }
  return {0, 0, 0};
}

void write_labeling(const fs::path& dir, const Oversegmentation& base, const VideoLabeling& labeling) {
  fs::create_directories(dir);
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t s = 0; s < labeling.supervoxels.size(); ++s) {
    const auto& p = labeling.supervoxels[s];
    nlohmann::json e{{"label", to_string(p.main)},
                     {"main_posterior", p.posterior.main},
                     {"subvertical_posterior", p.posterior.subvertical}};
    if (p.subvertical) e["subvertical"] = to_string(*p.subvertical);
    j[std::to_string(s)] = e;
  }
  std::ofstream(dir / "labels.json") << j.dump(1) << '\n';

  const auto leaf = labeling.voxel_labels(base);
  const std::size_t area = base.frame_area();
  constexpr std::array<const char*, 6> kConfNames = {"sky", "ground", "vertical", "solid", "porous", "object"};
  for (int t = 0; t < base.frames; ++t) {
    Frame pred(base.width, base.height, t);
    std::array<Frame, 6> conf;
    for (auto& c : conf) c = Frame(base.width, base.height, t);
    for (std::size_t i = 0; i < area; ++i) {
      const int x = static_cast<int>(i % base.width), y = static_cast<int>(i / base.width);
      const std::size_t v = t * area + i;
      pred.set(x, y, label_color(leaf[v]));
      const auto& post = labeling.supervoxels[base.labels[v]].posterior;
      for (int c = 0; c < 6; ++c) {
        const double p = c < 3 ? post.main[c] : post.subvertical[c - 3];
        const auto g = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(p, 0.0, 1.0)));
        conf[c].set(x, y, {g, g, g});
      }
    }
    write_png(dir / "pred" / frame_filename("frame_%06d.png", t), pred);
    for (int c = 0; c < 6; ++c) write_png(dir / "conf" / kConfNames[c] / frame_filename("frame_%06d.png", t), conf[c]);
  }
}

}  // namespace geovid
