#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "geovid/boosted_trees.hpp"
#include "geovid/corpus.hpp"
#include "geovid/features.hpp"

namespace geovid {

struct BootstrapParams {
  double posterior_min = 0.8;
  double homogeneity_min = 0.8;
  /// Segments admitted per main class per round.
  std::size_t per_class_quota = 5000;
  int introspection_period = 5;
  BoostParams boost;
};

/// Packs (video, level, frame, region) into one sortable id.
std::uint64_t segment_id(std::uint32_t video, int level, int frame, RegionId region);

struct PoolExample {
  std::uint64_t segment = 0;
  FeatureVector x{};
  GeoLabel label = GeoLabel::Mix;
  bool original = false;
  int admit_iteration = -1;  // -1 for ground-truth examples
  double confidence = 1.0;   // max main posterior at admission
  double homogeneity = 1.0;
};

struct UnlabeledSegment {
  std::uint64_t segment = 0;
  FeatureVector x{};
};

struct BootstrapState {
  BootstrapParams params;
  std::vector<PoolExample> labeled;
  std::vector<UnlabeledSegment> unlabeled;  // sorted by segment id
  int iteration = 0;
  /// Set by an eviction; the next round retrains even if nothing is admitted.
  bool needs_retrain = false;

  std::size_t original_count() const;
  std::size_t added_count() const { return labeled.size() - original_count(); }
  LabeledSet training_set() const;
};

/// Ground-truth rows of `labeled` plus every segment of `unlabeled` at the
/// given hierarchy levels.
BootstrapState make_bootstrap_state(const std::vector<const PreparedVideo*>& labeled,
                                    const std::vector<const PreparedVideo*>& unlabeled,
                                    const std::vector<double>& level_fractions, const BootstrapParams& params);

struct ScoredSegment {
  std::uint64_t segment = 0;
  Posterior posterior;
};

struct Admission {
  std::uint64_t segment = 0;
  GeoLabel label = GeoLabel::Mix;
  double confidence = 0;
  double homogeneity = 0;
};

/// Admission rule: max main posterior and homogeneity both at or above the
/// thresholds; ranked by (confidence, homogeneity, segment id) descending and
/// capped at the quota per main class. The label is the sub-vertical argmax
/// when main is Vertical and that posterior also clears posterior_min,
/// otherwise the main class.
std::vector<Admission> select_admissions(const std::vector<ScoredSegment>& scored, const BootstrapParams& params);

struct IntrospectionResult {
  std::vector<std::uint64_t> evicted;
  std::vector<std::uint64_t> retained;  // added examples that stayed
};

/// Re-scores added examples and evicts those whose max main posterior fell
/// below posterior_min. Evicted segments return to the unlabeled pool.
IntrospectionResult introspect_pool(BootstrapState& state, const ClassifierBundle& bundle);

struct RoundReport {
  int iteration = 0;  // after the increment
  std::size_t admitted = 0;
  std::map<GeoLabel, std::size_t> admitted_per_main_class;
  bool retrained = false;
  bool introspected = false;
  IntrospectionResult introspection;
  std::size_t pool_size_after_admission = 0;
  std::size_t pool_size = 0;  // after introspection
};

/// Predict, admit, retrain on the expanded pool, iteration++, and introspect
/// every introspection_period iterations.
RoundReport bootstrap_round(BootstrapState& state, ClassifierBundle& bundle);

struct BootstrapMetrics {
  int iteration = 0;
  std::size_t pool_size = 0;
  std::size_t admitted = 0;
  std::size_t evicted = 0;
  double main_accuracy = 0;
  double subvertical_accuracy = 0;
};
std::string bootstrap_csv(const std::vector<BootstrapMetrics>& rows);

}  // namespace geovid
