#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "geovid/annotation.hpp"

namespace geovid {

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0;       // x[feature] <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0;  // leaf score
};

class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  double score(std::span<const float> x) const;
  int depth() const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }

 private:
  std::vector<TreeNode> nodes_;
};

/// Additive model: score(x) = sum of tree scores, posterior = logistic(score).
struct BoostedEnsemble {
  std::vector<DecisionTree> trees;
  double learning_rate = 0.5;
  std::int32_t class_of_interest = -1;

  double score(std::span<const float> x) const;
  double posterior(std::span<const float> x) const;
};

struct BoostParams {
  int rounds = 100;
  int max_depth = 2;
  double shrinkage = 0.5;
  /// Newton leaf steps are clipped to +-max_step before shrinkage.
  double max_step = 4.0;
};

/// Row-major n x dims feature matrix view.
struct FeatureMatrix {
  std::span<const float> values;
  int dims = 0;
  std::size_t rows() const { return dims > 0 ? values.size() / dims : 0; }
  std::span<const float> row(std::size_t i) const { return values.subspan(i * dims, dims); }
};

/// Column-major copy plus per-feature bin codes; reusable across label vectors.
/// A feature with at most kMaxBins distinct values gets one bin per value, so
/// its split search is exact; denser features use quantile bins.
class PreparedData {
 public:
  static constexpr int kMaxBins = 256;

  explicit PreparedData(FeatureMatrix x);

  std::size_t rows() const { return rows_; }
  int dims() const { return dims_; }
  float at(std::size_t row, int feature) const { return columns_[std::size_t(feature) * rows_ + row]; }
  /// Features with at least two distinct values.
  const std::vector<int>& active_features() const { return active_; }
  /// Bin code of every row for active feature `a`.
  std::span<const std::uint8_t> codes(int a) const {
    return std::span<const std::uint8_t>(codes_).subspan(std::size_t(a) * rows_, rows_);
  }
  int bin_count(int a) const { return bin_count_[a]; }
  /// Smallest and largest training value falling into bin b of active feature a.
  float bin_min(int a, int b) const { return bin_min_[std::size_t(a) * kMaxBins + b]; }
  float bin_max(int a, int b) const { return bin_max_[std::size_t(a) * kMaxBins + b]; }

 private:
  std::size_t rows_ = 0;
  int dims_ = 0;
  std::vector<float> columns_;
  std::vector<int> active_;
  std::vector<std::uint8_t> codes_;
  std::vector<int> bin_count_;
  std::vector<float> bin_min_;
  std::vector<float> bin_max_;
};

struct TrainResult {
  BoostedEnsemble ensemble;
  /// Weighted logistic loss before the first round and after every round.
  std::vector<double> loss_history;
};

/// Additive logistic regression with Newton-step regression trees. Every
/// round is line-searched so training loss never increases.
/// `labels` are +1/-1; `weights` may be empty (uniform).
TrainResult train_boosted(const PreparedData& data, std::span<const std::int8_t> labels,
                          std::span<const double> weights, const BoostParams& params);
TrainResult train_boosted(FeatureMatrix x, std::span<const std::int8_t> labels,
                          std::span<const double> weights, const BoostParams& params);

/// Weighted mean of log(1 + exp(-y * score)).
double logistic_loss(std::span<const double> scores, std::span<const std::int8_t> labels,
                     std::span<const double> weights);

struct Posterior {
  std::array<double, 3> main{1.0 / 3, 1.0 / 3, 1.0 / 3};         // Sky, Ground, Vertical
  std::array<double, 3> subvertical{1.0 / 3, 1.0 / 3, 1.0 / 3};  // Solid, Porous, Object
  double homogeneity = 0.5;
};

/// Main (3 one-vs-rest), sub-vertical (3 one-vs-rest) and homogeneity ensembles.
/// Multi-class posteriors are per-class logistic outputs divided by their sum.
struct ClassifierBundle {
  std::array<BoostedEnsemble, 3> main;
  std::array<BoostedEnsemble, 3> subvertical;
  BoostedEnsemble homogeneity;
  int feature_layout_version = 0;
  int feature_dims = 0;
  BoostParams params;
};

ClassifierBundle empty_bundle();

/// Training pool: one row per (segment, frame) with its region label.
/// Vertical (sub-class unknown) rows train only the main and homogeneity models.
struct LabeledSet {
  std::vector<float> x;  // row-major, kFeatureDims columns
  std::vector<GeoLabel> labels;
  std::vector<double> weights;  // empty = uniform

  std::size_t size() const { return labels.size(); }
  void append(std::span<const float> row, GeoLabel label, double weight = 1.0);
  FeatureMatrix matrix() const;
};

ClassifierBundle train_bundle(const LabeledSet& data, const BoostParams& params = {});

Posterior predict_posterior(const ClassifierBundle& bundle, std::span<const float> x);

struct FoldMetrics {
  double main_accuracy = 0;
  double subvertical_accuracy = 0;
  std::vector<std::string> test_videos;
};
struct CrossValidationReport {
  std::vector<FoldMetrics> folds;
  double mean_main = 0;
  double mean_subvertical = 0;
};

struct VideoExamples {
  std::string video_id;
  LabeledSet examples;
};

/// Folds never split a video. Assignment is a seeded shuffle of videos, round-robin into k folds.
std::vector<int> assign_folds(std::size_t videos, int k, std::uint64_t seed);
CrossValidationReport cross_validate_bundle(const std::vector<VideoExamples>& dataset, int k,
                                            const BoostParams& params, std::uint64_t seed = 0);

/// "GVBT1" magic, tree arrays, then a JSON metadata trailer.
std::vector<std::uint8_t> serialize_bundle(const ClassifierBundle& bundle);
ClassifierBundle deserialize_bundle(std::span<const std::uint8_t> bytes);
void save_bundle(const std::filesystem::path& path, const ClassifierBundle& bundle);
ClassifierBundle load_bundle(const std::filesystem::path& path);

}  // namespace geovid
