#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geovid/annotation.hpp"
#include "geovid/corpus.hpp"
#include "geovid/frame_store.hpp"
#include "geovid/inference.hpp"

namespace geovid {

// ---------------------------------------------------------------- metrics

/// Per-pixel predictions: main class and sub-vertical argmax for every voxel.
struct PixelPrediction {
  std::vector<GeoLabel> main;
  std::vector<GeoLabel> subvertical;
};

PixelPrediction pixel_prediction(const Oversegmentation& base, const VideoLabeling& labeling);

struct ClassAccuracy {
  std::optional<double> overall;  // empty when nothing is scorable
  std::map<GeoLabel, double> per_class;
  std::uint64_t correct = 0;
  std::uint64_t scorable = 0;
};

/// Main accuracy over every non-Mix ground-truth pixel; sub-vertical accuracy
/// over pixels whose ground truth is Solid/Porous/Object.
struct AccuracyReport {
  ClassAccuracy main;
  ClassAccuracy subvertical;
  bool no_scorable_pixels() const { return !main.overall.has_value(); }
  /// e.g. "96.0% main / 77.4% sub-vertical"
  std::string headline() const;
};

AccuracyReport pixel_accuracy(const PixelPrediction& pred, const std::vector<GeoLabel>& gt);

enum class ClassSet { Main, SubVertical };

/// Rows are ground truth, columns predictions.
struct ConfusionMatrix {
  std::vector<GeoLabel> classes;
  std::vector<std::vector<std::uint64_t>> counts;
  std::vector<std::vector<double>> row_normalized;

  std::uint64_t total() const;
  /// Correct / total from the diagonal.
  std::optional<double> accuracy() const;
  void add(const ConfusionMatrix& other);
  /// Builds a matrix from row percentages (used for rendering fixtures).
  static ConfusionMatrix from_row_percentages(ClassSet set, const std::vector<std::vector<double>>& rows);
};

ConfusionMatrix confusion(const PixelPrediction& pred, const std::vector<GeoLabel>& gt, ClassSet set);
/// Row-normalized percentages with one decimal, one row per ground-truth class.
std::string render_confusion(const ConfusionMatrix& cm);

// ------------------------------------------------------------ synthetic video

enum class TextureClass { Smooth, HighFrequency };

struct VerticalBlock {
  int x0 = 0;  // inclusive
  int x1 = 0;  // exclusive
  TextureClass texture = TextureClass::Smooth;
  Rgb color;
};

/// Rectangle at (round(x + vx*t), round(y + vy*t)) in frame t.
struct ObjectTrack {
  double x = 0, y = 0;  // top-left at frame 0
  int w = 8, h = 8;
  double vx = 1, vy = 0;  // pixels per frame
  Rgb color;

  int left(int t) const;
  int top(int t) const;
};

/// Sky band on top, vertical band in the middle (static blocks + moving
/// objects), ground band at the bottom.
struct SyntheticSceneSpec {
  int width = 64;
  int height = 64;
  int frames = 30;
  int sky_rows = 20;
  int ground_rows = 20;
  Rgb sky_color{120, 170, 230};
  Rgb ground_color{130, 105, 80};
  std::vector<VerticalBlock> blocks;
  std::vector<ObjectTrack> tracks;
  double noise_sigma = 2.0;
  /// Minimum max-channel difference between an object pixel and the background under it.
  int object_contrast = 40;
  std::uint64_t seed = 0;

  int vertical_rows() const { return height - sky_rows - ground_rows; }
};

struct SyntheticVideo {
  FrameSequence frames;
  std::vector<GeoLabel> pixel_gt;  // per voxel, t*W*H + y*W + x
};

void validate(const SyntheticSceneSpec& spec);
SyntheticVideo generate_synthetic_video(const SyntheticSceneSpec& spec, const std::string& id = "synthetic");
/// The same scene with every object track removed (identical noise).
FrameSequence render_background(const SyntheticSceneSpec& spec, const std::string& id = "background");
/// Random but valid layout: band heights, 3-5 blocks, 1-2 objects.
SyntheticSceneSpec random_scene_spec(std::uint64_t seed, int width = 64, int height = 64, int frames = 30);

/// Per-frame label maps as 8-bit gray PNGs (value = GeoLabel index).
void write_pixel_labels(const std::filesystem::path& dir, const std::vector<GeoLabel>& labels, int width,
                        int height, int frames);
std::vector<GeoLabel> read_pixel_labels(const std::filesystem::path& dir, int width, int height, int frames);

SyntheticSceneSpec scene_spec_from_json(const std::string& text);
std::string scene_spec_to_json(const SyntheticSceneSpec& spec);

// ------------------------------------------------------------------ ablation

struct AblationCondition {
  std::string name;
  FeatureSet features = FeatureSet::MotionAndAppearance;
  bool first_frame_only = false;
};

/// The five feature-importance rows.
std::vector<AblationCondition> standard_conditions();

struct AblationRow {
  std::string condition;
  int window = 1;
  std::vector<double> levels;
  double main = 0;
  double subvertical = 0;
  double object = 0;
};

struct AblationSetup {
  std::vector<AblationCondition> conditions = standard_conditions();
  std::vector<int> windows{1, 25};
  std::vector<std::vector<double>> level_sets{{0.1, 0.2}};
  BoostParams boost;
};

/// Evaluates a trained bundle on test videos; returns pooled pixel accuracy and confusions.
struct EvaluationResult {
  AccuracyReport accuracy;
  ConfusionMatrix main;
  ConfusionMatrix subvertical;
  std::size_t classifier_calls = 0;
};
EvaluationResult evaluate(const std::vector<const PreparedVideo*>& videos, const ClassifierBundle& bundle,
                          const InferenceConfig& config);

std::vector<AblationRow> run_ablation(const std::vector<const PreparedVideo*>& train,
                                      const std::vector<const PreparedVideo*>& test, const AblationSetup& setup);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace geovid
