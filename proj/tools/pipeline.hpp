#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "geovid/bootstrap.hpp"
#include "geovid/corpus.hpp"
#include "geovid/eval.hpp"
#include "geovid/inference.hpp"
#include "geovid/workspace.hpp"

namespace geovid::cli {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitMissingDependency = 3 };

struct CorpusSpec {
  int train = 20;
  int test = 10;
  int unlabeled = 10;
  int width = 64;
  int height = 64;
  int frames = 30;
};

struct PipelineConfig {
  std::filesystem::path work_dir = "work";
  std::filesystem::path runs_dir = "runs";
  /// Defaults to <work_dir>/model.gvbt.
  std::optional<std::filesystem::path> model;
  SegParams seg;
  FlowParams flow;
  /// Hierarchy levels built and extracted.
  std::vector<double> hierarchy_levels{0.1, 0.2, 0.3, 0.4, 0.5};
  /// Levels whose segments become training rows.
  std::vector<double> train_levels{0.1, 0.2};
  BoostParams boost;
  InferenceConfig inference;
  BootstrapParams bootstrap;
  int bootstrap_iterations = 10;
  std::vector<int> ablation_windows{1, 25};
  std::vector<std::vector<double>> ablation_level_sets{{0.1, 0.2}, {0.1}, {0.2}};
  CorpusSpec synth;
  std::uint64_t seed = 0;

  std::filesystem::path model_path() const { return model.value_or(work_dir / "model.gvbt"); }
};

/// Strict parse: unknown keys and wrong types raise ConfigError.
PipelineConfig parse_config(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const PipelineConfig& c);
/// Range checks; raises ConfigError.
void validate(const PipelineConfig& c);

struct VideoEntry {
  std::string id;
  std::string split;  // train | test | unlabeled
};

struct Corpus {
  std::vector<VideoEntry> videos;
  std::vector<std::string> split(const std::string& name) const;
};

/// <work_dir>/corpus.json, or every video directory as "train" when absent.
Corpus load_corpus(const std::filesystem::path& work_dir);
void save_corpus(const std::filesystem::path& work_dir, const Corpus& corpus);

struct StageOptions {
  bool force = false;
  /// Restrict per-video stages to one video.
  std::optional<std::string> video;
};

struct StageResult {
  std::size_t processed = 0;
  std::size_t skipped = 0;
  std::optional<std::filesystem::path> report_dir;
  std::string summary;
};

/// FNV-1a over the contents (and relative names) of files and directory trees.
std::string hash_inputs(const std::vector<std::filesystem::path>& paths);

/// Copies a frame directory into the work tree as video `id`.
void import_frames(const std::filesystem::path& frames_dir, const PipelineConfig& cfg, const std::string& id);

/// Writes a synthetic corpus (corpus spec) or a single video (scene spec) under `out`.
StageResult run_synth(const PipelineConfig& cfg, const std::optional<std::filesystem::path>& spec,
                      const std::filesystem::path& out, const StageOptions& opts);
StageResult run_segment(const PipelineConfig& cfg, const StageOptions& opts);
StageResult run_extract(const PipelineConfig& cfg, const StageOptions& opts);
StageResult run_train(const PipelineConfig& cfg, const StageOptions& opts);
StageResult run_predict(const PipelineConfig& cfg, const StageOptions& opts);
StageResult run_eval(const PipelineConfig& cfg, const StageOptions& opts);
StageResult run_ablate(const PipelineConfig& cfg, const StageOptions& opts);
StageResult run_bootstrap(const PipelineConfig& cfg, const StageOptions& opts);
/// synth (when the work tree has no videos), segment, extract, train, predict, eval.
StageResult run_all(const PipelineConfig& cfg, const StageOptions& opts);

/// Loads a segmented and extracted video, with ground truth when present.
PreparedVideo load_prepared(const PipelineConfig& cfg, const std::string& id);

/// Fresh runs/<timestamp> directory.
std::filesystem::path new_run_dir(const PipelineConfig& cfg, const std::string& stage);

int exit_code_for(const std::exception& e);

}  // namespace geovid::cli
