#include <csignal>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "geovid/annotation_service.hpp"
#include "geovid/error.hpp"
#include "pipeline.hpp"

namespace fs = std::filesystem;
using namespace geovid;
using namespace geovid::cli;

namespace {

std::vector<double> parse_fractions(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, "bad level fraction '" + item + "'");
    }
  }
  return out;
}

void print(const char* stage, const StageResult& r) {
  std::printf("%s: %zu processed, %zu skipped", stage, r.processed, r.skipped);
  if (!r.summary.empty()) std::printf("; %s", r.summary.c_str());
  if (r.report_dir) std::printf("; report %s", r.report_dir->string().c_str());
  std::printf("\n");
}

AnnotationService* g_service = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric context labeling for video"};
  app.require_subcommand(1);

  std::optional<std::string> config_path, work_dir, runs_dir, video;
  bool force = false, verbose = false;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--work", work_dir, "Work directory (overrides config)");
  app.add_option("--runs", runs_dir, "Report directory (overrides config)");
  app.add_option("--video", video, "Restrict per-video stages to one video");
  app.add_flag("--force", force, "Re-run stages whose inputs are unchanged");
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  auto* segment = app.add_subcommand("segment", "Flow, over-segmentation and hierarchy");
  std::optional<std::string> seg_in, seg_out;
  segment->add_option("--in", seg_in, "Frame directory to import");
  segment->add_option("--out", seg_out, "Work directory");

  auto* serve = app.add_subcommand("annotate-serve", "Annotation HTTP API and UI bundle");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::string> ui_dir;
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--ui", ui_dir, "Static UI bundle directory");

  auto* extract = app.add_subcommand("extract", "Per-segment feature vectors");

  auto* train = app.add_subcommand("train", "Train the classifier bundle");
  std::optional<std::string> train_levels;
  std::optional<int> rounds, depth;
  train->add_option("--level-fractions", train_levels, "Comma-separated hierarchy fractions");
  train->add_option("--rounds", rounds);
  train->add_option("--depth", depth);

  auto* predict = app.add_subcommand("predict", "Label test videos");
  std::optional<std::string> model, predict_levels;
  std::optional<int> window;
  predict->add_option("--model", model);
  predict->add_option("--window", window);
  predict->add_option("--levels", predict_levels, "Comma-separated hierarchy fractions");

  auto* eval = app.add_subcommand("eval", "Pixel accuracy and confusion matrices");
  auto* ablate = app.add_subcommand("ablate", "Feature, window and level ablations");

  auto* boot = app.add_subcommand("bootstrap", "Self-training on unlabeled videos");
  std::optional<int> iters, introspect;
  std::optional<std::size_t> quota;
  std::optional<double> post_min, hom_min;
  boot->add_option("--iters", iters);
  boot->add_option("--quota", quota);
  boot->add_option("--posterior-min", post_min);
  boot->add_option("--homogeneity-min", hom_min);
  boot->add_option("--introspect-every", introspect);

  auto* synth = app.add_subcommand("synth", "Generate synthetic videos with ground truth");
  std::optional<std::string> spec, synth_out;
  synth->add_option("--spec", spec, "Scene spec or {\"corpus\": {...}} JSON");
  synth->add_option("--out", synth_out, "Output work directory");

  auto* all = app.add_subcommand("all", "synth (if empty), segment, extract, train, predict, eval");

  for (auto* sub : {segment, serve, extract, train, predict, eval, ablate, boot, synth, all}) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--work", work_dir, "Work directory");
    sub->add_option("--runs", runs_dir, "Report directory");
    sub->add_flag("--force", force);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");

  try {
    PipelineConfig cfg = config_path ? load_config(*config_path) : PipelineConfig{};
    if (work_dir) cfg.work_dir = *work_dir;
    if (runs_dir) cfg.runs_dir = *runs_dir;
    if (seg_out) cfg.work_dir = *seg_out;
    if (train_levels) cfg.train_levels = parse_fractions(*train_levels);
    if (rounds) cfg.boost.rounds = *rounds;
    if (depth) cfg.boost.max_depth = *depth;
    if (model) cfg.model = fs::path(*model);
    if (window) cfg.inference.window = *window;
    if (predict_levels) cfg.inference.level_fractions = parse_fractions(*predict_levels);
    if (iters) cfg.bootstrap_iterations = *iters;
    if (quota) cfg.bootstrap.per_class_quota = *quota;
    if (post_min) cfg.bootstrap.posterior_min = *post_min;
    if (hom_min) cfg.bootstrap.homogeneity_min = *hom_min;
    if (introspect) cfg.bootstrap.introspection_period = *introspect;
    cfg.bootstrap.boost = cfg.boost;
    validate(cfg);

    StageOptions opts;
    opts.force = force;
    opts.video = video;

    if (*segment) {
      if (seg_in) {
        const std::string id = video.value_or(fs::path(*seg_in).lexically_normal().filename().string());
        if (!fs::is_directory(*seg_in)) throw Error(ErrorCode::MissingDependency, "frame directory " + *seg_in);
        import_frames(*seg_in, cfg, id.empty() ? "video" : id);
      }
      print("segment", run_segment(cfg, opts));
    } else if (*serve) {
      ServiceOptions so{cfg.work_dir, ui_dir ? std::optional<fs::path>(*ui_dir) : std::nullopt};
      AnnotationService service(so);
      g_service = &service;
      std::signal(SIGINT, [](int) {
        if (g_service) g_service->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (g_service) g_service->stop();
      });
      spdlog::info("serving {} videos on http://{}:{}", service.video_ids().size(), host, port);
      service.run(host, port);
      g_service = nullptr;
    } else if (*extract) {
      print("extract", run_extract(cfg, opts));
    } else if (*train) {
      print("train", run_train(cfg, opts));
    } else if (*predict) {
      print("predict", run_predict(cfg, opts));
    } else if (*eval) {
      print("eval", run_eval(cfg, opts));
    } else if (*ablate) {
      print("ablate", run_ablate(cfg, opts));
    } else if (*boot) {
      print("bootstrap", run_bootstrap(cfg, opts));
    } else if (*synth) {
      const fs::path out = synth_out ? fs::path(*synth_out) : cfg.work_dir;
      print("synth", run_synth(cfg, spec ? std::optional<fs::path>(*spec) : std::nullopt, out, opts));
    } else if (*all) {
      print("all", run_all(cfg, opts));
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e);
  }
  return kExitOk;
}
