#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "geovid/annotation.hpp"
#include "geovid/error.hpp"
#include "geovid/features.hpp"
#include "geovid/parallel.hpp"

namespace geovid::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------------ config

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

/// Reads keys of one JSON object and rejects any it did not consume.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) config_error(where_ + " must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) config_error("unknown key '" + prefix() + key + "'");
    }
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      config_error("'" + prefix() + key + "' has the wrong type");
    }
  }
  void path(const std::string& key, fs::path& out) {
    std::string s;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    get(key, s);
    out = s;
  }
  /// Nested object, or nullptr when absent.
  const json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string prefix() const { return where_.empty() ? "" : where_ + "."; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void check_fractions(const std::vector<double>& f, const std::string& name) {
  if (f.empty()) config_error(name + " must not be empty");
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!(f[i] > 0 && f[i] <= 1)) config_error(name + " entries must lie in (0, 1]");
    if (i > 0 && !(f[i] > f[i - 1])) config_error(name + " must be strictly increasing");
  }
}

bool contains_fraction(const std::vector<double>& set, double f) {
  return std::any_of(set.begin(), set.end(), [f](double g) { return std::abs(f - g) < 1e-9; });
}

}  // namespace

PipelineConfig parse_config(const json& j) {
  PipelineConfig c;
  Reader r(j, "");
  r.path("work_dir", c.work_dir);
  r.path("runs_dir", c.runs_dir);
  if (j.contains("model")) {
    fs::path m;
    r.path("model", m);
    c.model = m;
  } else {
    r.child("model");
  }
  r.get("seed", c.seed);
  r.get("hierarchy_levels", c.hierarchy_levels);
  if (const json* s = r.child("segmentation")) {
    Reader sr(*s, "segmentation");
    sr.get("k", c.seg.k);
    sr.get("min_size", c.seg.min_size);
    sr.get("region_k", c.seg.region_k);
    sr.get("max_iterations", c.seg.max_iterations);
  }
  if (const json* s = r.child("flow")) {
    Reader fr(*s, "flow");
    fr.get("pyramid_levels", c.flow.pyramid_levels);
    fr.get("pyramid_scale", c.flow.pyramid_scale);
    fr.get("window", c.flow.window);
    fr.get("iterations", c.flow.iterations);
    fr.get("poly_n", c.flow.poly_n);
    fr.get("poly_sigma", c.flow.poly_sigma);
  }
  if (const json* s = r.child("train")) {
    Reader tr(*s, "train");
    tr.get("level_fractions", c.train_levels);
    tr.get("rounds", c.boost.rounds);
    tr.get("max_depth", c.boost.max_depth);
    tr.get("shrinkage", c.boost.shrinkage);
    tr.get("max_step", c.boost.max_step);
  }
  if (const json* s = r.child("inference")) {
    Reader ir(*s, "inference");
    ir.get("level_fractions", c.inference.level_fractions);
    ir.get("window", c.inference.window);
  }
  if (const json* s = r.child("bootstrap")) {
    Reader br(*s, "bootstrap");
    br.get("iterations", c.bootstrap_iterations);
    br.get("quota", c.bootstrap.per_class_quota);
    br.get("posterior_min", c.bootstrap.posterior_min);
    br.get("homogeneity_min", c.bootstrap.homogeneity_min);
    br.get("introspect_every", c.bootstrap.introspection_period);
  }
  if (const json* s = r.child("ablation")) {
    Reader ar(*s, "ablation");
    ar.get("windows", c.ablation_windows);
    ar.get("level_sets", c.ablation_level_sets);
  }
  if (const json* s = r.child("synth")) {
    Reader yr(*s, "synth");
    yr.get("train", c.synth.train);
    yr.get("test", c.synth.test);
    yr.get("unlabeled", c.synth.unlabeled);
    yr.get("width", c.synth.width);
    yr.get("height", c.synth.height);
    yr.get("frames", c.synth.frames);
  }
  c.bootstrap.boost = c.boost;
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot read config " + path.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) config_error("config " + path.string() + " is not valid JSON");
  return parse_config(j);
}

json config_to_json(const PipelineConfig& c) {
  json j{{"work_dir", c.work_dir.string()},
         {"runs_dir", c.runs_dir.string()},
         {"seed", c.seed},
         {"hierarchy_levels", c.hierarchy_levels},
         {"segmentation",
          {{"k", c.seg.k}, {"min_size", c.seg.min_size}, {"region_k", c.seg.region_k},
           {"max_iterations", c.seg.max_iterations}}},
         {"flow",
          {{"pyramid_levels", c.flow.pyramid_levels}, {"pyramid_scale", c.flow.pyramid_scale},
           {"window", c.flow.window}, {"iterations", c.flow.iterations}, {"poly_n", c.flow.poly_n},
           {"poly_sigma", c.flow.poly_sigma}}},
         {"train",
          {{"level_fractions", c.train_levels}, {"rounds", c.boost.rounds}, {"max_depth", c.boost.max_depth},
           {"shrinkage", c.boost.shrinkage}, {"max_step", c.boost.max_step}}},
         {"inference", {{"level_fractions", c.inference.level_fractions}, {"window", c.inference.window}}},
         {"bootstrap",
          {{"iterations", c.bootstrap_iterations}, {"quota", c.bootstrap.per_class_quota},
           {"posterior_min", c.bootstrap.posterior_min}, {"homogeneity_min", c.bootstrap.homogeneity_min},
           {"introspect_every", c.bootstrap.introspection_period}}},
         {"ablation", {{"windows", c.ablation_windows}, {"level_sets", c.ablation_level_sets}}},
         {"synth",
          {{"train", c.synth.train}, {"test", c.synth.test}, {"unlabeled", c.synth.unlabeled},
           {"width", c.synth.width}, {"height", c.synth.height}, {"frames", c.synth.frames}}}};
  if (c.model) j["model"] = c.model->string();
  return j;
}

void validate(const PipelineConfig& c) {
  check_fractions(c.hierarchy_levels, "hierarchy_levels");
  check_fractions(c.train_levels, "train.level_fractions");
  check_fractions(c.inference.level_fractions, "inference.level_fractions");
  for (double f : c.train_levels) {
    if (!contains_fraction(c.hierarchy_levels, f)) config_error("train level " + std::to_string(f) + " is not built");
  }
  for (double f : c.inference.level_fractions) {
    if (!contains_fraction(c.hierarchy_levels, f)) {
      config_error("inference level " + std::to_string(f) + " is not built");
    }
  }
  for (const auto& set : c.ablation_level_sets) {
    check_fractions(set, "ablation.level_sets");
    for (double f : set) {
      if (!contains_fraction(c.hierarchy_levels, f)) config_error("ablation level " + std::to_string(f) + " is not built");
    }
  }
  if (c.inference.window < 1) config_error("inference.window must be >= 1");
  for (int w : c.ablation_windows) {
    if (w < 1) config_error("ablation.windows entries must be >= 1");
  }
  if (!(c.seg.k > 0) || c.seg.min_size < 1 || !(c.seg.region_k > 0) || c.seg.max_iterations < 1) {
    config_error("segmentation parameters must be positive");
  }
  if (c.flow.pyramid_levels < 1 || c.flow.window < 3 || c.flow.iterations < 1 ||
      (c.flow.poly_n != 5 && c.flow.poly_n != 7) || !(c.flow.pyramid_scale > 0 && c.flow.pyramid_scale < 1)) {
    config_error("invalid flow parameters");
  }
  if (c.boost.rounds < 0 || c.boost.max_depth < 1 || !(c.boost.shrinkage > 0 && c.boost.shrinkage <= 1) ||
      !(c.boost.max_step > 0)) {
    config_error("invalid boosting parameters");
  }
  if (c.bootstrap_iterations < 0 || c.bootstrap.introspection_period < 0 ||
      !(c.bootstrap.posterior_min >= 0 && c.bootstrap.posterior_min <= 1) ||
      !(c.bootstrap.homogeneity_min >= 0 && c.bootstrap.homogeneity_min <= 1)) {
    config_error("invalid bootstrap parameters");
  }
  if (c.synth.train < 0 || c.synth.test < 0 || c.synth.unlabeled < 0 || c.synth.width < 16 || c.synth.height < 16 ||
      c.synth.frames < 2) {
    config_error("invalid synth corpus parameters");
  }
}

// ------------------------------------------------------------------ corpus

std::vector<std::string> Corpus::split(const std::string& name) const {
  std::vector<std::string> out;
  for (const auto& v : videos) {
    if (v.split == name) out.push_back(v.id);
  }
  return out;
}

Corpus load_corpus(const fs::path& work_dir) {
  Corpus c;
  const fs::path p = work_dir / "corpus.json";
  if (fs::exists(p)) {
    std::ifstream in(p);
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("videos")) throw Error(ErrorCode::FormatError, p.string() + " is malformed");
    for (const auto& v : j["videos"]) c.videos.push_back({v.at("id").get<std::string>(), v.value("split", "train")});
    return c;
  }
  if (!fs::is_directory(work_dir)) return c;
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(work_dir)) {
    if (e.is_directory() && fs::exists(video_paths(work_dir, e.path().filename().string()).frames())) {
      ids.push_back(e.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  for (auto& id : ids) c.videos.push_back({id, "train"});
  return c;
}

void save_corpus(const fs::path& work_dir, const Corpus& corpus) {
  json vids = json::array();
  for (const auto& v : corpus.videos) vids.push_back({{"id", v.id}, {"split", v.split}});
  fs::create_directories(work_dir);
  std::ofstream(work_dir / "corpus.json") << json{{"videos", vids}}.dump(2) << '\n';
}

// ---------------------------------------------------------------- manifests

std::string hash_inputs(const std::vector<fs::path>& paths) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const char* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(data[i]);
      h *= 1099511628211ULL;
    }
  };
  auto feed_file = [&](const fs::path& file, const std::string& name) {
    feed(name.data(), name.size());
    std::ifstream in(file, std::ios::binary);
    std::vector<char> buf(1 << 16);
    while (in) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      feed(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
  };
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) feed_file(f, fs::relative(f, p).generic_string());
    } else if (fs::exists(p)) {
      feed_file(p, p.filename().string());
    } else {
      feed("<missing>", 9);
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

fs::path manifest_path(const fs::path& root, const std::string& stage) {
  return root / "manifests" / (stage + ".json");
}

json stage_manifest(const std::string& stage, const std::vector<fs::path>& inputs, const json& params) {
  return {{"stage", stage}, {"inputs", hash_inputs(inputs)}, {"params", params}};
}

bool manifest_current(const fs::path& path, const json& expected) {
  std::ifstream in(path);
  if (!in) return false;
  const json j = json::parse(in, nullptr, false);
  return !j.is_discarded() && j.value("stage", "") == expected["stage"] && j.value("inputs", "") == expected["inputs"] &&
         j.contains("params") && j["params"] == expected["params"];
}

void write_manifest(const fs::path& path, json m, const std::vector<fs::path>& outputs) {
  m["outputs"] = hash_inputs(outputs);
  fs::create_directories(path.parent_path());
  std::ofstream(path) << m.dump(2) << '\n';
}

void require(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw Error(ErrorCode::MissingDependency, what + " not found: " + p.string());
}

std::vector<std::string> selected_videos(const PipelineConfig& cfg, const StageOptions& opts) {
  if (opts.video) {
    require(video_paths(cfg.work_dir, *opts.video).frames(), "frames of video " + *opts.video);
    return {*opts.video};
  }
  std::vector<std::string> ids;
  for (const auto& v : load_corpus(cfg.work_dir).videos) ids.push_back(v.id);
  if (ids.empty()) throw Error(ErrorCode::MissingDependency, "no videos under " + cfg.work_dir.string());
  return ids;
}

json seg_params(const PipelineConfig& c) {
  const json j = config_to_json(c);
  return {{"segmentation", j["segmentation"]}, {"flow", j["flow"]}, {"hierarchy_levels", c.hierarchy_levels}};
}

FrameSequence load_frames(const PipelineConfig& cfg, const std::string& id) {
  const VideoPaths vp = video_paths(cfg.work_dir, id);
  require(vp.frames(), "frames of video " + id);
  const FrameSequence raw = load_sequence(vp.frames());
  return FrameSequence(raw.frames(), id);
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

}  // namespace

fs::path new_run_dir(const PipelineConfig& cfg, const std::string& stage) {
  const std::string base = timestamp() + "-" + stage;
  fs::path dir = cfg.runs_dir / base;
  for (int i = 1; fs::exists(dir); ++i) dir = cfg.runs_dir / (base + "-" + std::to_string(i));
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << config_to_json(cfg).dump(2) << '\n';
  return dir;
}

// ------------------------------------------------------------------- synth

void import_frames(const fs::path& frames_dir, const PipelineConfig& cfg, const std::string& id) {
  const FrameSequence seq = load_sequence(frames_dir);
  const VideoPaths vp = video_paths(cfg.work_dir, id);
  save_sequence(vp.frames(), seq);
  write_sequence_manifest(vp.sequence_manifest(), seq);
  Corpus c = load_corpus(cfg.work_dir);
  if (std::none_of(c.videos.begin(), c.videos.end(), [&](const VideoEntry& v) { return v.id == id; })) {
    c.videos.push_back({id, "train"});
  }
  save_corpus(cfg.work_dir, c);
}

namespace {

void write_synthetic(const fs::path& out, const std::string& id, const SyntheticSceneSpec& spec, bool with_gt) {
  const SyntheticVideo v = generate_synthetic_video(spec, id);
  const VideoPaths vp = video_paths(out, id);
  save_sequence(vp.frames(), v.frames);
  write_sequence_manifest(vp.sequence_manifest(), v.frames);
  write_text(vp.root / "scene.json", scene_spec_to_json(spec) + "\n");
  if (with_gt) write_pixel_labels(vp.pixel_labels(), v.pixel_gt, spec.width, spec.height, spec.frames);
}

}  // namespace

StageResult run_synth(const PipelineConfig& cfg, const std::optional<fs::path>& spec_path, const fs::path& out,
                      const StageOptions& opts) {
  StageResult res;
  CorpusSpec cs = cfg.synth;
  std::uint64_t seed = cfg.seed;
  if (spec_path) {
    std::ifstream in(*spec_path);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot read spec " + spec_path->string());
    std::stringstream ss;
    ss << in.rdbuf();
    const json j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::ConfigError, spec_path->string() + " is not valid JSON");
    if (!j.contains("corpus")) {
      // A single scene.
      const SyntheticSceneSpec spec = scene_spec_from_json(ss.str());
      const std::string id = opts.video.value_or("synthetic");
      write_synthetic(out, id, spec, true);
      Corpus c = load_corpus(out);
      if (std::none_of(c.videos.begin(), c.videos.end(), [&](const VideoEntry& v) { return v.id == id; })) {
        c.videos.push_back({id, "train"});
      }
      save_corpus(out, c);
      res.processed = 1;
      res.summary = "wrote " + id;
      return res;
    }
    PipelineConfig tmp = cfg;
    json wrapped{{"synth", j["corpus"]}};
    tmp.synth = parse_config(wrapped).synth;
    validate(tmp);
    cs = tmp.synth;
    seed = j.value("seed", seed);
  }

  Corpus corpus;
  std::vector<std::pair<std::string, std::string>> todo;
  auto add = [&](const char* split, int n) {
    for (int i = 0; i < n; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%03d", split, i);
      todo.emplace_back(id, split);
    }
  };
  add("train", cs.train);
  add("test", cs.test);
  add("unlabeled", cs.unlabeled);
  parallel_for(todo.size(), [&](std::size_t i) {
    const auto spec = random_scene_spec(seed * 1000003ULL + i, cs.width, cs.height, cs.frames);
    write_synthetic(out, todo[i].first, spec, todo[i].second != "unlabeled");
  });
  for (const auto& [id, split] : todo) corpus.videos.push_back({id, split});
  save_corpus(out, corpus);
  res.processed = todo.size();
  res.summary = std::to_string(todo.size()) + " synthetic videos under " + out.string();
  return res;
}

// ----------------------------------------------------------------- segment

StageResult run_segment(const PipelineConfig& cfg, const StageOptions& opts) {
  StageResult res;
  const auto ids = selected_videos(cfg, opts);
  std::vector<int> done(ids.size(), 0);
  parallel_for(ids.size(), [&](std::size_t i) {
    const VideoPaths vp = video_paths(cfg.work_dir, ids[i]);
    std::vector<fs::path> inputs{vp.frames()};
    if (fs::exists(vp.pixel_labels())) inputs.push_back(vp.pixel_labels());
    const json m = stage_manifest("segment", inputs, seg_params(cfg));
    const fs::path mp = manifest_path(vp.root, "segment");
    if (!opts.force && manifest_current(mp, m) && fs::exists(vp.hierarchy_manifest())) return;
    const FrameSequence seq = load_frames(cfg, ids[i]);
    write_sequence_manifest(vp.sequence_manifest(), seq);
    const auto flows = forward_flows(seq, cfg.flow);
    fs::create_directories(vp.flow());
    for (const auto& f : flows) {
      write_flow(vp.flow() / (std::to_string(f.from_index) + "_" + std::to_string(f.to_index) + ".bin"), f);
    }
    const Oversegmentation base = oversegment(seq, flows, cfg.seg);
    const SegmentationHierarchy h = build_hierarchy(base, seq, flows, cfg.hierarchy_levels, cfg.seg);
    save_hierarchy(vp.hierarchy(), h);
    std::vector<fs::path> outputs{vp.hierarchy_manifest(), vp.root / "seg"};
    if (fs::exists(vp.pixel_labels())) {
      const auto labels = read_pixel_labels(vp.pixel_labels(), seq.width(), seq.height(), seq.count());
      write_ground_truth(vp.ground_truth(), annotate_from_pixels(base, labels, ids[i]));
      outputs.push_back(vp.ground_truth());
    }
    write_manifest(mp, m, outputs);
    done[i] = 1;
    spdlog::info("segment {}: {} supervoxels, hierarchy height {}", ids[i], base.num_supervoxels, h.height());
  });
  res.processed = std::count(done.begin(), done.end(), 1);
  res.skipped = ids.size() - res.processed;
  return res;
}

// ----------------------------------------------------------------- extract

StageResult run_extract(const PipelineConfig& cfg, const StageOptions& opts) {
  StageResult res;
  const auto ids = selected_videos(cfg, opts);
  std::vector<int> done(ids.size(), 0);
  parallel_for(ids.size(), [&](std::size_t i) {
    const VideoPaths vp = video_paths(cfg.work_dir, ids[i]);
    require(vp.hierarchy_manifest(), "hierarchy of video " + ids[i]);
    const json m = stage_manifest("extract", {vp.frames(), vp.hierarchy_manifest(), vp.root / "seg"},
                                  {{"flow", config_to_json(cfg)["flow"]}, {"layout", layout::kFeatureLayoutVersion}});
    const fs::path mp = manifest_path(vp.root, "extract");
    if (!opts.force && manifest_current(mp, m) && fs::exists(vp.features())) return;
    const FrameSequence seq = load_frames(cfg, ids[i]);
    const SegmentationHierarchy h = load_hierarchy(vp.hierarchy());
    const MotionCache cache(seq, cfg.flow);
    std::vector<int> levels;
    for (int l = 1; l < h.num_levels(); ++l) levels.push_back(l);
    const VideoFeatures feats = extract_video_features(seq, h, cache, levels);
    fs::remove_all(vp.features());
    for (int l : levels) {
      for (int j = 0; j < seq.count(); ++j) write_feature_file(vp.feature_file(l, j), feats[l][j]);
    }
    write_manifest(mp, m, {vp.features()});
    done[i] = 1;
  });
  res.processed = std::count(done.begin(), done.end(), 1);
  res.skipped = ids.size() - res.processed;
  return res;
}

PreparedVideo load_prepared(const PipelineConfig& cfg, const std::string& id) {
  const VideoPaths vp = video_paths(cfg.work_dir, id);
  require(vp.hierarchy_manifest(), "hierarchy of video " + id);
  PreparedVideo v;
  v.id = id;
  v.seq = load_frames(cfg, id);
  v.hierarchy = load_hierarchy(vp.hierarchy());
  v.features.resize(v.hierarchy.num_levels());
  for (int l = 1; l < v.hierarchy.num_levels(); ++l) {
    v.features[l].resize(v.seq.count());
    for (int j = 0; j < v.seq.count(); ++j) {
      const fs::path f = vp.feature_file(l, j);
      require(f, "features of video " + id);
      v.features[l][j] = read_feature_file(f);
    }
  }
  if (fs::exists(vp.ground_truth())) attach_ground_truth(v, read_ground_truth(vp.ground_truth()));
  if (fs::exists(vp.pixel_labels())) {
    v.pixel_gt = read_pixel_labels(vp.pixel_labels(), v.seq.width(), v.seq.height(), v.seq.count());
  } else if (v.gt) {
    // Leaf label of each voxel's supervoxel; unlabeled supervoxels count as Mix.
    const auto& base = v.hierarchy.base();
    std::vector<GeoLabel> px(base.labels.size(), GeoLabel::Mix);
    for (std::size_t i = 0; i < px.size(); ++i) {
      const auto it = v.gt->level0.find(base.labels[i]);
      if (it != v.gt->level0.end()) px[i] = it->second;
    }
    v.pixel_gt = std::move(px);
  }
  return v;
}

namespace {

std::vector<PreparedVideo> load_split(const PipelineConfig& cfg, const std::vector<std::string>& ids) {
  std::vector<PreparedVideo> out(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) { out[i] = load_prepared(cfg, ids[i]); });
  return out;
}

std::vector<const PreparedVideo*> pointers(const std::vector<PreparedVideo>& v) {
  std::vector<const PreparedVideo*> out;
  for (const auto& x : v) out.push_back(&x);
  return out;
}

std::vector<std::string> labeled_split(const PipelineConfig& cfg, const std::string& split) {
  std::vector<std::string> ids;
  for (const auto& id : load_corpus(cfg.work_dir).split(split)) {
    if (fs::exists(video_paths(cfg.work_dir, id).ground_truth())) ids.push_back(id);
  }
  if (ids.empty()) throw Error(ErrorCode::MissingDependency, "no labeled '" + split + "' videos in " + cfg.work_dir.string());
  return ids;
}

ClassifierBundle train_on(const std::vector<const PreparedVideo*>& videos, const std::vector<double>& levels,
                          const BoostParams& boost) {
  ExampleOptions eo;
  eo.level_fractions = levels;
  LabeledSet data;
  for (const auto* v : videos) append_examples(data, *v, eo);
  spdlog::info("training on {} segments from {} videos", data.size(), videos.size());
  return train_bundle(data, boost);
}

}  // namespace

// ------------------------------------------------------------------- train

StageResult run_train(const PipelineConfig& cfg, const StageOptions& opts) {
  StageResult res;
  const auto ids = labeled_split(cfg, "train");
  std::vector<fs::path> inputs;
  for (const auto& id : ids) {
    const VideoPaths vp = video_paths(cfg.work_dir, id);
    inputs.push_back(vp.ground_truth());
    inputs.push_back(vp.hierarchy_manifest());
    inputs.push_back(vp.features());
  }
  const json cj = config_to_json(cfg);
  const json m = stage_manifest("train", inputs, {{"train", cj["train"]}, {"videos", ids}});
  const fs::path mp = manifest_path(cfg.work_dir, "train");
  if (!opts.force && manifest_current(mp, m) && fs::exists(cfg.model_path())) {
    res.skipped = 1;
    return res;
  }
  const auto videos = load_split(cfg, ids);
  const ClassifierBundle bundle = train_on(pointers(videos), cfg.train_levels, cfg.boost);
  save_bundle(cfg.model_path(), bundle);
  write_manifest(mp, m, {cfg.model_path()});
  res.processed = 1;
  res.summary = "model written to " + cfg.model_path().string();
  return res;
}

// ----------------------------------------------------------------- predict

StageResult run_predict(const PipelineConfig& cfg, const StageOptions& opts) {
  StageResult res;
  require(cfg.model_path(), "model");
  const ClassifierBundle bundle = load_bundle(cfg.model_path());
  std::vector<std::string> ids;
  if (opts.video) {
    ids = {*opts.video};
  } else {
    const Corpus c = load_corpus(cfg.work_dir);
    ids = c.split("test");
    if (ids.empty()) ids = selected_videos(cfg, opts);
  }
  const json m_params{{"inference", config_to_json(cfg)["inference"]}};
  std::vector<int> done(ids.size(), 0);
  parallel_for(ids.size(), [&](std::size_t i) {
    const VideoPaths vp = video_paths(cfg.work_dir, ids[i]);
    require(vp.hierarchy_manifest(), "hierarchy of video " + ids[i]);
    require(vp.features(), "features of video " + ids[i]);
    const json m = stage_manifest("predict", {cfg.model_path(), vp.hierarchy_manifest(), vp.features()}, m_params);
    const fs::path mp = manifest_path(vp.root, "predict");
    if (!opts.force && manifest_current(mp, m) && fs::exists(vp.prediction() / "labels.json")) return;
    const PreparedVideo v = load_prepared(cfg, ids[i]);
    const VideoLabeling labeling = label_video(v.hierarchy, v.features, bundle, cfg.inference);
    fs::remove_all(vp.prediction());
    write_labeling(vp.prediction(), v.hierarchy.base(), labeling);
    write_manifest(mp, m, {vp.prediction() / "labels.json"});
    done[i] = 1;
    spdlog::info("predict {}: {} classifier calls", ids[i], labeling.classifier_calls);
  });
  res.processed = std::count(done.begin(), done.end(), 1);
  res.skipped = ids.size() - res.processed;
  return res;
}

// -------------------------------------------------------------------- eval

namespace {

VideoLabeling read_labeling(const fs::path& labels_json, std::size_t supervoxels) {
  std::ifstream in(labels_json);
  if (!in) throw Error(ErrorCode::MissingDependency, "prediction not found: " + labels_json.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::FormatError, labels_json.string() + " is malformed");
  VideoLabeling out;
  out.supervoxels.resize(supervoxels);
  for (const auto& [key, e] : j.items()) {
    const std::size_t s = std::stoul(key);
    if (s >= supervoxels) throw Error(ErrorCode::FormatError, "supervoxel " + key + " out of range");
    auto& p = out.supervoxels[s];
    const auto main = parse_label(e.at("label").get<std::string>());
    if (!main) throw Error(ErrorCode::FormatError, "bad label for supervoxel " + key);
    p.main = *main;
    p.posterior.main = e.at("main_posterior").get<std::array<double, 3>>();
    p.posterior.subvertical = e.at("subvertical_posterior").get<std::array<double, 3>>();
    if (e.contains("subvertical")) p.subvertical = parse_label(e["subvertical"].get<std::string>());
  }
  return out;
}

}  // namespace

StageResult run_eval(const PipelineConfig& cfg, const StageOptions& opts) {
  StageResult res;
  const auto ids = opts.video ? std::vector<std::string>{*opts.video} : labeled_split(cfg, "test");
  PixelPrediction all;
  std::vector<GeoLabel> gt;
  json per_video = json::array();
  for (const auto& id : ids) {
    const VideoPaths vp = video_paths(cfg.work_dir, id);
    const PreparedVideo v = load_prepared(cfg, id);
    if (!v.pixel_gt) throw Error(ErrorCode::MissingDependency, "ground truth of video " + id);
    const auto& base = v.hierarchy.base();
    const auto labeling = read_labeling(vp.prediction() / "labels.json", base.num_supervoxels);
    const auto pred = pixel_prediction(base, labeling);
    const auto acc = pixel_accuracy(pred, *v.pixel_gt);
    per_video.push_back({{"id", id}, {"headline", acc.headline()}});
    all.main.insert(all.main.end(), pred.main.begin(), pred.main.end());
    all.subvertical.insert(all.subvertical.end(), pred.subvertical.begin(), pred.subvertical.end());
    gt.insert(gt.end(), v.pixel_gt->begin(), v.pixel_gt->end());
  }
  const auto acc = pixel_accuracy(all, gt);
  const auto cm_main = confusion(all, gt, ClassSet::Main);
  const auto cm_sub = confusion(all, gt, ClassSet::SubVertical);
  const fs::path dir = new_run_dir(cfg, "eval");
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json report{{"headline", acc.headline()},
              {"main_accuracy", opt(acc.main.overall)},
              {"subvertical_accuracy", opt(acc.subvertical.overall)},
              {"scorable_pixels", acc.main.scorable},
              {"videos", per_video}};
  write_text(dir / "eval.json", report.dump(2) + "\n");
  write_text(dir / "confusion_main.txt", render_confusion(cm_main));
  write_text(dir / "confusion_subvertical.txt", render_confusion(cm_sub));
  write_text(dir / "headline.txt", acc.headline() + "\n");
  res.processed = ids.size();
  res.report_dir = dir;
  res.summary = acc.headline();
  return res;
}

// ------------------------------------------------------------------ ablate

StageResult run_ablate(const PipelineConfig& cfg, const StageOptions&) {
  StageResult res;
  const auto train = load_split(cfg, labeled_split(cfg, "train"));
  const auto test = load_split(cfg, labeled_split(cfg, "test"));
  AblationSetup setup;
  setup.windows = cfg.ablation_windows;
  setup.level_sets = cfg.ablation_level_sets;
  setup.boost = cfg.boost;
  const auto rows = run_ablation(pointers(train), pointers(test), setup);
  const fs::path dir = new_run_dir(cfg, "ablate");
  write_text(dir / "ablation.csv", ablation_csv(rows));
  res.processed = rows.size();
  res.report_dir = dir;
  res.summary = std::to_string(rows.size()) + " ablation rows";
  return res;
}

// --------------------------------------------------------------- bootstrap

StageResult run_bootstrap(const PipelineConfig& cfg, const StageOptions&) {
  StageResult res;
  const auto train = load_split(cfg, labeled_split(cfg, "train"));
  const auto test = load_split(cfg, labeled_split(cfg, "test"));
  const auto unlabeled_ids = load_corpus(cfg.work_dir).split("unlabeled");
  if (unlabeled_ids.empty()) throw Error(ErrorCode::MissingDependency, "no 'unlabeled' videos in the corpus");
  const auto unlabeled = load_split(cfg, unlabeled_ids);

  BootstrapParams params = cfg.bootstrap;
  params.boost = cfg.boost;
  BootstrapState state = make_bootstrap_state(pointers(train), pointers(unlabeled), cfg.train_levels, params);
  ClassifierBundle bundle = train_bundle(state.training_set(), params.boost);

  std::vector<BootstrapMetrics> rows;
  auto record = [&](std::size_t admitted, std::size_t evicted) {
    const auto r = evaluate(pointers(test), bundle, cfg.inference);
    rows.push_back({state.iteration, state.labeled.size(), admitted, evicted, r.accuracy.main.overall.value_or(0),
                    r.accuracy.subvertical.overall.value_or(0)});
  };
  record(0, 0);
  for (int it = 0; it < cfg.bootstrap_iterations; ++it) {
    const RoundReport rep = bootstrap_round(state, bundle);
    record(rep.admitted, rep.introspection.evicted.size());
  }
  const fs::path dir = new_run_dir(cfg, "bootstrap");
  write_text(dir / "bootstrap.csv", bootstrap_csv(rows));
  save_bundle(dir / "model_bootstrap.gvbt", bundle);
  res.processed = rows.size();
  res.report_dir = dir;
  char buf[128];
  std::snprintf(buf, sizeof buf, "main %.1f%% -> %.1f%% over %d rounds", 100 * rows.front().main_accuracy,
                100 * rows.back().main_accuracy, cfg.bootstrap_iterations);
  res.summary = buf;
  return res;
}

// --------------------------------------------------------------------- all

StageResult run_all(const PipelineConfig& cfg, const StageOptions& opts) {
  if (load_corpus(cfg.work_dir).videos.empty()) run_synth(cfg, std::nullopt, cfg.work_dir, opts);
  run_segment(cfg, opts);
  run_extract(cfg, opts);
  run_train(cfg, opts);
  run_predict(cfg, opts);
  return run_eval(cfg, opts);
}

int exit_code_for(const std::exception& e) {
  if (const auto* ge = dynamic_cast<const Error*>(&e)) {
    switch (ge->code()) {
      case ErrorCode::ConfigError:
      case ErrorCode::BadFractions:
      case ErrorCode::InvalidSpec: return kExitConfig;
      case ErrorCode::MissingDependency:
      case ErrorCode::MissingFrame: return kExitMissingDependency;
      default: return kExitFailure;
    }
  }
  return kExitFailure;
}

}  // namespace geovid::cli
