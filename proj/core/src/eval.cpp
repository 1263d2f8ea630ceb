#include "geovid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "geovid/error.hpp"

namespace geovid {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- metrics

PixelPrediction pixel_prediction(const Oversegmentation& base, const VideoLabeling& labeling) {
  if (labeling.supervoxels.size() != static_cast<std::size_t>(base.num_supervoxels)) {
    throw Error(ErrorCode::DimensionMismatch, "labeling does not match the oversegmentation");
  }
  std::vector<GeoLabel> sv_main(labeling.supervoxels.size()), sv_sub(labeling.supervoxels.size());
  for (std::size_t s = 0; s < labeling.supervoxels.size(); ++s) {
    const auto& p = labeling.supervoxels[s];
    sv_main[s] = p.main;
    sv_sub[s] = kSubVerticalClasses[argmax3(p.posterior.subvertical)];
  }
  PixelPrediction out;
  out.main.resize(base.labels.size());
  out.subvertical.resize(base.labels.size());
  for (std::size_t v = 0; v < base.labels.size(); ++v) {
    out.main[v] = sv_main[base.labels[v]];
    out.subvertical[v] = sv_sub[base.labels[v]];
  }
  return out;
}

namespace {

void check_aligned(const PixelPrediction& pred, const std::vector<GeoLabel>& gt) {
  if (pred.main.size() != gt.size() || pred.subvertical.size() != gt.size()) {
    throw Error(ErrorCode::DimensionMismatch, "prediction and ground truth differ in size");
  }
}

ClassAccuracy finish(const std::map<GeoLabel, std::pair<std::uint64_t, std::uint64_t>>& tally) {
  ClassAccuracy acc;
  for (const auto& [label, ct] : tally) {
    acc.correct += ct.first;
    acc.scorable += ct.second;
    if (ct.second > 0) acc.per_class[label] = double(ct.first) / double(ct.second);
  }
  if (acc.scorable > 0) acc.overall = double(acc.correct) / double(acc.scorable);
  return acc;
}

}  // namespace

AccuracyReport pixel_accuracy(const PixelPrediction& pred, const std::vector<GeoLabel>& gt) {
  check_aligned(pred, gt);
  std::map<GeoLabel, std::pair<std::uint64_t, std::uint64_t>> main, sub;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const GeoLabel g = gt[i];
    if (g == GeoLabel::Mix) continue;
    auto& m = main[main_label(g)];
    m.second++;
    if (pred.main[i] == main_label(g)) m.first++;
    if (is_subvertical(g)) {
      auto& s = sub[g];
      s.second++;
      if (pred.subvertical[i] == g) s.first++;
    }
  }
  return {finish(main), finish(sub)};
}

std::string AccuracyReport::headline() const {
  if (!main.overall) return "no scorable pixels";
  char buf[96];
  if (subvertical.overall) {
    std::snprintf(buf, sizeof buf, "%.1f%% main / %.1f%% sub-vertical", 100.0 * *main.overall,
                  100.0 * *subvertical.overall);
  } else {
    std::snprintf(buf, sizeof buf, "%.1f%% main / n/a sub-vertical", 100.0 * *main.overall);
  }
  return buf;
}

namespace {

std::vector<GeoLabel> class_list(ClassSet set) {
  return set == ClassSet::Main ? std::vector<GeoLabel>(kMainClasses.begin(), kMainClasses.end())
                               : std::vector<GeoLabel>(kSubVerticalClasses.begin(), kSubVerticalClasses.end());
}

void renormalize(ConfusionMatrix& cm) {
  const std::size_t k = cm.classes.size();
  cm.row_normalized.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t r = 0; r < k; ++r) {
    std::uint64_t row = 0;
    for (auto c : cm.counts[r]) row += c;
    if (row == 0) continue;
    for (std::size_t c = 0; c < k; ++c) cm.row_normalized[r][c] = double(cm.counts[r][c]) / double(row);
  }
}

}  // namespace

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts) {
    for (auto c : row) t += c;
  }
  return t;
}

std::optional<double> ConfusionMatrix::accuracy() const {
  const std::uint64_t t = total();
  if (t == 0) return std::nullopt;
  std::uint64_t d = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) d += counts[i][i];
  return double(d) / double(t);
}

void ConfusionMatrix::add(const ConfusionMatrix& other) {
  if (classes.empty()) {
    *this = other;
    return;
  }
  if (other.classes != classes) throw Error(ErrorCode::DimensionMismatch, "confusion matrices differ in classes");
  for (std::size_t r = 0; r < counts.size(); ++r) {
    for (std::size_t c = 0; c < counts.size(); ++c) counts[r][c] += other.counts[r][c];
  }
  renormalize(*this);
}

ConfusionMatrix ConfusionMatrix::from_row_percentages(ClassSet set, const std::vector<std::vector<double>>& rows) {
  ConfusionMatrix cm;
  cm.classes = class_list(set);
  const std::size_t k = cm.classes.size();
  if (rows.size() != k) throw Error(ErrorCode::DimensionMismatch, "expected one row per class");
  cm.counts.assign(k, std::vector<std::uint64_t>(k, 0));
  for (std::size_t r = 0; r < k; ++r) {
    if (rows[r].size() != k) throw Error(ErrorCode::DimensionMismatch, "expected one column per class");
    // Tenths of a percent, so one-decimal inputs round-trip exactly.
    for (std::size_t c = 0; c < k; ++c) cm.counts[r][c] = static_cast<std::uint64_t>(std::llround(rows[r][c] * 10));
  }
  renormalize(cm);
  return cm;
}

ConfusionMatrix confusion(const PixelPrediction& pred, const std::vector<GeoLabel>& gt, ClassSet set) {
  check_aligned(pred, gt);
  ConfusionMatrix cm;
  cm.classes = class_list(set);
  cm.counts.assign(3, std::vector<std::uint64_t>(3, 0));
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const GeoLabel g = gt[i];
    if (g == GeoLabel::Mix) continue;
    if (set == ClassSet::Main) {
      cm.counts[main_index(main_label(g))][main_index(pred.main[i])]++;
    } else if (is_subvertical(g)) {
      cm.counts[subvertical_index(g)][subvertical_index(pred.subvertical[i])]++;
    }
  }
  renormalize(cm);
  return cm;
}

std::string render_confusion(const ConfusionMatrix& cm) {
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-10s", "gt\\pred");
  out += buf;
  for (GeoLabel c : cm.classes) {
    std::snprintf(buf, sizeof buf, "%10s", std::string(to_string(c)).c_str());
    out += buf;
  }
  out += '\n';
  for (std::size_t r = 0; r < cm.classes.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%-10s", std::string(to_string(cm.classes[r])).c_str());
    out += buf;
    for (double p : cm.row_normalized[r]) {
      std::snprintf(buf, sizeof buf, "%10.1f", 100.0 * p);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

// ------------------------------------------------------------ synthetic video

int ObjectTrack::left(int t) const { return static_cast<int>(std::lround(x + vx * t)); }
int ObjectTrack::top(int t) const { return static_cast<int>(std::lround(y + vy * t)); }

namespace {

constexpr int kColorLo = 20;
constexpr int kColorHi = 235;
constexpr int kPorousAmplitude = 40;

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_of(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return mix64(h ^ d);
}

double unit(std::uint64_t h) { return (double(h >> 11) + 0.5) * (1.0 / 9007199254740992.0); }

/// Deterministic N(0, sigma) sample clamped to +-3 sigma.
double pixel_noise(std::uint64_t seed, int x, int y, int t, int channel, double sigma) {
  if (sigma <= 0) return 0;
  const std::uint64_t h = hash_of(seed, x, y, t, channel);
  const double u1 = unit(h), u2 = unit(mix64(h));
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * std::numbers::pi * u2);
  return std::clamp(z, -3.0, 3.0) * sigma;
}

int clamp_color(double v) { return std::clamp(static_cast<int>(std::lround(v)), kColorLo, kColorHi); }

Rgb shifted(Rgb c, double d) {
  return {static_cast<std::uint8_t>(clamp_color(c.r + d)), static_cast<std::uint8_t>(clamp_color(c.g + d)),
          static_cast<std::uint8_t>(clamp_color(c.b + d))};
}

int max_channel_diff(Rgb a, Rgb b) {
  return std::max({std::abs(a.r - b.r), std::abs(a.g - b.g), std::abs(a.b - b.b)});
}

const VerticalBlock& block_at(const SyntheticSceneSpec& spec, int x) {
  for (const auto& b : spec.blocks) {
    if (x >= b.x0 && x < b.x1) return b;
  }
  return spec.blocks.back();
}

/// Static background color before sensor noise.
Rgb background_color(const SyntheticSceneSpec& spec, int x, int y) {
  if (y < spec.sky_rows) {
    // Brighter towards the horizon.
    return shifted(spec.sky_color, 25.0 * y / std::max(spec.sky_rows - 1, 1) - 10.0);
  }
  const int ground_top = spec.sky_rows + spec.vertical_rows();
  if (y >= ground_top) {
    const double d = 6.0 * std::sin(0.9 * x) * std::cos(0.7 * y) + (y - ground_top) * 0.4;
    return shifted(spec.ground_color, d);
  }
  const auto& b = block_at(spec, x);
  if (b.texture == TextureClass::Smooth) return shifted(b.color, 0.5 * (y - spec.sky_rows) - 4.0);
  const double d = (2.0 * unit(hash_of(spec.seed ^ 0x5a5aULL, x, y, 0, 0)) - 1.0) * kPorousAmplitude;
  return shifted(b.color, d);
}

GeoLabel background_label(const SyntheticSceneSpec& spec, int x, int y) {
  if (y < spec.sky_rows) return GeoLabel::Sky;
  if (y >= spec.sky_rows + spec.vertical_rows()) return GeoLabel::Ground;
  return block_at(spec, x).texture == TextureClass::Smooth ? GeoLabel::Solid : GeoLabel::Porous;
}

bool inside_band(const SyntheticSceneSpec& spec, const ObjectTrack& tr, int t) {
  const int l = tr.left(t), top = tr.top(t);
  return l >= 0 && l + tr.w <= spec.width && top >= spec.sky_rows && top + tr.h <= spec.sky_rows + spec.vertical_rows();
}

bool contrast_ok(const SyntheticSceneSpec& spec, const ObjectTrack& tr) {
  const Rgb c = shifted(tr.color, 0);
  for (int t = 0; t < spec.frames; ++t) {
    for (int y = tr.top(t); y < tr.top(t) + tr.h; ++y) {
      for (int x = tr.left(t); x < tr.left(t) + tr.w; ++x) {
        if (max_channel_diff(c, background_color(spec, x, y)) < spec.object_contrast) return false;
      }
    }
  }
  return true;
}

std::vector<Frame> render(const SyntheticSceneSpec& spec, bool with_objects, std::vector<GeoLabel>* gt) {
  const std::size_t area = static_cast<std::size_t>(spec.width) * spec.height;
  std::vector<Rgb> bg(area);
  std::vector<GeoLabel> bg_label(area);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      bg[std::size_t(y) * spec.width + x] = background_color(spec, x, y);
      bg_label[std::size_t(y) * spec.width + x] = background_label(spec, x, y);
    }
  }
  if (gt) gt->assign(area * spec.frames, GeoLabel::Mix);
  std::vector<Frame> frames;
  frames.reserve(spec.frames);
  std::vector<Rgb> clean(area);
  std::vector<GeoLabel> label(area);
  for (int t = 0; t < spec.frames; ++t) {
    clean = bg;
    label = bg_label;
    if (with_objects) {
      for (const auto& tr : spec.tracks) {
        const Rgb c = shifted(tr.color, 0);
        for (int y = tr.top(t); y < tr.top(t) + tr.h; ++y) {
          for (int x = tr.left(t); x < tr.left(t) + tr.w; ++x) {
            clean[std::size_t(y) * spec.width + x] = c;
            label[std::size_t(y) * spec.width + x] = GeoLabel::Object;
          }
        }
      }
    }
    Frame f(spec.width, spec.height, t);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const Rgb c = clean[std::size_t(y) * spec.width + x];
        auto ch = [&](int v, int k) {
          return static_cast<std::uint8_t>(
              std::clamp<long>(std::lround(v + pixel_noise(spec.seed, x, y, t, k, spec.noise_sigma)), 0, 255));
        };
        f.set(x, y, {ch(c.r, 0), ch(c.g, 1), ch(c.b, 2)});
      }
    }
    if (gt) std::copy(label.begin(), label.end(), gt->begin() + std::ptrdiff_t(t * area));
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace

void validate(const SyntheticSceneSpec& spec) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidSpec, m); };
  if (spec.width <= 0 || spec.height <= 0 || spec.frames <= 0) fail("dimensions must be positive");
  if (spec.sky_rows <= 0 || spec.ground_rows <= 0 || spec.vertical_rows() <= 0) {
    fail("sky, vertical and ground bands must each be non-empty");
  }
  if (spec.blocks.empty()) fail("the vertical band needs at least one block");
  int x = 0;
  for (const auto& b : spec.blocks) {
    if (b.x0 != x || b.x1 <= b.x0) fail("vertical blocks must partition the frame width left to right");
    x = b.x1;
  }
  if (x != spec.width) fail("vertical blocks must cover the full width");
  if (!(spec.noise_sigma >= 0 && spec.noise_sigma <= 6)) fail("noise_sigma must lie in [0, 6]");
  if (spec.object_contrast < 0 || spec.object_contrast > 255) fail("object_contrast must lie in [0, 255]");
  for (std::size_t i = 0; i < spec.tracks.size(); ++i) {
    const auto& tr = spec.tracks[i];
    if (tr.w <= 0 || tr.h <= 0) fail("object " + std::to_string(i) + " has an empty rectangle");
    for (int t = 0; t < spec.frames; ++t) {
      if (!inside_band(spec, tr, t)) {
        fail("object " + std::to_string(i) + " leaves the vertical band at frame " + std::to_string(t));
      }
    }
    if (!contrast_ok(spec, tr)) fail("object " + std::to_string(i) + " is below the contrast threshold");
  }
}

SyntheticVideo generate_synthetic_video(const SyntheticSceneSpec& spec, const std::string& id) {
  validate(spec);
  std::vector<GeoLabel> gt;
  auto frames = render(spec, true, &gt);
  return {FrameSequence(std::move(frames), id), std::move(gt)};
}

FrameSequence render_background(const SyntheticSceneSpec& spec, const std::string& id) {
  validate(spec);
  return FrameSequence(render(spec, false, nullptr), id);
}

SyntheticSceneSpec random_scene_spec(std::uint64_t seed, int width, int height, int frames) {
  std::mt19937_64 rng(seed);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto real = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto rgb = [](int r, int g, int b) {
    return Rgb{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
  };

  SyntheticSceneSpec s;
  s.width = width;
  s.height = height;
  s.frames = frames;
  s.seed = seed;
  s.sky_rows = std::max(1, static_cast<int>(std::lround(height * real(0.25, 0.375))));
  s.ground_rows = std::max(1, static_cast<int>(std::lround(height * real(0.25, 0.375))));
  s.sky_color = rgb(uni(90, 150), uni(150, 200), uni(215, 235));
  s.ground_color = rgb(uni(110, 150), uni(85, 115), uni(50, 80));
  s.noise_sigma = real(1.0, 3.0);
  s.object_contrast = 40;

  const int nblocks = std::clamp(uni(3, 5), 1, std::max(1, width / 8));
  std::vector<int> cuts{0, width};
  while (static_cast<int>(cuts.size()) < nblocks + 1) {
    const int c = uni(1, width - 1);
    bool ok = true;
    for (int e : cuts) ok = ok && std::abs(e - c) >= std::min(8, width / nblocks);
    if (ok) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  const int forced_porous = uni(0, nblocks - 1);
  for (int i = 0; i < nblocks; ++i) {
    VerticalBlock b;
    b.x0 = cuts[i];
    b.x1 = cuts[i + 1];
    const bool porous = nblocks == 1 ? false : (i == forced_porous || (i != (forced_porous + 1) % nblocks && uni(0, 1)));
    b.texture = porous ? TextureClass::HighFrequency : TextureClass::Smooth;
    b.color = porous ? rgb(uni(50, 90), uni(110, 160), uni(45, 85)) : rgb(uni(120, 200), uni(90, 170), uni(80, 160));
    s.blocks.push_back(b);
  }

  const int band = s.vertical_rows();
  const int nobj = uni(1, 2);
  for (int i = 0; i < nobj; ++i) {
    ObjectTrack tr;
    tr.w = std::min(uni(8, 14), width);
    tr.h = std::min(uni(6, 10), band);
    tr.vx = (uni(0, 1) ? 1.0 : -1.0) * real(0.5, 1.2);
    tr.vy = 0;
    const double travel = std::abs(tr.vx) * (frames - 1);
    const double room = width - tr.w - travel - 1;
    if (room < 0) tr.vx = 0;
    const double start = room > 0 ? real(0, room) : 0;
    tr.x = tr.vx >= 0 ? start : width - tr.w - 1 - start;
    tr.y = uni(s.sky_rows, s.sky_rows + band - tr.h);
    for (int attempt = 0;; ++attempt) {
      auto level = [&] { return uni(0, 1) ? uni(200, 235) : uni(20, 50); };
      tr.color = rgb(level(), level(), level());
      if (contrast_ok(s, tr)) break;
      if (attempt > 500) throw Error(ErrorCode::InvalidSpec, "could not draw a contrasting object color");
    }
    s.tracks.push_back(tr);
  }
  validate(s);
  return s;
}

void write_pixel_labels(const fs::path& dir, const std::vector<GeoLabel>& labels, int width, int height,
                        int frames) {
  const std::size_t area = static_cast<std::size_t>(width) * height;
  if (labels.size() != area * frames) throw Error(ErrorCode::DimensionMismatch, "label volume size mismatch");
  fs::create_directories(dir);
  for (int t = 0; t < frames; ++t) {
    Frame f(width, height, t);
    for (std::size_t i = 0; i < area; ++i) {
      const auto v = static_cast<std::uint8_t>(labels[t * area + i]);
      f.set(static_cast<int>(i % width), static_cast<int>(i / width), {v, v, v});
    }
    write_png(dir / frame_filename("frame_%06d.png", t), f);
  }
}

std::vector<GeoLabel> read_pixel_labels(const fs::path& dir, int width, int height, int frames) {
  const std::size_t area = static_cast<std::size_t>(width) * height;
  std::vector<GeoLabel> out(area * frames);
  for (int t = 0; t < frames; ++t) {
    const fs::path p = dir / frame_filename("frame_%06d.png", t);
    if (!fs::exists(p)) throw Error(ErrorCode::MissingDependency, "missing label map " + p.string());
    const Frame f = read_png(p, t);
    if (f.width() != width || f.height() != height) throw Error(ErrorCode::DimensionMismatch, p.string());
    for (std::size_t i = 0; i < area; ++i) {
      const int v = f.at(static_cast<int>(i % width), static_cast<int>(i / width)).r;
      if (v >= kNumLabels) throw Error(ErrorCode::FormatError, "bad label value in " + p.string());
      out[t * area + i] = static_cast<GeoLabel>(v);
    }
  }
  return out;
}

namespace {

nlohmann::json rgb_json(Rgb c) { return nlohmann::json::array({c.r, c.g, c.b}); }
Rgb rgb_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::InvalidSpec, "colors are [r, g, b] arrays");
  auto ch = [&](int i) {
    const int v = j.at(i).get<int>();
    if (v < 0 || v > 255) throw Error(ErrorCode::InvalidSpec, "color channel out of range");
    return static_cast<std::uint8_t>(v);
  };
  return {ch(0), ch(1), ch(2)};
}

}  // namespace

std::string scene_spec_to_json(const SyntheticSceneSpec& s) {
  nlohmann::json j{{"width", s.width},
                   {"height", s.height},
                   {"frames", s.frames},
                   {"sky_rows", s.sky_rows},
                   {"ground_rows", s.ground_rows},
                   {"sky_color", rgb_json(s.sky_color)},
                   {"ground_color", rgb_json(s.ground_color)},
                   {"noise_sigma", s.noise_sigma},
                   {"object_contrast", s.object_contrast},
                   {"seed", s.seed}};
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : s.blocks) {
    j["blocks"].push_back({{"x0", b.x0},
                           {"x1", b.x1},
                           {"texture", b.texture == TextureClass::Smooth ? "smooth" : "high_frequency"},
                           {"color", rgb_json(b.color)}});
  }
  j["tracks"] = nlohmann::json::array();
  for (const auto& t : s.tracks) {
    j["tracks"].push_back({{"x", t.x}, {"y", t.y}, {"w", t.w}, {"h", t.h}, {"vx", t.vx}, {"vy", t.vy},
                           {"color", rgb_json(t.color)}});
  }
  return j.dump(2);
}

SyntheticSceneSpec scene_spec_from_json(const std::string& text) {
  SyntheticSceneSpec s;
  try {
    const auto j = nlohmann::json::parse(text);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.frames = j.value("frames", s.frames);
    s.sky_rows = j.value("sky_rows", s.sky_rows);
    s.ground_rows = j.value("ground_rows", s.ground_rows);
    if (j.contains("sky_color")) s.sky_color = rgb_from(j["sky_color"]);
    if (j.contains("ground_color")) s.ground_color = rgb_from(j["ground_color"]);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.object_contrast = j.value("object_contrast", s.object_contrast);
    s.seed = j.value("seed", s.seed);
    for (const auto& b : j.value("blocks", nlohmann::json::array())) {
      VerticalBlock vb;
      vb.x0 = b.at("x0").get<int>();
      vb.x1 = b.at("x1").get<int>();
      const auto tex = b.value("texture", std::string("smooth"));
      if (tex == "smooth") {
        vb.texture = TextureClass::Smooth;
      } else if (tex == "high_frequency") {
        vb.texture = TextureClass::HighFrequency;
      } else {
        throw Error(ErrorCode::InvalidSpec, "unknown texture '" + tex + "'");
      }
      vb.color = rgb_from(b.at("color"));
      s.blocks.push_back(vb);
    }
    for (const auto& t : j.value("tracks", nlohmann::json::array())) {
      ObjectTrack tr;
      tr.x = t.at("x").get<double>();
      tr.y = t.at("y").get<double>();
      tr.w = t.at("w").get<int>();
      tr.h = t.at("h").get<int>();
      tr.vx = t.value("vx", 0.0);
      tr.vy = t.value("vy", 0.0);
      tr.color = rgb_from(t.at("color"));
      s.tracks.push_back(tr);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("scene spec: ") + e.what());
  }
  validate(s);
  return s;
}

// ------------------------------------------------------------------ ablation

std::vector<AblationCondition> standard_conditions() {
  return {{"motion_and_appearance", FeatureSet::MotionAndAppearance, false},
          {"appearance", FeatureSet::AppearanceOnly, false},
          {"motion", FeatureSet::MotionOnly, false},
          {"motion_and_appearance_first_frame", FeatureSet::MotionAndAppearance, true},
          {"appearance_first_frame", FeatureSet::AppearanceOnly, true}};
}

namespace {

EvaluationResult evaluate_masked(const std::vector<const PreparedVideo*>& videos, const ClassifierBundle& bundle,
                                 const InferenceConfig& config, FeatureSet mask) {
  EvaluationResult res;
  PixelPrediction all;
  std::vector<GeoLabel> gt;
  for (const PreparedVideo* v : videos) {
    if (!v->pixel_gt) throw Error(ErrorCode::MissingDependency, v->id + " has no pixel ground truth");
    VideoLabeling labeling;
    if (mask == FeatureSet::MotionAndAppearance) {
      labeling = label_video(v->hierarchy, v->features, bundle, config);
    } else {
      VideoFeatures masked = v->features;
      for (auto& level : masked) {
        for (auto& frame : level) {
          for (auto& rec : frame) apply_feature_mask(rec.x, mask);
        }
      }
      labeling = label_video(v->hierarchy, masked, bundle, config);
    }
    res.classifier_calls += labeling.classifier_calls;
    auto pred = pixel_prediction(v->hierarchy.base(), labeling);
    all.main.insert(all.main.end(), pred.main.begin(), pred.main.end());
    all.subvertical.insert(all.subvertical.end(), pred.subvertical.begin(), pred.subvertical.end());
    gt.insert(gt.end(), v->pixel_gt->begin(), v->pixel_gt->end());
  }
  res.accuracy = pixel_accuracy(all, gt);
  res.main = confusion(all, gt, ClassSet::Main);
  res.subvertical = confusion(all, gt, ClassSet::SubVertical);
  return res;
}

}  // namespace

EvaluationResult evaluate(const std::vector<const PreparedVideo*>& videos, const ClassifierBundle& bundle,
                          const InferenceConfig& config) {
  return evaluate_masked(videos, bundle, config, FeatureSet::MotionAndAppearance);
}

std::vector<AblationRow> run_ablation(const std::vector<const PreparedVideo*>& train,
                                      const std::vector<const PreparedVideo*>& test, const AblationSetup& setup) {
  std::vector<AblationRow> rows;
  for (const auto& levels : setup.level_sets) {
    for (const auto& cond : setup.conditions) {
      ExampleOptions opts;
      opts.level_fractions = levels;
      opts.feature_set = cond.features;
      opts.first_frame_only = cond.first_frame_only;
      LabeledSet data;
      for (const PreparedVideo* v : train) append_examples(data, *v, opts);
      const ClassifierBundle bundle = train_bundle(data, setup.boost);

      // First-frame conditions see only the first frame of each segment, so
      // they are scored once with a one-frame window.
      std::vector<int> windows = cond.first_frame_only ? std::vector<int>{1} : setup.windows;
      for (int w : windows) {
        const auto res = evaluate_masked(test, bundle, {levels, w}, cond.features);
        AblationRow row;
        row.condition = cond.name;
        row.window = w;
        row.levels = levels;
        row.main = res.accuracy.main.overall.value_or(0);
        row.subvertical = res.accuracy.subvertical.overall.value_or(0);
        const auto& per = res.accuracy.subvertical.per_class;
        const auto it = per.find(GeoLabel::Object);
        row.object = it != per.end() ? it->second : 0;
        rows.push_back(row);
      }
    }
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "condition,window,levels,main,subvertical,object\n";
  for (const auto& r : rows) {
    os << r.condition << ',' << r.window << ',';
    for (std::size_t i = 0; i < r.levels.size(); ++i) os << (i ? ";" : "") << r.levels[i];
    char buf[64];
    std::snprintf(buf, sizeof buf, ",%.4f,%.4f,%.4f\n", r.main, r.subvertical, r.object);
    os << buf;
  }
  return os.str();
}

}  // namespace geovid
