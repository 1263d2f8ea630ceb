#include "geovid/frame_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <regex>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "geovid/error.hpp"

namespace geovid {

namespace fs = std::filesystem;

Frame::Frame(int width, int height, int index)
    : width_(width), height_(height), index_(index),
      rgb_(3 * static_cast<std::size_t>(width) * height, 0) {}

Frame::Frame(int width, int height, int index, std::vector<std::uint8_t> rgb)
    : width_(width), height_(height), index_(index), rgb_(std::move(rgb)) {
  if (rgb_.size() != 3 * static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::DimensionMismatch, "pixel buffer does not match frame size");
  }
}

FrameSequence::FrameSequence(std::vector<Frame> frames, std::string source_id)
    : frames_(std::move(frames)), source_id_(std::move(source_id)) {
  if (frames_.empty()) throw Error(ErrorCode::EmptySequence, "no frames in " + source_id_);
  for (std::size_t j = 0; j < frames_.size(); ++j) {
    const Frame& f = frames_[j];
    if (f.index() != static_cast<int>(j)) {
      throw Error(ErrorCode::MissingFrame, "frame index " + std::to_string(j));
    }
    if (f.width() != frames_[0].width() || f.height() != frames_[0].height()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "frame " + std::to_string(j) + " is " + std::to_string(f.width()) + "x" +
                      std::to_string(f.height()) + ", expected " +
                      std::to_string(frames_[0].width()) + "x" +
                      std::to_string(frames_[0].height()));
    }
  }
}

namespace {

double srgb_to_linear(double c) {
  c /= 255.0;
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3 * delta * delta) + 4.0 / 29.0;
}

struct LabTable {
  double lin[256];
  LabTable() {
    for (int i = 0; i < 256; ++i) lin[i] = srgb_to_linear(i);
  }
};

const LabTable& lab_table() {
  static const LabTable table;
  return table;
}

// Splits "frame_%06d.png" into prefix/suffix around the integer conversion.
std::pair<std::string, std::string> split_pattern(const std::string& pattern) {
  static const std::regex conv(R"(%0?\d*d)");
  std::smatch m;
  if (!std::regex_search(pattern, m, conv)) {
    throw Error(ErrorCode::ConfigError, "frame pattern has no integer conversion: " + pattern);
  }
  return {m.prefix().str(), m.suffix().str()};
}

std::string regex_escape(const std::string& s) {
  static const std::regex special(R"([.^$|()\[\]{}*+?\\])");
  return std::regex_replace(s, special, R"(\$&)");
}

}  // namespace

Lab srgb_to_lab(Rgb c) {
  const auto& t = lab_table();
  const double r = t.lin[c.r], g = t.lin[c.g], b = t.lin[c.b];
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  // D65 reference white, matched to the matrix rows above.
  const double fx = lab_f(x / 0.95047);
  const double fy = lab_f(y / 1.00000);
  const double fz = lab_f(z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

LabFrame to_working_colorspace(const Frame& frame) {
  LabFrame out;
  out.width = frame.width();
  out.height = frame.height();
  const std::size_t n = frame.pixel_count();
  out.L.resize(n);
  out.a.resize(n);
  out.b.resize(n);
  auto px = frame.data();
  for (std::size_t i = 0; i < n; ++i) {
    const Lab lab = srgb_to_lab({px[3 * i], px[3 * i + 1], px[3 * i + 2]});
    out.L[i] = static_cast<float>(lab.L);
    out.a[i] = static_cast<float>(lab.a);
    out.b[i] = static_cast<float>(lab.b);
  }
  return out;
}

std::string frame_filename(const std::string& pattern, int j) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern.c_str(), j);
  return buf;
}

Frame read_png(const fs::path& path, int index) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error(ErrorCode::IoError, "cannot decode " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  std::vector<std::uint8_t> buf(rgb.total() * 3);
  for (int y = 0; y < rgb.rows; ++y) {
    std::copy_n(rgb.ptr<std::uint8_t>(y), rgb.cols * 3, buf.data() + 3 * std::size_t(y) * rgb.cols);
  }
  return Frame(rgb.cols, rgb.rows, index, std::move(buf));
}

void write_png(const fs::path& path, const Frame& frame) {
  cv::Mat rgb(frame.height(), frame.width(), CV_8UC3,
              const_cast<std::uint8_t*>(frame.data().data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) {
    throw Error(ErrorCode::IoError, "cannot write " + path.string());
  }
}

FrameSequence load_sequence(const fs::path& dir, const std::string& pattern) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, "not a directory: " + dir.string());
  const auto [prefix, suffix] = split_pattern(pattern);
  const std::regex name_re(regex_escape(prefix) + R"((\d+))" + regex_escape(suffix));

  std::map<int, fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    std::smatch m;
    if (std::regex_match(name, m, name_re)) files.emplace(std::stoi(m[1].str()), entry.path());
  }
  if (files.empty()) throw Error(ErrorCode::EmptySequence, "no frames matching " + pattern);

  int expected = 0;
  for (const auto& [idx, _] : files) {
    if (idx != expected) throw Error(ErrorCode::MissingFrame, std::to_string(expected));
    ++expected;
  }

  std::vector<Frame> frames;
  frames.reserve(files.size());
  for (const auto& [idx, path] : files) frames.push_back(read_png(path, idx));
  return FrameSequence(std::move(frames), dir.filename().string());
}

void save_sequence(const fs::path& dir, const FrameSequence& seq, const std::string& pattern) {
  fs::create_directories(dir);
  for (const Frame& f : seq.frames()) write_png(dir / frame_filename(pattern, f.index()), f);
}

void write_sequence_manifest(const fs::path& path, const FrameSequence& seq,
                             std::optional<double> fps) {
  nlohmann::json j{{"width", seq.width()}, {"height", seq.height()}, {"count", seq.count()}};
  if (fps) j["fps"] = *fps;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << '\n';
}

SequenceManifest read_sequence_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const auto j = nlohmann::json::parse(in);
  SequenceManifest m;
  m.width = j.at("width").get<int>();
  m.height = j.at("height").get<int>();
  m.count = j.at("count").get<int>();
  if (j.contains("fps")) m.fps = j["fps"].get<double>();
  return m;
}

}  // namespace geovid
