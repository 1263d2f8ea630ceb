#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace geovid {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// One decoded video frame, interleaved 8-bit RGB in row-major order.
class Frame {
 public:
  Frame() = default;
  Frame(int width, int height, int index);
  Frame(int width, int height, int index, std::vector<std::uint8_t> rgb);

  int width() const { return width_; }
  int height() const { return height_; }
  int index() const { return index_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  Rgb at(int x, int y) const {
    const std::size_t o = 3 * (static_cast<std::size_t>(y) * width_ + x);
    return {rgb_[o], rgb_[o + 1], rgb_[o + 2]};
  }
  void set(int x, int y, Rgb c) {
    const std::size_t o = 3 * (static_cast<std::size_t>(y) * width_ + x);
    rgb_[o] = c.r;
    rgb_[o + 1] = c.g;
    rgb_[o + 2] = c.b;
  }

  std::span<const std::uint8_t> data() const { return rgb_; }
  std::span<std::uint8_t> data() { return rgb_; }

  friend bool operator==(const Frame&, const Frame&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int index_ = 0;
  std::vector<std::uint8_t> rgb_;
};

/// Ordered, dense, equally sized frames. Immutable once built.
class FrameSequence {
 public:
  FrameSequence() = default;
  /// Validates the invariants: non-empty, equal dimensions, dense 0-based indices.
  FrameSequence(std::vector<Frame> frames, std::string source_id);

  int width() const { return frames_.front().width(); }
  int height() const { return frames_.front().height(); }
  int count() const { return static_cast<int>(frames_.size()); }
  const std::string& source_id() const { return source_id_; }

  const Frame& operator[](int j) const { return frames_[static_cast<std::size_t>(j)]; }
  const std::vector<Frame>& frames() const { return frames_; }

 private:
  std::vector<Frame> frames_;
  std::string source_id_;
};

/// Per-pixel CIELAB (D65), planar float32.
struct LabFrame {
  int width = 0;
  int height = 0;
  std::vector<float> L;
  std::vector<float> a;
  std::vector<float> b;
};

struct Lab {
  double L = 0;
  double a = 0;
  double b = 0;
};

/// Standard sRGB (gamma-companded, D65) to CIELAB.
Lab srgb_to_lab(Rgb c);
LabFrame to_working_colorspace(const Frame& frame);

/// Loads `<dir>/<prefix>NNNNNN.png`-style files. `pattern` is a printf-like
/// name with exactly one integer conversion, e.g. "frame_%06d.png".
FrameSequence load_sequence(const std::filesystem::path& dir,
                            const std::string& pattern = "frame_%06d.png");

Frame read_png(const std::filesystem::path& path, int index = 0);
void write_png(const std::filesystem::path& path, const Frame& frame);
void save_sequence(const std::filesystem::path& dir, const FrameSequence& seq,
                   const std::string& pattern = "frame_%06d.png");

struct SequenceManifest {
  int width = 0;
  int height = 0;
  int count = 0;
  std::optional<double> fps;
};
void write_sequence_manifest(const std::filesystem::path& path, const FrameSequence& seq,
                             std::optional<double> fps = std::nullopt);
SequenceManifest read_sequence_manifest(const std::filesystem::path& path);

/// Expands a printf-style frame pattern for index j.
std::string frame_filename(const std::string& pattern, int j);

}  // namespace geovid
