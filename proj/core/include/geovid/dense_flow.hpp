#pragma once

#include <filesystem>
#include <vector>

#include "geovid/frame_store.hpp"

namespace geovid {

/// Dense displacement field a -> b in pixels per frame, planar float32.
struct FlowField {
  int width = 0;
  int height = 0;
  int from_index = 0;
  int to_index = 0;
  std::vector<float> u;
  std::vector<float> v;

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  static FlowField zeros(int width, int height, int from_index = 0, int to_index = 0);
};

/// Sobel partials of a flow field. Responses are normalized so a unit ramp
/// yields a unit derivative for every kernel size.
struct FlowDifferential {
  int width = 0;
  int height = 0;
  int kernel_size = 3;
  std::vector<float> dxu, dxv, dyu, dyv;
};

/// Polynomial-expansion (Farneback) parameters.
struct FlowParams {
  int pyramid_levels = 3;  // including the full-resolution level
  double pyramid_scale = 0.5;
  int window = 15;
  int iterations = 3;
  int poly_n = 5;
  double poly_sigma = 1.1;
};

/// Flow is computed on luminance. Textureless areas resolve to zero motion.
FlowField estimate_flow(const Frame& a, const Frame& b, const FlowParams& params = {});

FlowDifferential flow_differentials(const FlowField& flow, int kernel_size);

/// Elementwise negation (used to turn j -> j-d flow into motion arriving at j).
FlowField negated(const FlowField& flow);

/// Cache format: u32 width, u32 height, then u plane, then v plane; all little-endian.
void write_flow(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flow(const std::filesystem::path& path, int from_index, int to_index);

}  // namespace geovid
