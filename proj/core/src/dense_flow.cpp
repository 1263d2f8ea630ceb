#include "geovid/dense_flow.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <opencv2/imgproc.hpp>
#include <opencv2/video/tracking.hpp>

#include "geovid/error.hpp"

namespace geovid {

static_assert(std::endian::native == std::endian::little,
              "flow cache I/O assumes a little-endian host");

namespace fs = std::filesystem;

FlowField FlowField::zeros(int width, int height, int from_index, int to_index) {
  FlowField f;
  f.width = width;
  f.height = height;
  f.from_index = from_index;
  f.to_index = to_index;
  f.u.assign(static_cast<std::size_t>(width) * height, 0.f);
  f.v.assign(f.u.size(), 0.f);
  return f;
}

namespace {

cv::Mat luminance(const Frame& f) {
  cv::Mat rgb(f.height(), f.width(), CV_8UC3, const_cast<std::uint8_t*>(f.data().data()));
  cv::Mat gray;
  cv::cvtColor(rgb, gray, cv::COLOR_RGB2GRAY);
  return gray;
}

cv::Mat plane(const std::vector<float>& data, int w, int h) {
  return cv::Mat(h, w, CV_32F, const_cast<float*>(data.data()));
}

std::vector<float> to_vector(const cv::Mat& m) {
  std::vector<float> out(m.total());
  for (int y = 0; y < m.rows; ++y) std::memcpy(out.data() + std::size_t(y) * m.cols, m.ptr<float>(y), m.cols * sizeof(float));
  return out;
}

}  // namespace

FlowField estimate_flow(const Frame& a, const Frame& b, const FlowParams& params) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::DimensionMismatch, "flow frames differ in size");
  }
  // Farneback's border handling leaks spurious motion into the outermost
  // pixels; run on a reflect-padded copy and crop.
  const int pad = std::max(params.window, 8);
  cv::Mat la, lb, flow;
  cv::copyMakeBorder(luminance(a), la, pad, pad, pad, pad, cv::BORDER_REFLECT_101);
  cv::copyMakeBorder(luminance(b), lb, pad, pad, pad, pad, cv::BORDER_REFLECT_101);
  cv::calcOpticalFlowFarneback(la, lb, flow, params.pyramid_scale, std::max(0, params.pyramid_levels - 1),
                               params.window, params.iterations, params.poly_n, params.poly_sigma, 0);
  FlowField out = FlowField::zeros(a.width(), a.height(), a.index(), b.index());
  for (int y = 0; y < a.height(); ++y) {
    const auto* row = flow.ptr<cv::Vec2f>(y + pad) + pad;
    for (int x = 0; x < a.width(); ++x) {
      const std::size_t i = out.index(x, y);
      out.u[i] = std::isfinite(row[x][0]) ? row[x][0] : 0.f;
      out.v[i] = std::isfinite(row[x][1]) ? row[x][1] : 0.f;
    }
  }
  return out;
}

FlowDifferential flow_differentials(const FlowField& flow, int kernel_size) {
  if (kernel_size != 3 && kernel_size != 5 && kernel_size != 7) {
    throw Error(ErrorCode::BadKernelSize, std::to_string(kernel_size));
  }
  // Sobel response to a unit ramp: 8, 128, 2048 for ksize 3, 5, 7 (powers of two,
  // so normalization keeps the operator exactly linear).
  const double scale = kernel_size == 3 ? 1.0 / 8 : kernel_size == 5 ? 1.0 / 128 : 1.0 / 2048;
  const cv::Mat u = plane(flow.u, flow.width, flow.height);
  const cv::Mat v = plane(flow.v, flow.width, flow.height);
  cv::Mat out;
  FlowDifferential d;
  d.width = flow.width;
  d.height = flow.height;
  d.kernel_size = kernel_size;
  cv::Sobel(u, out, CV_32F, 1, 0, kernel_size, scale, 0, cv::BORDER_REPLICATE);
  d.dxu = to_vector(out);
  cv::Sobel(v, out, CV_32F, 1, 0, kernel_size, scale, 0, cv::BORDER_REPLICATE);
  d.dxv = to_vector(out);
  cv::Sobel(u, out, CV_32F, 0, 1, kernel_size, scale, 0, cv::BORDER_REPLICATE);
  d.dyu = to_vector(out);
  cv::Sobel(v, out, CV_32F, 0, 1, kernel_size, scale, 0, cv::BORDER_REPLICATE);
  d.dyv = to_vector(out);
  return d;
}

FlowField negated(const FlowField& flow) {
  FlowField out = flow;
  for (auto& x : out.u) x = -x;
  for (auto& x : out.v) x = -x;
  return out;
}

void write_flow(const fs::path& path, const FlowField& flow) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  const std::uint32_t header[2] = {static_cast<std::uint32_t>(flow.width),
                                   static_cast<std::uint32_t>(flow.height)};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  out.write(reinterpret_cast<const char*>(flow.u.data()), flow.u.size() * sizeof(float));
  out.write(reinterpret_cast<const char*>(flow.v.data()), flow.v.size() * sizeof(float));
}

FlowField read_flow(const fs::path& path, int from_index, int to_index) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::uint32_t header[2];
  in.read(reinterpret_cast<char*>(header), sizeof header);
  FlowField f = FlowField::zeros(static_cast<int>(header[0]), static_cast<int>(header[1]),
                                 from_index, to_index);
  in.read(reinterpret_cast<char*>(f.u.data()), f.u.size() * sizeof(float));
  in.read(reinterpret_cast<char*>(f.v.data()), f.v.size() * sizeof(float));
  if (!in) throw Error(ErrorCode::FormatError, "truncated flow file " + path.string());
  return f;
}

}  // namespace geovid
