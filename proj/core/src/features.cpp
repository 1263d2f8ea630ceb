#include "geovid/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "geovid/error.hpp"

namespace geovid {

namespace fs = std::filesystem;
using namespace layout;

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

inline int angle_bin(double u, double v, int bins) {
  double angle = std::atan2(v, u);
  if (angle < 0) angle += kTwoPi;
  const int bin = static_cast<int>(angle / kTwoPi * bins);
  return std::min(bin, bins - 1);
}

// Offset index to take a block from when `o` itself is unavailable.
std::optional<int> fallback_source(const std::array<bool, 3>& available, int o) {
  if (available[o]) return o;
  std::optional<int> best;
  int best_dist = 0;
  for (int c = 0; c < 3; ++c) {
    if (!available[c]) continue;
    const int dist = std::abs(kOffsets[c] - kOffsets[o]);
    if (!best || dist < best_dist) {
      best = c;
      best_dist = dist;
    }
  }
  return best;
}

void require_nonempty(const SegmentSlice& slice) {
  if (slice.pixels.empty()) throw Error(ErrorCode::EmptySegment, "region " + std::to_string(slice.region));
}

}  // namespace

std::array<double, 16> orientation_histogram(std::span<const float> u, std::span<const float> v,
                                             const SegmentSlice& slice) {
  require_nonempty(slice);
  std::array<double, 16> hist{};
  for (std::uint32_t p : slice.pixels) {
    const double du = u[p], dv = v[p];
    const double mag = std::hypot(du, dv);
    if (mag == 0.0) continue;
    hist[angle_bin(du, dv, kOrientationBins)] += mag;
  }
  const double area = static_cast<double>(slice.area());
  for (auto& b : hist) b /= area;
  return hist;
}

std::array<double, 16> flow_histogram(const FlowField& flow, const SegmentSlice& slice) {
  return orientation_histogram(flow.u, flow.v, slice);
}

double nearest_rank_percentile(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorCode::EmptySegment, "percentile of empty sample");
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + (rank - 1), values.end());
  return values[rank - 1];
}

namespace {

OffsetMotion make_offset_motion(const FlowField& backward) {
  OffsetMotion m;
  m.motion = negated(backward);
  for (int k = 0; k < 3; ++k) m.diffs[k] = flow_differentials(m.motion, kKernelSizes[k]);
  return m;
}

}  // namespace

MotionCache::MotionCache(const FrameSequence& seq, const FlowParams& params) {
  entries_.resize(seq.count());
  for (int j = 0; j < seq.count(); ++j) {
    for (int o = 0; o < 3; ++o) {
      const int prev = j - kOffsets[o];
      if (prev < 0) continue;
      entries_[j][o] = make_offset_motion(estimate_flow(seq[j], seq[prev], params));
    }
  }
}

MotionCache::MotionCache(std::vector<std::array<std::optional<FlowField>, 3>> backward_flows) {
  entries_.resize(backward_flows.size());
  for (std::size_t j = 0; j < backward_flows.size(); ++j) {
    for (int o = 0; o < 3; ++o) {
      if (backward_flows[j][o]) entries_[j][o] = make_offset_motion(*backward_flows[j][o]);
    }
  }
}

const OffsetMotion* MotionCache::get(int frame, int offset_idx) const {
  if (frame < 0 || frame >= frames()) return nullptr;
  const auto& e = entries_[frame][offset_idx];
  return e ? &*e : nullptr;
}

SliceGeometry slice_geometry(const SegmentSlice& slice, int width) {
  require_nonempty(slice);
  std::vector<double> xs, ys;
  xs.reserve(slice.area());
  ys.reserve(slice.area());
  double sx = 0, sy = 0;
  for (std::uint32_t p : slice.pixels) {
    const double x = p % width, y = p / width;
    xs.push_back(x);
    ys.push_back(y);
    sx += x;
    sy += y;
  }
  const double n = static_cast<double>(slice.area());
  SliceGeometry g;
  g.cx = sx / n;
  g.cy = sy / n;
  g.p10x = nearest_rank_percentile(xs, 10);
  g.p90x = nearest_rank_percentile(xs, 90);
  g.p10y = nearest_rank_percentile(ys, 10);
  g.p90y = nearest_rank_percentile(ys, 90);
  return g;
}

MotionContext make_motion_context(const SegmentationHierarchy& h, int level, int j,
                                  const MotionCache& cache, const std::vector<SegmentSlice>& slices_j) {
  MotionContext ctx;
  ctx.width = h.base().width;
  ctx.height = h.base().height;
  for (int o = 0; o < 3; ++o) {
    ctx.offsets[o] = cache.get(j, o);
    if (!ctx.offsets[o]) continue;
    const FlowField& m = ctx.offsets[o]->motion;
    double min_u = 0, min_v = 0;
    bool first = true;
    for (const auto& s : slices_j) {
      double su = 0, sv = 0;
      for (std::uint32_t p : s.pixels) {
        su += m.u[p];
        sv += m.v[p];
      }
      const double mu = su / s.area(), mv = sv / s.area();
      min_u = first ? mu : std::min(min_u, mu);
      min_v = first ? mv : std::min(min_v, mv);
      first = false;
    }
    ctx.min_mean_flow[o] = {min_u, min_v};
    ctx.previous[o].assign(h.region_count(level), std::nullopt);
    for (const auto& s : frame_slices(h, level, j - kOffsets[o])) {
      ctx.previous[o][s.region] = slice_geometry(s, ctx.width);
    }
  }
  return ctx;
}

MotionVector motion_features(const MotionContext& ctx, const SegmentSlice& slice) {
  require_nonempty(slice);
  MotionVector out{};
  const double area = static_cast<double>(slice.area());

  std::array<bool, 3> flow_ok{};
  for (int o = 0; o < 3; ++o) flow_ok[o] = ctx.offsets[o] != nullptr;

  // Flow-derived blocks for every available offset.
  for (int o = 0; o < 3; ++o) {
    if (!flow_ok[o]) continue;
    const OffsetMotion& om = *ctx.offsets[o];
    const auto hist = flow_histogram(om.motion, slice);
    for (int b = 0; b < kOrientationBins; ++b) out[kFlowHist + o * 16 + b] = static_cast<float>(hist[b]);
    for (int k = 0; k < 3; ++k) {
      const FlowDifferential& d = om.diffs[k];
      const auto hx = orientation_histogram(d.dxu, d.dxv, slice);
      const auto hy = orientation_histogram(d.dyu, d.dyv, slice);
      for (int b = 0; b < kOrientationBins; ++b) {
        out[diff_hist_offset(o, k, 0) + b] = static_cast<float>(hx[b]);
        out[diff_hist_offset(o, k, 1) + b] = static_cast<float>(hy[b]);
      }
    }
    double su = 0, sv = 0;
    for (std::uint32_t p : slice.pixels) {
      su += om.motion.u[p];
      sv += om.motion.v[p];
    }
    out[kRelMeanFlow + 2 * o] = static_cast<float>(su / area - ctx.min_mean_flow[o][0]);
    out[kRelMeanFlow + 2 * o + 1] = static_cast<float>(sv / area - ctx.min_mean_flow[o][1]);
  }
  for (int o = 0; o < 3; ++o) {
    if (flow_ok[o]) continue;
    const auto src = fallback_source(flow_ok, o);
    if (!src) continue;
    std::copy_n(&out[kFlowHist + *src * 16], 16, &out[kFlowHist + o * 16]);
    for (int k = 0; k < 3; ++k) {
      std::copy_n(&out[diff_hist_offset(*src, k, 0)], 32, &out[diff_hist_offset(o, k, 0)]);
    }
    out[kRelMeanFlow + 2 * o] = out[kRelMeanFlow + 2 * *src];
    out[kRelMeanFlow + 2 * o + 1] = out[kRelMeanFlow + 2 * *src + 1];
  }

  // Location change of the same region between frame j-d and j.
  const SliceGeometry now = slice_geometry(slice, ctx.width);
  std::array<bool, 3> loc_ok{};
  for (int o = 0; o < 3; ++o) {
    loc_ok[o] = flow_ok[o] && slice.region < ctx.previous[o].size() &&
                ctx.previous[o][slice.region].has_value();
  }
  for (int o = 0; o < 3; ++o) {
    const auto src = fallback_source(loc_ok, o);
    if (!src) continue;
    const SliceGeometry& before = *ctx.previous[*src][slice.region];
    out[kMeanLocChange + 2 * o] = static_cast<float>(now.cx - before.cx);
    out[kMeanLocChange + 2 * o + 1] = static_cast<float>(now.cy - before.cy);
    const int base = kPercentileLocChange + 4 * o;
    out[base + 0] = static_cast<float>(now.p10x - before.p10x);
    out[base + 1] = static_cast<float>(now.p10y - before.p10y);
    out[base + 2] = static_cast<float>(now.p90x - before.p90x);
    out[base + 3] = static_cast<float>(now.p90y - before.p90y);
  }
  // Magnitudes w.r.t. the longest offset (I_{j-5} after fallback).
  const int m = kPercentileLocChange + 4 * 2;
  out[kLocChangeMagnitude + 0] = std::hypot(out[kMeanLocChange + 4], out[kMeanLocChange + 5]);
  out[kLocChangeMagnitude + 1] = std::hypot(out[m + 0], out[m + 1]);
  out[kLocChangeMagnitude + 2] = std::hypot(out[m + 2], out[m + 3]);
  return out;
}

AppearanceVector appearance_features(const SegmentSlice& slice, const Frame& frame, const LabFrame& lab,
                                     std::span<const RegionId> region_ids) {
  require_nonempty(slice);
  AppearanceVector out{};
  const int w = frame.width(), h = frame.height();
  const double n = static_cast<double>(slice.area());
  const auto px = frame.data();

  double rgb[3] = {0, 0, 0}, labm[3] = {0, 0, 0}, hue = 0, sat = 0;
  std::array<double, 30> lab_hist{};
  std::array<double, 12> texture{};
  double sx = 0, sy = 0, persp = 0;
  int x0 = w, y0 = h, x1 = -1, y1 = -1;
  std::vector<double> ys;
  ys.reserve(slice.area());

  auto gray = [&](int x, int y) {
    const std::size_t o = 3 * (std::size_t(y) * w + x);
    return (0.299 * px[o] + 0.587 * px[o + 1] + 0.114 * px[o + 2]) / 255.0;
  };
  auto bin10 = [](double v, double lo, double hi) {
    return std::clamp(static_cast<int>(std::floor((v - lo) / (hi - lo) * 10)), 0, 9);
  };

  for (std::uint32_t p : slice.pixels) {
    const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
    const double r = px[3 * p] / 255.0, g = px[3 * p + 1] / 255.0, b = px[3 * p + 2] / 255.0;
    rgb[0] += r;
    rgb[1] += g;
    rgb[2] += b;
    labm[0] += lab.L[p];
    labm[1] += lab.a[p];
    labm[2] += lab.b[p];

    const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), delta = mx - mn;
    double hh = 0;
    if (delta > 0) {
      if (mx == r) hh = std::fmod((g - b) / delta + 6.0, 6.0);
      else if (mx == g) hh = (b - r) / delta + 2.0;
      else hh = (r - g) / delta + 4.0;
      hh /= 6.0;
    }
    hue += hh;
    sat += mx > 0 ? delta / mx : 0;

    lab_hist[bin10(lab.L[p], 0, 100)] += 1;
    lab_hist[10 + bin10(lab.a[p], -100, 100)] += 1;
    lab_hist[20 + bin10(lab.b[p], -100, 100)] += 1;

    // Central differences that fall back to the centre pixel across region borders.
    const RegionId id = region_ids[p];
    const double c = gray(x, y);
    const double l = (x > 0 && region_ids[p - 1] == id) ? gray(x - 1, y) : c;
    const double rr = (x + 1 < w && region_ids[p + 1] == id) ? gray(x + 1, y) : c;
    const double u = (y > 0 && region_ids[p - w] == id) ? gray(x, y - 1) : c;
    const double d = (y + 1 < h && region_ids[p + w] == id) ? gray(x, y + 1) : c;
    const double gx = 0.5 * (rr - l), gy = 0.5 * (d - u);
    const double mag = std::hypot(gx, gy);
    if (mag > 0) {
      double theta = std::atan2(gy, gx);
      if (theta < 0) theta += std::numbers::pi;
      const int bin = std::min(static_cast<int>(theta / std::numbers::pi * 12), 11);
      texture[bin] += mag;
    }

    const double xn = (x + 0.5) / w, yn = (y + 0.5) / h;
    sx += xn;
    sy += yn;
    persp += std::abs(xn - 0.5);
    ys.push_back(yn);
    x0 = std::min(x0, x);
    y0 = std::min(y0, y);
    x1 = std::max(x1, x);
    y1 = std::max(y1, y);
  }

  for (int i = 0; i < 3; ++i) {
    out[kRgbMean + i] = static_cast<float>(rgb[i] / n);
    out[kLabMean + i] = static_cast<float>(labm[i] / n);
  }
  out[kHueSatMean] = static_cast<float>(hue / n);
  out[kHueSatMean + 1] = static_cast<float>(sat / n);
  for (int i = 0; i < 30; ++i) out[kLabHist + i] = static_cast<float>(lab_hist[i] / n);

  double tex_sum = 0;
  for (double t : texture) tex_sum += t;
  double entropy = 0;
  for (int i = 0; i < 12; ++i) {
    out[kTextureMean + i] = static_cast<float>(texture[i] / n);
    if (tex_sum > 0 && texture[i] > 0) {
      const double q = texture[i] / tex_sum;
      entropy -= q * std::log(q);
    }
  }
  out[kTextureEntropy] = static_cast<float>(entropy);

  out[kCentroid] = static_cast<float>(sx / n);
  out[kCentroid + 1] = static_cast<float>(sy / n);
  out[kBoundingBox + 0] = static_cast<float>(double(x0) / w);
  out[kBoundingBox + 1] = static_cast<float>(double(y0) / h);
  out[kBoundingBox + 2] = static_cast<float>(double(x1 + 1) / w);
  out[kBoundingBox + 3] = static_cast<float>(double(y1 + 1) / h);
  out[kAreaFraction] = static_cast<float>(n / (double(w) * h));
  out[kYPercentiles] = static_cast<float>(nearest_rank_percentile(ys, 10));
  out[kYPercentiles + 1] = static_cast<float>(nearest_rank_percentile(ys, 90));
  out[kPerspective] = static_cast<float>(persp / n);
  return out;
}

VideoFeatures extract_video_features(const FrameSequence& seq, const SegmentationHierarchy& h,
                                     const MotionCache& cache, const std::vector<int>& levels) {
  VideoFeatures out(h.num_levels());
  for (int level : levels) out.at(level).resize(seq.count());
  const auto& base = h.base();
  std::vector<RegionId> ids(base.frame_area());
  for (int j = 0; j < seq.count(); ++j) {
    const LabFrame lab = to_working_colorspace(seq[j]);
    const auto svx = base.frame_labels(j);
    for (int level : levels) {
      const auto& map = h.supervoxel_map(level);
      for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = map[svx[i]];
      const auto slices = frame_slices(h, level, j);
      const MotionContext ctx = make_motion_context(h, level, j, cache, slices);
      auto& records = out[level][j];
      records.reserve(slices.size());
      for (const auto& s : slices) {
        SegmentFeatures rec;
        rec.region = s.region;
        const MotionVector m = motion_features(ctx, s);
        const AppearanceVector a = appearance_features(s, seq[j], lab, ids);
        std::copy(m.begin(), m.end(), rec.x.begin());
        std::copy(a.begin(), a.end(), rec.x.begin() + kAppearance);
        records.push_back(rec);
      }
    }
  }
  return out;
}

void write_feature_file(const fs::path& path, const std::vector<SegmentFeatures>& records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  const auto count = static_cast<std::uint32_t>(records.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& r : records) {
    const std::uint32_t id = r.region;
    out.write(reinterpret_cast<const char*>(&id), 4);
    out.write(reinterpret_cast<const char*>(r.x.data()), sizeof(float) * kFeatureDims);
  }
}

std::vector<SegmentFeatures> read_feature_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  std::vector<SegmentFeatures> records(count);
  for (auto& r : records) {
    std::uint32_t id = 0;
    in.read(reinterpret_cast<char*>(&id), 4);
    r.region = id;
    in.read(reinterpret_cast<char*>(r.x.data()), sizeof(float) * kFeatureDims);
  }
  if (!in) throw Error(ErrorCode::FormatError, "truncated feature file " + path.string());
  return records;
}

}  // namespace geovid
