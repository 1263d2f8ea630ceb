#include "geovid/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numbers>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "geovid/error.hpp"

namespace geovid {

namespace fs = std::filesystem;

DisjointSet::DisjointSet(std::size_t n) : parent_(n), size_(n, 1) {
  for (std::size_t i = 0; i < n; ++i) parent_[i] = static_cast<std::uint32_t>(i);
}

std::uint32_t DisjointSet::find(std::uint32_t x) {
  while (parent_[x] != x) {
    parent_[x] = parent_[parent_[x]];
    x = parent_[x];
  }
  return x;
}

std::uint32_t DisjointSet::unite(std::uint32_t a, std::uint32_t b) {
  a = find(a);
  b = find(b);
  if (a == b) return a;
  if (size_[a] < size_[b] || (size_[a] == size_[b] && b < a)) std::swap(a, b);
  parent_[b] = a;
  size_[a] += size_[b];
  return a;
}

namespace {

struct Edge {
  float w;
  std::uint32_t a;  // a < b
  std::uint32_t b;
};

void sort_edges(std::vector<Edge>& edges) {
  std::sort(edges.begin(), edges.end(), [](const Edge& l, const Edge& r) {
    if (l.w != r.w) return l.w < r.w;
    if (l.a != r.a) return l.a < r.a;
    return l.b < r.b;
  });
}

Edge make_edge(float w, std::size_t p, std::size_t q) {
  return p < q ? Edge{w, std::uint32_t(p), std::uint32_t(q)}
               : Edge{w, std::uint32_t(q), std::uint32_t(p)};
}

int lab_bin(double value, double lo, double hi) {
  const int bin = static_cast<int>(std::floor((value - lo) / (hi - lo) * RegionDescriptor::kLabBins));
  return std::clamp(bin, 0, RegionDescriptor::kLabBins - 1);
}

// Motion below this magnitude (px/frame) is treated as static for descriptors.
constexpr double kStaticFlow = 0.5;

int orientation_bin(double u, double v, int bins) {
  double angle = std::atan2(v, u);
  if (angle < 0) angle += 2 * std::numbers::pi;
  const int bin = static_cast<int>(angle / (2 * std::numbers::pi) * bins);
  return std::min(bin, bins - 1);
}

struct VoxelGraph {
  std::vector<Edge> segmentation;  // spatial + flow-displaced temporal
  std::vector<Edge> adjacency;     // 26-adjacent edges incl. straight temporal
};

VoxelGraph build_voxel_graph(const FrameSequence& seq, std::span<const FlowField> flows,
                             const std::vector<LabFrame>& lab) {
  const int w = seq.width(), h = seq.height(), T = seq.count();
  const std::size_t area = std::size_t(w) * h;
  auto dist = [&](int t0, std::size_t i0, int t1, std::size_t i1) {
    const auto& A = lab[t0];
    const auto& B = lab[t1];
    const float dl = A.L[i0] - B.L[i1], da = A.a[i0] - B.a[i1], db = A.b[i0] - B.b[i1];
    return std::sqrt(dl * dl + da * da + db * db);
  };
  VoxelGraph g;
  g.segmentation.reserve(area * T * 3);
  g.adjacency.reserve(area * T * 4);
  for (int t = 0; t < T; ++t) {
    const std::size_t base = t * area;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = std::size_t(y) * w + x;
        if (x + 1 < w) {
          const Edge e = make_edge(dist(t, i, t, i + 1), base + i, base + i + 1);
          g.segmentation.push_back(e);
          g.adjacency.push_back(e);
        }
        if (y + 1 < h) {
          const Edge e = make_edge(dist(t, i, t, i + w), base + i, base + i + w);
          g.segmentation.push_back(e);
          g.adjacency.push_back(e);
        }
        if (t + 1 < T) {
          const int dx = static_cast<int>(std::lround(flows[t].u[i]));
          const int dy = static_cast<int>(std::lround(flows[t].v[i]));
          const int nx = x + dx, ny = y + dy;
          if (nx >= 0 && nx < w && ny >= 0 && ny < h) {
            const std::size_t j = std::size_t(ny) * w + nx;
            const Edge e = make_edge(dist(t, i, t + 1, j), base + i, base + area + j);
            g.segmentation.push_back(e);
            if (std::abs(dx) <= 1 && std::abs(dy) <= 1) g.adjacency.push_back(e);
          }
          if (dx != 0 || dy != 0) {
            g.adjacency.push_back(make_edge(dist(t, i, t + 1, i), base + i, base + area + i));
          }
        }
      }
    }
  }
  sort_edges(g.segmentation);
  sort_edges(g.adjacency);
  return g;
}

// Splits every label into its 26-connected components.
std::vector<std::uint32_t> split_components(const std::vector<std::uint32_t>& labels, int w, int h,
                                            int T) {
  const std::size_t area = std::size_t(w) * h;
  constexpr std::uint32_t kUnset = ~0u;
  std::vector<std::uint32_t> out(labels.size(), kUnset);
  std::uint32_t next = 0;
  std::deque<std::size_t> queue;
  for (std::size_t seed = 0; seed < labels.size(); ++seed) {
    if (out[seed] != kUnset) continue;
    out[seed] = next;
    queue.push_back(seed);
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      const int t = static_cast<int>(v / area);
      const int y = static_cast<int>((v % area) / w);
      const int x = static_cast<int>(v % w);
      for (int dt = -1; dt <= 1; ++dt) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nt = t + dt, ny = y + dy, nx = x + dx;
            if (nt < 0 || nt >= T || ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const std::size_t n = nt * area + std::size_t(ny) * w + nx;
            if (out[n] == kUnset && labels[n] == labels[v]) {
              out[n] = next;
              queue.push_back(n);
            }
          }
        }
      }
    }
    ++next;
  }
  return out;
}

// Dense ids in order of first appearance in voxel order.
std::uint32_t relabel_dense(std::vector<std::uint32_t>& labels) {
  std::vector<std::uint32_t> remap(labels.size(), ~0u);
  std::uint32_t next = 0;
  for (auto& l : labels) {
    if (remap[l] == ~0u) remap[l] = next++;
    l = remap[l];
  }
  return next;
}

}  // namespace

Oversegmentation oversegment(const FrameSequence& seq, std::span<const FlowField> flows,
                             const SegParams& params) {
  if (seq.frames().empty()) throw Error(ErrorCode::EmptySequence, "cannot segment empty sequence");
  if (static_cast<int>(flows.size()) != seq.count() - 1) {
    throw Error(ErrorCode::DimensionMismatch, "need one flow per consecutive frame pair");
  }
  const int w = seq.width(), h = seq.height(), T = seq.count();
  const std::size_t n = std::size_t(w) * h * T;

  std::vector<LabFrame> lab;
  lab.reserve(T);
  for (const Frame& f : seq.frames()) lab.push_back(to_working_colorspace(f));
  const VoxelGraph graph = build_voxel_graph(seq, flows, lab);

  // Felzenszwalb merge with tau(C) = k / |C|.
  DisjointSet ds(n);
  std::vector<float> threshold(n, static_cast<float>(params.k));
  for (const Edge& e : graph.segmentation) {
    const std::uint32_t a = ds.find(e.a), b = ds.find(e.b);
    if (a == b || e.w > threshold[a] || e.w > threshold[b]) continue;
    const std::uint32_t root = ds.unite(a, b);
    threshold[root] = e.w + static_cast<float>(params.k / ds.size(root));
  }
  std::vector<std::uint32_t> labels(n);
  for (std::size_t v = 0; v < n; ++v) labels[v] = ds.find(static_cast<std::uint32_t>(v));

  // Displaced temporal edges may join non-adjacent voxels; restore 26-connectivity.
  labels = split_components(labels, w, h, T);

  // Absorb small components into the neighbour across their cheapest edge.
  DisjointSet merge(n);
  {
    std::vector<std::uint32_t> first(n, ~0u);
    for (std::size_t v = 0; v < n; ++v) {
      if (first[labels[v]] == ~0u) first[labels[v]] = static_cast<std::uint32_t>(v);
      else merge.unite(first[labels[v]], static_cast<std::uint32_t>(v));
    }
  }
  const auto min_size = static_cast<std::uint32_t>(std::max(params.min_size, 1));
  for (const Edge& e : graph.adjacency) {
    const std::uint32_t a = merge.find(e.a), b = merge.find(e.b);
    if (a != b && (merge.size(a) < min_size || merge.size(b) < min_size)) merge.unite(a, b);
  }
  for (std::size_t v = 0; v < n; ++v) labels[v] = merge.find(static_cast<std::uint32_t>(v));

  Oversegmentation out;
  out.width = w;
  out.height = h;
  out.frames = T;
  out.num_supervoxels = relabel_dense(labels);
  out.labels = std::move(labels);
  return out;
}

void DescriptorCounts::add(const DescriptorCounts& o) {
  for (std::size_t i = 0; i < lab.size(); ++i) lab[i] += o.lab[i];
  for (std::size_t i = 0; i < flow.size(); ++i) flow[i] += o.flow[i];
  voxels += o.voxels;
}

RegionDescriptor DescriptorCounts::normalized() const {
  RegionDescriptor d;
  double lab_sum = 0, flow_sum = 0;
  for (double c : lab) lab_sum += c;
  for (double c : flow) flow_sum += c;
  for (std::size_t i = 0; i < lab.size(); ++i) d.lab_histogram[i] = lab_sum > 0 ? lab[i] / lab_sum : 0;
  for (std::size_t i = 0; i < flow.size(); ++i) {
    d.flow_histogram[i] = flow_sum > 0 ? flow[i] / flow_sum : 1.0 / RegionDescriptor::kFlowBins;
  }
  return d;
}

double chi_square_distance(const RegionDescriptor& a, const RegionDescriptor& b) {
  constexpr double eps = 1e-10;
  double d = 0;
  for (std::size_t i = 0; i < a.lab_histogram.size(); ++i) {
    const double diff = a.lab_histogram[i] - b.lab_histogram[i];
    d += diff * diff / (a.lab_histogram[i] + b.lab_histogram[i] + eps);
  }
  for (std::size_t i = 0; i < a.flow_histogram.size(); ++i) {
    const double diff = a.flow_histogram[i] - b.flow_histogram[i];
    d += diff * diff / (a.flow_histogram[i] + b.flow_histogram[i] + eps);
  }
  return 0.5 * d;
}

std::vector<DescriptorCounts> region_descriptor_counts(const Oversegmentation& base,
                                                       const FrameSequence& seq,
                                                       std::span<const FlowField> flows) {
  std::vector<DescriptorCounts> counts(base.num_supervoxels);
  constexpr int B = RegionDescriptor::kLabBins;
  constexpr int F = RegionDescriptor::kFlowBins;
  const std::size_t area = base.frame_area();
  for (int t = 0; t < base.frames; ++t) {
    const LabFrame lab = to_working_colorspace(seq[t]);
    const auto ids = base.frame_labels(t);
    for (std::size_t i = 0; i < area; ++i) {
      DescriptorCounts& c = counts[ids[i]];
      c.lab[lab_bin(lab.L[i], 0, 100)] += 1;
      c.lab[B + lab_bin(lab.a[i], -110, 110)] += 1;
      c.lab[2 * B + lab_bin(lab.b[i], -110, 110)] += 1;
      c.voxels += 1;
      if (t < static_cast<int>(flows.size())) {
        const double u = flows[t].u[i], v = flows[t].v[i];
        if (std::hypot(u, v) > kStaticFlow) {
          c.flow[orientation_bin(u, v, F)] += 1;
        } else {
          for (auto& bin : c.flow) bin += 1.0 / F;
        }
      }
    }
  }
  return counts;
}

SegmentationHierarchy::SegmentationHierarchy(Oversegmentation base,
                                             std::vector<std::vector<RegionId>> parents,
                                             std::vector<double> level_fractions, int height)
    : base_(std::move(base)),
      parents_(std::move(parents)),
      level_fractions_(std::move(level_fractions)),
      height_(height) {
  if (parents_.size() != level_fractions_.size()) {
    throw Error(ErrorCode::FormatError, "one parent map per level fraction required");
  }
  std::vector<RegionId> current(base_.num_supervoxels);
  for (RegionId i = 0; i < base_.num_supervoxels; ++i) current[i] = i;
  svx_to_region_.push_back(current);
  std::size_t prev_count = base_.num_supervoxels;
  for (const auto& parent : parents_) {
    if (parent.size() != prev_count) {
      throw Error(ErrorCode::FormatError, "parent map size does not match child level");
    }
    for (auto& r : current) r = parent[r];
    svx_to_region_.push_back(current);
    prev_count = parent.empty() ? 0 : *std::max_element(parent.begin(), parent.end()) + 1;
  }
}

std::uint32_t SegmentationHierarchy::region_count(int level) const {
  if (level == 0) return base_.num_supervoxels;
  const auto& p = parents_.at(level - 1);
  return p.empty() ? 0 : *std::max_element(p.begin(), p.end()) + 1;
}

int SegmentationHierarchy::level_for_fraction(double fraction) const {
  for (std::size_t i = 0; i < level_fractions_.size(); ++i) {
    if (std::abs(level_fractions_[i] - fraction) < 1e-9) return static_cast<int>(i) + 1;
  }
  return -1;
}

SegmentationHierarchy build_hierarchy(const Oversegmentation& base, const FrameSequence& seq,
                                      std::span<const FlowField> flows,
                                      const std::vector<double>& level_fractions,
                                      const SegParams& params) {
  for (std::size_t i = 0; i < level_fractions.size(); ++i) {
    const double f = level_fractions[i];
    if (!(f > 0.0 && f <= 1.0) || (i > 0 && !(f > level_fractions[i - 1]))) {
      throw Error(ErrorCode::BadFractions, "level fractions must be strictly increasing in (0,1]");
    }
  }

  // Supervoxel adjacency, shared by every region-graph round.
  std::vector<std::pair<RegionId, RegionId>> adjacency;
  {
    const int w = base.width, h = base.height, T = base.frames;
    auto link = [&](std::size_t p, std::size_t q) {
      const RegionId a = base.labels[p], b = base.labels[q];
      if (a != b) adjacency.emplace_back(std::min(a, b), std::max(a, b));
    };
    for (int t = 0; t < T; ++t) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t v = base.voxel(x, y, t);
          if (x + 1 < w) link(v, v + 1);
          if (y + 1 < h) link(v, v + w);
          if (t + 1 < T) link(v, v + base.frame_area());
        }
      }
    }
    std::sort(adjacency.begin(), adjacency.end());
    adjacency.erase(std::unique(adjacency.begin(), adjacency.end()), adjacency.end());
  }

  std::vector<DescriptorCounts> counts = region_descriptor_counts(base, seq, flows);
  std::vector<double> svx_per_region(base.num_supervoxels, 1.0);
  std::vector<double> internal(base.num_supervoxels, 0.0);
  std::vector<RegionId> current(base.num_supervoxels);  // supervoxel -> current region
  for (RegionId i = 0; i < base.num_supervoxels; ++i) current[i] = i;

  std::vector<std::vector<RegionId>> rounds;  // rounds[r]: round-r regions -> round-(r+1)
  std::uint32_t regions = base.num_supervoxels;
  double k = params.region_k;
  while (regions > 1) {
    const bool force = static_cast<int>(rounds.size()) + 1 >= params.max_iterations;
    std::vector<RegionDescriptor> desc(regions);
    for (RegionId r = 0; r < regions; ++r) desc[r] = counts[r].normalized();

    std::vector<std::pair<RegionId, RegionId>> pairs;
    pairs.reserve(adjacency.size());
    for (const auto& [a, b] : adjacency) {
      const RegionId ra = current[a], rb = current[b];
      if (ra != rb) pairs.emplace_back(std::min(ra, rb), std::max(ra, rb));
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    std::vector<Edge> edges;
    edges.reserve(pairs.size());
    for (const auto& [a, b] : pairs) {
      edges.push_back({static_cast<float>(chi_square_distance(desc[a], desc[b])), a, b});
    }
    sort_edges(edges);

    DisjointSet ds(regions);
    std::vector<double> size = svx_per_region;
    std::vector<double> inner = internal;
    for (const Edge& e : edges) {
      const RegionId a = ds.find(e.a), b = ds.find(e.b);
      if (a == b) continue;
      if (!force && (e.w > inner[a] + k / size[a] || e.w > inner[b] + k / size[b])) continue;
      const RegionId root = ds.unite(a, b);
      size[root] = size[a] + size[b];
      inner[root] = std::max({inner[a], inner[b], static_cast<double>(e.w)});
    }

    std::vector<RegionId> parent(regions);
    std::vector<RegionId> root_id(regions, ~0u);
    RegionId next = 0;
    for (RegionId r = 0; r < regions; ++r) {
      const RegionId root = ds.find(r);
      if (root_id[root] == ~0u) root_id[root] = next++;
      parent[r] = root_id[root];
    }
    std::vector<DescriptorCounts> merged(next);
    std::vector<double> merged_size(next, 0.0), merged_inner(next, 0.0);
    for (RegionId r = 0; r < regions; ++r) {
      merged[parent[r]].add(counts[r]);
      merged_size[parent[r]] += svx_per_region[r];
      merged_inner[parent[r]] = std::max(merged_inner[parent[r]], inner[ds.find(r)]);
    }
    counts = std::move(merged);
    svx_per_region = std::move(merged_size);
    internal = std::move(merged_inner);
    for (auto& c : current) c = parent[c];
    rounds.push_back(std::move(parent));
    regions = next;
    k *= 2;
  }

  const int height = static_cast<int>(rounds.size());
  std::vector<std::vector<RegionId>> parents;
  int prev_round = 0;
  std::uint32_t prev_count = base.num_supervoxels;
  for (double f : level_fractions) {
    const int target = std::clamp(static_cast<int>(std::lround(f * height)), 0, height);
    std::vector<RegionId> map(prev_count);
    for (RegionId r = 0; r < prev_count; ++r) map[r] = r;
    for (int rr = prev_round; rr < target; ++rr) {
      for (auto& m : map) m = rounds[rr][m];
    }
    prev_count = map.empty() ? 0 : *std::max_element(map.begin(), map.end()) + 1;
    parents.push_back(std::move(map));
    prev_round = target;
  }
  return SegmentationHierarchy(base, std::move(parents), level_fractions, height);
}

std::vector<SegmentSlice> frame_slices(const SegmentationHierarchy& h, int level, int j) {
  const Oversegmentation& base = h.base();
  const auto& map = h.supervoxel_map(level);
  const auto ids = base.frame_labels(j);
  std::vector<std::int32_t> slot(h.region_count(level), -1);
  std::vector<SegmentSlice> slices;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const RegionId r = map[ids[i]];
    if (slot[r] < 0) {
      slot[r] = static_cast<std::int32_t>(slices.size());
      slices.push_back({r, {}});
    }
    slices[slot[r]].pixels.push_back(static_cast<std::uint32_t>(i));
  }
  std::sort(slices.begin(), slices.end(),
            [](const SegmentSlice& a, const SegmentSlice& b) { return a.region < b.region; });
  return slices;
}

namespace {

cv::Mat id_map_image(std::span<const RegionId> ids, int width, int height) {
  cv::Mat bgr(height, width, CV_8UC3);
  for (int y = 0; y < height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < width; ++x) {
      const RegionId id = ids[std::size_t(y) * width + x];
      if (id > 0xFFFFFFu) throw Error(ErrorCode::FormatError, "region id exceeds 24 bits");
      row[x] = cv::Vec3b(id & 0xFF, (id >> 8) & 0xFF, (id >> 16) & 0xFF);
    }
  }
  return bgr;
}

}  // namespace

void write_id_map_png(const fs::path& path, std::span<const RegionId> ids, int width, int height) {
  const cv::Mat bgr = id_map_image(ids, width, height);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

std::vector<std::uint8_t> encode_id_map_png(std::span<const RegionId> ids, int width, int height) {
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", id_map_image(ids, width, height), out)) {
    throw Error(ErrorCode::IoError, "cannot encode id map");
  }
  return out;
}

std::vector<RegionId> read_id_map_png(const fs::path& path, int* width, int* height) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error(ErrorCode::IoError, "cannot decode " + path.string());
  std::vector<RegionId> ids(bgr.total());
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      ids[std::size_t(y) * bgr.cols + x] = (RegionId(row[x][2]) << 16) | (RegionId(row[x][1]) << 8) | row[x][0];
    }
  }
  if (width) *width = bgr.cols;
  if (height) *height = bgr.rows;
  return ids;
}

void save_hierarchy(const fs::path& dir, const SegmentationHierarchy& h) {
  const Oversegmentation& base = h.base();
  for (int t = 0; t < base.frames; ++t) {
    write_id_map_png(dir / "seg" / "L0" / frame_filename("frame_%06d.png", t), base.frame_labels(t),
                     base.width, base.height);
  }
  nlohmann::json j;
  j["width"] = base.width;
  j["height"] = base.height;
  j["frames"] = base.frames;
  j["num_supervoxels"] = base.num_supervoxels;
  j["hierarchy_height"] = h.height();
  j["level_fractions"] = h.level_fractions();
  j["parents"] = h.parents();
  std::ofstream(dir / "hierarchy.json") << j.dump() << '\n';
}

SegmentationHierarchy load_hierarchy(const fs::path& dir) {
  std::ifstream in(dir / "hierarchy.json");
  if (!in) throw Error(ErrorCode::MissingDependency, "no hierarchy.json in " + dir.string());
  const auto j = nlohmann::json::parse(in);
  Oversegmentation base;
  base.width = j.at("width").get<int>();
  base.height = j.at("height").get<int>();
  base.frames = j.at("frames").get<int>();
  base.num_supervoxels = j.at("num_supervoxels").get<std::uint32_t>();
  base.labels.reserve(base.frame_area() * base.frames);
  for (int t = 0; t < base.frames; ++t) {
    int w = 0, hh = 0;
    auto ids = read_id_map_png(dir / "seg" / "L0" / frame_filename("frame_%06d.png", t), &w, &hh);
    if (w != base.width || hh != base.height) {
      throw Error(ErrorCode::DimensionMismatch, "segmentation frame size differs from hierarchy.json");
    }
    base.labels.insert(base.labels.end(), ids.begin(), ids.end());
  }
  return SegmentationHierarchy(std::move(base),
                               j.at("parents").get<std::vector<std::vector<RegionId>>>(),
                               j.at("level_fractions").get<std::vector<double>>(),
                               j.at("hierarchy_height").get<int>());
}

}  // namespace geovid
