#include "geovid/annotation.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "geovid/error.hpp"

namespace geovid {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, kNumLabels> kNames = {"sky",    "ground", "vertical", "solid",
                                                             "porous", "object", "mix"};

GeoLabel majority_or_mix(const std::array<std::uint64_t, kNumLabels>& volume) {
  std::uint64_t total = 0;
  for (auto v : volume) total += v;
  for (int l = 0; l < kNumLabels; ++l) {
    // Strictly more than 95%: v/total > 0.95  <=>  100 v > 95 total.
    if (total > 0 && volume[l] * 100 > total * 95) return static_cast<GeoLabel>(l);
  }
  return GeoLabel::Mix;
}

}  // namespace

int main_index(GeoLabel l) {
  switch (l) {
    case GeoLabel::Sky: return 0;
    case GeoLabel::Ground: return 1;
    case GeoLabel::Vertical: return 2;
    default: return -1;
  }
}

int subvertical_index(GeoLabel l) {
  switch (l) {
    case GeoLabel::Solid: return 0;
    case GeoLabel::Porous: return 1;
    case GeoLabel::Object: return 2;
    default: return -1;
  }
}

std::string_view to_string(GeoLabel l) { return kNames[static_cast<std::size_t>(l)]; }

std::optional<GeoLabel> parse_label(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<GeoLabel>(i);
  }
  return std::nullopt;
}

std::vector<std::uint64_t> supervoxel_volumes(const Oversegmentation& base) {
  std::vector<std::uint64_t> vol(base.num_supervoxels, 0);
  for (RegionId id : base.labels) ++vol[id];
  return vol;
}

LevelLabels propagate_labels(const SegmentationHierarchy& h, const GroundTruth& gt) {
  const auto& base = h.base();
  std::vector<GeoLabel> level0(base.num_supervoxels);
  for (RegionId s = 0; s < base.num_supervoxels; ++s) {
    const auto it = gt.level0.find(s);
    if (it == gt.level0.end()) throw Error(ErrorCode::UnlabeledSupervoxel, std::to_string(s));
    level0[s] = it->second;
  }
  const auto volumes = supervoxel_volumes(base);

  LevelLabels out;
  out.push_back(level0);
  for (int level = 1; level < h.num_levels(); ++level) {
    const auto& map = h.supervoxel_map(level);
    std::vector<std::array<std::uint64_t, kNumLabels>> votes(h.region_count(level));
    for (auto& v : votes) v.fill(0);
    for (RegionId s = 0; s < base.num_supervoxels; ++s) {
      votes[map[s]][static_cast<std::size_t>(level0[s])] += volumes[s];
    }
    std::vector<GeoLabel> labels(votes.size());
    for (std::size_t r = 0; r < votes.size(); ++r) labels[r] = majority_or_mix(votes[r]);
    out.push_back(std::move(labels));
  }
  return out;
}

GroundTruth annotate_from_pixels(const Oversegmentation& base, const std::vector<GeoLabel>& pixel_labels,
                                 std::string video_id) {
  if (pixel_labels.size() != base.labels.size()) {
    throw Error(ErrorCode::DimensionMismatch, "pixel label volume does not match segmentation");
  }
  std::vector<std::array<std::uint64_t, kNumLabels>> votes(base.num_supervoxels);
  for (auto& v : votes) v.fill(0);
  for (std::size_t i = 0; i < base.labels.size(); ++i) {
    ++votes[base.labels[i]][static_cast<std::size_t>(pixel_labels[i])];
  }
  GroundTruth gt{std::move(video_id), {}};
  for (RegionId s = 0; s < base.num_supervoxels; ++s) gt.level0[s] = majority_or_mix(votes[s]);
  return gt;
}

ClassStatistics class_statistics(const std::vector<LabeledVideo>& videos) {
  ClassStatistics st;
  for (GeoLabel l : {GeoLabel::Sky, GeoLabel::Ground, GeoLabel::Vertical, GeoLabel::Mix}) {
    st.main_segments[l] = 0;
    st.main_area[l] = 0;
  }
  for (GeoLabel l : kSubVerticalClasses) {
    st.sub_segments[l] = 0;
    st.sub_area[l] = 0;
  }
  double total_area = 0, sub_count = 0, sub_total_area = 0;
  for (const auto& v : videos) {
    for (const auto& [svx, label] : v.gt.level0) {
      const double area = static_cast<double>(v.volumes.at(svx));
      const GeoLabel m = main_label(label);
      st.main_segments[m] += 1;
      st.main_area[m] += area;
      total_area += area;
      ++st.total_segments;
      if (is_subvertical(label)) {
        st.sub_segments[label] += 1;
        st.sub_area[label] += area;
        sub_count += 1;
        sub_total_area += area;
      }
    }
  }
  const double n = static_cast<double>(st.total_segments);
  for (auto& [l, x] : st.main_segments) x = n > 0 ? x / n : 0;
  for (auto& [l, x] : st.main_area) x = total_area > 0 ? x / total_area : 0;
  for (auto& [l, x] : st.sub_segments) x = sub_count > 0 ? x / sub_count : 0;
  for (auto& [l, x] : st.sub_area) x = sub_total_area > 0 ? x / sub_total_area : 0;
  return st;
}

std::string render_class_statistics(const ClassStatistics& st) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  auto title = [](GeoLabel l) {
    std::string s(to_string(l));
    s[0] = static_cast<char>(std::toupper(s[0]));
    return s;
  };
  os << "Main classes      segments    area\n";
  for (GeoLabel l : {GeoLabel::Sky, GeoLabel::Ground, GeoLabel::Vertical, GeoLabel::Mix}) {
    os << std::left << std::setw(16) << title(l) << std::right << std::setw(9)
       << 100.0 * st.main_segments.at(l) << "%" << std::setw(8) << 100.0 * st.main_area.at(l) << "%\n";
  }
  os << "Sub-vertical      segments    area\n";
  for (GeoLabel l : kSubVerticalClasses) {
    os << std::left << std::setw(16) << title(l) << std::right << std::setw(9)
       << 100.0 * st.sub_segments.at(l) << "%" << std::setw(8) << 100.0 * st.sub_area.at(l) << "%\n";
  }
  return os.str();
}

void write_ground_truth(const fs::path& path, const GroundTruth& gt) {
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& [svx, label] : gt.level0) labels[std::to_string(svx)] = to_string(label);
  const nlohmann::json j{{"video_id", gt.video_id}, {"labels", labels}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // Write-then-rename keeps the file intact if the process dies mid-write.
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << j.dump(1) << '\n';
  }
  fs::rename(tmp, path);
}

GroundTruth read_ground_truth(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
  GroundTruth gt;
  gt.video_id = j.value("video_id", "");
  for (const auto& [key, value] : j.at("labels").items()) {
    const auto label = parse_label(value.get<std::string>());
    if (!label) throw Error(ErrorCode::FormatError, "unknown label " + value.dump());
    gt.level0[static_cast<RegionId>(std::stoul(key))] = *label;
  }
  return gt;
}

AnnotationSession::AnnotationSession(SegmentationHierarchy hierarchy, fs::path labels_path,
                                     std::string video_id)
    : hierarchy_(std::move(hierarchy)), labels_path_(std::move(labels_path)) {
  if (fs::exists(labels_path_)) {
    gt_ = read_ground_truth(labels_path_);
  }
  gt_.video_id = std::move(video_id);
}

LabelUpdateResult AnnotationSession::handle_label_update(RegionId region, int level, GeoLabel label) {
  if (level < 0 || level >= hierarchy_.num_levels() || region >= hierarchy_.region_count(level)) {
    throw Error(ErrorCode::UnknownRegion,
                "region " + std::to_string(region) + " at level " + std::to_string(level));
  }
  if (!is_annotation_label(label)) {
    throw Error(ErrorCode::InvalidLabelForLevel,
                std::string(to_string(label)) + " is not a supervoxel label");
  }
  GroundTruth next = gt_;
  const auto& map = hierarchy_.supervoxel_map(level);
  LabelUpdateResult result;
  for (RegionId s = 0; s < map.size(); ++s) {
    if (map[s] == region) {
      next.level0[s] = label;
      ++result.affected_supervoxels;
    }
  }
  write_ground_truth(labels_path_, next);
  gt_ = std::move(next);
  return result;
}

bool AnnotationSession::complete() const {
  return gt_.level0.size() == hierarchy_.base().num_supervoxels;
}

}  // namespace geovid
