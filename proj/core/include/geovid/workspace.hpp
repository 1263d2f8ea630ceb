#pragma once

#include <filesystem>
#include <string>

namespace geovid {

/// On-disk layout of one video's artifacts under a work directory.
struct VideoPaths {
  std::filesystem::path root;

  std::filesystem::path frames() const { return root / "frames"; }
  std::filesystem::path sequence_manifest() const { return root / "sequence.json"; }
  std::filesystem::path flow() const { return root / "flow"; }
  /// save_hierarchy/load_hierarchy directory (seg/ + hierarchy.json).
  std::filesystem::path hierarchy() const { return root; }
  std::filesystem::path hierarchy_manifest() const { return root / "hierarchy.json"; }
  std::filesystem::path features() const { return root / "features"; }
  std::filesystem::path feature_file(int level, int frame) const;
  std::filesystem::path ground_truth() const { return root / "gt.json"; }
  /// Per-pixel label maps (synthetic videos only).
  std::filesystem::path pixel_labels() const { return root / "pixel_gt"; }
  /// labels.json, pred/, conf/.
  std::filesystem::path prediction() const { return root / "prediction"; }
};

inline VideoPaths video_paths(const std::filesystem::path& work_dir, const std::string& id) {
  return {work_dir / id};
}

}  // namespace geovid
