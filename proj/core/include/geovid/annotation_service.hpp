#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace geovid {

struct ServiceOptions {
  /// Work directory holding one sub-directory per segmented video.
  std::filesystem::path work_dir;
  /// Optional static UI bundle mounted at "/".
  std::optional<std::filesystem::path> static_dir;
};

/// HTTP JSON API for annotation, all routes under /api/v1:
///   GET  /videos
///   GET  /videos/{id}/frames/{j}.png
///   GET  /videos/{id}/seg/{level}/{j}     packed region-id PNG
///   GET  /videos/{id}/labels[?level=L]
///   PUT  /videos/{id}/labels              body {region_id, level, label}
/// Label updates are serialized; each one is persisted before the response.
class AnnotationService {
 public:
  explicit AnnotationService(ServiceOptions options);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  /// Videos with a saved hierarchy, sorted by id.
  std::vector<std::string> video_ids() const;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host, int port);
  /// Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace geovid
