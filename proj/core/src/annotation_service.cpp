#include "geovid/annotation_service.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "geovid/annotation.hpp"
#include "geovid/error.hpp"
#include "geovid/frame_store.hpp"
#include "geovid/workspace.hpp"

namespace geovid {

namespace fs = std::filesystem;
using nlohmann::json;

struct AnnotationService::Impl {
  ServiceOptions options;
  httplib::Server server;
  std::thread worker;
  std::mutex mutex;  // guards sessions and every label write
  std::map<std::string, std::unique_ptr<AnnotationSession>> sessions;

  explicit Impl(ServiceOptions o) : options(std::move(o)) { routes(); }

  bool known_video(const std::string& id) const {
    if (id.empty() || id.find("..") != std::string::npos || id.find('/') != std::string::npos) return false;
    return fs::exists(video_paths(options.work_dir, id).hierarchy_manifest());
  }

  // Caller holds `mutex`.
  AnnotationSession& session(const std::string& id) {
    auto it = sessions.find(id);
    if (it != sessions.end()) return *it->second;
    const VideoPaths vp = video_paths(options.work_dir, id);
    auto s = std::make_unique<AnnotationSession>(load_hierarchy(vp.hierarchy()), vp.ground_truth(), id);
    return *sessions.emplace(id, std::move(s)).first->second;
  }

  static void send_error(httplib::Response& res, int status, std::string_view code, const std::string& msg) {
    res.status = status;
    res.set_content(json{{"error", code}, {"message", msg}}.dump(), "application/json");
  }

  static int status_for(ErrorCode c) {
    switch (c) {
      case ErrorCode::UnknownRegion:
      case ErrorCode::MissingDependency:
      case ErrorCode::MissingFrame: return 404;
      case ErrorCode::InvalidLabelForLevel:
      case ErrorCode::FormatError: return 400;
      default: return 500;
    }
  }

  template <class F>
  static httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, status_for(e.code()), to_string(e.code()), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "Internal", e.what());
      }
    };
  }

  json labels_json(AnnotationSession& s, std::optional<int> level) {
    const GroundTruth& gt = s.ground_truth();
    json labels = json::object();
    for (const auto& [svx, l] : gt.level0) labels[std::to_string(svx)] = to_string(l);
    json out{{"video_id", gt.video_id},
             {"labels", labels},
             {"complete", s.complete()},
             {"num_supervoxels", s.hierarchy().base().num_supervoxels}};
    if (level) {
      const auto& h = s.hierarchy();
      if (*level < 0 || *level >= h.num_levels()) {
        throw Error(ErrorCode::UnknownRegion, "level " + std::to_string(*level));
      }
      // Regions whose supervoxels are all labeled get the 95%-rule label.
      const auto volumes = supervoxel_volumes(h.base());
      const auto& map = h.supervoxel_map(*level);
      const std::uint32_t n = h.region_count(*level);
      std::vector<std::map<GeoLabel, std::uint64_t>> vol(n);
      std::vector<std::uint64_t> total(n, 0);
      std::vector<bool> partial(n, false);
      for (RegionId svx = 0; svx < map.size(); ++svx) {
        const auto it = gt.level0.find(svx);
        if (it == gt.level0.end()) {
          partial[map[svx]] = true;
          continue;
        }
        vol[map[svx]][it->second] += volumes[svx];
        total[map[svx]] += volumes[svx];
      }
      json regions = json::object();
      for (std::uint32_t r = 0; r < n; ++r) {
        if (partial[r] || total[r] == 0) continue;
        GeoLabel label = GeoLabel::Mix;
        for (const auto& [l, v] : vol[r]) {
          if (100 * v > 95 * total[r]) label = l;
        }
        regions[std::to_string(r)] = to_string(label);
      }
      out["level"] = *level;
      out["regions"] = regions;
    }
    return out;
  }

  void routes() {
    server.Get("/api/v1/videos", guarded([this](const httplib::Request&, httplib::Response& res) {
      json vids = json::array();
      for (const auto& id : list_videos()) {
        const auto vp = video_paths(options.work_dir, id);
        json v{{"id", id}};
        if (fs::exists(vp.sequence_manifest())) {
          const auto m = read_sequence_manifest(vp.sequence_manifest());
          v["width"] = m.width;
          v["height"] = m.height;
          v["frames"] = m.count;
        }
        std::ifstream hin(vp.hierarchy_manifest());
        const json hj = json::parse(hin, nullptr, false);
        if (!hj.is_discarded()) v["levels"] = hj.value("level_fractions", json::array()).size() + 1;
        vids.push_back(v);
      }
      res.set_content(json{{"videos", vids}}.dump(), "application/json");
    }));

    server.Get(R"(/api/v1/videos/([^/]+)/frames/(\d+)\.png)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 if (!known_video(id)) return send_error(res, 404, "UnknownVideo", id);
                 const int j = std::stoi(req.matches[2]);
                 const fs::path p = video_paths(options.work_dir, id).frames() / frame_filename("frame_%06d.png", j);
                 std::ifstream in(p, std::ios::binary);
                 if (!in) return send_error(res, 404, "MissingFrame", "frame " + std::to_string(j));
                 std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
                 res.set_content(bytes, "image/png");
               }));

    server.Get(R"(/api/v1/videos/([^/]+)/seg/(\d+)/(\d+))",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 if (!known_video(id)) return send_error(res, 404, "UnknownVideo", id);
                 const int level = std::stoi(req.matches[2]);
                 const int j = std::stoi(req.matches[3]);
                 std::vector<RegionId> ids;
                 int w = 0, h = 0;
                 {
                   std::lock_guard lock(mutex);
                   const auto& hier = session(id).hierarchy();
                   const auto& base = hier.base();
                   if (level >= hier.num_levels()) return send_error(res, 404, "UnknownLevel", std::to_string(level));
                   if (j >= base.frames) return send_error(res, 404, "MissingFrame", std::to_string(j));
                   const auto& map = hier.supervoxel_map(level);
                   const auto frame = base.frame_labels(j);
                   ids.resize(frame.size());
                   for (std::size_t i = 0; i < frame.size(); ++i) ids[i] = map[frame[i]];
                   w = base.width;
                   h = base.height;
                 }
                 const auto png = encode_id_map_png(ids, w, h);
                 res.set_content(std::string(png.begin(), png.end()), "image/png");
               }));

    server.Get(R"(/api/v1/videos/([^/]+)/labels)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 if (!known_video(id)) return send_error(res, 404, "UnknownVideo", id);
                 std::optional<int> level;
                 if (req.has_param("level")) level = std::stoi(req.get_param_value("level"));
                 std::lock_guard lock(mutex);
                 res.set_content(labels_json(session(id), level).dump(), "application/json");
               }));

    server.Put(R"(/api/v1/videos/([^/]+)/labels)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 if (!known_video(id)) return send_error(res, 404, "UnknownVideo", id);
                 const json body = json::parse(req.body, nullptr, false);
                 if (body.is_discarded() || !body.is_object() || !body.contains("region_id") ||
                     !body.contains("level") || !body.contains("label") || !body["region_id"].is_number_unsigned() ||
                     !body["level"].is_number_integer() || !body["label"].is_string()) {
                   return send_error(res, 400, "BadRequest", "body must be {region_id, level, label}");
                 }
                 const auto label = parse_label(body["label"].get<std::string>());
                 if (!label) return send_error(res, 400, "UnknownLabel", body["label"].get<std::string>());
                 std::lock_guard lock(mutex);
                 const auto r = session(id).handle_label_update(body["region_id"].get<RegionId>(),
                                                                body["level"].get<int>(), *label);
                 res.set_content(json{{"affected_supervoxels", r.affected_supervoxels},
                                      {"complete", session(id).complete()}}
                                     .dump(),
                                 "application/json");
               }));

    if (options.static_dir) {
      if (!server.set_mount_point("/", options.static_dir->string())) {
        spdlog::warn("static UI directory {} not found; serving the API only", options.static_dir->string());
      }
    }
  }

  std::vector<std::string> list_videos() const {
    std::vector<std::string> ids;
    if (!fs::is_directory(options.work_dir)) return ids;
    for (const auto& e : fs::directory_iterator(options.work_dir)) {
      if (e.is_directory() && fs::exists(e.path() / "hierarchy.json")) ids.push_back(e.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  }
};

AnnotationService::AnnotationService(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

AnnotationService::~AnnotationService() { stop(); }

std::vector<std::string> AnnotationService::video_ids() const { return impl_->list_videos(); }

int AnnotationService::start(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host.c_str())
                              : (impl_->server.bind_to_port(host.c_str(), port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void AnnotationService::run(const std::string& host, int port) {
  if (!impl_->server.listen(host.c_str(), port)) {
    throw Error(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
  }
}

void AnnotationService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace geovid
