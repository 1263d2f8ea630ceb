#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "geovid/annotation.hpp"
#include "geovid/annotation_service.hpp"
#include "geovid/corpus.hpp"
#include "geovid/workspace.hpp"
#include "oracles.hpp"

using namespace geovid;
using nlohmann::json;

namespace {

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto seq = oracle::random_block_video(17, 24, 16, 3);
    const auto flows = forward_flows(seq, {});
    hier_ = std::make_unique<SegmentationHierarchy>(build_hierarchy(oversegment(seq, flows), seq, flows, {0.5, 1.0}));
    const auto vp = video_paths(dir_.path(), "clip");
    save_sequence(vp.frames(), seq);
    write_sequence_manifest(vp.sequence_manifest(), seq);
    save_hierarchy(vp.hierarchy(), *hier_);
    std::filesystem::create_directories(dir_ / "not_a_video");

    service_ = std::make_unique<AnnotationService>(ServiceOptions{dir_.path(), std::nullopt});
    port_ = service_->start("127.0.0.1", 0);
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override { service_->stop(); }

  httplib::Result put(const std::string& body, const std::string& id = "clip") {
    return client_->Put(("/api/v1/videos/" + id + "/labels").c_str(), body, "application/json");
  }

  oracle::TempDir dir_;
  std::unique_ptr<SegmentationHierarchy> hier_;
  std::unique_ptr<AnnotationService> service_;
  std::unique_ptr<httplib::Client> client_;
  int port_ = 0;
};

}  // namespace

TEST_F(ServiceTest, ListsVideos) {
  EXPECT_EQ(service_->video_ids(), std::vector<std::string>{"clip"});
  auto r = client_->Get("/api/v1/videos");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const auto j = json::parse(r->body);
  ASSERT_EQ(j["videos"].size(), 1u);
  EXPECT_EQ(j["videos"][0]["id"], "clip");
  EXPECT_EQ(j["videos"][0]["width"], 24);
  EXPECT_EQ(j["videos"][0]["frames"], 3);
  EXPECT_EQ(j["videos"][0]["levels"], 3);
}

TEST_F(ServiceTest, ServesFramesAndSegmentMaps) {
  auto r = client_->Get("/api/v1/videos/clip/frames/1.png");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
  std::ifstream in(video_paths(dir_.path(), "clip").frames() / "frame_000001.png", std::ios::binary);
  const std::string disk((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(r->body, disk);

  r = client_->Get("/api/v1/videos/clip/seg/1/2");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  {
    std::ofstream out(dir_ / "seg.png", std::ios::binary);
    out << r->body;
  }
  int w = 0, h = 0;
  const auto ids = read_id_map_png(dir_ / "seg.png", &w, &h);
  ASSERT_EQ(w, 24);
  ASSERT_EQ(h, 16);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) ASSERT_EQ(ids[std::size_t(y) * w + x], hier_->region_at(x, y, 2, 1));
  }

  EXPECT_EQ(client_->Get("/api/v1/videos/clip/frames/9.png")->status, 404);
  EXPECT_EQ(client_->Get("/api/v1/videos/nope/frames/0.png")->status, 404);
  EXPECT_EQ(client_->Get("/api/v1/videos/clip/seg/7/0")->status, 404);
  EXPECT_EQ(client_->Get("/api/v1/videos/clip/seg/0/3")->status, 404);
  EXPECT_EQ(client_->Get("/api/v1/videos/not_a_video/labels")->status, 404);
}

TEST_F(ServiceTest, LabelUpdatesPropagateAndPersist) {
  auto r = client_->Get("/api/v1/videos/clip/labels");
  ASSERT_TRUE(r);
  auto j = json::parse(r->body);
  EXPECT_TRUE(j["labels"].empty());
  EXPECT_FALSE(j["complete"]);

  // The root region covers every supervoxel.
  r = put(R"({"region_id": 0, "level": 2, "label": "ground"})");
  ASSERT_EQ(r->status, 200);
  j = json::parse(r->body);
  EXPECT_EQ(j["affected_supervoxels"], hier_->base().num_supervoxels);
  EXPECT_TRUE(j["complete"]);

  r = put(R"({"region_id": 0, "level": 0, "label": "object"})");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["affected_supervoxels"], 1);

  r = client_->Get("/api/v1/videos/clip/labels?level=2");
  j = json::parse(r->body);
  EXPECT_EQ(j["labels"]["0"], "object");
  EXPECT_EQ(j["level"], 2);
  ASSERT_TRUE(j["regions"].contains("0"));

  const auto disk = read_ground_truth(video_paths(dir_.path(), "clip").ground_truth());
  EXPECT_EQ(disk.level0.size(), hier_->base().num_supervoxels);
  EXPECT_EQ(disk.level0.at(0), GeoLabel::Object);
  EXPECT_EQ(disk.level0.at(1), GeoLabel::Ground);
}

TEST_F(ServiceTest, RejectsBadRequests) {
  EXPECT_EQ(put("not json")->status, 400);
  EXPECT_EQ(put(R"({"region_id": 0, "level": 1})")->status, 400);
  EXPECT_EQ(put(R"({"region_id": 0, "level": 1, "label": "tree"})")->status, 400);
  EXPECT_EQ(put(R"({"region_id": 0, "level": 1, "label": "vertical"})")->status, 400);
  EXPECT_EQ(put(R"({"region_id": 99999, "level": 1, "label": "sky"})")->status, 404);
  EXPECT_EQ(put(R"({"region_id": 0, "level": 1, "label": "sky"})", "nope")->status, 404);
  EXPECT_EQ(client_->Get("/api/v1/videos/clip/labels?level=9")->status, 404);
  const auto r = put(R"({"region_id": 0, "level": 1, "label": "mix"})");
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(client_->Get("/api/v1/unknown")->status, 404);
}

TEST_F(ServiceTest, ConcurrentUpdatesAreSerialized) {
  const std::uint32_t n = hier_->base().num_supervoxels;
  std::vector<std::thread> workers;
  for (int w = 0; w < 4; ++w) {
    workers.emplace_back([&, w] {
      httplib::Client c("127.0.0.1", port_);
      for (std::uint32_t s = w; s < n; s += 4) {
        const json body{{"region_id", s}, {"level", 0}, {"label", "solid"}};
        const auto r = c.Put("/api/v1/videos/clip/labels", body.dump(), "application/json");
        ASSERT_TRUE(r);
        ASSERT_EQ(r->status, 200);
      }
    });
  }
  for (auto& t : workers) t.join();
  const auto disk = read_ground_truth(video_paths(dir_.path(), "clip").ground_truth());
  EXPECT_EQ(disk.level0.size(), n);
  const auto j = json::parse(client_->Get("/api/v1/videos/clip/labels")->body);
  EXPECT_TRUE(j["complete"]);
}
