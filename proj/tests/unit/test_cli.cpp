#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && GEOVID_THREADS=1 '" GEOVID_BIN "' " + args + " 2>/dev/null";
  RunResult r;
  FILE* p = popen(cmd.c_str(), "r");
  char buf[512];
  while (std::fgets(buf, sizeof buf, p)) r.out += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

const char* kTinyConfig = R"({
  "work_dir": "work", "runs_dir": "runs",
  "synth": {"train": 2, "test": 1, "unlabeled": 0, "width": 48, "height": 40, "frames": 4},
  "train": {"rounds": 5}
})";

}  // namespace

TEST(Cli, UnknownConfigKeyIsAConfigError) {
  oracle::TempDir dir;
  write(dir / "bad.json", R"({"work_dir": "w", "segmentaton": {}})");
  EXPECT_EQ(run("eval --config bad.json", dir.path()).code, 2);
  write(dir / "nested.json", R"({"train": {"round": 5}})");
  EXPECT_EQ(run("eval --config nested.json", dir.path()).code, 2);
  write(dir / "type.json", R"({"seed": "seven"})");
  EXPECT_EQ(run("eval --config type.json", dir.path()).code, 2);
  write(dir / "range.json", R"({"inference": {"window": 0}})");
  EXPECT_EQ(run("eval --config range.json", dir.path()).code, 2);
  EXPECT_EQ(run("eval --config missing.json", dir.path()).code, 2);
}

TEST(Cli, BadFlagsAreUsageErrors) {
  oracle::TempDir dir;
  EXPECT_EQ(run("frobnicate", dir.path()).code, 2);
  EXPECT_EQ(run("train --no-such-flag", dir.path()).code, 2);
  EXPECT_EQ(run("train --level-fractions 0.3 0.1", dir.path()).code, 2);
  EXPECT_EQ(run("--help", dir.path()).code, 0);
}

TEST(Cli, MissingInputsExitWithThree) {
  oracle::TempDir dir;
  EXPECT_EQ(run("predict --work nowhere", dir.path()).code, 3);
  EXPECT_EQ(run("segment --in no_frames --out work", dir.path()).code, 3);
}

TEST(Cli, StagesAreIdempotentAndForceable) {
  oracle::TempDir dir;
  write(dir / "tiny.json", kTinyConfig);
  ASSERT_EQ(run("synth --config tiny.json", dir.path()).code, 0);
  ASSERT_TRUE(fs::exists(dir / "work" / "corpus.json"));
  EXPECT_EQ(run("predict --config tiny.json", dir.path()).code, 3);  // nothing trained yet

  auto r = run("segment --config tiny.json", dir.path());
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("segment: 3 processed, 0 skipped"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir / "work" / "train_000" / "flow" / "2_3.bin"));
  const auto stamp = fs::last_write_time(dir / "work" / "train_000" / "hierarchy.json");
  r = run("segment --config tiny.json", dir.path());
  EXPECT_NE(r.out.find("segment: 0 processed, 3 skipped"), std::string::npos) << r.out;
  EXPECT_EQ(fs::last_write_time(dir / "work" / "train_000" / "hierarchy.json"), stamp);
  r = run("segment --config tiny.json --force", dir.path());
  EXPECT_NE(r.out.find("segment: 3 processed"), std::string::npos) << r.out;

  ASSERT_EQ(run("all --config tiny.json", dir.path()).code, 0);
  EXPECT_TRUE(fs::exists(dir / "work" / "model.gvbt"));
  EXPECT_TRUE(fs::exists(dir / "work" / "test_000" / "prediction" / "labels.json"));
  bool found = false;
  for (const auto& e : fs::directory_iterator(dir / "runs")) {
    if (e.path().filename().string().ends_with("-eval")) {
      found = true;
      EXPECT_TRUE(fs::exists(e.path() / "eval.json"));
      EXPECT_TRUE(fs::exists(e.path() / "confusion_main.txt"));
      EXPECT_TRUE(fs::exists(e.path() / "config.json"));
      std::ifstream in(e.path() / "headline.txt");
      std::string line;
      std::getline(in, line);
      EXPECT_NE(line.find("% main / "), std::string::npos) << line;
    }
  }
  EXPECT_TRUE(found);
  const auto manifest = nlohmann::json::parse(std::ifstream(dir / "work" / "train_000" / "manifests" / "segment.json"));
  EXPECT_EQ(manifest["stage"], "segment");
}

TEST(Cli, ImportsAFrameDirectory) {
  oracle::TempDir dir;
  geovid::save_sequence(dir / "clip", oracle::random_block_video(2, 24, 16, 3));
  ASSERT_EQ(run("segment --in clip --out work", dir.path()).code, 0);
  EXPECT_TRUE(fs::exists(dir / "work" / "clip" / "hierarchy.json"));
  EXPECT_TRUE(fs::exists(dir / "work" / "clip" / "sequence.json"));
}
