#include <gtest/gtest.h>

#include <fstream>

#include "geovid/error.hpp"
#include "geovid/frame_store.hpp"
#include "oracles.hpp"

using namespace geovid;

namespace {

struct LabCase {
  Rgb rgb;
  double L, a, b;
};

// Reference values from skimage.color.rgb2lab (D65, 2 degree observer).
const LabCase kLabCases[] = {
    {{0, 0, 0}, 0.000000, 0.000000, 0.000000},
    {{255, 255, 255}, 100.000000, -0.002455, 0.004653},
    {{255, 0, 0}, 53.240588, 80.092308, 67.202751},
    {{0, 255, 0}, 87.735099, -86.183030, 83.179703},
    {{0, 0, 255}, 32.295673, 79.185591, -107.857300},
    {{128, 128, 128}, 53.585013, -0.001473, 0.002791},
    {{120, 170, 230}, 68.353142, -0.501113, -35.293793},
    {{130, 105, 80}, 46.216175, 6.201112, 17.828811},
    {{10, 200, 90}, 70.945773, -64.900312, 43.051706},
    {{250, 128, 3}, 66.347520, 40.902454, 72.790821},
};

Frame gradient_frame(int w, int h, int index) {
  Frame f(w, h, index);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      f.set(x, y, {static_cast<std::uint8_t>(x * 7 + index), static_cast<std::uint8_t>(y * 11),
                   static_cast<std::uint8_t>((x ^ y) * 3)});
    }
  }
  return f;
}

}  // namespace

TEST(FrameStore, LabMatchesReference) {
  for (const auto& c : kLabCases) {
    const Lab lab = srgb_to_lab(c.rgb);
    EXPECT_NEAR(lab.L, c.L, 0.02) << int(c.rgb.r) << "," << int(c.rgb.g) << "," << int(c.rgb.b);
    EXPECT_NEAR(lab.a, c.a, 0.02);
    EXPECT_NEAR(lab.b, c.b, 0.02);
  }
}

TEST(FrameStore, WorkingColorspaceIsPerPixelLab) {
  const Frame f = gradient_frame(9, 7, 0);
  const LabFrame lab = to_working_colorspace(f);
  ASSERT_EQ(lab.width, 9);
  ASSERT_EQ(lab.L.size(), 63u);
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 9; ++x) {
      const Lab ref = srgb_to_lab(f.at(x, y));
      EXPECT_NEAR(lab.L[y * 9 + x], ref.L, 1e-3);
      EXPECT_NEAR(lab.a[y * 9 + x], ref.a, 1e-3);
      EXPECT_NEAR(lab.b[y * 9 + x], ref.b, 1e-3);
    }
  }
}

TEST(FrameStore, SequenceRejectsGapsAndSizeMismatch) {
  std::vector<Frame> gap{gradient_frame(4, 4, 0), gradient_frame(4, 4, 2)};
  try {
    FrameSequence s(gap, "gap");
    FAIL() << "expected MissingFrame";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFrame);
  }
  std::vector<Frame> sizes{gradient_frame(4, 4, 0), gradient_frame(5, 4, 1)};
  try {
    FrameSequence s(sizes, "sizes");
    FAIL() << "expected DimensionMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  try {
    FrameSequence s({}, "empty");
    FAIL() << "expected EmptySequence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySequence);
  }
}

TEST(FrameStore, PngRoundTripIsLossless) {
  oracle::TempDir dir;
  std::vector<Frame> frames;
  for (int j = 0; j < 3; ++j) frames.push_back(gradient_frame(13, 6, j));
  const FrameSequence seq(frames, "clip");
  save_sequence(dir.path() / "frames", seq);
  const FrameSequence back = load_sequence(dir.path() / "frames");
  ASSERT_EQ(back.count(), 3);
  for (int j = 0; j < 3; ++j) EXPECT_EQ(back[j], seq[j]);
  EXPECT_EQ(back.source_id(), "frames");
}

TEST(FrameStore, LoadDetectsMissingIndex) {
  oracle::TempDir dir;
  write_png(dir / "frame_000000.png", gradient_frame(4, 4, 0));
  write_png(dir / "frame_000002.png", gradient_frame(4, 4, 2));
  std::ofstream(dir / "notes.txt") << "ignored";
  try {
    load_sequence(dir.path());
    FAIL() << "expected MissingFrame";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFrame);
  }
}

TEST(FrameStore, CustomPattern) {
  oracle::TempDir dir;
  for (int j = 0; j < 2; ++j) write_png(dir / frame_filename("img-%03d.png", j), gradient_frame(5, 5, j));
  EXPECT_EQ(frame_filename("img-%03d.png", 7), "img-007.png");
  EXPECT_EQ(load_sequence(dir.path(), "img-%03d.png").count(), 2);
}

TEST(FrameStore, ManifestRoundTrip) {
  oracle::TempDir dir;
  const FrameSequence seq({gradient_frame(8, 3, 0), gradient_frame(8, 3, 1)}, "m");
  write_sequence_manifest(dir / "sequence.json", seq, 29.97);
  const SequenceManifest m = read_sequence_manifest(dir / "sequence.json");
  EXPECT_EQ(m.width, 8);
  EXPECT_EQ(m.height, 3);
  EXPECT_EQ(m.count, 2);
  ASSERT_TRUE(m.fps.has_value());
  EXPECT_DOUBLE_EQ(*m.fps, 29.97);
}
