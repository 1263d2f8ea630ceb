#include <gtest/gtest.h>

#include <cmath>

#include "geovid/dense_flow.hpp"
#include "geovid/error.hpp"
#include "oracles.hpp"

using namespace geovid;

namespace {

std::vector<float> interior(const std::vector<float>& plane, int w, int h, int margin) {
  std::vector<float> out;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) out.push_back(plane[y * w + x]);
  }
  return out;
}

}  // namespace

TEST(DenseFlow, RecoversRigidTranslation) {
  for (int dx : {1, 3, 5}) {
    for (int dy : {0, 2}) {
      const auto seq = oracle::translated_texture(64, 64, 2, dx, dy, 7);
      const FlowField f = estimate_flow(seq[0], seq[1]);
      EXPECT_EQ(f.width, 64);
      EXPECT_NEAR(oracle::median(interior(f.u, 64, 64, 8)), dx, 0.5) << dx << "," << dy;
      EXPECT_NEAR(oracle::median(interior(f.v, 64, 64, 8)), dy, 0.5) << dx << "," << dy;
    }
  }
}

TEST(DenseFlow, ZeroMotionIsZero) {
  const auto seq = oracle::translated_texture(48, 40, 2, 0, 0, 3);
  const FlowField f = estimate_flow(seq[0], seq[1]);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    ASSERT_LE(std::abs(f.u[i]), 1e-3);
    ASSERT_LE(std::abs(f.v[i]), 1e-3);
  }
}

TEST(DenseFlow, TexturelessFrameHasNoMotion) {
  Frame a(32, 32, 0), b(32, 32, 1);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      a.set(x, y, {90, 90, 90});
      b.set(x, y, {90, 90, 90});
    }
  }
  const FlowField f = estimate_flow(a, b);
  for (float u : f.u) ASSERT_EQ(u, 0.f);
}

TEST(DenseFlow, SizeMismatchThrows) {
  EXPECT_THROW(estimate_flow(Frame(8, 8, 0), Frame(9, 8, 1)), Error);
}

TEST(DenseFlow, UnitRampGivesUnitDerivativeForEveryKernel) {
  // u = 2x + 0.5 y, v = -y; Sobel responses normalized to the true partials.
  FlowField f = FlowField::zeros(24, 20);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 24; ++x) {
      f.u[f.index(x, y)] = 2.f * x + 0.5f * y;
      f.v[f.index(x, y)] = -1.f * y;
    }
  }
  for (int k : {3, 5, 7}) {
    const FlowDifferential d = flow_differentials(f, k);
    EXPECT_EQ(d.kernel_size, k);
    for (int y = k; y < 20 - k; ++y) {
      for (int x = k; x < 24 - k; ++x) {
        const std::size_t i = f.index(x, y);
        ASSERT_NEAR(d.dxu[i], 2.0, 1e-4) << k;
        ASSERT_NEAR(d.dyu[i], 0.5, 1e-4) << k;
        ASSERT_NEAR(d.dxv[i], 0.0, 1e-4) << k;
        ASSERT_NEAR(d.dyv[i], -1.0, 1e-4) << k;
      }
    }
  }
}

TEST(DenseFlow, BadKernelSizeThrows) {
  try {
    flow_differentials(FlowField::zeros(8, 8), 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadKernelSize);
  }
}

TEST(DenseFlow, NegationAndFileRoundTrip) {
  oracle::TempDir dir;
  FlowField f = FlowField::zeros(5, 4, 3, 2);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    f.u[i] = 0.25f * i;
    f.v[i] = -1.5f + i;
  }
  const FlowField n = negated(f);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    EXPECT_EQ(n.u[i], -f.u[i]);
    EXPECT_EQ(n.v[i], -f.v[i]);
  }
  write_flow(dir / "f.bin", f);
  const FlowField back = read_flow(dir / "f.bin", 3, 2);
  EXPECT_EQ(back.width, 5);
  EXPECT_EQ(back.height, 4);
  EXPECT_EQ(back.from_index, 3);
  EXPECT_EQ(back.to_index, 2);
  EXPECT_EQ(back.u, f.u);
  EXPECT_EQ(back.v, f.v);
}
