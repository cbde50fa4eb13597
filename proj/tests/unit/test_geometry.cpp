#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "trajtrack/errors.hpp"
#include "trajtrack/geometry.hpp"

using namespace trajtrack;

namespace {

constexpr double kPi = std::numbers::pi;

Box3D random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-3.0, 3.0), size(0.5, 4.0), ang(-kPi, kPi);
  return {pos(rng), pos(rng), pos(rng), size(rng), size(rng), size(rng), ang(rng)};
}

Box3D rigid(const Box3D& b, double tx, double ty, double phi) {
  const double c = std::cos(phi), s = std::sin(phi);
  Box3D out = b;
  out.x = c * b.x - s * b.y + tx;
  out.y = s * b.x + c * b.y + ty;
  out.theta = wrap_angle(b.theta + phi);
  return out;
}

}  // namespace

TEST(ApplyMotion, PureTranslation) {
  const Box3D out = apply_motion({0, 0, 0, 1, 1, 1, 0}, {1, 0, 0, 0});
  EXPECT_EQ(out, (Box3D{1, 0, 0, 1, 1, 1, 0}));
}

TEST(ApplyMotion, HeadingWrapsIntoHalfOpenRange) {
  const Box3D out = apply_motion({0, 0, 0, 1, 1, 1, 3.0}, {0, 0, 0, 0.5});
  EXPECT_NEAR(out.theta, 3.5 - 2 * kPi, 1e-12);
  EXPECT_NEAR(out.theta, -2.7832, 1e-4);
}

TEST(ApplyMotion, ZeroDeltaIsIdentity) {
  const Box3D b{1.5, -2, 0.3, 1.6, 1.9, 4.5, -1.2};
  EXPECT_EQ(apply_motion(b, {}), b);
}

TEST(ApplyMotion, RejectsNonFiniteDelta) {
  EXPECT_THROW(apply_motion({}, {NAN, 0, 0, 0}), InvalidInput);
  EXPECT_THROW(apply_motion({}, {0, 0, 0, INFINITY}), InvalidInput);
}

TEST(ApplyMotion, InverseDeltaRestoresBox) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(-5, 5);
  for (int i = 0; i < 200; ++i) {
    const Box3D b = random_box(rng);
    const MotionDelta m{d(rng), d(rng), d(rng), d(rng)};
    const Box3D back = apply_motion(apply_motion(b, m), {-m.dx, -m.dy, -m.dz, -m.dtheta});
    EXPECT_NEAR(back.x, b.x, 1e-12);
    EXPECT_NEAR(back.y, b.y, 1e-12);
    EXPECT_NEAR(back.z, b.z, 1e-12);
    EXPECT_NEAR(std::remainder(back.theta - b.theta, 2 * kPi), 0.0, 1e-12);
    EXPECT_EQ(back.l, b.l);
  }
}

TEST(WrapAngle, RangeIsHalfOpen) {
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(wrap_angle(-kPi), kPi);
  EXPECT_NEAR(wrap_angle(3 * kPi + 0.25), -kPi + 0.25, 1e-12);
}

TEST(BevCorners, AxisAlignedSquare) {
  const auto c = bev_corners({0, 0, 0, 1, 2, 2, 0});
  for (const auto& p : c) {
    EXPECT_NEAR(std::abs(p.x), 1.0, 1e-15);
    EXPECT_NEAR(std::abs(p.y), 1.0, 1e-15);
  }
  EXPECT_GT(polygon_area(c.data(), 4), 0.0);  // counter-clockwise
}

TEST(BevCorners, HalfTurnGivesSameCornerSet) {
  const Box3D a{0.5, -1, 0, 1, 1.2, 3.0, 0.0};
  Box3D b = a;
  b.theta = kPi;
  const auto ca = bev_corners(a), cb = bev_corners(b);
  for (const auto& p : ca) {
    bool found = false;
    for (const auto& q : cb) found |= std::hypot(p.x - q.x, p.y - q.y) < 1e-12;
    EXPECT_TRUE(found);
  }
}

TEST(BevCorners, QuarterTurnUnitSquareLiesOnAxes) {
  for (const auto& p : bev_corners({0, 0, 0, 1, 1, 1, kPi / 4})) {
    EXPECT_NEAR(std::hypot(p.x, p.y), std::sqrt(2.0) / 2, 1e-12);
    EXPECT_NEAR(std::min(std::abs(p.x), std::abs(p.y)), 0.0, 1e-12);
  }
}

TEST(BevIou, IdenticalBoxes) {
  const Box3D b{1, 2, 3, 1.5, 1.8, 4.2, 0.7};
  EXPECT_NEAR(bev_iou(b, b), 1.0, 1e-12);
}

TEST(BevIou, ShiftedSquares) {
  EXPECT_NEAR(bev_iou({0, 0, 0, 1, 2, 2, 0}, {1, 0, 0, 1, 2, 2, 0}), 1.0 / 3.0, 1e-12);
}

TEST(BevIou, RotatedUnitSquareMatchesMonteCarlo) {
  const Box3D a{0, 0, 0, 1, 1, 1, 0}, b{0, 0, 0, 1, 1, 1, kPi / 4};
  const double exact = bev_iou(a, b);
  EXPECT_NEAR(exact, 0.7071, 1e-4);
  EXPECT_NEAR(exact, oracle::monte_carlo_bev_iou(a, b, 1'000'000, 5), 5e-3);
}

TEST(BevIou, DisjointIsZero) {
  EXPECT_EQ(bev_iou({0, 0, 0, 1, 1, 1, 0}, {5, 5, 0, 1, 1, 1, 0.3}), 0.0);
}

TEST(BevIou, DegenerateBoxFlagged) {
  const IouResult r = bev_iou_checked({0, 0, 0, 1, 1e-14, 1e-14, 0}, {0, 0, 0, 1, 1, 1, 0});
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.value, 0.0);
}

TEST(BevIou, SymmetricBoundedAndRigidInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> t(-20, 20), ang(-kPi, kPi);
  for (int i = 0; i < 2000; ++i) {
    const Box3D a = random_box(rng), b = random_box(rng);
    const double ab = bev_iou(a, b);
    EXPECT_EQ(ab, bev_iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    const double tx = t(rng), ty = t(rng), phi = ang(rng);
    EXPECT_NEAR(bev_iou(rigid(a, tx, ty, phi), rigid(b, tx, ty, phi)), ab, 1e-9);
  }
}

TEST(Iou3d, EqualsBevForMatchingVerticalExtent) {
  const Box3D a{0, 0, 0.5, 1.5, 2, 4, 0.1}, b{1, 0.5, 0.5, 1.5, 2, 4, 0.4};
  EXPECT_NEAR(iou_3d(a, b), bev_iou(a, b), 1e-12);
}

TEST(Iou3d, VerticalOffsetReducesOverlap) {
  const Box3D a{0, 0, 0, 2, 2, 2, 0}, b{0, 0, 1, 2, 2, 2, 0};
  EXPECT_NEAR(iou_3d(a, b), 1.0 / 3.0, 1e-12);
}

TEST(CenterDistance, Examples) {
  const Box3D a{};
  EXPECT_EQ(center_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(center_distance({0, 0, 0, 1, 1, 1, 0}, {3, 4, 0, 1, 1, 1, 0}), 5.0);
  EXPECT_NEAR(center_distance({1, 1, 1, 1, 1, 1, 0}, {2, 2, 2, 1, 1, 1, 0}), std::sqrt(3.0), 1e-15);
}

TEST(Box3D, Validation) {
  EXPECT_TRUE(is_valid({0, 0, 0, 1, 1, 1, 0}));
  EXPECT_FALSE(is_valid({0, 0, 0, 0, 1, 1, 0}));
  EXPECT_FALSE(is_valid({NAN, 0, 0, 1, 1, 1, 0}));
  EXPECT_THROW(validate({0, 0, 0, 1, -1, 1, 0}), InvalidInput);
}
