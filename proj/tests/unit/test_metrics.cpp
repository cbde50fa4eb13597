#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "trajtrack/errors.hpp"
#include "trajtrack/metrics.hpp"

using namespace trajtrack;

namespace {

std::vector<FrameResult> constant_frames(std::size_t n, double iou, double err) {
  std::vector<FrameResult> f;
  for (std::size_t i = 0; i < n; ++i) f.push_back({i, iou, err});
  return f;
}

}  // namespace

TEST(Success, Examples) {
  EXPECT_DOUBLE_EQ(success_score(constant_frames(5, 1.0, 0)), 100.0);
  EXPECT_DOUBLE_EQ(success_score(constant_frames(5, 0.0, 0)), 0.0);
  EXPECT_DOUBLE_EQ(success_score(constant_frames(5, 0.5, 0)), 50.0);
}

TEST(Precision, Examples) {
  EXPECT_DOUBLE_EQ(precision_score(constant_frames(4, 0, 0.0)), 100.0);
  EXPECT_DOUBLE_EQ(precision_score(constant_frames(4, 0, 1.0)), 50.0);
  EXPECT_DOUBLE_EQ(precision_score(constant_frames(4, 0, 2.0)), 0.0);
  EXPECT_DOUBLE_EQ(precision_score(constant_frames(4, 0, 7.5)), 0.0);
}

TEST(Scores, EmptyInputThrows) {
  EXPECT_THROW(success_score({}), InvalidInput);
  EXPECT_THROW(precision_score({}), InvalidInput);
  EXPECT_THROW(aggregate_reports({}), InvalidInput);
}

TEST(Scores, SuccessIsMeanIou) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<FrameResult> f;
  double sum = 0;
  for (std::size_t i = 0; i < 37; ++i) {
    f.push_back({i, u(rng), 3 * u(rng)});
    sum += f.back().iou;
  }
  EXPECT_NEAR(success_score(f), 100.0 * sum / 37.0, 1e-12);
}

TEST(Scores, MatchFineThresholdSweep) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<FrameResult> f;
  for (std::size_t i = 0; i < 50; ++i) f.push_back({i, u(rng), 2.5 * u(rng)});
  // Midpoint rule over a fine grid converges to the closed forms.
  const int n = 200000;
  double s_auc = 0, p_auc = 0;
  for (int k = 0; k < n; ++k) {
    const double t = (k + 0.5) / n;
    double s = 0, p = 0;
    for (const auto& r : f) {
      s += r.iou >= t ? 1 : 0;
      p += r.center_error <= 2.0 * t ? 1 : 0;
    }
    s_auc += s / f.size() / n;
    p_auc += p / f.size() / n;
  }
  EXPECT_NEAR(success_score(f), 100 * s_auc, 1e-3);
  EXPECT_NEAR(precision_score(f), 100 * p_auc, 1e-3);
}

TEST(Scores, MonotoneAndOrderInvariant) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<FrameResult> f;
  for (std::size_t i = 0; i < 30; ++i) f.push_back({i, u(rng), 3 * u(rng)});
  const double s = success_score(f), p = precision_score(f);
  auto shuffled = f;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  EXPECT_NEAR(success_score(shuffled), s, 1e-12);
  EXPECT_NEAR(precision_score(shuffled), p, 1e-12);
  for (std::size_t i = 0; i < f.size(); ++i) {
    auto better = f;
    better[i].iou = std::min(1.0, better[i].iou + 0.1);
    better[i].center_error = std::max(0.0, better[i].center_error - 0.3);
    EXPECT_GE(success_score(better), s);
    EXPECT_GE(precision_score(better), p);
  }
}

TEST(Aggregate, FrameWeighted) {
  std::vector<TrackReport> one{make_report("a", constant_frames(10, 0.8, 0.5))};
  const auto a = aggregate_reports(one);
  EXPECT_DOUBLE_EQ(a.success, one[0].success);
  EXPECT_DOUBLE_EQ(a.precision, one[0].precision);

  std::vector<TrackReport> two{make_report("a", constant_frames(100, 0.8, 0)),
                               make_report("b", constant_frames(300, 0.4, 0))};
  EXPECT_NEAR(aggregate_reports(two).success, 50.0, 1e-12);
  EXPECT_EQ(aggregate_reports(two).frames, 400u);

  std::vector<TrackReport> equal{make_report("a", constant_frames(20, 0.9, 0)),
                                 make_report("b", constant_frames(20, 0.3, 0))};
  EXPECT_NEAR(aggregate_reports(equal).success, 60.0, 1e-12);
}

TEST(Report, TableAndCurves) {
  std::vector<TrackReport> r{make_report("seq-1", constant_frames(3, 0.5, 1.0))};
  std::ostringstream table;
  write_report_table(table, r);
  EXPECT_EQ(table.str(), "sequence_id,frames,success,precision\nseq-1,3,50,50\n");

  const auto sc = success_curve(r[0].frames, 3);
  ASSERT_EQ(sc.size(), 3u);
  EXPECT_EQ(sc[0].fraction, 1.0);
  EXPECT_EQ(sc[1].fraction, 1.0);  // IoU 0.5 >= 0.5
  EXPECT_EQ(sc[2].fraction, 0.0);
  const auto pc = precision_curve(r[0].frames, 3);
  EXPECT_EQ(pc[0].fraction, 0.0);
  EXPECT_EQ(pc[1].fraction, 1.0);
  EXPECT_EQ(pc[2].threshold, 2.0);
  std::ostringstream curve;
  write_curve(curve, pc);
  EXPECT_EQ(curve.str(), "threshold,fraction\n0,0\n1,1\n2,1\n");
}
