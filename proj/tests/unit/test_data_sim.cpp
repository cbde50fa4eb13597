#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "trajtrack/data_sim.hpp"
#include "trajtrack/errors.hpp"
#include "trajtrack/random.hpp"

using namespace trajtrack;

namespace {

ScenarioConfig scenario(ScenarioKind kind, double speed, std::size_t duration = 30) {
  ScenarioConfig c;
  c.kind = kind;
  c.speed = speed;
  c.duration = duration;
  c.start = {3, -4, 0.5, 1.5, 1.8, 4.2, 0.6};
  return c;
}

// Speed profile each kind is meant to follow.
double expected_speed(const ScenarioConfig& c, double t) {
  switch (c.kind) {
    case ScenarioKind::kConstantAcceleration: return std::max(0.0, c.speed + c.acceleration * t);
    case ScenarioKind::kStopAndGo:
      return 0.5 * c.speed * (1 + std::cos(2 * std::numbers::pi * t / c.stop_period));
    default: return c.speed;
  }
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char ch : text) n += ch == '\n';
  return n;
}

}  // namespace

TEST(GenerateScenario, StaticWhenSpeedZero) {
  const auto seq = generate_scenario(scenario(ScenarioKind::kConstantVelocity, 0.0));
  for (const auto& f : seq.frames) EXPECT_EQ(f.box, seq.frames[0].box);
}

TEST(GenerateScenario, ConstantVelocitySpacing) {
  auto cfg = scenario(ScenarioKind::kConstantVelocity, 2.0);
  cfg.dt = 0.5;
  const auto seq = generate_scenario(cfg);
  for (std::size_t i = 1; i < seq.frames.size(); ++i) {
    EXPECT_NEAR(center_distance(seq.frames[i].box, seq.frames[i - 1].box), 1.0, 1e-12);
  }
}

TEST(GenerateScenario, TurnLiesOnCircle) {
  auto cfg = scenario(ScenarioKind::kTurn, 6.0, 60);
  cfg.turn_rate = -0.35;
  const auto seq = generate_scenario(cfg);
  const double r = cfg.speed / cfg.turn_rate;
  const double cx = cfg.start.x - r * std::sin(cfg.start.theta);
  const double cy = cfg.start.y + r * std::cos(cfg.start.theta);
  for (const auto& f : seq.frames) {
    EXPECT_NEAR(std::hypot(f.box.x - cx, f.box.y - cy), std::abs(r), 1e-6);
  }
}

TEST(ScenarioPose, VelocityMatchesKinematicsForEveryKind) {
  // Central differences of the closed-form pose give the velocity vector:
  // its norm must follow the speed profile and its direction the heading.
  for (auto kind : {ScenarioKind::kConstantVelocity, ScenarioKind::kConstantAcceleration,
                    ScenarioKind::kTurn, ScenarioKind::kStopAndGo}) {
    for (double accel : {0.8, -0.9}) {
      auto cfg = scenario(kind, 4.0);
      cfg.turn_rate = 0.4;
      cfg.acceleration = accel;
      cfg.stop_period = 6.0;
      const double h = 1e-5;
      for (double t = 0.25; t < 14.0; t += 0.5) {
        if (kind == ScenarioKind::kConstantAcceleration && std::abs(t - 4.0 / 0.9) < 0.01) continue;
        const Box3D a = scenario_pose(cfg, t - h), b = scenario_pose(cfg, t + h), c = scenario_pose(cfg, t);
        const double vx = (b.x - a.x) / (2 * h), vy = (b.y - a.y) / (2 * h);
        const double speed = std::hypot(vx, vy);
        EXPECT_NEAR(speed, expected_speed(cfg, t), 1e-6) << to_string(kind) << " t=" << t;
        if (speed > 1e-3) {
          EXPECT_NEAR(std::remainder(std::atan2(vy, vx) - c.theta, 2 * std::numbers::pi), 0.0, 1e-6);
        }
        EXPECT_EQ(c.z, cfg.start.z);
      }
    }
  }
}

TEST(GenerateScenario, ClosedFormWithoutNoise) {
  for (auto kind : {ScenarioKind::kConstantVelocity, ScenarioKind::kConstantAcceleration,
                    ScenarioKind::kTurn, ScenarioKind::kStopAndGo}) {
    auto cfg = scenario(kind, 3.0);
    cfg.turn_rate = 0.2;
    cfg.acceleration = -0.4;
    const auto seq = generate_scenario(cfg);
    for (const auto& f : seq.frames) {
      const Box3D p = scenario_pose(cfg, f.frame * cfg.dt);
      EXPECT_NEAR(f.box.x, p.x, 1e-12);
      EXPECT_NEAR(f.box.y, p.y, 1e-12);
      EXPECT_TRUE(is_valid(f.box));
      EXPECT_GT(f.box.theta, -std::numbers::pi);
      EXPECT_LE(f.box.theta, std::numbers::pi);
    }
  }
}

TEST(GenerateScenario, DeterministicPerSeed) {
  auto cfg = scenario(ScenarioKind::kTurn, 5.0);
  cfg.noise_sigma = 0.1;
  cfg.seed = 1;
  const auto a = generate_scenario(cfg), b = generate_scenario(cfg);
  EXPECT_EQ(a, b);
  cfg.seed = 2;
  EXPECT_NE(a, generate_scenario(cfg));
}

TEST(GenerateScenario, PlanarNoiseStatistics) {
  auto cfg = scenario(ScenarioKind::kConstantVelocity, 1.0, 5000);
  cfg.noise_sigma = 0.1;
  cfg.seed = 3;
  const auto seq = generate_scenario(cfg);
  double sxx = 0, syy = 0;
  for (const auto& f : seq.frames) {
    const Box3D p = scenario_pose(cfg, f.frame * cfg.dt);
    sxx += (f.box.x - p.x) * (f.box.x - p.x);
    syy += (f.box.y - p.y) * (f.box.y - p.y);
    EXPECT_EQ(f.box.z, p.z);
  }
  EXPECT_NEAR(std::sqrt(sxx / 5000), 0.1, 0.005);
  EXPECT_NEAR(std::sqrt(syy / 5000), 0.1, 0.005);
}

TEST(GenerateScenario, InvalidConfigThrows) {
  auto cfg = scenario(ScenarioKind::kConstantVelocity, 1.0);
  cfg.dt = 0;
  EXPECT_THROW(generate_scenario(cfg), ConfigError);
  cfg = scenario(ScenarioKind::kConstantVelocity, -1.0);
  EXPECT_THROW(generate_scenario(cfg), ConfigError);
}

TEST(MarkOcclusions, Examples) {
  const auto seq = generate_scenario(scenario(ScenarioKind::kConstantVelocity, 1.0, 50));
  for (const auto& f : mark_occlusions(seq, 0.0, 3, 1).frames) EXPECT_FALSE(f.occluded);
  const auto all = mark_occlusions(seq, 1.0, 1, 1);
  EXPECT_FALSE(all.frames[0].occluded);
  for (std::size_t i = 1; i < all.frames.size(); ++i) EXPECT_TRUE(all.frames[i].occluded);
  EXPECT_THROW(mark_occlusions(seq, 1.5, 3, 1), InvalidInput);
}

TEST(MarkOcclusions, FlaggedFractionMonteCarlo) {
  for (double rate : {0.1, 0.3, 0.5}) {
    for (std::size_t burst : {1u, 3u, 5u}) {
      const auto seq = generate_scenario(scenario(ScenarioKind::kConstantVelocity, 1.0, 10001));
      const auto marked = mark_occlusions(seq, rate, burst, 42 + burst);
      std::size_t flagged = 0;
      for (std::size_t i = 1; i < marked.frames.size(); ++i) flagged += marked.frames[i].occluded;
      EXPECT_NEAR(flagged / 10000.0, rate, 0.02) << "rate " << rate << " burst " << burst;
    }
  }
}

TEST(MarkOcclusions, FlagsComeInBursts) {
  const auto seq = generate_scenario(scenario(ScenarioKind::kConstantVelocity, 1.0, 2000));
  const auto marked = mark_occlusions(seq, 0.2, 4, 7);
  std::size_t run = 0;
  for (std::size_t i = 1; i < marked.frames.size(); ++i) {
    if (marked.frames[i].occluded) {
      ++run;
    } else {
      if (run > 0) EXPECT_EQ(run % 4, 0u);
      run = 0;
    }
  }
}

TEST(Windows, Counts) {
  const auto seq = generate_scenario(scenario(ScenarioKind::kConstantVelocity, 1.0, 14));
  EXPECT_EQ(windows(seq, 10, 4).size(), 1u);
  EXPECT_EQ(windows(seq, 8, 3).size(), 4u);
  EXPECT_TRUE(windows(seq, 12, 4).empty());
}

TEST(Windows, BoundaryAndContent) {
  auto cfg = scenario(ScenarioKind::kTurn, 3.0, 20);
  cfg.turn_rate = 0.3;
  const auto seq = generate_scenario(cfg);
  const auto ws = windows(seq, 5, 3);
  for (const auto& w : ws) {
    const std::size_t last_history_frame = w.first_frame + w.history.size() - 1;
    const std::size_t first_future_frame = last_history_frame + 1;
    EXPECT_EQ(w.history.last(), TrajState::from_box(seq.frames[last_history_frame].box));
    EXPECT_EQ(w.future.front(), TrajState::from_box(seq.frames[first_future_frame].box));
    EXPECT_EQ(w.future.size(), 3u);
    EXPECT_EQ(w.history.reference_box().l, seq.frames[0].box.l);
  }
}

TEST(Windows, TranslateToOrigin) {
  const auto seq = generate_scenario(scenario(ScenarioKind::kConstantVelocity, 2.0, 12));
  const auto plain = windows(seq, 5, 2), moved = windows(seq, 5, 2, true);
  for (std::size_t i = 0; i < plain.size(); ++i) {
    EXPECT_EQ(moved[i].history.last().x, 0.0);
    EXPECT_EQ(moved[i].history.last().y, 0.0);
    EXPECT_NEAR(moved[i].future[1].x, plain[i].future[1].x - plain[i].history.last().x, 1e-12);
  }
}

TEST(MirrorSequence, ReflectsAboutXAxis) {
  auto cfg = scenario(ScenarioKind::kTurn, 3.0, 10);
  cfg.turn_rate = 0.3;
  const auto seq = generate_scenario(cfg);
  const auto m = mirror_sequence(seq);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    EXPECT_EQ(m.frames[i].box.y, -seq.frames[i].box.y);
    EXPECT_EQ(m.frames[i].box.x, seq.frames[i].box.x);
    EXPECT_NEAR(m.frames[i].box.theta, -seq.frames[i].box.theta, 1e-15);
  }
  EXPECT_EQ(mirror_sequence(m), seq);
}

TEST(SimulateSplit, CountsIdsAndDeterminism) {
  SimulationConfig cfg;
  cfg.train_sequences = 12;
  cfg.val_sequences = 5;
  cfg.frames = 20;
  cfg.occlusion_rate = 0.3;
  const auto a = simulate_split(cfg);
  ASSERT_EQ(a.train.size(), 12u);
  ASSERT_EQ(a.val.size(), 5u);
  EXPECT_EQ(a.train[3].sequence_id, "train-000003");
  EXPECT_EQ(a.val[0].sequence_id, "val-000000");
  EXPECT_EQ(a.train[0].frames.size(), 20u);
  for (const auto& s : a.train)
    for (const auto& f : s.frames) EXPECT_FALSE(f.occluded);
  const auto b = simulate_split(cfg);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  EXPECT_NE(a.train[0].frames[1].box, a.val[0].frames[1].box);
  cfg.mirror_augment = true;
  const auto m = simulate_split(cfg);
  EXPECT_EQ(m.train.size(), 24u);
  EXPECT_EQ(m.train[12].sequence_id, "train-000000-mirror");
}

TEST(SimulateSplit, ZeroSequences) {
  SimulationConfig cfg;
  cfg.train_sequences = 0;
  cfg.val_sequences = 0;
  const auto s = simulate_split(cfg);
  EXPECT_TRUE(s.train.empty());
  EXPECT_TRUE(s.val.empty());
}

TEST(SimulateSplit, PedestriansAreSmallAndSlow) {
  SimulationConfig cfg;
  cfg.train_sequences = 0;
  cfg.val_sequences = 1;
  cfg.pedestrian_fraction = 1.0;
  const ScenarioConfig s = sample_scenario(cfg, 1, 0, "p");
  EXPECT_LT(s.start.l, 1.0);
  EXPECT_LE(s.speed, 2.0);
  EXPECT_GT(s.heading_jitter, 0.0);
}

TEST(ScenarioKindText, RoundTrip) {
  for (auto kind : {ScenarioKind::kConstantVelocity, ScenarioKind::kConstantAcceleration,
                    ScenarioKind::kTurn, ScenarioKind::kStopAndGo}) {
    EXPECT_EQ(parse_scenario_kind(to_string(kind)), kind);
  }
  EXPECT_THROW(parse_scenario_kind("zigzag"), ConfigError);
}

TEST(DatasetFile, RoundTripIsExact) {
  SimulationConfig cfg;
  cfg.train_sequences = 100;
  cfg.val_sequences = 0;
  cfg.frames = 12;
  auto records = simulate_split(cfg).train;
  records[5] = mark_occlusions(records[5], 0.5, 2, 3);
  std::stringstream buf;
  save_dataset(records, buf);
  EXPECT_EQ(count_lines(buf.str()), 100u);
  EXPECT_EQ(load_dataset(buf), records);
}

TEST(DatasetFile, ByteFormat) {
  const std::vector<SequenceRecord> recs{{"a", {{0, {1, 2, 3, 1.5, 2, 4, 0.25}, false}, {1, {1.5, 2, 3, 1.5, 2, 4, -0.5}, true}}}};
  std::ostringstream out;
  save_dataset(recs, out);
  EXPECT_EQ(out.str(),
            "{\"sequence_id\":\"a\",\"frames\":[{\"frame\":0,\"box\":[1.0,2.0,3.0,1.5,2.0,4.0,0.25],"
            "\"occluded\":false},{\"frame\":1,\"box\":[1.5,2.0,3.0,1.5,2.0,4.0,-0.5],\"occluded\":true}]}\n");
}

TEST(DatasetFile, EmptyInput) {
  std::istringstream in("");
  EXPECT_TRUE(load_dataset(in).empty());
  std::istringstream blank("\n\n");
  EXPECT_TRUE(load_dataset(blank).empty());
}

TEST(DatasetFile, MalformedLinesAreNamed) {
  const std::string good =
      "{\"sequence_id\":\"a\",\"frames\":[{\"frame\":0,\"box\":[1,2,3,1,1,1,0],\"occluded\":false}]}";
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      load_dataset(in);
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find("line " + std::to_string(e.line())), std::string::npos);
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of(good + "\n" + good.substr(0, 30) + "\n"), 2u);
  EXPECT_EQ(line_of(good + "\n" + good + "\n{\"frames\":[]}\n"), 3u);
  std::string bad_box = good;
  bad_box.replace(bad_box.find("[1,2,3"), 6, "[1,2");
  EXPECT_EQ(line_of(bad_box + "\n"), 1u);
  std::string gap = good;
  gap.replace(gap.find("\"frame\":0"), 9, "\"frame\":2");
  EXPECT_EQ(line_of(gap + "\n"), 1u);
  std::string negative_size = good;
  negative_size.replace(negative_size.find("1,1,1,0"), 7, "1,-1,1,0");
  EXPECT_EQ(line_of(negative_size), 1u);
  EXPECT_THROW(load_dataset(std::string("/nonexistent/data.jsonl")), IoError);
}
