#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "trajtrack/data_sim.hpp"
#include "trajtrack/errors.hpp"
#include "trajtrack/random.hpp"
#include "trajtrack/training.hpp"

using namespace trajtrack;
using ad::Array;
using ad::Tape;
using ad::Var;

namespace {

ImmConfig small_config() {
  ImmConfig c;
  c.former = {8, 2, 1, 16, 32};
  c.history_len = 5;
  c.horizon = 2;
  c.latent_dim = 4;
  c.head_hidden = 8;
  return c;
}

std::vector<TrainingWindow> small_dataset(std::size_t sequences) {
  std::vector<TrainingWindow> out;
  for (std::size_t i = 0; i < sequences; ++i) {
    ScenarioConfig cfg;
    cfg.kind = i % 2 ? ScenarioKind::kTurn : ScenarioKind::kConstantVelocity;
    cfg.turn_rate = 0.3;
    cfg.duration = 9;
    cfg.noise_sigma = 0.05;
    cfg.seed = 100 + i;
    for (auto& w : windows(generate_scenario(cfg), 5, 2)) out.push_back(std::move(w));
  }
  return out;
}

TrainConfig quick_config(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 4;
  c.learning_rate = 1e-3;
  c.kl_warmup_epochs = 1;
  return c;
}

}  // namespace

TEST(ReconstructionNll, Examples) {
  Tape t;
  const Var p = t.constant(oracle::random_array(3, 5, 1));
  EXPECT_EQ(t.scalar(reconstruction_nll(t, p, p)), 0.0);
  EXPECT_EQ(t.scalar(reconstruction_nll(t, t.constant(Array::row({3.0})), t.constant(Array::row({1.0})))), 4.0);
  EXPECT_THROW(reconstruction_nll(t, p, t.constant(Array(2, 5))), InvalidInput);

  PredictedTrajectory a{{{1, 0, 0, 0, 1}, {2, 0, 0, 0, 1}}}, b{{{1, 0, 0, 0, 1}, {2, 1, 0, 0, 1}}};
  EXPECT_EQ(reconstruction_nll(a, a), 0.0);
  EXPECT_DOUBLE_EQ(reconstruction_nll(a, b), 0.2);
  EXPECT_THROW(reconstruction_nll(a, PredictedTrajectory{}), InvalidInput);
}

TEST(ReconstructionNll, GradientCheck) {
  const auto g = oracle::check_gradients(
      {oracle::random_array(4, 5, 2), oracle::random_array(4, 5, 3)},
      [](Tape& t, const std::vector<Var>& v) { return reconstruction_nll(t, v[0], v[1]); });
  EXPECT_LT(g.max_rel_error, 1e-4) << g.worst;
}

TEST(ElboLoss, FiniteOnRandomModel) {
  ImmModel m(small_config(), 1);
  const auto data = small_dataset(1);
  RandomStream rng(3);
  std::vector<double> eps(4);
  for (double& e : eps) e = rng.normal();
  Tape t;
  const auto terms = elbo_loss(t, m, data[0].history, data[0].future, eps);
  EXPECT_TRUE(std::isfinite(t.scalar(terms.recon)));
  EXPECT_GT(t.scalar(terms.kl), 0.0);
  EXPECT_DOUBLE_EQ(t.scalar(terms.loss), t.scalar(terms.recon) + t.scalar(terms.kl));
  Tape t2;
  const auto half = elbo_loss(t2, m, data[0].history, data[0].future, eps, 0.5);
  EXPECT_DOUBLE_EQ(t2.scalar(half.loss), t2.scalar(half.recon) + 0.5 * t2.scalar(half.kl));
  EXPECT_THROW(elbo_loss(t, m, data[0].history, data[0].future, std::vector<double>(3)), InvalidInput);
}

TEST(ElboLoss, TiedPosteriorHasZeroKl) {
  ImmModel m(small_config(), 2);
  m.set_posterior_tied_to_prior(true);
  const auto data = small_dataset(1);
  Tape t;
  const auto terms = elbo_loss(t, m, data[0].history, data[0].future, std::vector<double>(4, 0.3));
  EXPECT_EQ(t.scalar(terms.kl), 0.0);
}

TEST(TrackingLoss, Examples) {
  const Box3D gt{1, 2, 3, 1, 1, 1, 0.5};
  Tape t;
  const Var zero = t.constant(Array(1, 4, 0.0));
  EXPECT_EQ(t.scalar(tracking_loss(t, gt, gt, zero)), 0.0);
  Box3D off = gt;
  off.y += 1.0;
  EXPECT_DOUBLE_EQ(t.scalar(tracking_loss(t, off, gt, zero)), 1.0);
  // Heading residual is measured on the circle.
  Box3D wrapped = gt;
  wrapped.theta = gt.theta + 2 * 3.141592653589793 - 0.25;
  EXPECT_NEAR(t.scalar(tracking_loss(t, wrapped, gt, zero)), 0.25, 1e-12);
  // Log term can make the loss negative.
  EXPECT_LT(t.scalar(tracking_loss(t, gt, gt, t.constant(Array(1, 4, -1.0)))), 0.0);
  EXPECT_THROW(tracking_loss(t, gt, gt, t.constant(Array(1, 3))), InvalidInput);
}

TEST(TrackingLoss, LearnedScaleConvergesToAbsResidual) {
  const Box3D gt{0, 0, 0, 1, 1, 1, 0};
  const Box3D proposal{0.7, -1.9, 0.05, 1, 1, 1, 0.3};
  const double expected[4] = {0.7, 1.9, 0.05, 0.3};
  Array log_scale(1, 4, 0.0);
  for (int it = 0; it < 200; ++it) {
    Tape t;
    const Var s = t.constant(log_scale);
    t.backward(tracking_loss(t, proposal, gt, s));
    for (std::size_t i = 0; i < 4; ++i) log_scale[i] -= 0.5 * t.grad(s)[i];
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(std::exp(log_scale[i]), expected[i], 1e-6);
}

TEST(TrackingLoss, GradientCheck) {
  const Box3D gt{0, 0, 0, 1, 1, 1, 0};
  const Box3D proposal{0.7, -1.9, 0.05, 1, 1, 1, 0.3};
  const auto g = oracle::check_gradients({oracle::random_array(1, 4, 5)}, [&](Tape& t, const std::vector<Var>& v) {
    return tracking_loss(t, proposal, gt, v[0]);
  });
  EXPECT_LT(g.max_rel_error, 1e-4) << g.worst;
}

TEST(TotalLoss, WeightedSum) {
  EXPECT_EQ(total_loss(1.5, 7.0, 0.0), 1.5);
  EXPECT_EQ(total_loss(1.0, 1.0, 1.0), 2.0);
  for (double lambda : {0.0, 0.25, 1.0, 3.5}) {
    EXPECT_DOUBLE_EQ(total_loss(0.4, 2.0, lambda), 0.4 + lambda * 2.0);
    EXPECT_DOUBLE_EQ(total_loss(0.4, 2.0, 2 * lambda) - total_loss(0.4, 2.0, lambda),
                     total_loss(0.4, 2.0, lambda) - total_loss(0.4, 2.0, 0.0));
  }
  Tape t;
  EXPECT_DOUBLE_EQ(t.scalar(total_loss(t, t.constant(Array::row({0.4})), t.constant(Array::row({2.0})), 0.5)), 1.4);
}

TEST(AdamW, ZeroGradientZeroDecayLeavesParameters) {
  ad::ParameterSet p;
  p.add("w", oracle::random_array(3, 3, 1));
  const Array before = p.begin()->value;
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt(p, cfg);
  p.zero_grad();
  opt.step(p);
  EXPECT_EQ(p.begin()->value, before);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, FirstStepIsLearningRateTimesSign) {
  ad::ParameterSet p;
  p.add("w", oracle::random_array(2, 4, 2));
  p.zero_grad();
  Array g = oracle::random_array(2, 4, 3);
  p.begin()->grad = g;
  const Array before = p.begin()->value;
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt(p, cfg);
  opt.step(p);
  for (std::size_t i = 0; i < g.size(); ++i) {
    // m_hat = g, v_hat = g^2 after bias correction.
    const double expected = -cfg.learning_rate * g[i] / (std::abs(g[i]) + cfg.epsilon);
    EXPECT_NEAR(p.begin()->value[i] - before[i], expected, 1e-15);
    EXPECT_NEAR(std::abs(p.begin()->value[i] - before[i]), cfg.learning_rate, 1e-10);
  }
}

TEST(AdamW, DecoupledDecay) {
  ad::ParameterSet p;
  p.add("w", Array(1, 1, 2.0));
  p.zero_grad();
  TrainConfig cfg;
  AdamW opt(p, cfg);
  opt.step(p);
  EXPECT_DOUBLE_EQ(p.begin()->value[0], 2.0 * (1.0 - cfg.learning_rate * cfg.weight_decay));
}

TEST(AdamW, NonFiniteGradientNamesParameter) {
  ad::ParameterSet p;
  p.add("good", Array(1, 2, 1.0));
  p.add("bad", Array(1, 2, 1.0));
  p.zero_grad();
  p.find("good")->grad.fill(0.5);
  p.find("bad")->grad[1] = NAN;
  AdamW opt(p, TrainConfig{});
  try {
    opt.step(p);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'bad'"), std::string::npos);
  }
  EXPECT_EQ(p.find("good")->value, Array(1, 2, 1.0));
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(Train, SingleSampleSingleEpochTakesOneStep) {
  ImmModel m(small_config(), 3);
  const auto data = small_dataset(1);
  const auto r = train(m, std::span(data).first(1), quick_config(1));
  EXPECT_EQ(r.steps, 1u);
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_EQ(r.log[0].epoch, 1u);
}

TEST(Train, LogHasOneRowPerEpochAndLossFalls) {
  ImmModel m(small_config(), 4);
  const auto data = small_dataset(4);
  std::size_t calls = 0;
  const auto r = train(m, data, quick_config(8), [&](const EpochLoss&) { ++calls; });
  EXPECT_EQ(r.log.size(), 8u);
  EXPECT_EQ(calls, 8u);
  EXPECT_EQ(r.steps, 8u * ((data.size() + 3) / 4));
  EXPECT_LT(r.log.back().elbo(), r.log.front().elbo());
  std::ostringstream out;
  write_loss_log(out, r.log);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,total,recon,kl");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 8u);
}

TEST(Train, DeterministicUnderSeed) {
  const auto data = small_dataset(3);
  ImmModel a(small_config(), 5), b(small_config(), 5);
  train(a, data, quick_config(5));
  train(b, data, quick_config(5));
  auto pb = b.parameters().begin();
  for (const auto& p : a.parameters()) {
    EXPECT_EQ(p.value, pb->value) << p.name;
    ++pb;
  }
  TrainConfig other = quick_config(5);
  other.seed = 2;
  ImmModel c(small_config(), 5);
  train(c, data, other);
  EXPECT_NE(a.parameters().begin()->value, c.parameters().begin()->value);
}

TEST(Train, RejectsEmptyDataAndBadConfig) {
  ImmModel m(small_config(), 6);
  EXPECT_THROW(train(m, {}, quick_config(1)), InvalidInput);
  TrainConfig bad = quick_config(1);
  bad.learning_rate = 0;
  EXPECT_THROW(train(m, small_dataset(1), bad), ConfigError);
}

TEST(NextStepError, ConstantVelocityOracle) {
  const auto data = small_dataset(2);
  ImmModel m(small_config(), 7);
  for (const auto& name : m.output_head_parameters()) m.parameters().find(name)->value.fill(0.0);
  const auto e = next_step_error(m, data);
  EXPECT_EQ(e.windows, data.size());
  // A frozen model predicts the last state, so its error is the mean step length.
  double hold = 0;
  for (const auto& w : data) {
    hold += std::hypot(w.future[0].x - w.history.last().x, w.future[0].y - w.history.last().y,
                       w.future[0].z - w.history.last().z);
  }
  EXPECT_NEAR(e.model, hold / data.size(), 1e-12);
  EXPECT_LT(e.constant_velocity, e.model);
}

namespace {

TrajectoryHistory line_history(std::size_t n) {
  TrajectoryHistory h(Box3D{0, 0, 0, 4, 2, 1.5, 0}, n);
  for (std::size_t i = 0; i < n; ++i) h.push(Box3D{double(i), 0.5 * double(i), 0, 4, 2, 1.5, 0.1});
  return h;
}

}  // namespace

TEST(AugmentHistory, DisabledIsIdentity) {
  RandomStream rng(1);
  const auto h = line_history(6);
  const HistoryAugmentation none;
  EXPECT_FALSE(none.enabled());
  const auto out = augment_history(h, none, rng);
  ASSERT_EQ(out.size(), h.size());
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(out.states()[i], h.states()[i]);
}

TEST(AugmentHistory, OutliersSitExactlyAtOffset) {
  RandomStream rng(2);
  const auto h = line_history(6);
  HistoryAugmentation aug;
  aug.outlier_rate = 1.0;
  aug.outlier_offset = 3.0;
  const auto out = augment_history(h, aug, rng);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const auto& a = out.states()[i];
    const auto& b = h.states()[i];
    EXPECT_NEAR(std::hypot(a.x - b.x, a.y - b.y), 3.0, 1e-12);
    EXPECT_EQ(a.z, b.z);
    EXPECT_EQ(a.sin_theta, b.sin_theta);
  }
}

TEST(AugmentHistory, JitterHasConfiguredSpread) {
  RandomStream rng(3);
  const auto h = line_history(10);
  HistoryAugmentation aug;
  aug.noise_sigma = 0.15;
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (int rep = 0; rep < 4000; ++rep) {
    const auto out = augment_history(h, aug, rng);
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double d = out.states()[i].x - h.states()[i].x;
      sum += d;
      sq += d * d;
      ++n;
    }
  }
  const double mean = sum / double(n);
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(std::sqrt(sq / double(n) - mean * mean), 0.15, 0.005);
}

TEST(AugmentHistory, ShortenedHistoriesKeepTheirFirstStateAndAreFilled) {
  RandomStream rng(4);
  const auto h = line_history(8);
  HistoryAugmentation aug;
  aug.short_rate = 1.0;
  aug.noise_sigma = 0.2;
  aug.warmup_mode = WarmupMode::kLocalOnly;
  std::vector<std::size_t> seen(9, 0);
  for (int rep = 0; rep < 3000; ++rep) {
    const auto out = augment_history(h, aug, rng);
    ASSERT_GE(out.size(), 2u);
    ASSERT_LE(out.size(), 7u);
    ++seen[out.size()];
    // The kept prefix starts at an untouched state.
    EXPECT_EQ(out.states()[0], h.states()[h.size() - out.size()]);
  }
  for (std::size_t k = 2; k <= 7; ++k) EXPECT_NEAR(double(seen[k]) / 3000.0, 1.0 / 6.0, 0.03) << k;

  aug.warmup_mode = WarmupMode::kCvFill;
  aug.noise_sigma = 0.0;
  const auto filled = augment_history(h, aug, rng);
  ASSERT_EQ(filled.size(), 8u);
  // Noise-free back-fill of a straight line reproduces the line.
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_NEAR(filled.states()[i].x, h.states()[i].x, 1e-12);
    EXPECT_NEAR(filled.states()[i].y, h.states()[i].y, 1e-12);
  }
}

TEST(AugmentHistory, DrawCountIndependentOfSettings) {
  const auto h = line_history(5);
  HistoryAugmentation a, b;
  b.noise_sigma = 0.3;
  b.outlier_rate = 0.5;
  b.outlier_offset = 2.0;
  b.short_rate = 0.5;
  RandomStream ra(9), rb(9);
  for (int i = 0; i < 20; ++i) {
    augment_history(h, a, ra);
    augment_history(h, b, rb);
  }
  EXPECT_EQ(ra.engine()(), rb.engine()());
}

TEST(AugmentHistory, Validation) {
  HistoryAugmentation a;
  a.outlier_rate = 1.5;
  EXPECT_THROW(a.validate(), ConfigError);
  a = {};
  a.noise_sigma = -1;
  EXPECT_THROW(a.validate(), ConfigError);
  TrainConfig c;
  c.augment.short_rate = 2;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, AugmentedTrainingIsDeterministicAndDiffers) {
  const auto data = small_dataset(3);
  TrainConfig cfg = quick_config(3);
  cfg.augment.noise_sigma = 0.1;
  cfg.augment.outlier_rate = 0.2;
  cfg.augment.outlier_offset = 2.0;
  cfg.augment.short_rate = 0.3;
  ImmModel a(small_config(), 5), b(small_config(), 5), plain(small_config(), 5);
  const auto ra = train(a, data, cfg);
  const auto rb = train(b, data, cfg);
  train(plain, data, quick_config(3));
  EXPECT_EQ(ra.log.back().total, rb.log.back().total);
  EXPECT_EQ(a.parameters().begin()->value, b.parameters().begin()->value);
  EXPECT_NE(a.parameters().begin()->value, plain.parameters().begin()->value);
}
