#include "trajtrack/training.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

#include "trajtrack/errors.hpp"
#include "trajtrack/random.hpp"
#include "trajtrack/text_format.hpp"

namespace trajtrack {

using ad::Array;
using ad::Tape;
using ad::Var;

void HistoryAugmentation::validate() const {
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("train.augment: noise_sigma must be >= 0");
  }
  if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0) || !(short_rate >= 0.0 && short_rate <= 1.0)) {
    throw ConfigError("train.augment: outlier_rate and short_rate must lie in [0, 1]");
  }
  if (!(outlier_offset >= 0.0) || !std::isfinite(outlier_offset)) {
    throw ConfigError("train.augment: outlier_offset must be >= 0");
  }
}

TrajectoryHistory augment_history(const TrajectoryHistory& history, const HistoryAugmentation& aug,
                                  RandomStream& rng) {
  const auto states = history.states();
  const std::size_t n = states.size();
  const bool shorten = rng.uniform() < aug.short_rate;
  const double pick = rng.uniform();
  std::size_t keep = n;
  if (shorten && n > 2) keep = 2 + static_cast<std::size_t>(pick * static_cast<double>(n - 2));

  TrajectoryHistory out(history.reference_box(), history.capacity());
  for (std::size_t i = 0; i < history.capacity(); ++i) {
    const double u = rng.uniform(), phi = 2.0 * M_PI * rng.uniform();
    const double nx = rng.normal(), ny = rng.normal();
    if (i >= n || i < n - keep) continue;
    TrajState st = states[i];
    if (!(keep < n && i == n - keep)) {
      st.x += aug.noise_sigma * nx;
      st.y += aug.noise_sigma * ny;
      if (u < aug.outlier_rate) {
        st.x += aug.outlier_offset * std::cos(phi);
        st.y += aug.outlier_offset * std::sin(phi);
      }
    }
    out.push(st);
  }
  return keep < n ? model_history(out, aug.warmup_mode) : out;
}

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ConfigError("train: epochs and batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be positive");
  }
  if (!(loss_lambda >= 0.0)) throw ConfigError("train: loss_lambda must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0) || !(weight_decay >= 0.0)) {
    throw ConfigError("train: epsilon must be positive and weight_decay >= 0");
  }
  augment.validate();
}

AdamW::AdamW(const ad::ParameterSet& params, const TrainConfig& cfg)
    : lr_(cfg.learning_rate),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.epsilon),
      decay_(cfg.weight_decay) {
  for (const auto& p : params) {
    m_.emplace_back(p.value.rows(), p.value.cols(), 0.0);
    v_.emplace_back(p.value.rows(), p.value.cols(), 0.0);
  }
}

void AdamW::step(ad::ParameterSet& params) {
  if (params.size() != m_.size()) throw InvalidInput("AdamW: parameter set changed size");
  for (const auto& p : params) {
    if (p.grad.size() != p.value.size()) {
      throw InvalidInput("AdamW: gradient of '" + p.name + "' has the wrong shape");
    }
    if (!p.grad.all_finite()) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& p : params) {
    auto& m = m_[k];
    auto& v = v_[k];
    ++k;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= lr_ * decay_ * p.value[i];
      p.value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

Var reconstruction_nll(Tape& tape, Var predicted, Var target) {
  if (tape.rows(predicted) != tape.rows(target) || tape.cols(predicted) != tape.cols(target)) {
    throw InvalidInput("reconstruction_nll: predicted and target shapes differ");
  }
  const Var diff = ad::sub(tape, predicted, target);
  const double per_feature = 1.0 / static_cast<double>(tape.cols(predicted));
  return ad::scale(tape, ad::sum(tape, ad::mul(tape, diff, diff)), per_feature);
}

double reconstruction_nll(const PredictedTrajectory& predicted, const PredictedTrajectory& target) {
  if (predicted.states.size() != target.states.size()) {
    throw InvalidInput("reconstruction_nll: trajectories have different lengths");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < predicted.states.size(); ++t) {
    const auto a = predicted.states[t].features();
    const auto b = target.states[t].features();
    double sq = 0.0;
    for (std::size_t f = 0; f < kStateWidth; ++f) sq += (a[f] - b[f]) * (a[f] - b[f]);
    total += sq / static_cast<double>(kStateWidth);
  }
  return total;
}

Array relative_targets(const TrajectoryHistory& history, std::span<const TrajState> future) {
  if (history.empty()) throw InvalidInput("relative_targets: empty history");
  const TrajState& o = history.last();
  Array out(future.size(), kStateWidth);
  for (std::size_t t = 0; t < future.size(); ++t) {
    out(t, 0) = future[t].x - o.x;
    out(t, 1) = future[t].y - o.y;
    out(t, 2) = future[t].z - o.z;
    out(t, 3) = future[t].sin_theta;
    out(t, 4) = future[t].cos_theta;
  }
  return out;
}

ElboTerms elbo_loss(Tape& tape, ImmModel& model, const TrajectoryHistory& history,
                    std::span<const TrajState> future, std::span<const double> noise,
                    double kl_weight) {
  if (future.empty()) throw InvalidInput("elbo_loss: empty future");
  if (noise.size() != model.config().latent_dim) {
    throw InvalidInput("elbo_loss: noise has " + std::to_string(noise.size()) + " dims, latent has " +
                       std::to_string(model.config().latent_dim));
  }
  const ImmModel::HistoryEncoding enc = model.encode_history(tape, history);
  const ImmModel::LatentVars post = model.encode_posterior(tape, history, future);
  const Var eps = tape.constant(Array::row(noise));
  const Var z = ad::add(tape, post.mu, ad::mul(tape, post.sigma, eps));
  const Var predicted = model.decode(tape, history, enc, z, future.size());
  ElboTerms terms;
  terms.recon = reconstruction_nll(tape, predicted, tape.constant(relative_targets(history, future)));
  terms.kl = ad::kl_diag_gaussians(tape, post.mu, post.sigma, enc.prior.mu, enc.prior.sigma);
  terms.loss = kl_weight == 1.0 ? ad::add(tape, terms.recon, terms.kl)
                                : ad::add(tape, terms.recon, ad::scale(tape, terms.kl, kl_weight));
  return terms;
}

Var tracking_loss(Tape& tape, const Box3D& proposal, const Box3D& gt, Var log_scale) {
  if (tape.rows(log_scale) != 1 || tape.cols(log_scale) != 4) {
    throw InvalidInput("tracking_loss: log_scale must be 1 x 4");
  }
  validate(proposal);
  validate(gt);
  const Array abs_residual = Array::row({std::abs(proposal.x - gt.x), std::abs(proposal.y - gt.y),
                                         std::abs(proposal.z - gt.z),
                                         std::abs(wrap_angle(proposal.theta - gt.theta))});
  const Var inv_scale = ad::exp(tape, ad::scale(tape, log_scale, -1.0));
  const Var weighted = ad::mul(tape, tape.constant(abs_residual), inv_scale);
  return ad::add(tape, ad::sum(tape, weighted), ad::sum(tape, log_scale));
}

Var total_loss(Tape& tape, Var tracking, Var traj, double loss_lambda) {
  return ad::add(tape, tracking, ad::scale(tape, traj, loss_lambda));
}

double total_loss(double tracking, double traj, double loss_lambda) {
  return tracking + loss_lambda * traj;
}

TrainResult train(ImmModel& model, std::span<const TrainingWindow> data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw InvalidInput("train: empty dataset");
  const std::size_t dz = model.config().latent_dim;
  auto& params = model.parameters();
  AdamW optimizer(params, cfg);
  RandomStream order_rng(derive_seed(cfg.seed, 0));
  RandomStream noise_rng(derive_seed(cfg.seed, 1));
  RandomStream augment_rng(derive_seed(cfg.seed, 2));
  const bool augment = cfg.augment.enabled();

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batches = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double warmup_steps = static_cast<double>(cfg.kl_warmup_epochs * batches);

  Tape tape;
  std::vector<double> noise(dz);
  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(order_rng.engine()() % i);
      std::swap(order[i - 1], order[j]);
    }
    double sum_total = 0.0, sum_recon = 0.0, sum_kl = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const double kl_weight =
          warmup_steps > 0.0 ? std::min(1.0, static_cast<double>(optimizer.steps()) / warmup_steps)
                             : 1.0;
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      params.zero_grad();
      for (std::size_t k = begin; k < end; ++k) {
        const TrainingWindow& w = data[order[k]];
        for (auto& x : noise) x = noise_rng.normal();
        tape.clear();
        const ElboTerms terms =
            augment ? elbo_loss(tape, model, augment_history(w.history, cfg.augment, augment_rng),
                                w.future, noise, kl_weight)
                    : elbo_loss(tape, model, w.history, w.future, noise, kl_weight);
        const Var tracking = tape.constant(Array(1, 1, 0.0));
        const Var loss = total_loss(tape, tracking, terms.loss, cfg.loss_lambda);
        const double value = tape.scalar(loss);
        if (!std::isfinite(value)) {
          throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
        }
        sum_total += value;
        sum_recon += tape.scalar(terms.recon);
        sum_kl += tape.scalar(terms.kl);
        tape.backward(ad::scale(tape, loss, inv_batch));
      }
      optimizer.step(params);
    }
    const double n = static_cast<double>(data.size());
    const EpochLoss row{epoch, sum_total / n, sum_recon / n, sum_kl / n};
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  result.steps = optimizer.steps();
  return result;
}

void write_loss_log(std::ostream& out, std::span<const EpochLoss> log) {
  out << "epoch,total,recon,kl\n";
  for (const auto& row : log) {
    out << row.epoch << ',' << format_number(row.total) << ',' << format_number(row.recon) << ','
        << format_number(row.kl) << '\n';
  }
}

NextStepError next_step_error(const ImmModel& model, std::span<const TrainingWindow> data) {
  NextStepError out;
  if (data.empty()) return out;
  double sum_model = 0.0, sum_cv = 0.0;
  for (const auto& w : data) {
    if (w.future.empty() || w.history.size() < 2) continue;
    const TrajState& target = w.future.front();
    const Box3D proposal = model.predict_global_proposal(w.history, {});
    sum_model += std::hypot(proposal.x - target.x, proposal.y - target.y, proposal.z - target.z);
    const auto s = w.history.states();
    const TrajState& a = s[s.size() - 2];
    const TrajState& b = s.back();
    sum_cv += std::hypot(2.0 * b.x - a.x - target.x, 2.0 * b.y - a.y - target.y,
                         2.0 * b.z - a.z - target.z);
    ++out.windows;
  }
  if (out.windows > 0) {
    out.model = sum_model / static_cast<double>(out.windows);
    out.constant_velocity = sum_cv / static_cast<double>(out.windows);
  }
  return out;
}

}  // namespace trajtrack
