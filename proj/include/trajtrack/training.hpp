#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "trajtrack/autodiff.hpp"
#include "trajtrack/data_sim.hpp"
#include "trajtrack/imm.hpp"
#include "trajtrack/random.hpp"
#include "trajtrack/refinement.hpp"

namespace trajtrack {

/// Perturbations applied to training histories so that they look like the
/// tracker's own past outputs seen at inference. Futures stay clean.
struct HistoryAugmentation {
  double noise_sigma = 0.0;     // planar jitter on every state, meters
  double outlier_rate = 0.0;    // per-state probability of a planar jump
  double outlier_offset = 0.0;  // jump length, meters
  double short_rate = 0.0;      // probability of keeping only the last 2 .. H-1 states
  WarmupMode warmup_mode = WarmupMode::kCvFill;  // applied to shortened histories

  bool enabled() const noexcept {
    return noise_sigma > 0.0 || (outlier_rate > 0.0 && outlier_offset > 0.0) || short_rate > 0.0;
  }
  void validate() const;
  friend bool operator==(const HistoryAugmentation&, const HistoryAugmentation&) = default;
};

/// Draws a perturbed copy of `history`. A shortened history keeps its first
/// state unperturbed, like the initialization frame of a tracked sequence.
/// Uses the same number of draws from `rng` on every call.
TrajectoryHistory augment_history(const TrajectoryHistory& history, const HistoryAugmentation& aug,
                                  RandomStream& rng);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  double loss_lambda = 1.0;         // weight of the trajectory loss
  std::size_t kl_warmup_epochs = 4;  // 0 disables warmup
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  std::uint64_t seed = 1;
  HistoryAugmentation augment{};

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// AdamW with bias-corrected moments and decoupled weight decay.
class AdamW {
 public:
  AdamW(const ad::ParameterSet& params, const TrainConfig& cfg);

  /// Applies one update from the accumulated gradients. Throws NumericError
  /// naming the first parameter with a non-finite gradient; nothing is
  /// modified in that case.
  void step(ad::ParameterSet& params);
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_, decay_;
  std::size_t t_ = 0;
  std::vector<ad::Array> m_, v_;
};

/// Sum over timesteps of the mean squared error over state features.
ad::Var reconstruction_nll(ad::Tape& tape, ad::Var predicted, ad::Var target);
double reconstruction_nll(const PredictedTrajectory& predicted, const PredictedTrajectory& target);

/// Decoder target for `future`: rows (x - x0, y - y0, z - z0, sin, cos)
/// relative to the last history state.
ad::Array relative_targets(const TrajectoryHistory& history, std::span<const TrajState> future);

struct ElboTerms {
  ad::Var recon;
  ad::Var kl;
  ad::Var loss;  // recon + kl_weight * kl
};

/// Negative ELBO: posterior encode, z = mu_q + sigma_q * noise, decode the
/// future length, reconstruction NLL plus KL(q || p).
ElboTerms elbo_loss(ad::Tape& tape, ImmModel& model, const TrajectoryHistory& history,
                    std::span<const TrajState> future, std::span<const double> noise,
                    double kl_weight = 1.0);

/// Laplace negative log-likelihood of the residual (dx, dy, dz, dtheta on the
/// circle): sum |e_i| / s_i + log s_i with s = exp(log_scale), log_scale 1 x 4.
ad::Var tracking_loss(ad::Tape& tape, const Box3D& proposal, const Box3D& gt, ad::Var log_scale);

ad::Var total_loss(ad::Tape& tape, ad::Var tracking, ad::Var traj, double loss_lambda);
double total_loss(double tracking, double traj, double loss_lambda);

struct EpochLoss {
  std::size_t epoch = 0;
  double total = 0.0;  // mean optimized loss (includes the KL warmup weight)
  double recon = 0.0;
  double kl = 0.0;
  double elbo() const { return recon + kl; }
};

struct TrainResult {
  std::vector<EpochLoss> log;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Seeded mini-batch training of the ELBO. KL weight rises linearly from 0 to
/// 1 over the first kl_warmup_epochs epochs.
TrainResult train(ImmModel& model, std::span<const TrainingWindow> data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Header `epoch,total,recon,kl` then one row per epoch.
void write_loss_log(std::ostream& out, std::span<const EpochLoss> log);

struct NextStepError {
  double model = 0.0;  // mean center error of the deterministic proposal
  double constant_velocity = 0.0;
  std::size_t windows = 0;
};

/// Mean center error of the first future state predicted by the model and by
/// constant-velocity extrapolation of the history.
NextStepError next_step_error(const ImmModel& model, std::span<const TrainingWindow> data);

}  // namespace trajtrack
