#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "trajtrack/autodiff.hpp"
#include "trajtrack/geometry.hpp"
#include "trajtrack/trajformer.hpp"

namespace trajtrack {

inline constexpr std::size_t kStateWidth = 5;

/// Box position and heading as the feature vector (x, y, z, sin theta, cos theta).
struct TrajState {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double sin_theta = 0.0;
  double cos_theta = 1.0;

  static TrajState from_box(const Box3D& box);
  double heading() const;
  std::array<double, kStateWidth> features() const { return {x, y, z, sin_theta, cos_theta}; }
  /// Box with this pose and the sizes of `reference`.
  Box3D to_box(const Box3D& reference) const;

  friend bool operator==(const TrajState&, const TrajState&) = default;
};

/// The last `capacity` states of a track, oldest first. Sizes come from the
/// reference box and never change.
class TrajectoryHistory {
 public:
  TrajectoryHistory(const Box3D& reference, std::size_t capacity);

  /// Appends the pose of `box`; the oldest state is evicted beyond capacity.
  void push(const Box3D& box);
  void push(const TrajState& state);

  std::span<const TrajState> states() const noexcept { return states_; }
  std::size_t size() const noexcept { return states_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return states_.empty(); }
  const TrajState& last() const { return states_.back(); }
  const Box3D& reference_box() const noexcept { return reference_; }
  /// Most recent pose with the reference sizes.
  Box3D last_box() const;

 private:
  Box3D reference_;
  std::size_t capacity_;
  std::vector<TrajState> states_;
};

struct LatentGaussian {
  std::vector<double> mu;
  std::vector<double> sigma;

  std::size_t dim() const noexcept { return mu.size(); }
};

struct PredictedTrajectory {
  std::vector<TrajState> states;
};

struct ImmConfig {
  TrajFormerConfig former{};
  std::size_t history_len = 10;  // H
  std::size_t horizon = 4;       // T
  std::size_t latent_dim = 32;   // d_z
  std::size_t head_hidden = 64;
  /// Displacements are divided by this (meters) before embedding and the
  /// output head is multiplied by it.
  double displacement_scale = 1.0;

  void validate() const;
  friend bool operator==(const ImmConfig&, const ImmConfig&) = default;
};

enum class ProposalMode { kDeterministic, kSampled };

struct ProposalOptions {
  ProposalMode mode = ProposalMode::kDeterministic;
  std::size_t k_samples = 1;
};

/// Displacement rows (dx, dy, dz, sin, cos): consecutive position differences
/// paired with the heading of the later state. Shape (len - 1) x 5.
ad::Array displacement_features(const TrajectoryHistory& history);

/// Displacement rows for a future continuing from the last history state.
ad::Array future_displacement_features(const TrajectoryHistory& history,
                                       std::span<const TrajState> future);

/// z = mu + sigma * noise.
std::vector<double> sample_latent(const LatentGaussian& g, std::span<const double> noise);

/// Conditional VAE over box trajectories: a shared TrajFormer encoder feeds the
/// prior p(Z|X) and posterior q(Z|Y,X) heads, and an autoregressive TrajFormer
/// decoder rolls out displacements with Z held fixed.
class ImmModel {
 public:
  ImmModel(const ImmConfig& config, std::uint64_t seed);

  const ImmConfig& config() const noexcept { return config_; }
  ad::ParameterSet& parameters() noexcept { return params_; }
  const ad::ParameterSet& parameters() const noexcept { return params_; }

  // Inference on frozen weights; safe to call concurrently.
  LatentGaussian encode_prior(const TrajectoryHistory& history) const;
  LatentGaussian encode_posterior(const TrajectoryHistory& history,
                                  const PredictedTrajectory& future) const;
  PredictedTrajectory decode_autoregressive(const TrajectoryHistory& history,
                                            std::span<const double> z, std::size_t steps) const;
  /// First predicted state as a box. Sampled mode needs `noise` to hold
  /// k_samples vectors of latent_dim standard-normal draws.
  Box3D predict_global_proposal(const TrajectoryHistory& history, const ProposalOptions& options,
                                std::span<const std::vector<double>> noise = {}) const;

  // Differentiable building blocks used by training.
  struct LatentVars {
    ad::Var mu;
    ad::Var sigma;
  };
  struct HistoryEncoding {
    ad::Var memory;        // (len - 1) x d_model
    ad::Array memory_pe;   // positions of memory rows
    ad::Array last_feature;  // 1 x 5 last displacement row, in the heading frame
    LatentVars prior;
  };

  HistoryEncoding encode_history(ad::Tape& tape, const TrajectoryHistory& history);
  LatentVars encode_posterior(ad::Tape& tape, const TrajectoryHistory& history,
                              std::span<const TrajState> future);
  /// Rolls out `steps` states relative to the last observed position:
  /// rows (x - x0, y - y0, z - z0, sin, cos).
  ad::Var decode(ad::Tape& tape, const TrajectoryHistory& history, const HistoryEncoding& enc,
                 ad::Var z, std::size_t steps);

  /// Test hook: the posterior returns the prior's distribution.
  void set_posterior_tied_to_prior(bool tied) noexcept { tied_posterior_ = tied; }
  bool posterior_tied_to_prior() const noexcept { return tied_posterior_; }

  /// Names of the output-head parameters (zeroing them freezes the trajectory).
  std::vector<std::string> output_head_parameters() const;

 private:
  struct Linear {
    ad::ParamRef w, b;
  };

  ad::Var apply(ad::Tape& tape, const Linear& l, ad::Var x);
  ad::Var embed_rows(ad::Tape& tape, const ad::Array& features);
  LatentVars latent_heads(ad::Tape& tape, ad::Var pooled, const Linear& mu, const Linear& log_sigma);
  ad::Var run_encoder(ad::Tape& tape, ad::Var x, const ad::Array& pe);
  ad::Array scaled_features(const ad::Array& features) const;

  ImmConfig config_;
  ad::ParameterSet params_;
  PositionalTable positions_;
  Linear embed_;
  ad::ParamRef segment_;
  std::vector<EncoderLayer> encoder_;
  Linear prior_mu_, prior_log_sigma_;
  Linear post_mu_, post_log_sigma_;
  Linear state_embed_, fuse_;
  std::vector<DecoderLayer> decoder_;
  Linear head_hidden_, head_out_;
  bool tied_posterior_ = false;
};

/// Self-describing text checkpoint: header, config line, then one
/// `param <name> <rows> <cols>` line followed by a line of values per parameter.
void save_model(const ImmModel& model, std::ostream& out);
void save_model(const ImmModel& model, const std::string& path);
ImmModel load_model(std::istream& in);
ImmModel load_model(const std::string& path);

}  // namespace trajtrack
