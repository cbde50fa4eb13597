#include "trajtrack/imm.hpp"

#include <cmath>
#include <random>

#include "trajtrack/errors.hpp"

namespace trajtrack {

using ad::Array;
using ad::Tape;
using ad::Var;

// --- Trajectory types -----------------------------------------------------------

TrajState TrajState::from_box(const Box3D& box) {
  return {box.x, box.y, box.z, std::sin(box.theta), std::cos(box.theta)};
}

double TrajState::heading() const { return std::atan2(sin_theta, cos_theta); }

Box3D TrajState::to_box(const Box3D& reference) const {
  Box3D b = reference;
  b.x = x;
  b.y = y;
  b.z = z;
  b.theta = wrap_angle(heading());
  return b;
}

TrajectoryHistory::TrajectoryHistory(const Box3D& reference, std::size_t capacity)
    : reference_(normalized(reference)), capacity_(capacity) {
  if (capacity_ == 0) throw InvalidInput("history capacity must be positive");
  states_.reserve(capacity_);
}

void TrajectoryHistory::push(const Box3D& box) { push(TrajState::from_box(box)); }

void TrajectoryHistory::push(const TrajState& state) {
  if (states_.size() == capacity_) states_.erase(states_.begin());
  states_.push_back(state);
}

Box3D TrajectoryHistory::last_box() const {
  if (states_.empty()) return reference_;
  return states_.back().to_box(reference_);
}

void ImmConfig::validate() const {
  former.validate();
  if (history_len < 2) throw ConfigError("imm: history_len must be at least 2");
  if (horizon < 1) throw ConfigError("imm: horizon must be at least 1");
  if (latent_dim < 1 || head_hidden < 1) throw ConfigError("imm: sizes must be positive");
  if (!(displacement_scale > 0.0) || !std::isfinite(displacement_scale)) {
    throw ConfigError("imm: displacement_scale must be positive");
  }
  if (history_len - 1 + horizon > former.max_len) {
    throw ConfigError("imm: history_len + horizon exceeds max_len");
  }
}

Array displacement_features(const TrajectoryHistory& history) {
  const auto s = history.states();
  if (s.size() < 2) throw InvalidInput("displacement_features: history needs at least 2 states");
  Array out(s.size() - 1, kStateWidth);
  for (std::size_t i = 1; i < s.size(); ++i) {
    out(i - 1, 0) = s[i].x - s[i - 1].x;
    out(i - 1, 1) = s[i].y - s[i - 1].y;
    out(i - 1, 2) = s[i].z - s[i - 1].z;
    out(i - 1, 3) = s[i].sin_theta;
    out(i - 1, 4) = s[i].cos_theta;
  }
  return out;
}

Array future_displacement_features(const TrajectoryHistory& history,
                                   std::span<const TrajState> future) {
  if (history.empty()) throw InvalidInput("future features: empty history");
  if (future.empty()) throw InvalidInput("future features: empty future");
  Array out(future.size(), kStateWidth);
  TrajState prev = history.last();
  for (std::size_t i = 0; i < future.size(); ++i) {
    out(i, 0) = future[i].x - prev.x;
    out(i, 1) = future[i].y - prev.y;
    out(i, 2) = future[i].z - prev.z;
    out(i, 3) = future[i].sin_theta;
    out(i, 4) = future[i].cos_theta;
    prev = future[i];
  }
  return out;
}

std::vector<double> sample_latent(const LatentGaussian& g, std::span<const double> noise) {
  if (noise.size() != g.mu.size() || g.sigma.size() != g.mu.size()) {
    throw InvalidInput("sample_latent: noise has " + std::to_string(noise.size()) +
                       " dims, latent has " + std::to_string(g.mu.size()));
  }
  std::vector<double> z(g.mu.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = g.mu[i] + g.sigma[i] * noise[i];
  return z;
}

// --- Model construction ---------------------------------------------------------

ImmModel::ImmModel(const ImmConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const auto& f = config_.former;
  const std::size_t d = f.d_model;
  const std::size_t dz = config_.latent_dim;
  positions_ = PositionalTable(f.max_len, d);
  std::mt19937_64 rng(seed);

  auto linear = [&](const std::string& name, std::size_t in, std::size_t out, double gain = 1.0) {
    Linear l;
    l.w = params_.add(name + ".w", glorot(in, out, rng, gain));
    l.b = params_.add(name + ".b", Array(1, out, 0.0));
    return l;
  };

  embed_ = linear("embed", kStateWidth, d);
  segment_ = params_.add("segment", glorot(1, d, rng));
  for (std::size_t i = 0; i < f.n_layers; ++i) {
    encoder_.push_back(add_encoder_layer(params_, f, "encoder." + std::to_string(i), rng));
  }
  prior_mu_ = linear("prior.mu", d, dz);
  prior_log_sigma_ = linear("prior.log_sigma", d, dz, 0.1);
  post_mu_ = linear("posterior.mu", d, dz);
  post_log_sigma_ = linear("posterior.log_sigma", d, dz, 0.1);
  state_embed_ = linear("decoder.state_embed", kStateWidth, d);
  fuse_ = linear("decoder.fuse", d + dz, d);
  for (std::size_t i = 0; i < f.n_layers; ++i) {
    decoder_.push_back(add_decoder_layer(params_, f, "decoder." + std::to_string(i), rng));
  }
  head_hidden_ = linear("head.hidden", d, config_.head_hidden);
  head_out_ = linear("head.out", config_.head_hidden, 4, 0.1);
}

std::vector<std::string> ImmModel::output_head_parameters() const {
  return {params_[head_out_.w].name, params_[head_out_.b].name};
}

// --- Differentiable forward pieces ------------------------------------------------

Var ImmModel::apply(Tape& tape, const Linear& l, Var x) {
  return ad::linear(tape, x, tape.parameter(params_[l.w]), tape.parameter(params_[l.b]));
}

Array ImmModel::scaled_features(const Array& features) const {
  Array out = features;
  if (config_.displacement_scale == 1.0) return out;
  const double inv = 1.0 / config_.displacement_scale;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < 3; ++c) out(r, c) *= inv;
  }
  return out;
}

Var ImmModel::embed_rows(Tape& tape, const Array& features) {
  return apply(tape, embed_, tape.constant(scaled_features(features)));
}

namespace {

// Rotates displacement rows into the heading frame of `origin`, so the
// network sees motion relative to the current heading.
Array to_heading_frame(const Array& features, const TrajState& origin) {
  const double c = origin.cos_theta, s = origin.sin_theta;
  Array out = features;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const double x = features(r, 0), y = features(r, 1);
    const double sn = features(r, 3), cs = features(r, 4);
    out(r, 0) = c * x + s * y;
    out(r, 1) = -s * x + c * y;
    out(r, 3) = sn * c - cs * s;
    out(r, 4) = cs * c + sn * s;
  }
  return out;
}

}  // namespace

Var ImmModel::run_encoder(Tape& tape, Var x, const Array& pe) {
  for (const auto& layer : encoder_) x = encoder_block(tape, params_, layer, config_.former, x, pe);
  return x;
}

ImmModel::LatentVars ImmModel::latent_heads(Tape& tape, Var pooled, const Linear& mu,
                                            const Linear& log_sigma) {
  return {apply(tape, mu, pooled), ad::exp(tape, apply(tape, log_sigma, pooled))};
}

ImmModel::HistoryEncoding ImmModel::encode_history(Tape& tape, const TrajectoryHistory& history) {
  const Array features = to_heading_frame(displacement_features(history), history.last());
  HistoryEncoding enc;
  enc.memory_pe = positions_.rows(0, features.rows());
  enc.memory = run_encoder(tape, embed_rows(tape, features), enc.memory_pe);
  enc.prior = latent_heads(tape, ad::mean_rows(tape, enc.memory), prior_mu_, prior_log_sigma_);
  enc.last_feature = Array(1, kStateWidth);
  for (std::size_t c = 0; c < kStateWidth; ++c) enc.last_feature(0, c) = features(features.rows() - 1, c);
  return enc;
}

ImmModel::LatentVars ImmModel::encode_posterior(Tape& tape, const TrajectoryHistory& history,
                                                std::span<const TrajState> future) {
  if (tied_posterior_) return encode_history(tape, history).prior;
  const Array past = to_heading_frame(displacement_features(history), history.last());
  const Array ahead = to_heading_frame(future_displacement_features(history, future), history.last());
  const Var past_emb = embed_rows(tape, past);
  const Var ahead_emb = ad::add_row(tape, embed_rows(tape, ahead), tape.parameter(params_[segment_]));
  const Var joint = ad::concat_rows(tape, past_emb, ahead_emb);
  const Var encoded = run_encoder(tape, joint, positions_.rows(0, past.rows() + ahead.rows()));
  return latent_heads(tape, ad::mean_rows(tape, encoded), post_mu_, post_log_sigma_);
}

Var ImmModel::decode(Tape& tape, const TrajectoryHistory& history, const HistoryEncoding& enc,
                     Var z, std::size_t steps) {
  if (steps < 1) throw InvalidInput("decode: steps must be at least 1");
  if (tape.value(z).size() != config_.latent_dim) throw InvalidInput("decode: latent size mismatch");
  if (tape.rows(z) != 1) z = ad::slice_rows(tape, z, 0, 1);
  const double scale = config_.displacement_scale;

  Var feature = tape.constant(scaled_features(enc.last_feature));
  Var position = tape.constant(Array(1, 3, 0.0));
  // Row vectors times these map the heading frame back to the world frame.
  const double c = history.last().cos_theta, s = history.last().sin_theta;
  Array rotation(3, 3, 0.0);
  rotation(0, 0) = c;
  rotation(0, 1) = s;
  rotation(1, 0) = -s;
  rotation(1, 1) = c;
  rotation(2, 2) = 1.0;
  Array heading_rotation(2, 2);  // (sin h, cos h) -> (sin, cos) of h + theta0
  heading_rotation(0, 0) = c;
  heading_rotation(0, 1) = -s;
  heading_rotation(1, 0) = s;
  heading_rotation(1, 1) = c;
  const Var to_world = tape.constant(rotation);
  const Var heading_to_world = tape.constant(heading_rotation);
  Var heading = tape.constant(Array(1, 1, 0.0));
  std::vector<ProjectedMemory> memory;
  memory.reserve(decoder_.size());
  for (const auto& layer : decoder_) {
    memory.push_back(project_memory(tape, params_, layer.cross_attn, enc.memory, enc.memory_pe));
  }
  Var sequence;
  Var states;
  for (std::size_t t = 0; t < steps; ++t) {
    const Var token = apply(tape, fuse_, ad::concat_features(tape, apply(tape, state_embed_, feature), z));
    sequence = t == 0 ? token : ad::concat_rows(tape, sequence, token);
    const Array pe = positions_.rows(0, t + 1);
    Var h = sequence;
    for (std::size_t l = 0; l < decoder_.size(); ++l) {
      h = decoder_block(tape, params_, decoder_[l], config_.former, h, pe, memory[l]);
    }
    const Var current = t == 0 ? h : ad::slice_rows(tape, h, t, 1);
    const Var delta = apply(tape, head_out_, ad::relu(tape, apply(tape, head_hidden_, current)));
    const Var step_xyz = ad::slice_cols(tape, delta, 0, 3);
    const Var step_meters = scale == 1.0 ? step_xyz : ad::scale(tape, step_xyz, scale);
    position = ad::add(tape, position, step_meters);
    heading = ad::add(tape, heading, ad::slice_cols(tape, delta, 3, 1));
    const Var sc = ad::concat_features(tape, ad::sin(tape, heading), ad::cos(tape, heading));
    const Var state = ad::concat_features(tape, ad::matmul(tape, position, to_world),
                                          ad::matmul(tape, sc, heading_to_world));
    states = t == 0 ? state : ad::concat_rows(tape, states, state);
    feature = ad::concat_features(tape, step_xyz, sc);
  }
  return states;
}

// --- Inference wrappers -------------------------------------------------------------

namespace {

LatentGaussian to_gaussian(const Tape& tape, const ImmModel::LatentVars& v) {
  const auto mu = tape.value(v.mu).values();
  const auto sigma = tape.value(v.sigma).values();
  return {std::vector<double>(mu.begin(), mu.end()), std::vector<double>(sigma.begin(), sigma.end())};
}

PredictedTrajectory to_trajectory(const Array& rel, const TrajState& origin) {
  PredictedTrajectory out;
  out.states.reserve(rel.rows());
  for (std::size_t r = 0; r < rel.rows(); ++r) {
    out.states.push_back({origin.x + rel(r, 0), origin.y + rel(r, 1), origin.z + rel(r, 2),
                          rel(r, 3), rel(r, 4)});
  }
  return out;
}

}  // namespace

LatentGaussian ImmModel::encode_prior(const TrajectoryHistory& history) const {
  Tape tape(false);
  ImmModel& self = const_cast<ImmModel&>(*this);
  return to_gaussian(tape, self.encode_history(tape, history).prior);
}

LatentGaussian ImmModel::encode_posterior(const TrajectoryHistory& history,
                                          const PredictedTrajectory& future) const {
  Tape tape(false);
  ImmModel& self = const_cast<ImmModel&>(*this);
  return to_gaussian(tape, self.encode_posterior(tape, history, future.states));
}

PredictedTrajectory ImmModel::decode_autoregressive(const TrajectoryHistory& history,
                                                    std::span<const double> z,
                                                    std::size_t steps) const {
  if (steps < 1) throw InvalidInput("decode_autoregressive: steps must be at least 1");
  Tape tape(false);
  ImmModel& self = const_cast<ImmModel&>(*this);
  const HistoryEncoding enc = self.encode_history(tape, history);
  const Var zv = tape.constant(Array::row(z));
  const Var rel = self.decode(tape, history, enc, zv, steps);
  return to_trajectory(tape.value(rel), history.last());
}

Box3D ImmModel::predict_global_proposal(const TrajectoryHistory& history,
                                        const ProposalOptions& options,
                                        std::span<const std::vector<double>> noise) const {
  Tape tape(false);
  ImmModel& self = const_cast<ImmModel&>(*this);
  const HistoryEncoding enc = self.encode_history(tape, history);
  const TrajState& origin = history.last();

  if (options.mode == ProposalMode::kDeterministic) {
    // Causal decoding: the first state does not depend on later steps.
    const Var rel = self.decode(tape, history, enc, enc.prior.mu, 1);
    return to_trajectory(tape.value(rel), origin).states.front().to_box(history.reference_box());
  }

  if (options.k_samples < 1 || noise.size() != options.k_samples) {
    throw InvalidInput("predict_global_proposal: expected " + std::to_string(options.k_samples) +
                       " noise vectors, got " + std::to_string(noise.size()));
  }
  const LatentGaussian prior = to_gaussian(tape, enc.prior);
  double sx = 0.0, sy = 0.0, sz = 0.0, ss = 0.0, sc = 0.0;
  for (const auto& eps : noise) {
    const std::vector<double> z = sample_latent(prior, eps);
    const Var rel = self.decode(tape, history, enc, tape.constant(Array::row(z)), 1);
    const Array& r = tape.value(rel);
    sx += r(0, 0);
    sy += r(0, 1);
    sz += r(0, 2);
    ss += r(0, 3);
    sc += r(0, 4);
  }
  const double k = static_cast<double>(noise.size());
  Box3D box = history.reference_box();
  box.x = origin.x + sx / k;
  box.y = origin.y + sy / k;
  box.z = origin.z + sz / k;
  box.theta = wrap_angle(std::atan2(ss, sc));
  return box;
}

}  // namespace trajtrack
