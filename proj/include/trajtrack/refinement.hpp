#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "trajtrack/explicit_tracker.hpp"
#include "trajtrack/imm.hpp"
#include "trajtrack/metrics.hpp"
#include "trajtrack/sequence.hpp"

namespace trajtrack {

enum class WarmupMode {
  kLocalOnly,  // the model sees the short history as is
  kCvFill,     // short histories are back-filled to H states at constant velocity
};

struct RefinementConfig {
  double iou_threshold = 0.3;  // gate: local is kept when BEV IoU >= threshold
  std::size_t history_len = 10;
  WarmupMode warmup_mode = WarmupMode::kCvFill;

  /// Thresholds up to kMaxGate are accepted so the always-global boundary can be exercised.
  static constexpr double kMaxGate = 1.0 + 1e-6;
  void validate() const;
  friend bool operator==(const RefinementConfig&, const RefinementConfig&) = default;
};

enum class ProposalSource { kLocal, kGlobal };

struct TrackerOutput {
  Box3D final_box{};
  Box3D local_box{};
  std::optional<Box3D> global_box;
  std::optional<double> gate_iou;
  ProposalSource source = ProposalSource::kLocal;
};

/// Keeps `local` when bev_iou(local, global) >= cfg.iou_threshold, else takes `global`.
TrackerOutput refine(const Box3D& local, const Box3D& global, const RefinementConfig& cfg);

struct FrameTrace {
  std::size_t frame = 0;
  bool occluded = false;
  TrackerOutput output;
  double iou = 0.0;
  double center_error = 0.0;
};

struct SequenceResult {
  TrackReport report;
  std::vector<FrameTrace> traces;  // frames 1 .. n-1
};

struct TrackOptions {
  BaseTrackerKind tracker{};
  RefinementConfig refinement{};
  ProposalOptions proposal{};
};

/// One-pass tracking of `sequence` from its first ground-truth box. The
/// history holds final (refined) boxes; frame 0 is the initialization and is
/// not scored. With `model == nullptr` the base tracker runs alone.
SequenceResult track_sequence(const SequenceRecord& sequence, const ImmModel* model,
                              const TrackOptions& options, std::uint64_t seed);

/// Tracks every sequence with seed derive_seed(seed, index); `threads` > 1
/// spreads sequences over worker threads without changing any result.
std::vector<SequenceResult> track_sequences(std::span<const SequenceRecord> sequences,
                                            const ImmModel* model, const TrackOptions& options,
                                            std::uint64_t seed, std::size_t threads = 1);

/// Frame-weighted Success/Precision over a batch of results.
AggregateScores aggregate_results(std::span<const SequenceResult> results);

/// The history the model is given under `mode`; cv-fill extends a history of
/// 2 .. H-1 states backwards at its earliest velocity until it holds H states.
TrajectoryHistory model_history(const TrajectoryHistory& history, WarmupMode mode);

/// Header plus one row per traced frame.
void write_trace_header(std::ostream& out);
void write_traces(std::ostream& out, const std::string& sequence_id,
                  std::span<const FrameTrace> traces);

}  // namespace trajtrack
