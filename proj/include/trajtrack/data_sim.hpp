#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "trajtrack/imm.hpp"
#include "trajtrack/sequence.hpp"

namespace trajtrack {

enum class ScenarioKind { kConstantVelocity, kConstantAcceleration, kTurn, kStopAndGo };

const char* to_string(ScenarioKind kind);
/// Accepts cv, ca, turn and stop-and-go.
ScenarioKind parse_scenario_kind(const std::string& text);

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::kConstantVelocity;
  std::size_t duration = 40;  // frames
  double dt = 0.5;            // seconds per frame
  double speed = 5.0;         // m/s at t = 0
  double turn_rate = 0.0;     // rad/s, turn only
  double acceleration = 0.0;  // m/s^2, constant-acceleration only; speed is clamped at 0
  double stop_period = 8.0;   // seconds, stop-and-go only
  double noise_sigma = 0.0;   // planar jitter on the reported centers (meters)
  double heading_jitter = 0.0;  // radians; nonzero for pedestrian-like targets
  Box3D start{0.0, 0.0, 0.0, 1.6, 1.9, 4.5, 0.0};
  std::uint64_t seed = 0;
  std::string sequence_id = "seq";

  void validate() const;
};

/// Noise-free pose at time t (seconds) for the configured motion model.
Box3D scenario_pose(const ScenarioConfig& cfg, double t);

/// Kinematic rollout with heading along the velocity, plus seeded planar jitter.
SequenceRecord generate_scenario(const ScenarioConfig& cfg);

/// Flags contiguous bursts of `burst_len` frames so that the expected flagged
/// fraction equals `rate`. Frame 0 is never flagged.
SequenceRecord mark_occlusions(SequenceRecord seq, double rate, std::size_t burst_len,
                               std::uint64_t seed);

/// Reflection about the x axis (y -> -y, theta -> -theta).
SequenceRecord mirror_sequence(SequenceRecord seq);

struct TrainingWindow {
  TrajectoryHistory history;
  std::vector<TrajState> future;
  std::size_t first_frame = 0;  // frame of the first history state
};

/// Every (H history, T future) window; empty when the sequence is shorter
/// than H + T. With `translate_to_origin` the last history position is moved
/// to the origin.
std::vector<TrainingWindow> windows(const SequenceRecord& seq, std::size_t history_len,
                                    std::size_t horizon, bool translate_to_origin = false);

/// Recipe for a simulated train/validation split.
struct SimulationConfig {
  std::size_t train_sequences = 700;
  std::size_t val_sequences = 150;
  std::size_t frames = 40;
  double dt = 0.5;
  double noise_sigma = 0.1;
  std::vector<ScenarioKind> kinds{ScenarioKind::kConstantVelocity, ScenarioKind::kTurn,
                                  ScenarioKind::kStopAndGo};
  double min_speed = 1.0;
  double max_speed = 8.0;
  double max_turn_rate = 0.5;
  double max_acceleration = 1.0;
  double pedestrian_fraction = 0.0;
  double occlusion_rate = 0.0;  // applied to validation sequences
  std::size_t occlusion_burst = 3;
  bool mirror_augment = false;  // appends a mirrored copy of every training sequence
  std::uint64_t seed = 7;

  void validate() const;
};

/// The scenario drawn for sequence `index` of a split.
ScenarioConfig sample_scenario(const SimulationConfig& cfg, std::uint64_t split_seed,
                               std::size_t index, const std::string& sequence_id);

struct SimulatedSplit {
  std::vector<SequenceRecord> train;
  std::vector<SequenceRecord> val;
};

SimulatedSplit simulate_split(const SimulationConfig& cfg);

/// One JSON object per line; see docs/formats.md.
void save_dataset(const std::vector<SequenceRecord>& records, std::ostream& out);
void save_dataset(const std::vector<SequenceRecord>& records, const std::string& path);
std::vector<SequenceRecord> load_dataset(std::istream& in);
std::vector<SequenceRecord> load_dataset(const std::string& path);

}  // namespace trajtrack
