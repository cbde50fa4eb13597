#pragma once

#include <optional>

#include "trajtrack/geometry.hpp"
#include "trajtrack/imm.hpp"
#include "trajtrack/random.hpp"

namespace trajtrack {

enum class BaseTrackerVariant { kConstantVelocity, kNoisyOracle };

struct BaseTrackerKind {
  BaseTrackerVariant variant = BaseTrackerVariant::kNoisyOracle;
  double noise_sigma = 0.15;    // meters, planar
  double failure_rate = 0.2;    // oracle only
  double failure_offset = 3.0;  // meters, oracle only

  void validate() const;
  friend bool operator==(const BaseTrackerKind&, const BaseTrackerKind&) = default;
};

/// What the base tracker can see of the current frame.
struct Observation {
  std::optional<Box3D> gt;
  bool occluded = false;
};

/// Local-aware proposal for the current frame.
///
/// Constant velocity: when the target is visible (gt given, not occluded) the
/// proposal is the measured box, ground truth plus planar Gaussian noise.
/// Otherwise it coasts: the last inter-frame displacement of `history` is
/// applied to the last state (zero motion with a single state).
///
/// Noisy oracle: ground truth plus planar noise; on failure (occluded frame,
/// or with probability failure_rate) the center is also pushed failure_offset
/// meters in a uniformly random planar direction.
///
/// Every call consumes the same number of draws from `rng`, so two runs on the
/// same seed stay aligned frame by frame. Sizes always come from the
/// history's reference box.
Box3D propose_local(const BaseTrackerKind& tracker, const TrajectoryHistory& history,
                    const Observation& observation, RandomStream& rng);

}  // namespace trajtrack
