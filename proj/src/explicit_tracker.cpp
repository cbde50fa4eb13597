#include "trajtrack/explicit_tracker.hpp"

#include <cmath>
#include <numbers>

#include "trajtrack/errors.hpp"

namespace trajtrack {

void BaseTrackerKind::validate() const {
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("tracker: noise_sigma must be a non-negative number");
  }
  if (!(failure_rate >= 0.0 && failure_rate <= 1.0)) {
    throw ConfigError("tracker: failure_rate must lie in [0, 1]");
  }
  if (!(failure_offset >= 0.0) || !std::isfinite(failure_offset)) {
    throw ConfigError("tracker: failure_offset must be a non-negative number");
  }
}

namespace {

Box3D coast(const TrajectoryHistory& history) {
  const auto s = history.states();
  const Box3D last = history.last_box();
  if (s.size() < 2) return last;
  const TrajState& a = s[s.size() - 2];
  const TrajState& b = s.back();
  const MotionDelta delta{b.x - a.x, b.y - a.y, b.z - a.z, wrap_angle(b.heading() - a.heading())};
  return apply_motion(last, delta);
}

}  // namespace

Box3D propose_local(const BaseTrackerKind& tracker, const TrajectoryHistory& history,
                    const Observation& observation, RandomStream& rng) {
  if (history.empty()) throw InvalidInput("propose_local: empty history");
  const double nx = rng.normal();
  const double ny = rng.normal();
  const double u = rng.uniform();
  const double phi = 2.0 * std::numbers::pi * rng.uniform();

  const bool visible = observation.gt.has_value() && !observation.occluded;
  if (tracker.variant == BaseTrackerVariant::kConstantVelocity) {
    if (!visible) return coast(history);
    Box3D box = history.reference_box();
    box.x = observation.gt->x + tracker.noise_sigma * nx;
    box.y = observation.gt->y + tracker.noise_sigma * ny;
    box.z = observation.gt->z;
    box.theta = wrap_angle(observation.gt->theta);
    return box;
  }

  if (!observation.gt) throw InvalidInput("propose_local: the noisy oracle needs ground truth");
  const Box3D& gt = *observation.gt;
  Box3D box = history.reference_box();
  box.x = gt.x + tracker.noise_sigma * nx;
  box.y = gt.y + tracker.noise_sigma * ny;
  box.z = gt.z;
  box.theta = wrap_angle(gt.theta);
  if (observation.occluded || u < tracker.failure_rate) {
    box.x += tracker.failure_offset * std::cos(phi);
    box.y += tracker.failure_offset * std::sin(phi);
  }
  return box;
}

}  // namespace trajtrack
