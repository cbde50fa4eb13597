#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace trajtrack {

struct FrameResult {
  std::size_t frame_index = 0;
  double iou = 0.0;           // [0, 1]
  double center_error = 0.0;  // meters
};

struct TrackReport {
  std::string sequence_id;
  std::vector<FrameResult> frames;
  double success = 0.0;    // percent
  double precision = 0.0;  // percent
};

struct AggregateScores {
  double success = 0.0;
  double precision = 0.0;
  std::size_t frames = 0;
};

/// Upper end of the center-error sweep used by Precision (meters).
inline constexpr double kPrecisionMaxDistance = 2.0;

/// Area under the success (overlap) curve, in percent. With a continuous
/// threshold sweep over [0, 1] this equals 100 * mean IoU.
double success_score(std::span<const FrameResult> frames);

/// Area under the precision curve over [0, kPrecisionMaxDistance], in percent.
double precision_score(std::span<const FrameResult> frames);

TrackReport make_report(std::string sequence_id, std::vector<FrameResult> frames);

/// Frame-count weighted means over several sequences.
AggregateScores aggregate_reports(std::span<const TrackReport> reports);

struct CurvePoint {
  double threshold = 0.0;
  double fraction = 0.0;
};

/// Fraction of frames with IoU >= t, sampled at `points` evenly spaced t in [0, 1].
std::vector<CurvePoint> success_curve(std::span<const FrameResult> frames, std::size_t points = 101);
/// Fraction of frames with center error <= t for t in [0, kPrecisionMaxDistance].
std::vector<CurvePoint> precision_curve(std::span<const FrameResult> frames,
                                        std::size_t points = 101);

/// Writes `sequence_id,frames,success,precision` rows after a header line.
void write_report_table(std::ostream& out, std::span<const TrackReport> reports);
void write_curve(std::ostream& out, std::span<const CurvePoint> curve);

}  // namespace trajtrack
