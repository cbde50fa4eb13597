#include "trajtrack/metrics.hpp"

#include <algorithm>
#include <ostream>

#include "trajtrack/errors.hpp"
#include "trajtrack/text_format.hpp"

namespace trajtrack {

double success_score(std::span<const FrameResult> frames) {
  if (frames.empty()) throw InvalidInput("success_score: no frames");
  double sum = 0.0;
  for (const auto& f : frames) sum += std::clamp(f.iou, 0.0, 1.0);
  return 100.0 * sum / static_cast<double>(frames.size());
}

double precision_score(std::span<const FrameResult> frames) {
  if (frames.empty()) throw InvalidInput("precision_score: no frames");
  // Each frame is counted for thresholds t in [e, max], i.e. (max - e) / max of the sweep.
  double sum = 0.0;
  for (const auto& f : frames) {
    const double e = std::clamp(f.center_error, 0.0, kPrecisionMaxDistance);
    sum += (kPrecisionMaxDistance - e) / kPrecisionMaxDistance;
  }
  return 100.0 * sum / static_cast<double>(frames.size());
}

TrackReport make_report(std::string sequence_id, std::vector<FrameResult> frames) {
  TrackReport report;
  report.sequence_id = std::move(sequence_id);
  report.success = success_score(frames);
  report.precision = precision_score(frames);
  report.frames = std::move(frames);
  return report;
}

AggregateScores aggregate_reports(std::span<const TrackReport> reports) {
  if (reports.empty()) throw InvalidInput("aggregate_reports: no reports");
  AggregateScores out;
  double s = 0.0;
  double p = 0.0;
  for (const auto& r : reports) {
    const auto n = static_cast<double>(r.frames.size());
    s += n * r.success;
    p += n * r.precision;
    out.frames += r.frames.size();
  }
  if (out.frames == 0) throw InvalidInput("aggregate_reports: reports hold no frames");
  out.success = s / static_cast<double>(out.frames);
  out.precision = p / static_cast<double>(out.frames);
  return out;
}

std::vector<CurvePoint> success_curve(std::span<const FrameResult> frames, std::size_t points) {
  std::vector<CurvePoint> curve;
  if (points < 2) points = 2;
  for (std::size_t i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    std::size_t hits = 0;
    for (const auto& f : frames) hits += f.iou >= t ? 1 : 0;
    curve.push_back({t, frames.empty() ? 0.0 : static_cast<double>(hits) / frames.size()});
  }
  return curve;
}

std::vector<CurvePoint> precision_curve(std::span<const FrameResult> frames, std::size_t points) {
  std::vector<CurvePoint> curve;
  if (points < 2) points = 2;
  for (std::size_t i = 0; i < points; ++i) {
    const double t = kPrecisionMaxDistance * static_cast<double>(i) / static_cast<double>(points - 1);
    std::size_t hits = 0;
    for (const auto& f : frames) hits += f.center_error <= t ? 1 : 0;
    curve.push_back({t, frames.empty() ? 0.0 : static_cast<double>(hits) / frames.size()});
  }
  return curve;
}

void write_report_table(std::ostream& out, std::span<const TrackReport> reports) {
  out << "sequence_id,frames,success,precision\n";
  for (const auto& r : reports) {
    out << r.sequence_id << ',' << r.frames.size() << ',' << format_number(r.success) << ','
        << format_number(r.precision) << '\n';
  }
}

void write_curve(std::ostream& out, std::span<const CurvePoint> curve) {
  out << "threshold,fraction\n";
  for (const auto& p : curve) out << format_number(p.threshold) << ',' << format_number(p.fraction) << '\n';
}

}  // namespace trajtrack
