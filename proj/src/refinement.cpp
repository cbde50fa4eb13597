#include "trajtrack/refinement.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

#include "trajtrack/errors.hpp"
#include "trajtrack/text_format.hpp"

namespace trajtrack {

void RefinementConfig::validate() const {
  if (!(iou_threshold >= 0.0 && iou_threshold <= kMaxGate)) {
    throw ConfigError("refinement: iou_threshold must lie in [0, 1]");
  }
  if (history_len < 2) throw ConfigError("refinement: history_len must be at least 2");
}

TrackerOutput refine(const Box3D& local, const Box3D& global, const RefinementConfig& cfg) {
  TrackerOutput out;
  out.local_box = local;
  out.global_box = global;
  const double g = bev_iou(local, global);
  out.gate_iou = g;
  if (g >= cfg.iou_threshold) {
    out.source = ProposalSource::kLocal;
    out.final_box = local;
  } else {
    out.source = ProposalSource::kGlobal;
    out.final_box = global;
  }
  return out;
}

TrajectoryHistory model_history(const TrajectoryHistory& history, WarmupMode mode) {
  const auto s = history.states();
  if (mode == WarmupMode::kLocalOnly || s.size() < 2 || s.size() >= history.capacity()) {
    return history;
  }
  const std::size_t missing = history.capacity() - s.size();
  const double span = static_cast<double>(s.size() - 1);
  const double vx = (s.back().x - s[0].x) / span;
  const double vy = (s.back().y - s[0].y) / span;
  const double vz = (s.back().z - s[0].z) / span;
  TrajectoryHistory filled(history.reference_box(), history.capacity());
  for (std::size_t k = missing; k > 0; --k) {
    TrajState st = s[0];
    const double back = static_cast<double>(k);
    st.x -= back * vx;
    st.y -= back * vy;
    st.z -= back * vz;
    filled.push(st);
  }
  for (const auto& st : s) filled.push(st);
  return filled;
}

SequenceResult track_sequence(const SequenceRecord& sequence, const ImmModel* model,
                              const TrackOptions& options, std::uint64_t seed) {
  if (sequence.frames.size() < 2) {
    throw InvalidInput("track_sequence: sequence '" + sequence.sequence_id +
                       "' needs at least 2 frames");
  }
  options.tracker.validate();
  options.refinement.validate();

  const Box3D initial = normalized(sequence.frames.front().box);
  validate(initial);
  TrajectoryHistory history(initial, options.refinement.history_len);
  history.push(initial);

  RandomStream tracker_rng(derive_seed(seed, 0));
  RandomStream latent_rng(derive_seed(seed, 1));
  const bool sampled = options.proposal.mode == ProposalMode::kSampled;
  std::vector<std::vector<double>> noise;

  SequenceResult result;
  std::vector<FrameResult> frames;
  frames.reserve(sequence.frames.size() - 1);
  result.traces.reserve(sequence.frames.size() - 1);

  for (std::size_t t = 1; t < sequence.frames.size(); ++t) {
    const FrameRecord& rec = sequence.frames[t];
    const Box3D gt = normalized(rec.box);
    const Box3D local = propose_local(options.tracker, history, {gt, rec.occluded}, tracker_rng);

    TrackerOutput out;
    if (model != nullptr && history.size() >= 2) {
      const TrajectoryHistory input = model_history(history, options.refinement.warmup_mode);
      if (sampled) {
        noise.assign(options.proposal.k_samples,
                     std::vector<double>(model->config().latent_dim, 0.0));
        for (auto& v : noise) {
          for (auto& x : v) x = latent_rng.normal();
        }
      }
      const Box3D global = model->predict_global_proposal(input, options.proposal, noise);
      out = refine(local, global, options.refinement);
    } else {
      out.local_box = local;
      out.final_box = local;
      out.source = ProposalSource::kLocal;
    }
    history.push(out.final_box);

    FrameTrace trace;
    trace.frame = rec.frame;
    trace.occluded = rec.occluded;
    trace.output = out;
    trace.iou = iou_3d(out.final_box, gt);
    trace.center_error = center_distance(out.final_box, gt);
    frames.push_back({rec.frame, trace.iou, trace.center_error});
    result.traces.push_back(std::move(trace));
  }
  result.report = make_report(sequence.sequence_id, std::move(frames));
  return result;
}

std::vector<SequenceResult> track_sequences(std::span<const SequenceRecord> sequences,
                                            const ImmModel* model, const TrackOptions& options,
                                            std::uint64_t seed, std::size_t threads) {
  std::vector<SequenceResult> results(sequences.size());
  if (threads <= 1 || sequences.size() <= 1) {
    for (std::size_t i = 0; i < sequences.size(); ++i) {
      results[i] = track_sequence(sequences[i], model, options, derive_seed(seed, i));
    }
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < sequences.size(); i = next++) {
      try {
        results[i] = track_sequence(sequences[i], model, options, derive_seed(seed, i));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n = std::min(threads, sequences.size());
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

AggregateScores aggregate_results(std::span<const SequenceResult> results) {
  std::vector<TrackReport> reports;
  reports.reserve(results.size());
  for (const auto& r : results) reports.push_back(r.report);
  return aggregate_reports(reports);
}

void write_trace_header(std::ostream& out) {
  out << "sequence_id,frame,occluded,local_x,local_y,local_z,local_theta,global_x,global_y,"
         "global_z,global_theta,gate_iou,source,iou,center_error\n";
}

void write_traces(std::ostream& out, const std::string& sequence_id,
                  std::span<const FrameTrace> traces) {
  for (const auto& t : traces) {
    const Box3D& l = t.output.local_box;
    out << sequence_id << ',' << t.frame << ',' << (t.occluded ? 1 : 0) << ','
        << format_number(l.x) << ',' << format_number(l.y) << ',' << format_number(l.z) << ','
        << format_number(l.theta) << ',';
    if (t.output.global_box) {
      const Box3D& g = *t.output.global_box;
      out << format_number(g.x) << ',' << format_number(g.y) << ',' << format_number(g.z) << ','
          << format_number(g.theta) << ',' << format_number(*t.output.gate_iou) << ',';
    } else {
      out << ",,,,,";
    }
    out << (t.output.source == ProposalSource::kLocal ? "local" : "global") << ','
        << format_number(t.iou) << ',' << format_number(t.center_error) << '\n';
  }
}

}  // namespace trajtrack
