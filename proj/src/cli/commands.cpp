#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "trajtrack/cli.hpp"
#include "trajtrack/config.hpp"
#include "trajtrack/errors.hpp"
#include "trajtrack/text_format.hpp"

namespace trajtrack {

namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config;
  std::string data;
  std::string model;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string base_tracker;
  std::optional<double> lambda_gate;
  std::optional<std::size_t> k_samples;
  std::optional<std::size_t> threads;
};

std::string default_output_dir() {
  const char* env = std::getenv("TRAJTRACK_OUT");
  return env != nullptr && *env != '\0' ? env : "trajtrack_out";
}

std::string in_dir(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  return f;
}

void close_out(std::ofstream& f, const std::string& path) {
  f.flush();
  if (!f) throw IoError("failed writing '" + path + "'");
}

RunConfig resolve_config(const Overrides& o, const std::string& command) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (!o.out.empty()) c.output_dir = o.out;
  if (c.output_dir.empty()) c.output_dir = default_output_dir();
  if (!o.model.empty()) c.model_path = o.model;
  if (!o.base_tracker.empty()) c.tracker.variant = parse_tracker_variant(o.base_tracker);
  if (o.lambda_gate) c.refinement.iou_threshold = *o.lambda_gate;
  if (o.k_samples) {
    c.proposal.k_samples = *o.k_samples;
    c.proposal.mode = *o.k_samples > 1 ? ProposalMode::kSampled : ProposalMode::kDeterministic;
  }
  if (o.threads) c.eval.threads = *o.threads;
  if (o.seed) {
    if (command == "simulate") c.simulation.seed = *o.seed;
    if (command == "train") c.train.seed = *o.seed;
    if (command == "eval" || command == "track") c.eval.seed = *o.seed;
  }
  if (!o.data.empty()) {
    if (command == "train") c.train_data = o.data;
    if (command == "eval" || command == "track" || command == "report") c.val_data = o.data;
  }
  c.validate();
  return c;
}

std::vector<SequenceRecord> read_sequences(const std::string& path) {
  if (!fs::exists(path)) throw IoError("dataset '" + path + "' does not exist");
  return load_dataset(path);
}

// --- simulate ---------------------------------------------------------------------

void cmd_simulate(const RunConfig& c, std::ostream& out) {
  const SimulatedSplit split = simulate_split(c.simulation);
  ensure_dir(c.output_dir);
  const std::string train_path = c.train_data.empty() ? in_dir(c.output_dir, "train.jsonl") : c.train_data;
  const std::string val_path = c.val_data.empty() ? in_dir(c.output_dir, "val.jsonl") : c.val_data;
  save_dataset(split.train, train_path);
  save_dataset(split.val, val_path);
  out << "train " << split.train.size() << " sequences -> " << train_path << '\n';
  out << "val " << split.val.size() << " sequences -> " << val_path << '\n';
}

// --- train ------------------------------------------------------------------------

void cmd_train(const RunConfig& c, std::ostream& out) {
  const std::string data = c.train_data.empty() ? in_dir(c.output_dir, "train.jsonl") : c.train_data;
  const std::vector<SequenceRecord> sequences = read_sequences(data);
  std::vector<TrainingWindow> windows_all;
  for (const auto& s : sequences) {
    auto w = windows(s, c.model.history_len, c.model.horizon);
    std::move(w.begin(), w.end(), std::back_inserter(windows_all));
  }
  if (windows_all.empty()) {
    throw InvalidInput("dataset '" + data + "' has no sequence long enough for H + T = " +
                       std::to_string(c.model.history_len + c.model.horizon) + " frames");
  }
  out << "training on " << windows_all.size() << " windows from " << sequences.size()
      << " sequences\n";
  ImmModel model(c.model, c.model_seed);
  const TrainResult result = train(model, windows_all, c.train, [&](const EpochLoss& e) {
    out << "epoch " << e.epoch << " total " << format_number(e.total) << " recon "
        << format_number(e.recon) << " kl " << format_number(e.kl) << '\n';
    out.flush();
  });

  ensure_dir(c.output_dir);
  const std::string model_path = c.model_path.empty() ? in_dir(c.output_dir, "model.txt") : c.model_path;
  save_model(model, model_path);
  const std::string log_path = in_dir(c.output_dir, "loss_log.csv");
  auto log = open_out(log_path);
  write_loss_log(log, result.log);
  close_out(log, log_path);
  out << "model -> " << model_path << "\nloss log -> " << log_path << '\n';
}

// --- eval / track -------------------------------------------------------------------

std::optional<ImmModel> maybe_model(const std::string& path) {
  if (path.empty()) return std::nullopt;
  if (!fs::exists(path)) throw IoError("model '" + path + "' does not exist");
  return load_model(path);
}

TrackOptions track_options(const RunConfig& c) {
  return {c.tracker, c.refinement, c.proposal};
}

void write_trace_file(const std::string& path, const std::vector<SequenceRecord>& seqs,
                      const std::vector<SequenceResult>& results) {
  auto f = open_out(path);
  write_trace_header(f);
  for (std::size_t i = 0; i < seqs.size(); ++i) write_traces(f, seqs[i].sequence_id, results[i].traces);
  close_out(f, path);
}

void cmd_eval(const RunConfig& c, std::ostream& out) {
  const std::string data = c.val_data.empty() ? in_dir(c.output_dir, "val.jsonl") : c.val_data;
  const std::vector<SequenceRecord> seqs = read_sequences(data);
  const std::optional<ImmModel> model = maybe_model(c.model_path);
  const TrackOptions options = track_options(c);
  ensure_dir(c.output_dir);

  const auto baseline = track_sequences(seqs, nullptr, options, c.eval.seed, c.eval.threads);
  std::vector<SequenceResult> refined;
  if (model) refined = track_sequences(seqs, &*model, options, c.eval.seed, c.eval.threads);

  const std::string seq_path = in_dir(c.output_dir, "eval_sequences.csv");
  auto per_seq = open_out(seq_path);
  per_seq << "sequence_id,frames,baseline_success,baseline_precision";
  if (model) per_seq << ",refined_success,refined_precision,delta_success,delta_precision";
  per_seq << '\n';
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const TrackReport& b = baseline[i].report;
    per_seq << b.sequence_id << ',' << b.frames.size() << ',' << format_number(b.success) << ','
            << format_number(b.precision);
    if (model) {
      const TrackReport& r = refined[i].report;
      per_seq << ',' << format_number(r.success) << ',' << format_number(r.precision) << ','
              << format_number(r.success - b.success) << ','
              << format_number(r.precision - b.precision);
    }
    per_seq << '\n';
  }
  close_out(per_seq, seq_path);

  const std::string summary_path = in_dir(c.output_dir, "eval_summary.csv");
  auto summary = open_out(summary_path);
  summary << (model ? "metric,baseline,refined,delta\n" : "metric,baseline\n");
  AggregateScores base_scores, ref_scores;
  if (!seqs.empty()) base_scores = aggregate_results(baseline);
  if (model && !seqs.empty()) ref_scores = aggregate_results(refined);
  auto row = [&](const char* name, double b, double r) {
    summary << name << ',' << format_number(b);
    if (model) summary << ',' << format_number(r) << ',' << format_number(r - b);
    summary << '\n';
    out << name << ": baseline " << format_number(b);
    if (model) out << " refined " << format_number(r) << " delta " << format_number(r - b);
    out << '\n';
  };
  row("success", base_scores.success, ref_scores.success);
  row("precision", base_scores.precision, ref_scores.precision);
  close_out(summary, summary_path);

  write_trace_file(in_dir(c.output_dir, "traces_baseline.csv"), seqs, baseline);
  if (model) write_trace_file(in_dir(c.output_dir, "traces_refined.csv"), seqs, refined);
  out << "reports -> " << c.output_dir << '\n';
}

void cmd_track(const RunConfig& c, std::ostream& out) {
  const std::string data = c.val_data.empty() ? in_dir(c.output_dir, "val.jsonl") : c.val_data;
  const std::vector<SequenceRecord> seqs = read_sequences(data);
  const std::optional<ImmModel> model = maybe_model(c.model_path);
  ensure_dir(c.output_dir);
  const auto results =
      track_sequences(seqs, model ? &*model : nullptr, track_options(c), c.eval.seed, c.eval.threads);
  std::vector<TrackReport> reports;
  for (const auto& r : results) reports.push_back(r.report);
  const std::string report_path = in_dir(c.output_dir, "track_report.csv");
  auto f = open_out(report_path);
  write_report_table(f, reports);
  close_out(f, report_path);
  write_trace_file(in_dir(c.output_dir, "track_traces.csv"), seqs, results);
  if (!reports.empty()) {
    const AggregateScores s = aggregate_reports(reports);
    out << "success " << format_number(s.success) << " precision " << format_number(s.precision)
        << " over " << s.frames << " frames\n";
  }
}

// --- report -------------------------------------------------------------------------

struct TraceRow {
  std::string sequence_id;
  bool occluded = false;
  std::optional<double> gate_iou;
  double iou = 0.0;
  double center_error = 0.0;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::vector<TraceRow> read_traces(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open traces '" + path + "'");
  std::string line;
  std::size_t n = 1;
  if (!std::getline(in, line)) throw FormatError(1, "missing trace header");
  const auto header = split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"sequence_id", "occluded", "gate_iou", "iou", "center_error"}) {
    if (!col.count(need)) throw FormatError(1, std::string("trace header lacks ") + need);
  }
  std::vector<TraceRow> rows;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw FormatError(n, "wrong number of trace columns");
    try {
      TraceRow r;
      r.sequence_id = cells[col["sequence_id"]];
      r.occluded = cells[col["occluded"]] == "1";
      const std::string& g = cells[col["gate_iou"]];
      if (!g.empty()) r.gate_iou = parse_number(g);
      r.iou = parse_number(cells[col["iou"]]);
      r.center_error = parse_number(cells[col["center_error"]]);
      rows.push_back(std::move(r));
    } catch (const InvalidInput& e) {
      throw FormatError(n, e.what());
    }
  }
  return rows;
}

void cmd_report(const RunConfig& c, std::ostream& out) {
  const std::string path = c.val_data.empty() ? in_dir(c.output_dir, "traces_refined.csv") : c.val_data;
  if (!fs::exists(path)) throw IoError("traces '" + path + "' do not exist");
  const std::vector<TraceRow> rows = read_traces(path);
  ensure_dir(c.output_dir);

  // Per-sequence occlusion fraction, assigned to the nearest configured rate.
  std::vector<std::string> order;
  std::map<std::string, std::vector<const TraceRow*>> by_seq;
  for (const auto& r : rows) {
    auto& v = by_seq[r.sequence_id];
    if (v.empty()) order.push_back(r.sequence_id);
    v.push_back(&r);
  }
  const auto& grid = c.report.occlusion_rates;
  std::vector<std::vector<FrameResult>> grouped(grid.size());
  std::vector<std::size_t> seq_count(grid.size(), 0);
  if (!grid.empty()) {
    for (const auto& id : order) {
      const auto& frames = by_seq[id];
      double occluded = 0.0;
      for (const TraceRow* r : frames) occluded += r->occluded ? 1.0 : 0.0;
      const double rate = occluded / static_cast<double>(frames.size());
      std::size_t best = 0;
      for (std::size_t g = 1; g < grid.size(); ++g) {
        if (std::abs(grid[g] - rate) < std::abs(grid[best] - rate)) best = g;
      }
      ++seq_count[best];
      for (const TraceRow* r : frames) grouped[best].push_back({0, r->iou, r->center_error});
    }
  }
  const std::string occ_path = in_dir(c.output_dir, "occlusion_curve.csv");
  auto occ = open_out(occ_path);
  occ << "occlusion_rate,sequences,frames,success,precision\n";
  for (std::size_t g = 0; g < grid.size(); ++g) {
    occ << format_number(grid[g]) << ',' << seq_count[g] << ',' << grouped[g].size() << ',';
    if (grouped[g].empty()) {
      occ << ",\n";
    } else {
      occ << format_number(success_score(grouped[g])) << ','
          << format_number(precision_score(grouped[g])) << '\n';
    }
  }
  close_out(occ, occ_path);

  // Gate IoU histogram; frames that were never gated get their own row.
  const std::size_t bins = c.report.histogram_bins;
  std::vector<std::size_t> counts(bins, 0);
  std::size_t ungated = 0;
  for (const auto& r : rows) {
    if (!r.gate_iou) {
      ++ungated;
      continue;
    }
    auto b = static_cast<std::size_t>(std::clamp(*r.gate_iou, 0.0, 1.0) * static_cast<double>(bins));
    counts[std::min(b, bins - 1)] += 1;
  }
  const std::string hist_path = in_dir(c.output_dir, "gate_histogram.csv");
  auto hist = open_out(hist_path);
  hist << "bin_low,bin_high,count\n";
  if (!rows.empty()) {
    for (std::size_t b = 0; b < bins; ++b) {
      hist << format_number(static_cast<double>(b) / static_cast<double>(bins)) << ','
           << format_number(static_cast<double>(b + 1) / static_cast<double>(bins)) << ','
           << counts[b] << '\n';
    }
    hist << "ungated,ungated," << ungated << '\n';
  }
  close_out(hist, hist_path);

  std::vector<FrameResult> all;
  for (const auto& r : rows) all.push_back({0, r.iou, r.center_error});
  const std::string sc_path = in_dir(c.output_dir, "success_curve.csv");
  const std::string pc_path = in_dir(c.output_dir, "precision_curve.csv");
  auto sc = open_out(sc_path);
  auto pc = open_out(pc_path);
  if (all.empty()) {
    write_curve(sc, {});
    write_curve(pc, {});
  } else {
    write_curve(sc, success_curve(all));
    write_curve(pc, precision_curve(all));
  }
  close_out(sc, sc_path);
  close_out(pc, pc_path);
  out << rows.size() << " trace rows from " << order.size() << " sequences -> " << c.output_dir
      << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trajectory-guided 3D single-object tracking", "trajtrack"};
  app.require_subcommand(1, 1);
  Overrides o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration");
    sub->add_option("--out", o.out, "output directory (default $TRAJTRACK_OUT or ./trajtrack_out)");
    sub->add_option("--seed", o.seed, "seed for this command");
  };
  auto add_tracking = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "validation dataset (JSONL)");
    sub->add_option("--model", o.model, "model checkpoint; omit for the base tracker alone");
    sub->add_option("--base-tracker", o.base_tracker, "cv or oracle")
        ->check(CLI::IsMember({"cv", "oracle"}));
    sub->add_option("--lambda-gate", o.lambda_gate, "refinement IoU gate");
    sub->add_option("--k-samples", o.k_samples, "latent samples per proposal (1 = deterministic)");
    sub->add_option("--threads", o.threads, "worker threads across sequences");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "write simulated train/val datasets");
  add_common(simulate);
  CLI::App* train_cmd = app.add_subcommand("train", "train the trajectory model");
  add_common(train_cmd);
  train_cmd->add_option("--data", o.data, "training dataset (JSONL)");
  train_cmd->add_option("--model", o.model, "checkpoint path to write");
  CLI::App* eval = app.add_subcommand("eval", "baseline vs refined tracking comparison");
  add_common(eval);
  add_tracking(eval);
  CLI::App* track = app.add_subcommand("track", "track every sequence and report scores");
  add_common(track);
  add_tracking(track);
  CLI::App* report = app.add_subcommand("report", "curves and histograms from a trace file");
  add_common(report);
  report->add_option("--data", o.data, "trace CSV (default <out>/traces_refined.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const RunConfig cfg = resolve_config(o, command);
    if (command == "simulate") cmd_simulate(cfg, out);
    if (command == "train") cmd_train(cfg, out);
    if (command == "eval") cmd_eval(cfg, out);
    if (command == "track") cmd_track(cfg, out);
    if (command == "report") cmd_report(cfg, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidInput& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace trajtrack
