#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "trajtrack/data_sim.hpp"
#include "trajtrack/explicit_tracker.hpp"
#include "trajtrack/imm.hpp"
#include "trajtrack/refinement.hpp"
#include "trajtrack/training.hpp"

namespace trajtrack {

struct EvalConfig {
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

struct ReportConfig {
  std::vector<double> occlusion_rates{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::size_t histogram_bins = 20;
};

/// Everything a command needs; loaded from one JSON file, then overridden by flags.
struct RunConfig {
  ImmConfig model{};
  std::uint64_t model_seed = 1;  // weight initialization
  RefinementConfig refinement{};
  ProposalOptions proposal{};
  TrainConfig train{};
  BaseTrackerKind tracker{};
  SimulationConfig simulation{};
  EvalConfig eval{};
  ReportConfig report{};
  std::string train_data;  // empty: <output_dir>/train.jsonl
  std::string val_data;    // empty: <output_dir>/val.jsonl
  std::string model_path;  // empty: <output_dir>/model.txt for train, none for eval
  std::string output_dir;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

/// Parses a nested JSON config. Unknown keys are errors; missing keys keep defaults.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
/// Full config as pretty-printed JSON (every key present).
std::string dump_run_config(const RunConfig& cfg);

const char* to_string(BaseTrackerVariant v);
BaseTrackerVariant parse_tracker_variant(const std::string& text);  // cv | oracle
const char* to_string(WarmupMode m);
WarmupMode parse_warmup_mode(const std::string& text);  // local-only | cv-fill
const char* to_string(ProposalMode m);
ProposalMode parse_proposal_mode(const std::string& text);  // deterministic | sampled

}  // namespace trajtrack
