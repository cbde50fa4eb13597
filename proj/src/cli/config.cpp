#include "trajtrack/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "trajtrack/errors.hpp"

namespace trajtrack {

using nlohmann::json;
using nlohmann::ordered_json;

const char* to_string(BaseTrackerVariant v) {
  return v == BaseTrackerVariant::kConstantVelocity ? "cv" : "oracle";
}

BaseTrackerVariant parse_tracker_variant(const std::string& text) {
  if (text == "cv") return BaseTrackerVariant::kConstantVelocity;
  if (text == "oracle") return BaseTrackerVariant::kNoisyOracle;
  throw ConfigError("unknown base tracker '" + text + "' (expected cv or oracle)");
}

const char* to_string(WarmupMode m) { return m == WarmupMode::kLocalOnly ? "local-only" : "cv-fill"; }

WarmupMode parse_warmup_mode(const std::string& text) {
  if (text == "local-only") return WarmupMode::kLocalOnly;
  if (text == "cv-fill") return WarmupMode::kCvFill;
  throw ConfigError("unknown warmup mode '" + text + "' (expected local-only or cv-fill)");
}

const char* to_string(ProposalMode m) {
  return m == ProposalMode::kDeterministic ? "deterministic" : "sampled";
}

ProposalMode parse_proposal_mode(const std::string& text) {
  if (text == "deterministic") return ProposalMode::kDeterministic;
  if (text == "sampled") return ProposalMode::kSampled;
  throw ConfigError("unknown proposal mode '" + text + "' (expected deterministic or sampled)");
}

void RunConfig::validate() const {
  model.validate();
  refinement.validate();
  train.validate();
  tracker.validate();
  simulation.validate();
  if (proposal.k_samples < 1) throw ConfigError("proposal: k_samples must be at least 1");
  if (eval.threads < 1) throw ConfigError("eval: threads must be at least 1");
  if (report.histogram_bins < 1) throw ConfigError("report: histogram_bins must be at least 1");
  for (double r : report.occlusion_rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("report: occlusion rates must lie in [0, 1]");
  }
}

namespace {

// Reads typed fields out of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key " + path_ + "." + key);
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!it->is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config key " + path_ + "." + key + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section top(root, "config");
  top.read("train_data", c.train_data);
  top.read("val_data", c.val_data);
  top.read("model_path", c.model_path);
  top.read("output_dir", c.output_dir);
  if (const json* j = top.child("model")) {
    Section s(*j, "model");
    s.read("d_model", c.model.former.d_model);
    s.read("n_heads", c.model.former.n_heads);
    s.read("n_layers", c.model.former.n_layers);
    s.read("d_ffn", c.model.former.d_ffn);
    s.read("max_len", c.model.former.max_len);
    s.read("history_len", c.model.history_len);
    s.read("horizon", c.model.horizon);
    s.read("latent_dim", c.model.latent_dim);
    s.read("head_hidden", c.model.head_hidden);
    s.read("displacement_scale", c.model.displacement_scale);
    s.read("init_seed", c.model_seed);
  }
  if (const json* j = top.child("refinement")) {
    Section s(*j, "refinement");
    s.read("iou_threshold", c.refinement.iou_threshold);
    s.read("history_len", c.refinement.history_len);
    std::string mode = to_string(c.refinement.warmup_mode);
    s.read("warmup_mode", mode);
    c.refinement.warmup_mode = parse_warmup_mode(mode);
  }
  if (const json* j = top.child("proposal")) {
    Section s(*j, "proposal");
    std::string mode = to_string(c.proposal.mode);
    s.read("mode", mode);
    c.proposal.mode = parse_proposal_mode(mode);
    s.read("k_samples", c.proposal.k_samples);
  }
  if (const json* j = top.child("train")) {
    Section s(*j, "train");
    s.read("epochs", c.train.epochs);
    s.read("batch_size", c.train.batch_size);
    s.read("learning_rate", c.train.learning_rate);
    s.read("loss_lambda", c.train.loss_lambda);
    s.read("kl_warmup_epochs", c.train.kl_warmup_epochs);
    s.read("beta1", c.train.beta1);
    s.read("beta2", c.train.beta2);
    s.read("epsilon", c.train.epsilon);
    s.read("weight_decay", c.train.weight_decay);
    s.read("seed", c.train.seed);
    if (const json* a = s.child("augment")) {
      Section sa(*a, "train.augment");
      sa.read("noise_sigma", c.train.augment.noise_sigma);
      sa.read("outlier_rate", c.train.augment.outlier_rate);
      sa.read("outlier_offset", c.train.augment.outlier_offset);
      sa.read("short_rate", c.train.augment.short_rate);
      std::string mode = to_string(c.train.augment.warmup_mode);
      sa.read("warmup_mode", mode);
      c.train.augment.warmup_mode = parse_warmup_mode(mode);
    }
  }
  if (const json* j = top.child("tracker")) {
    Section s(*j, "tracker");
    std::string kind = to_string(c.tracker.variant);
    s.read("kind", kind);
    c.tracker.variant = parse_tracker_variant(kind);
    s.read("noise_sigma", c.tracker.noise_sigma);
    s.read("failure_rate", c.tracker.failure_rate);
    s.read("failure_offset", c.tracker.failure_offset);
  }
  if (const json* j = top.child("simulation")) {
    Section s(*j, "simulation");
    auto& m = c.simulation;
    s.read("train_sequences", m.train_sequences);
    s.read("val_sequences", m.val_sequences);
    s.read("frames", m.frames);
    s.read("dt", m.dt);
    s.read("noise_sigma", m.noise_sigma);
    s.read("min_speed", m.min_speed);
    s.read("max_speed", m.max_speed);
    s.read("max_turn_rate", m.max_turn_rate);
    s.read("max_acceleration", m.max_acceleration);
    s.read("pedestrian_fraction", m.pedestrian_fraction);
    s.read("occlusion_rate", m.occlusion_rate);
    s.read("occlusion_burst", m.occlusion_burst);
    s.read("mirror_augment", m.mirror_augment);
    s.read("seed", m.seed);
    if (const json* kinds = s.child("kinds")) {
      if (!kinds->is_array()) throw ConfigError("simulation.kinds must be a list");
      m.kinds.clear();
      for (const auto& k : *kinds) {
        if (!k.is_string()) throw ConfigError("simulation.kinds must hold strings");
        m.kinds.push_back(parse_scenario_kind(k.get<std::string>()));
      }
    }
  }
  if (const json* j = top.child("eval")) {
    Section s(*j, "eval");
    s.read("seed", c.eval.seed);
    s.read("threads", c.eval.threads);
  }
  if (const json* j = top.child("report")) {
    Section s(*j, "report");
    s.read("histogram_bins", c.report.histogram_bins);
    if (const json* rates = s.child("occlusion_rates")) {
      if (!rates->is_array()) throw ConfigError("report.occlusion_rates must be a list");
      c.report.occlusion_rates.clear();
      for (const auto& r : *rates) {
        if (!r.is_number()) throw ConfigError("report.occlusion_rates must hold numbers");
        c.report.occlusion_rates.push_back(r.get<double>());
      }
    }
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string dump_run_config(const RunConfig& c) {
  ordered_json j;
  j["train_data"] = c.train_data;
  j["val_data"] = c.val_data;
  j["model_path"] = c.model_path;
  j["output_dir"] = c.output_dir;
  j["model"] = {{"d_model", c.model.former.d_model},
                {"n_heads", c.model.former.n_heads},
                {"n_layers", c.model.former.n_layers},
                {"d_ffn", c.model.former.d_ffn},
                {"max_len", c.model.former.max_len},
                {"history_len", c.model.history_len},
                {"horizon", c.model.horizon},
                {"latent_dim", c.model.latent_dim},
                {"head_hidden", c.model.head_hidden},
                {"displacement_scale", c.model.displacement_scale},
                {"init_seed", c.model_seed}};
  j["refinement"] = {{"iou_threshold", c.refinement.iou_threshold},
                     {"history_len", c.refinement.history_len},
                     {"warmup_mode", to_string(c.refinement.warmup_mode)}};
  j["proposal"] = {{"mode", to_string(c.proposal.mode)}, {"k_samples", c.proposal.k_samples}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"loss_lambda", c.train.loss_lambda},
                {"kl_warmup_epochs", c.train.kl_warmup_epochs},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"epsilon", c.train.epsilon},
                {"weight_decay", c.train.weight_decay},
                {"seed", c.train.seed},
                {"augment",
                 {{"noise_sigma", c.train.augment.noise_sigma},
                  {"outlier_rate", c.train.augment.outlier_rate},
                  {"outlier_offset", c.train.augment.outlier_offset},
                  {"short_rate", c.train.augment.short_rate},
                  {"warmup_mode", to_string(c.train.augment.warmup_mode)}}}};
  j["tracker"] = {{"kind", to_string(c.tracker.variant)},
                  {"noise_sigma", c.tracker.noise_sigma},
                  {"failure_rate", c.tracker.failure_rate},
                  {"failure_offset", c.tracker.failure_offset}};
  ordered_json kinds = ordered_json::array();
  for (auto k : c.simulation.kinds) kinds.push_back(to_string(k));
  const auto& m = c.simulation;
  j["simulation"] = {{"train_sequences", m.train_sequences},
                     {"val_sequences", m.val_sequences},
                     {"frames", m.frames},
                     {"dt", m.dt},
                     {"noise_sigma", m.noise_sigma},
                     {"kinds", kinds},
                     {"min_speed", m.min_speed},
                     {"max_speed", m.max_speed},
                     {"max_turn_rate", m.max_turn_rate},
                     {"max_acceleration", m.max_acceleration},
                     {"pedestrian_fraction", m.pedestrian_fraction},
                     {"occlusion_rate", m.occlusion_rate},
                     {"occlusion_burst", m.occlusion_burst},
                     {"mirror_augment", m.mirror_augment},
                     {"seed", m.seed}};
  j["eval"] = {{"seed", c.eval.seed}, {"threads", c.eval.threads}};
  j["report"] = {{"occlusion_rates", c.report.occlusion_rates},
                 {"histogram_bins", c.report.histogram_bins}};
  return j.dump(2) + "\n";
}

}  // namespace trajtrack
