#include "trajtrack/data_sim.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "trajtrack/errors.hpp"
#include "trajtrack/random.hpp"

namespace trajtrack {

using nlohmann::ordered_json;

const char* to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kConstantVelocity: return "cv";
    case ScenarioKind::kConstantAcceleration: return "ca";
    case ScenarioKind::kTurn: return "turn";
    case ScenarioKind::kStopAndGo: return "stop-and-go";
  }
  return "?";
}

ScenarioKind parse_scenario_kind(const std::string& text) {
  if (text == "cv") return ScenarioKind::kConstantVelocity;
  if (text == "ca") return ScenarioKind::kConstantAcceleration;
  if (text == "turn") return ScenarioKind::kTurn;
  if (text == "stop-and-go") return ScenarioKind::kStopAndGo;
  throw ConfigError("unknown scenario kind '" + text + "' (expected cv, ca, turn or stop-and-go)");
}

void ScenarioConfig::validate() const {
  if (duration < 2) throw ConfigError("scenario: duration must be at least 2 frames");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("scenario: dt must be positive");
  if (!(speed >= 0.0) || !std::isfinite(speed)) throw ConfigError("scenario: speed must be >= 0");
  if (!std::isfinite(turn_rate) || !std::isfinite(acceleration)) {
    throw ConfigError("scenario: turn_rate and acceleration must be finite");
  }
  if (!(stop_period > 0.0)) throw ConfigError("scenario: stop_period must be positive");
  if (!(noise_sigma >= 0.0) || !(heading_jitter >= 0.0)) {
    throw ConfigError("scenario: noise levels must be >= 0");
  }
  if (!is_valid(start)) throw ConfigError("scenario: invalid start box");
}

Box3D scenario_pose(const ScenarioConfig& cfg, double t) {
  Box3D b = cfg.start;
  const double psi0 = cfg.start.theta;
  double dist = 0.0;
  switch (cfg.kind) {
    case ScenarioKind::kConstantVelocity:
      dist = cfg.speed * t;
      break;
    case ScenarioKind::kConstantAcceleration: {
      const double a = cfg.acceleration;
      double tt = t;
      if (a < 0.0) tt = std::min(t, -cfg.speed / a);
      dist = cfg.speed * tt + 0.5 * a * tt * tt;
      break;
    }
    case ScenarioKind::kStopAndGo: {
      const double w = 2.0 * std::numbers::pi / cfg.stop_period;
      dist = 0.5 * cfg.speed * (t + std::sin(w * t) / w);
      break;
    }
    case ScenarioKind::kTurn: {
      const double omega = cfg.turn_rate;
      if (omega == 0.0) {
        dist = cfg.speed * t;
        break;
      }
      const double r = cfg.speed / omega;
      const double psi = psi0 + omega * t;
      b.x = cfg.start.x + r * (std::sin(psi) - std::sin(psi0));
      b.y = cfg.start.y - r * (std::cos(psi) - std::cos(psi0));
      b.theta = wrap_angle(psi);
      return b;
    }
  }
  b.x = cfg.start.x + dist * std::cos(psi0);
  b.y = cfg.start.y + dist * std::sin(psi0);
  b.theta = wrap_angle(psi0);
  return b;
}

SequenceRecord generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  RandomStream rng(cfg.seed);
  SequenceRecord seq;
  seq.sequence_id = cfg.sequence_id;
  seq.frames.reserve(cfg.duration);
  for (std::size_t i = 0; i < cfg.duration; ++i) {
    Box3D b = scenario_pose(cfg, static_cast<double>(i) * cfg.dt);
    const double nx = rng.normal();
    const double ny = rng.normal();
    const double nh = rng.normal();
    b.x += cfg.noise_sigma * nx;
    b.y += cfg.noise_sigma * ny;
    b.theta = wrap_angle(b.theta + cfg.heading_jitter * nh);
    seq.frames.push_back({i, b, false});
  }
  return seq;
}

SequenceRecord mark_occlusions(SequenceRecord seq, double rate, std::size_t burst_len,
                               std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw InvalidInput("mark_occlusions: rate must lie in [0, 1]");
  if (burst_len == 0) throw InvalidInput("mark_occlusions: burst_len must be positive");
  for (auto& f : seq.frames) f.occluded = false;
  if (rate == 0.0) return seq;
  const double len = static_cast<double>(burst_len);
  const double p_start = rate / (len * (1.0 - rate) + rate);
  RandomStream rng(seed);
  std::size_t remaining = 0;
  for (std::size_t i = 1; i < seq.frames.size(); ++i) {
    const double u = rng.uniform();
    if (remaining == 0 && u < p_start) remaining = burst_len;
    if (remaining > 0) {
      seq.frames[i].occluded = true;
      --remaining;
    }
  }
  return seq;
}

SequenceRecord mirror_sequence(SequenceRecord seq) {
  for (auto& f : seq.frames) {
    f.box.y = -f.box.y;
    f.box.theta = wrap_angle(-f.box.theta);
  }
  return seq;
}

std::vector<TrainingWindow> windows(const SequenceRecord& seq, std::size_t history_len,
                                    std::size_t horizon, bool translate_to_origin) {
  std::vector<TrainingWindow> out;
  const std::size_t span = history_len + horizon;
  if (history_len < 1 || horizon < 1 || seq.frames.size() < span) return out;
  out.reserve(seq.frames.size() - span + 1);
  for (std::size_t s = 0; s + span <= seq.frames.size(); ++s) {
    const Box3D& last = seq.frames[s + history_len - 1].box;
    const double ox = translate_to_origin ? last.x : 0.0;
    const double oy = translate_to_origin ? last.y : 0.0;
    const double oz = translate_to_origin ? last.z : 0.0;
    auto shifted = [&](const Box3D& b) {
      TrajState st = TrajState::from_box(b);
      st.x -= ox;
      st.y -= oy;
      st.z -= oz;
      return st;
    };
    Box3D reference = seq.frames[s].box;
    reference.x -= ox;
    reference.y -= oy;
    reference.z -= oz;
    TrainingWindow w{TrajectoryHistory(normalized(reference), history_len), {}, seq.frames[s].frame};
    for (std::size_t i = 0; i < history_len; ++i) w.history.push(shifted(seq.frames[s + i].box));
    w.future.reserve(horizon);
    for (std::size_t i = 0; i < horizon; ++i) {
      w.future.push_back(shifted(seq.frames[s + history_len + i].box));
    }
    out.push_back(std::move(w));
  }
  return out;
}

void SimulationConfig::validate() const {
  if (frames < 2) throw ConfigError("simulation: frames must be at least 2");
  if (!(dt > 0.0)) throw ConfigError("simulation: dt must be positive");
  if (!(noise_sigma >= 0.0)) throw ConfigError("simulation: noise_sigma must be >= 0");
  if (kinds.empty()) throw ConfigError("simulation: at least one scenario kind is required");
  if (!(min_speed >= 0.0 && max_speed >= min_speed)) {
    throw ConfigError("simulation: need 0 <= min_speed <= max_speed");
  }
  if (!(max_turn_rate >= 0.0) || !(max_acceleration >= 0.0)) {
    throw ConfigError("simulation: max_turn_rate and max_acceleration must be >= 0");
  }
  if (!(pedestrian_fraction >= 0.0 && pedestrian_fraction <= 1.0)) {
    throw ConfigError("simulation: pedestrian_fraction must lie in [0, 1]");
  }
  if (!(occlusion_rate >= 0.0 && occlusion_rate <= 1.0)) {
    throw ConfigError("simulation: occlusion_rate must lie in [0, 1]");
  }
  if (occlusion_burst == 0) throw ConfigError("simulation: occlusion_burst must be positive");
}

ScenarioConfig sample_scenario(const SimulationConfig& cfg, std::uint64_t split_seed,
                               std::size_t index, const std::string& sequence_id) {
  const std::uint64_t seed = derive_seed(split_seed, index);
  RandomStream rng(seed);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };

  ScenarioConfig s;
  s.sequence_id = sequence_id;
  s.seed = derive_seed(seed, 1);
  s.duration = cfg.frames;
  s.dt = cfg.dt;
  s.noise_sigma = cfg.noise_sigma;
  const auto pick = static_cast<std::size_t>(rng.uniform() * static_cast<double>(cfg.kinds.size()));
  s.kind = cfg.kinds[std::min(pick, cfg.kinds.size() - 1)];
  const bool pedestrian = rng.uniform() < cfg.pedestrian_fraction;

  s.start.x = uniform(-50.0, 50.0);
  s.start.y = uniform(-50.0, 50.0);
  s.start.z = uniform(-1.0, 1.0);
  s.start.theta = wrap_angle(uniform(-std::numbers::pi, std::numbers::pi));
  const double size_u[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
  const double speed_u = rng.uniform();
  const double turn_u = rng.uniform();
  const double turn_sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  const double accel_u = rng.uniform();
  const double period_u = rng.uniform();
  if (pedestrian) {
    s.start.h = 1.5 + 0.4 * size_u[0];
    s.start.w = 0.5 + 0.3 * size_u[1];
    s.start.l = 0.5 + 0.4 * size_u[2];
    s.speed = 0.5 + 1.5 * speed_u;
    s.heading_jitter = 0.1;
  } else {
    s.start.h = 1.4 + 0.4 * size_u[0];
    s.start.w = 1.7 + 0.4 * size_u[1];
    s.start.l = 3.8 + 1.2 * size_u[2];
    s.speed = cfg.min_speed + (cfg.max_speed - cfg.min_speed) * speed_u;
  }
  s.turn_rate = turn_sign * (0.2 + 0.8 * turn_u) * cfg.max_turn_rate;
  s.acceleration = (2.0 * accel_u - 1.0) * cfg.max_acceleration;
  s.stop_period = 4.0 + 6.0 * period_u;
  return s;
}

namespace {

std::string split_id(const char* prefix, std::size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return std::string(prefix) + "-" + digits;
}

}  // namespace

SimulatedSplit simulate_split(const SimulationConfig& cfg) {
  cfg.validate();
  const std::uint64_t train_seed = derive_seed(cfg.seed, 0);
  const std::uint64_t val_seed = derive_seed(cfg.seed, 1);
  const std::uint64_t occlusion_seed = derive_seed(cfg.seed, 2);
  SimulatedSplit out;
  out.train.reserve(cfg.train_sequences * (cfg.mirror_augment ? 2 : 1));
  for (std::size_t i = 0; i < cfg.train_sequences; ++i) {
    out.train.push_back(generate_scenario(sample_scenario(cfg, train_seed, i, split_id("train", i))));
  }
  if (cfg.mirror_augment) {
    for (std::size_t i = 0; i < cfg.train_sequences; ++i) {
      SequenceRecord m = mirror_sequence(out.train[i]);
      m.sequence_id += "-mirror";
      out.train.push_back(std::move(m));
    }
  }
  out.val.reserve(cfg.val_sequences);
  for (std::size_t i = 0; i < cfg.val_sequences; ++i) {
    SequenceRecord seq = generate_scenario(sample_scenario(cfg, val_seed, i, split_id("val", i)));
    out.val.push_back(mark_occlusions(std::move(seq), cfg.occlusion_rate, cfg.occlusion_burst,
                                      derive_seed(occlusion_seed, i)));
  }
  return out;
}

// --- Dataset files -----------------------------------------------------------------

void save_dataset(const std::vector<SequenceRecord>& records, std::ostream& out) {
  for (const auto& rec : records) {
    ordered_json j;
    j["sequence_id"] = rec.sequence_id;
    ordered_json frames = ordered_json::array();
    for (const auto& f : rec.frames) {
      ordered_json fj;
      fj["frame"] = f.frame;
      fj["box"] = {f.box.x, f.box.y, f.box.z, f.box.h, f.box.w, f.box.l, f.box.theta};
      fj["occluded"] = f.occluded;
      frames.push_back(std::move(fj));
    }
    j["frames"] = std::move(frames);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing dataset");
}

void save_dataset(const std::vector<SequenceRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  save_dataset(records, out);
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

namespace {

SequenceRecord parse_record(const std::string& text, std::size_t line) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw FormatError(line, std::string("malformed record: ") + e.what());
  }
  SequenceRecord rec;
  try {
    rec.sequence_id = j.at("sequence_id").get<std::string>();
    const auto& frames = j.at("frames");
    if (!frames.is_array()) throw FormatError(line, "frames must be a list");
    rec.frames.reserve(frames.size());
    for (const auto& fj : frames) {
      FrameRecord f;
      const auto& idx = fj.at("frame");
      if (!idx.is_number_unsigned()) throw FormatError(line, "frame must be a non-negative integer");
      f.frame = idx.get<std::size_t>();
      const auto& box = fj.at("box");
      if (!box.is_array() || box.size() != 7) throw FormatError(line, "box must hold 7 numbers");
      double v[7];
      for (std::size_t k = 0; k < 7; ++k) {
        if (!box[k].is_number()) throw FormatError(line, "box must hold 7 numbers");
        v[k] = box[k].get<double>();
      }
      f.box = {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
      if (!is_valid(f.box)) throw FormatError(line, "invalid box in frame " + std::to_string(f.frame));
      const auto& occ = fj.at("occluded");
      if (!occ.is_boolean()) throw FormatError(line, "occluded must be true or false");
      f.occluded = occ.get<bool>();
      if (f.frame != rec.frames.size()) {
        throw FormatError(line, "frames must be contiguous from 0");
      }
      rec.frames.push_back(f);
    }
  } catch (const ordered_json::exception& e) {
    throw FormatError(line, std::string("bad record: ") + e.what());
  }
  return rec;
}

}  // namespace

std::vector<SequenceRecord> load_dataset(std::istream& in) {
  std::vector<SequenceRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    out.push_back(parse_record(text, line));
  }
  if (in.bad()) throw IoError("failed reading dataset");
  return out;
}

std::vector<SequenceRecord> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  return load_dataset(in);
}

}  // namespace trajtrack
