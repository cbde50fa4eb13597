#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "trajtrack/errors.hpp"
#include "trajtrack/imm.hpp"
#include "trajtrack/text_format.hpp"

namespace trajtrack {

namespace {

constexpr const char* kHeader = "trajtrack-imm-model v1";

std::size_t to_count(const std::string& text, std::size_t line) {
  double v = 0.0;
  try {
    v = parse_number(text);
  } catch (const InvalidInput&) {
    throw FormatError(line, "expected a count, got '" + text + "'");
  }
  if (v < 0.0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
    throw FormatError(line, "expected a count, got '" + text + "'");
  }
  return static_cast<std::size_t>(v);
}

ImmConfig parse_config_line(const std::string& text, std::size_t line) {
  std::istringstream in(text);
  std::string word;
  in >> word;
  if (word != "config") throw FormatError(line, "expected config line");
  std::map<std::string, std::string> kv;
  std::string key, value;
  while (in >> key) {
    if (!(in >> value)) throw FormatError(line, "config key '" + key + "' has no value");
    kv[key] = value;
  }
  auto take = [&](const char* name) -> const std::string& {
    auto it = kv.find(name);
    if (it == kv.end()) throw FormatError(line, std::string("config is missing ") + name);
    return it->second;
  };
  ImmConfig c;
  c.former.d_model = to_count(take("d_model"), line);
  c.former.n_heads = to_count(take("n_heads"), line);
  c.former.n_layers = to_count(take("n_layers"), line);
  c.former.d_ffn = to_count(take("d_ffn"), line);
  c.former.max_len = to_count(take("max_len"), line);
  c.history_len = to_count(take("history_len"), line);
  c.horizon = to_count(take("horizon"), line);
  c.latent_dim = to_count(take("latent_dim"), line);
  c.head_hidden = to_count(take("head_hidden"), line);
  try {
    c.displacement_scale = parse_number(take("displacement_scale"));
  } catch (const InvalidInput& e) {
    throw FormatError(line, e.what());
  }
  if (kv.size() != 10) throw FormatError(line, "config has unknown keys");
  return c;
}

}  // namespace

void save_model(const ImmModel& model, std::ostream& out) {
  const ImmConfig& c = model.config();
  out << kHeader << '\n';
  out << "config d_model " << c.former.d_model << " n_heads " << c.former.n_heads << " n_layers "
      << c.former.n_layers << " d_ffn " << c.former.d_ffn << " max_len " << c.former.max_len
      << " history_len " << c.history_len << " horizon " << c.horizon << " latent_dim "
      << c.latent_dim << " head_hidden " << c.head_hidden << " displacement_scale "
      << format_number(c.displacement_scale) << '\n';
  for (const auto& p : model.parameters()) {
    out << "param " << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
    bool first = true;
    for (double v : p.value.values()) {
      if (!first) out << ' ';
      out << format_number(v);
      first = false;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing model");
}

void save_model(const ImmModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  save_model(model, out);
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

ImmModel load_model(std::istream& in) {
  std::string text;
  std::size_t line = 1;
  if (!std::getline(in, text) || text != kHeader) throw FormatError(line, "not a model file");
  ++line;
  if (!std::getline(in, text)) throw FormatError(line, "missing config line");
  ImmConfig config;
  try {
    config = parse_config_line(text, line);
    config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(line, e.what());
  }
  ImmModel model(config, 0);
  auto& params = model.parameters();
  std::set<std::string> seen;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    std::istringstream head(text);
    std::string word, name, rows_text, cols_text;
    head >> word >> name >> rows_text >> cols_text;
    if (word != "param" || cols_text.empty()) throw FormatError(line, "expected 'param <name> <rows> <cols>'");
    ad::Parameter* p = params.find(name);
    if (p == nullptr) throw FormatError(line, "unknown parameter '" + name + "'");
    if (!seen.insert(name).second) throw FormatError(line, "duplicate parameter '" + name + "'");
    const std::size_t rows = to_count(rows_text, line);
    const std::size_t cols = to_count(cols_text, line);
    if (rows != p->value.rows() || cols != p->value.cols()) {
      throw FormatError(line, "parameter '" + name + "' has the wrong shape");
    }
    if (!std::getline(in, text)) throw FormatError(line + 1, "missing values for '" + name + "'");
    ++line;
    std::istringstream values(text);
    std::string token;
    std::size_t i = 0;
    while (values >> token) {
      if (i == p->value.size()) throw FormatError(line, "too many values for '" + name + "'");
      try {
        p->value[i++] = parse_number(token);
      } catch (const InvalidInput& e) {
        throw FormatError(line, e.what());
      }
    }
    if (i != p->value.size()) throw FormatError(line, "too few values for '" + name + "'");
  }
  if (seen.size() != params.size()) {
    throw FormatError(line, "model file holds " + std::to_string(seen.size()) + " of " +
                                std::to_string(params.size()) + " parameters");
  }
  return model;
}

ImmModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model '" + path + "'");
  return load_model(in);
}

}  // namespace trajtrack
