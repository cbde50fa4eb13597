#include "trajtrack/trajformer.hpp"

#include <cmath>

#include "trajtrack/errors.hpp"

namespace trajtrack {

using ad::Array;
using ad::Tape;
using ad::Var;

void TrajFormerConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ffn == 0 || max_len == 0) {
    throw ConfigError("trajformer: all sizes must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("trajformer: n_heads (" + std::to_string(n_heads) + ") must divide d_model (" +
                      std::to_string(d_model) + ")");
  }
}

Array positional_encoding(std::size_t length, std::size_t d_model, std::size_t max_len) {
  if (length > max_len) {
    throw InvalidInput("positional_encoding: length " + std::to_string(length) +
                       " exceeds max_len " + std::to_string(max_len));
  }
  Array pe(length, d_model);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; 2 * i < d_model; ++i) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(2 * i) / static_cast<double>(d_model));
      const double angle = static_cast<double>(t) * freq;
      pe(t, 2 * i) = std::sin(angle);
      if (2 * i + 1 < d_model) pe(t, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

PositionalTable::PositionalTable(std::size_t max_len, std::size_t d_model)
    : table_(positional_encoding(max_len, d_model, max_len)) {}

Array PositionalTable::rows(std::size_t start, std::size_t length) const {
  if (start + length > table_.rows()) {
    throw InvalidInput("positional encoding: position " + std::to_string(start + length) +
                       " exceeds max_len " + std::to_string(table_.rows()));
  }
  const std::size_t d = table_.cols();
  std::vector<double> v(table_.data() + start * d, table_.data() + (start + length) * d);
  return Array(length, d, std::move(v));
}

Array glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng, double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Array a(fan_in, fan_out);
  for (auto& v : a.values()) v = dist(rng);
  return a;
}

namespace {

AttentionParams add_attention(ad::ParameterSet& p, const TrajFormerConfig& cfg,
                              const std::string& prefix, std::mt19937_64& rng) {
  const std::size_t d = cfg.d_model;
  AttentionParams a;
  a.wq = p.add(prefix + ".wq", glorot(d, d, rng));
  a.wk = p.add(prefix + ".wk", glorot(d, d, rng));
  a.wv = p.add(prefix + ".wv", glorot(d, d, rng));
  a.wo = p.add(prefix + ".wo", glorot(d, d, rng));
  return a;
}

NormParams add_norm(ad::ParameterSet& p, std::size_t width, const std::string& prefix) {
  return {p.add(prefix + ".gain", Array(1, width, 1.0)), p.add(prefix + ".bias", Array(1, width, 0.0))};
}

FeedForwardParams add_ffn(ad::ParameterSet& p, const TrajFormerConfig& cfg, const std::string& prefix,
                          std::mt19937_64& rng) {
  FeedForwardParams f;
  f.w1 = p.add(prefix + ".w1", glorot(cfg.d_model, cfg.d_ffn, rng));
  f.b1 = p.add(prefix + ".b1", Array(1, cfg.d_ffn, 0.0));
  f.w2 = p.add(prefix + ".w2", glorot(cfg.d_ffn, cfg.d_model, rng));
  f.b2 = p.add(prefix + ".b2", Array(1, cfg.d_model, 0.0));
  return f;
}

Var with_positions(Tape& tape, Positioned in) {
  if (in.pe == nullptr) return in.x;
  return ad::add(tape, in.x, tape.constant(*in.pe));
}

}  // namespace

EncoderLayer add_encoder_layer(ad::ParameterSet& params, const TrajFormerConfig& cfg,
                               const std::string& prefix, std::mt19937_64& rng) {
  EncoderLayer l;
  l.attn = add_attention(params, cfg, prefix + ".attn", rng);
  l.norm1 = add_norm(params, cfg.d_model, prefix + ".norm1");
  l.ffn = add_ffn(params, cfg, prefix + ".ffn", rng);
  l.norm2 = add_norm(params, cfg.d_model, prefix + ".norm2");
  return l;
}

DecoderLayer add_decoder_layer(ad::ParameterSet& params, const TrajFormerConfig& cfg,
                               const std::string& prefix, std::mt19937_64& rng) {
  DecoderLayer l;
  l.self_attn = add_attention(params, cfg, prefix + ".self_attn", rng);
  l.norm1 = add_norm(params, cfg.d_model, prefix + ".norm1");
  l.cross_attn = add_attention(params, cfg, prefix + ".cross_attn", rng);
  l.norm2 = add_norm(params, cfg.d_model, prefix + ".norm2");
  l.ffn = add_ffn(params, cfg, prefix + ".ffn", rng);
  l.norm3 = add_norm(params, cfg.d_model, prefix + ".norm3");
  return l;
}

namespace {

Var attend(Tape& tape, ad::ParameterSet& params, const AttentionParams& w,
           const TrajFormerConfig& cfg, Var q_in, Var k, Var v, bool causal, AttentionProbe* probe) {
  const Var q = ad::matmul(tape, q_in, tape.parameter(params[w.wq]));
  const std::size_t dk = cfg.head_dim();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  Var heads;
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    Var qh = q, kh = k, vh = v;
    if (cfg.n_heads > 1) {
      qh = ad::slice_cols(tape, q, h * dk, dk);
      kh = ad::slice_cols(tape, k, h * dk, dk);
      vh = ad::slice_cols(tape, v, h * dk, dk);
    }
    const Var scores = ad::scale(tape, ad::matmul_nt(tape, qh, kh), inv_sqrt_dk);
    const Var weights = ad::softmax_rows(tape, scores, causal);
    if (probe != nullptr) probe->weights.push_back(weights);
    const Var out = ad::matmul(tape, weights, vh);
    heads = h == 0 ? out : ad::concat_features(tape, heads, out);
  }
  return ad::matmul(tape, heads, tape.parameter(params[w.wo]));
}

void check_width(const Tape& tape, const TrajFormerConfig& cfg, Var x) {
  if (tape.cols(x) != cfg.d_model) throw InvalidInput("attention: inputs must have d_model features");
}

}  // namespace

ProjectedMemory project_memory(Tape& tape, ad::ParameterSet& params, const AttentionParams& w,
                               Var encoded, const Array& pe_encoded) {
  const Var kv_in = with_positions(tape, {encoded, &pe_encoded});
  return {ad::matmul(tape, kv_in, tape.parameter(params[w.wk])),
          ad::matmul(tape, kv_in, tape.parameter(params[w.wv]))};
}

Var multi_head_attention(Tape& tape, ad::ParameterSet& params, const AttentionParams& w,
                         const TrajFormerConfig& cfg, Positioned queries, Positioned keys_values,
                         bool causal, AttentionProbe* probe) {
  check_width(tape, cfg, queries.x);
  check_width(tape, cfg, keys_values.x);
  const bool self = queries.x.id == keys_values.x.id && queries.pe == keys_values.pe;
  const Var q_in = with_positions(tape, queries);
  const Var kv_in = self ? q_in : with_positions(tape, keys_values);
  const Var k = ad::matmul(tape, kv_in, tape.parameter(params[w.wk]));
  const Var v = ad::matmul(tape, kv_in, tape.parameter(params[w.wv]));
  return attend(tape, params, w, cfg, q_in, k, v, causal, probe);
}

Var multi_head_attention(Tape& tape, ad::ParameterSet& params, const AttentionParams& w,
                         const TrajFormerConfig& cfg, Positioned queries,
                         const ProjectedMemory& memory, bool causal, AttentionProbe* probe) {
  check_width(tape, cfg, queries.x);
  check_width(tape, cfg, memory.keys);
  return attend(tape, params, w, cfg, with_positions(tape, queries), memory.keys, memory.values,
                causal, probe);
}

Var feed_forward(Tape& tape, ad::ParameterSet& params, const FeedForwardParams& w, Var x) {
  const Var hidden = ad::relu(
      tape, ad::linear(tape, x, tape.parameter(params[w.w1]), tape.parameter(params[w.b1])));
  return ad::linear(tape, hidden, tape.parameter(params[w.w2]), tape.parameter(params[w.b2]));
}

namespace {

Var norm(Tape& tape, ad::ParameterSet& params, const NormParams& n, Var x) {
  return ad::layer_norm(tape, x, tape.parameter(params[n.gain]), tape.parameter(params[n.bias]));
}

}  // namespace

Var encoder_block(Tape& tape, ad::ParameterSet& params, const EncoderLayer& layer,
                  const TrajFormerConfig& cfg, Var x, const Array& pe, AttentionProbe* probe) {
  const Var attn =
      multi_head_attention(tape, params, layer.attn, cfg, {x, &pe}, {x, &pe}, false, probe);
  const Var x1 = norm(tape, params, layer.norm1, ad::add(tape, x, attn));
  const Var ffn = feed_forward(tape, params, layer.ffn, x1);
  return norm(tape, params, layer.norm2, ad::add(tape, x1, ffn));
}

Var decoder_block(Tape& tape, ad::ParameterSet& params, const DecoderLayer& layer,
                  const TrajFormerConfig& cfg, Var y, const Array& pe_y, Var encoded,
                  const Array& pe_encoded, AttentionProbe* self_probe,
                  AttentionProbe* cross_probe) {
  check_width(tape, cfg, encoded);
  const ProjectedMemory memory = project_memory(tape, params, layer.cross_attn, encoded, pe_encoded);
  return decoder_block(tape, params, layer, cfg, y, pe_y, memory, self_probe, cross_probe);
}

Var decoder_block(Tape& tape, ad::ParameterSet& params, const DecoderLayer& layer,
                  const TrajFormerConfig& cfg, Var y, const Array& pe_y,
                  const ProjectedMemory& memory, AttentionProbe* self_probe,
                  AttentionProbe* cross_probe) {
  const Var self_attn = multi_head_attention(tape, params, layer.self_attn, cfg, {y, &pe_y},
                                             {y, &pe_y}, true, self_probe);
  const Var y1 = norm(tape, params, layer.norm1, ad::add(tape, y, self_attn));
  const Var cross =
      multi_head_attention(tape, params, layer.cross_attn, cfg, {y1, &pe_y}, memory, false, cross_probe);
  const Var y2 = norm(tape, params, layer.norm2, ad::add(tape, y1, cross));
  const Var ffn = feed_forward(tape, params, layer.ffn, y2);
  return norm(tape, params, layer.norm3, ad::add(tape, y2, ffn));
}

}  // namespace trajtrack
