#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "trajtrack/autodiff.hpp"

namespace trajtrack {

struct TrajFormerConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ffn = 128;
  std::size_t max_len = 512;

  std::size_t head_dim() const { return d_model / n_heads; }
  /// Throws ConfigError unless every field is positive and n_heads divides d_model.
  void validate() const;

  friend bool operator==(const TrajFormerConfig&, const TrajFormerConfig&) = default;
};

/// Interleaved sinusoidal encoding: column 2i holds sin(t / 10000^(2i/d)) and
/// column 2i+1 the matching cos, for t = 0 .. length-1.
ad::Array positional_encoding(std::size_t length, std::size_t d_model, std::size_t max_len = 512);

/// Precomputed encoding rows for every position up to max_len.
class PositionalTable {
 public:
  PositionalTable() = default;
  PositionalTable(std::size_t max_len, std::size_t d_model);
  /// Rows [start, start + length).
  ad::Array rows(std::size_t start, std::size_t length) const;
  std::size_t max_len() const noexcept { return table_.rows(); }

 private:
  ad::Array table_;
};

struct AttentionParams {
  ad::ParamRef wq, wk, wv, wo;
};

struct FeedForwardParams {
  ad::ParamRef w1, b1, w2, b2;
};

struct NormParams {
  ad::ParamRef gain, bias;
};

struct EncoderLayer {
  AttentionParams attn;
  NormParams norm1;
  FeedForwardParams ffn;
  NormParams norm2;
};

struct DecoderLayer {
  AttentionParams self_attn;
  NormParams norm1;
  AttentionParams cross_attn;
  NormParams norm2;
  FeedForwardParams ffn;
  NormParams norm3;
};

/// Glorot-uniform matrix with `gain` scaling.
ad::Array glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng, double gain = 1.0);

EncoderLayer add_encoder_layer(ad::ParameterSet& params, const TrajFormerConfig& cfg,
                               const std::string& prefix, std::mt19937_64& rng);
DecoderLayer add_decoder_layer(ad::ParameterSet& params, const TrajFormerConfig& cfg,
                               const std::string& prefix, std::mt19937_64& rng);

/// Optional capture of per-head attention weight matrices.
struct AttentionProbe {
  std::vector<ad::Var> weights;
};

/// Sequence input with the positional rows that belong to it.
struct Positioned {
  ad::Var x;
  const ad::Array* pe = nullptr;  // same shape as x
};

/// Multi-head attention: per head softmax(Q K^T / sqrt(d_k)) V with
/// Q = (Xq + PEq) Wq and K, V = (Xkv + PEkv) Wk, Wv; heads are concatenated
/// and projected by Wo.
ad::Var multi_head_attention(ad::Tape& tape, ad::ParameterSet& params, const AttentionParams& w,
                             const TrajFormerConfig& cfg, Positioned queries,
                             Positioned keys_values, bool causal,
                             AttentionProbe* probe = nullptr);

/// Keys and values of an encoded sequence, projected for one cross-attention layer.
struct ProjectedMemory {
  ad::Var keys;
  ad::Var values;
};

ProjectedMemory project_memory(ad::Tape& tape, ad::ParameterSet& params, const AttentionParams& w,
                               ad::Var encoded, const ad::Array& pe_encoded);

/// Attention onto keys/values projected beforehand.
ad::Var multi_head_attention(ad::Tape& tape, ad::ParameterSet& params, const AttentionParams& w,
                             const TrajFormerConfig& cfg, Positioned queries,
                             const ProjectedMemory& memory, bool causal,
                             AttentionProbe* probe = nullptr);

ad::Var feed_forward(ad::Tape& tape, ad::ParameterSet& params, const FeedForwardParams& w,
                     ad::Var x);

/// X' = LN(X + MHSA(X)); out = LN(X' + FFN(X')).
ad::Var encoder_block(ad::Tape& tape, ad::ParameterSet& params, const EncoderLayer& layer,
                      const TrajFormerConfig& cfg, ad::Var x, const ad::Array& pe,
                      AttentionProbe* probe = nullptr);

/// Causal self-attention, cross-attention onto `encoded`, then FFN, each
/// followed by residual + layer norm.
ad::Var decoder_block(ad::Tape& tape, ad::ParameterSet& params, const DecoderLayer& layer,
                      const TrajFormerConfig& cfg, ad::Var y, const ad::Array& pe_y,
                      ad::Var encoded, const ad::Array& pe_encoded,
                      AttentionProbe* self_probe = nullptr, AttentionProbe* cross_probe = nullptr);

/// Same block with the cross-attention memory projected once up front; lets a
/// step-by-step decoder reuse the projection across steps.
ad::Var decoder_block(ad::Tape& tape, ad::ParameterSet& params, const DecoderLayer& layer,
                      const TrajFormerConfig& cfg, ad::Var y, const ad::Array& pe_y,
                      const ProjectedMemory& memory, AttentionProbe* self_probe = nullptr,
                      AttentionProbe* cross_probe = nullptr);

}  // namespace trajtrack
