#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// Forward operations append nodes to a Tape; Tape::backward walks the nodes in
// reverse and accumulates gradients into every reachable Parameter. Gradients
// accumulate across backward calls until ParameterSet::zero_grad.

namespace trajtrack::ad {

class Array {
 public:
  Array() = default;
  Array(std::size_t rows, std::size_t cols, double fill = 0.0);
  Array(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Array row(std::initializer_list<double> values);
  static Array row(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::array<std::size_t, 2> shape() const noexcept { return {rows_, cols_}; }
  bool empty() const noexcept { return values_.empty(); }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Reshapes to rows x cols and sets every value to `fill`; keeps capacity.
  void reset(std::size_t rows, std::size_t cols, double fill = 0.0);
  void fill(double value);
  bool all_finite() const noexcept;

  friend bool operator==(const Array&, const Array&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

struct Parameter {
  std::string name;
  Array value;
  Array grad;

  void zero_grad() { grad.fill(0.0); }
};

/// Stable handle to a Parameter inside a ParameterSet; survives copies of the set.
struct ParamRef {
  std::size_t index = static_cast<std::size_t>(-1);
};

/// Owns named parameters in insertion order.
class ParameterSet {
 public:
  ParamRef add(std::string name, Array init);

  Parameter& operator[](ParamRef ref) { return params_[ref.index]; }
  const Parameter& operator[](ParamRef ref) const { return params_[ref.index]; }
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  ParamRef ref(std::string_view name) const;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Var {
  static constexpr std::uint32_t kInvalid = 0xffffffffu;
  std::uint32_t id = kInvalid;
  bool valid() const noexcept { return id != kInvalid; }
};

enum class Op : std::uint8_t {
  kConstant,
  kParameter,
  kMatMul,
  kMatMulNT,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddRow,
  kRelu,
  kExp,
  kSin,
  kCos,
  kSoftmaxRows,
  kLayerNorm,
  kConcatCols,
  kConcatRows,
  kSliceCols,
  kSliceRows,
  kMeanRows,
  kSum,
  kKlDiag,
};

class Tape {
 public:
  /// With `record = false` parameters enter as constants and backward is disabled.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(const Array& value);
  Var constant(Array&& value);
  /// Each parameter appears at most once per tape; repeated calls return the same Var.
  Var parameter(Parameter& p);

  const Array& value(Var v) const;
  /// Gradient of the last backward root w.r.t. `v` (empty if unreached).
  const Array& grad(Var v) const;
  std::size_t rows(Var v) const { return value(v).rows(); }
  std::size_t cols(Var v) const { return value(v).cols(); }
  double scalar(Var v) const;

  /// Propagates d(loss)/d(node) to every node and adds parameter gradients
  /// into Parameter::grad. `loss` must be 1 x 1.
  void backward(Var loss);

  /// Drops all nodes but keeps their storage for reuse.
  void clear();
  std::size_t size() const noexcept { return count_; }
  bool recording() const noexcept { return record_; }

  struct Node {
    Op op = Op::kConstant;
    Array value;
    Array grad;
    std::array<std::uint32_t, 4> in{Var::kInvalid, Var::kInvalid, Var::kInvalid, Var::kInvalid};
    Parameter* param = nullptr;
    double scalar = 0.0;
    std::size_t offset = 0;
    std::size_t count = 0;
    Array cache;   // op-specific forward intermediates
    Array cache2;
  };

  // Used by the op implementations.
  Node& push(Op op, std::size_t rows, std::size_t cols);
  Node& node(Var v) { return nodes_[v.id]; }
  const Node& node(Var v) const { return nodes_[v.id]; }
  Var last() const { return Var{static_cast<std::uint32_t>(count_ - 1)}; }

 private:
  void backward_node(Node& n);
  Array& ensure_grad(std::uint32_t id);

  bool record_;
  std::deque<Node> nodes_;
  std::size_t count_ = 0;
  std::unordered_map<const Parameter*, std::uint32_t> param_nodes_;
};

// --- Differentiable operations -------------------------------------------

Var matmul(Tape& t, Var a, Var b);
/// a * b^T
Var matmul_nt(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
/// Element-wise product.
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
/// Adds a 1 x n row to every row of a.
Var add_row(Tape& t, Var a, Var row);
Var relu(Tape& t, Var a);
Var exp(Tape& t, Var a);
Var sin(Tape& t, Var a);
Var cos(Tape& t, Var a);
/// Row-wise softmax. With `causal`, row i only sees columns j <= i + (cols - rows).
Var softmax_rows(Tape& t, Var a, bool causal = false);
/// Per-row normalization (epsilon 1e-5 inside the root) followed by gain/bias.
Var layer_norm(Tape& t, Var a, Var gain, Var bias);
/// x * weight + bias, weight stored as [in x out], bias as [1 x out].
Var linear(Tape& t, Var x, Var weight, Var bias);
/// Concatenation along the feature (last) axis.
Var concat_features(Tape& t, Var a, Var b);
/// Concatenation along the sequence (first) axis.
Var concat_rows(Tape& t, Var a, Var b);
Var slice_cols(Tape& t, Var a, std::size_t start, std::size_t count);
Var slice_rows(Tape& t, Var a, std::size_t start, std::size_t count);
Var mean_rows(Tape& t, Var a);
Var sum(Tape& t, Var a);
/// KL(N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)) summed over dimensions; 1 x 1.
Var kl_diag_gaussians(Tape& t, Var mu_q, Var sigma_q, Var mu_p, Var sigma_p);

inline constexpr double kLayerNormEpsilon = 1e-5;

}  // namespace trajtrack::ad
