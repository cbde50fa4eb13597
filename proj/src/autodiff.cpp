#include "trajtrack/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "trajtrack/errors.hpp"
#include "trajtrack/simd/kernels.hpp"

namespace trajtrack::ad {

// --- Array ------------------------------------------------------------------

Array::Array(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Array::Array(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw InvalidInput("Array: " + std::to_string(values_.size()) + " values for shape " +
                       std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Array Array::row(std::initializer_list<double> values) {
  return Array(1, values.size(), std::vector<double>(values));
}

Array Array::row(std::span<const double> values) {
  return Array(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Array::reset(std::size_t rows, std::size_t cols, double fill) {
  rows_ = rows;
  cols_ = cols;
  values_.assign(rows * cols, fill);
}

void Array::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

bool Array::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

// --- ParameterSet -------------------------------------------------------------

ParamRef ParameterSet::add(std::string name, Array init) {
  if (index_.contains(name)) throw InvalidInput("duplicate parameter name: " + name);
  Parameter p;
  p.grad = Array(init.rows(), init.cols(), 0.0);
  p.value = std::move(init);
  p.name = name;
  params_.push_back(std::move(p));
  index_.emplace(std::move(name), params_.size() - 1);
  return ParamRef{params_.size() - 1};
}

Parameter* ParameterSet::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &params_[it->second];
}

ParamRef ParameterSet::ref(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw InvalidInput("unknown parameter: " + std::string(name));
  return ParamRef{it->second};
}

std::size_t ParameterSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

// --- Tape ---------------------------------------------------------------------

namespace {

std::string shape_str(const Array& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

[[noreturn]] void shape_error(const char* op, const Array& a, const Array& b) {
  throw InvalidInput(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                     shape_str(b));
}

const simd::KernelTable& kernels() { return simd::active_kernels(); }

}  // namespace

Tape::Node& Tape::push(Op op, std::size_t rows, std::size_t cols) {
  if (count_ == nodes_.size()) nodes_.emplace_back();
  Node& n = nodes_[count_++];
  n.op = op;
  n.value.reset(rows, cols, 0.0);
  n.grad.reset(0, 0);
  n.in = {Var::kInvalid, Var::kInvalid, Var::kInvalid, Var::kInvalid};
  n.param = nullptr;
  n.scalar = 0.0;
  n.offset = 0;
  n.count = 0;
  return n;
}

Var Tape::constant(const Array& value) {
  Node& n = push(Op::kConstant, 0, 0);
  n.value = value;
  return last();
}

Var Tape::constant(Array&& value) {
  Node& n = push(Op::kConstant, 0, 0);
  n.value = std::move(value);
  return last();
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{it->second};
  Node& n = push(Op::kParameter, 0, 0);
  n.param = &p;
  const Var v = last();
  param_nodes_.emplace(&p, v.id);
  return v;
}

const Array& Tape::value(Var v) const {
  if (v.id >= count_) throw InvalidInput("Tape: invalid variable");
  const Node& n = nodes_[v.id];
  return n.op == Op::kParameter ? n.param->value : n.value;
}

const Array& Tape::grad(Var v) const {
  if (v.id >= count_) throw InvalidInput("Tape: invalid variable");
  const Node& n = nodes_[v.id];
  return n.op == Op::kParameter ? n.param->grad : n.grad;
}

double Tape::scalar(Var v) const {
  const Array& a = value(v);
  if (a.size() != 1) throw InvalidInput("Tape::scalar: value is " + shape_str(a));
  return a[0];
}

void Tape::clear() {
  count_ = 0;
  param_nodes_.clear();
}

Array& Tape::ensure_grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.op == Op::kParameter) {
    Array& g = n.param->grad;
    if (g.rows() != n.param->value.rows() || g.cols() != n.param->value.cols()) {
      g.reset(n.param->value.rows(), n.param->value.cols());
    }
    return g;
  }
  if (n.grad.size() != n.value.size() || n.grad.rows() != n.value.rows()) {
    n.grad.reset(n.value.rows(), n.value.cols(), 0.0);
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!record_) throw InvalidInput("backward on a tape that does not record gradients");
  if (loss.id >= count_) throw InvalidInput("backward: invalid root");
  if (value(loss).size() != 1) {
    throw InvalidInput("backward: root must be a scalar, got " + shape_str(value(loss)));
  }
  for (std::size_t i = 0; i < count_; ++i) {
    if (nodes_[i].op != Op::kParameter) nodes_[i].grad.reset(0, 0);
  }
  Node& root = nodes_[loss.id];
  if (root.op == Op::kParameter) {
    ensure_grad(loss.id)[0] += 1.0;
    return;
  }
  ensure_grad(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.op == Op::kConstant || n.op == Op::kParameter || n.grad.empty()) continue;
    backward_node(n);
  }
}

namespace {

void add_into(Array& dst, const Array& src) {
  kernels().axpy(src.size(), 1.0, src.data(), dst.data());
}

}  // namespace

void Tape::backward_node(Node& n) {
  const Array& g = n.grad;
  const auto& k = kernels();
  switch (n.op) {
    case Op::kConstant:
    case Op::kParameter:
      return;
    case Op::kMatMul: {
      const Array& a = value(Var{n.in[0]});
      const Array& b = value(Var{n.in[1]});
      const std::size_t m = a.rows(), inner = a.cols(), cols = b.cols();
      k.gemm_nt(m, inner, cols, g.data(), b.data(), ensure_grad(n.in[0]).data());
      k.gemm_tn(inner, cols, m, a.data(), g.data(), ensure_grad(n.in[1]).data());
      return;
    }
    case Op::kMatMulNT: {
      const Array& a = value(Var{n.in[0]});
      const Array& b = value(Var{n.in[1]});
      const std::size_t m = a.rows(), inner = a.cols(), rows_b = b.rows();
      k.gemm_nn(m, inner, rows_b, g.data(), b.data(), ensure_grad(n.in[0]).data());
      k.gemm_tn(rows_b, inner, m, g.data(), a.data(), ensure_grad(n.in[1]).data());
      return;
    }
    case Op::kAdd:
      add_into(ensure_grad(n.in[0]), g);
      add_into(ensure_grad(n.in[1]), g);
      return;
    case Op::kSub: {
      add_into(ensure_grad(n.in[0]), g);
      Array& gb = ensure_grad(n.in[1]);
      k.axpy(g.size(), -1.0, g.data(), gb.data());
      return;
    }
    case Op::kMul: {
      const Array& a = value(Var{n.in[0]});
      const Array& b = value(Var{n.in[1]});
      Array& ga = ensure_grad(n.in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      Array& gb = ensure_grad(n.in[1]);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      return;
    }
    case Op::kScale: {
      Array& ga = ensure_grad(n.in[0]);
      k.axpy(g.size(), n.scalar, g.data(), ga.data());
      return;
    }
    case Op::kAddRow: {
      add_into(ensure_grad(n.in[0]), g);
      Array& gr = ensure_grad(n.in[1]);
      for (std::size_t r = 0; r < g.rows(); ++r) k.axpy(g.cols(), 1.0, g.data() + r * g.cols(), gr.data());
      return;
    }
    case Op::kRelu: {
      const Array& a = value(Var{n.in[0]});
      Array& ga = ensure_grad(n.in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += a[i] > 0.0 ? g[i] : 0.0;
      return;
    }
    case Op::kExp: {
      Array& ga = ensure_grad(n.in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i];
      return;
    }
    case Op::kSin: {
      const Array& a = value(Var{n.in[0]});
      Array& ga = ensure_grad(n.in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * std::cos(a[i]);
      return;
    }
    case Op::kCos: {
      const Array& a = value(Var{n.in[0]});
      Array& ga = ensure_grad(n.in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i] * std::sin(a[i]);
      return;
    }
    case Op::kSoftmaxRows: {
      const Array& y = n.value;
      Array& ga = ensure_grad(n.in[0]);
      const std::size_t cols = y.cols();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        const double* yr = y.data() + r * cols;
        const double* gr = g.data() + r * cols;
        double dotp = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dotp += yr[c] * gr[c];
        double* out = ga.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) out[c] += yr[c] * (gr[c] - dotp);
      }
      return;
    }
    case Op::kLayerNorm: {
      // cache: normalized input x_hat; cache2: per-row reciprocal std.
      const Array& xhat = n.cache;
      const Array& rstd = n.cache2;
      const Array& gain = value(Var{n.in[1]});
      const std::size_t cols = g.cols();
      Array& gx = ensure_grad(n.in[0]);
      Array& ggain = ensure_grad(n.in[1]);
      Array& gbias = ensure_grad(n.in[2]);
      const double inv_n = 1.0 / static_cast<double>(cols);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const double* gr = g.data() + r * cols;
        const double* xr = xhat.data() + r * cols;
        double mean_d = 0.0;
        double mean_dx = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          const double d = gr[c] * gain[c];
          mean_d += d;
          mean_dx += d * xr[c];
          ggain[c] += gr[c] * xr[c];
          gbias[c] += gr[c];
        }
        mean_d *= inv_n;
        mean_dx *= inv_n;
        double* out = gx.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
          out[c] += rstd[r] * (gr[c] * gain[c] - mean_d - xr[c] * mean_dx);
        }
      }
      return;
    }
    case Op::kConcatCols: {
      const std::size_t ca = cols(Var{n.in[0]});
      const std::size_t cb = cols(Var{n.in[1]});
      Array& ga = ensure_grad(n.in[0]);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        k.axpy(ca, 1.0, g.data() + r * (ca + cb), ga.data() + r * ca);
      }
      Array& gb = ensure_grad(n.in[1]);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        k.axpy(cb, 1.0, g.data() + r * (ca + cb) + ca, gb.data() + r * cb);
      }
      return;
    }
    case Op::kConcatRows: {
      const std::size_t na = value(Var{n.in[0]}).size();
      Array& ga = ensure_grad(n.in[0]);
      k.axpy(na, 1.0, g.data(), ga.data());
      Array& gb = ensure_grad(n.in[1]);
      k.axpy(gb.size(), 1.0, g.data() + na, gb.data());
      return;
    }
    case Op::kSliceCols: {
      Array& ga = ensure_grad(n.in[0]);
      const std::size_t src_cols = ga.cols();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        k.axpy(n.count, 1.0, g.data() + r * n.count, ga.data() + r * src_cols + n.offset);
      }
      return;
    }
    case Op::kSliceRows: {
      Array& ga = ensure_grad(n.in[0]);
      k.axpy(g.size(), 1.0, g.data(), ga.data() + n.offset * ga.cols());
      return;
    }
    case Op::kMeanRows: {
      Array& ga = ensure_grad(n.in[0]);
      const double inv = 1.0 / static_cast<double>(ga.rows());
      for (std::size_t r = 0; r < ga.rows(); ++r) k.axpy(ga.cols(), inv, g.data(), ga.data() + r * ga.cols());
      return;
    }
    case Op::kSum: {
      Array& ga = ensure_grad(n.in[0]);
      const double s = g[0];
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s;
      return;
    }
    case Op::kKlDiag: {
      const Array& mq = value(Var{n.in[0]});
      const Array& sq = value(Var{n.in[1]});
      const Array& mp = value(Var{n.in[2]});
      const Array& sp = value(Var{n.in[3]});
      const double s = g[0];
      Array& gmq = ensure_grad(n.in[0]);
      Array& gsq = ensure_grad(n.in[1]);
      Array& gmp = ensure_grad(n.in[2]);
      Array& gsp = ensure_grad(n.in[3]);
      for (std::size_t i = 0; i < mq.size(); ++i) {
        const double diff = mq[i] - mp[i];
        const double vp = sp[i] * sp[i];
        gmq[i] += s * diff / vp;
        gmp[i] -= s * diff / vp;
        gsq[i] += s * (sq[i] / vp - 1.0 / sq[i]);
        gsp[i] += s * (1.0 / sp[i] - (sq[i] * sq[i] + diff * diff) / (vp * sp[i]));
      }
      return;
    }
  }
}

// --- Operations ---------------------------------------------------------------

namespace {

Var unary(Tape& t, Op op, Var a) {
  const std::size_t r = t.rows(a), c = t.cols(a);
  Tape::Node& n = t.push(op, r, c);
  n.in[0] = a.id;
  return t.last();
}

void require_same_shape(const char* op, const Array& a, const Array& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a, b);
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  const std::size_t m = t.rows(a), inner = t.cols(a), cols = t.cols(b);
  if (t.rows(b) != inner) shape_error("matmul", t.value(a), t.value(b));
  Tape::Node& n = t.push(Op::kMatMul, m, cols);
  n.in[0] = a.id;
  n.in[1] = b.id;
  kernels().gemm_nn(m, cols, inner, t.value(a).data(), t.value(b).data(), n.value.data());
  return t.last();
}

Var matmul_nt(Tape& t, Var a, Var b) {
  const std::size_t m = t.rows(a), inner = t.cols(a), rows_b = t.rows(b);
  if (t.cols(b) != inner) shape_error("matmul_nt", t.value(a), t.value(b));
  Tape::Node& n = t.push(Op::kMatMulNT, m, rows_b);
  n.in[0] = a.id;
  n.in[1] = b.id;
  kernels().gemm_nt(m, rows_b, inner, t.value(a).data(), t.value(b).data(), n.value.data());
  return t.last();
}

Var add(Tape& t, Var a, Var b) {
  require_same_shape("add", t.value(a), t.value(b));
  const Var out = unary(t, Op::kAdd, a);
  Tape::Node& n = t.node(out);
  n.in[1] = b.id;
  const Array& av = t.value(a);
  const Array& bv = t.value(b);
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] + bv[i];
  return out;
}

Var sub(Tape& t, Var a, Var b) {
  require_same_shape("sub", t.value(a), t.value(b));
  const Var out = unary(t, Op::kSub, a);
  Tape::Node& n = t.node(out);
  n.in[1] = b.id;
  const Array& av = t.value(a);
  const Array& bv = t.value(b);
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] - bv[i];
  return out;
}

Var mul(Tape& t, Var a, Var b) {
  require_same_shape("mul", t.value(a), t.value(b));
  const Var out = unary(t, Op::kMul, a);
  Tape::Node& n = t.node(out);
  n.in[1] = b.id;
  const Array& av = t.value(a);
  const Array& bv = t.value(b);
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] * bv[i];
  return out;
}

Var scale(Tape& t, Var a, double s) {
  const Var out = unary(t, Op::kScale, a);
  Tape::Node& n = t.node(out);
  n.scalar = s;
  const Array& av = t.value(a);
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = s * av[i];
  return out;
}

Var add_row(Tape& t, Var a, Var row) {
  const Array& rv = t.value(row);
  if (rv.rows() != 1 || rv.cols() != t.cols(a)) shape_error("add_row", t.value(a), rv);
  const Var out = unary(t, Op::kAddRow, a);
  Tape::Node& n = t.node(out);
  n.in[1] = row.id;
  const Array& av = t.value(a);
  const Array& r = t.value(row);
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t c = 0; c < cols; ++c) n.value[i * cols + c] = av[i * cols + c] + r[c];
  }
  return out;
}

Var relu(Tape& t, Var a) {
  const Var out = unary(t, Op::kRelu, a);
  Tape::Node& n = t.node(out);
  const Array& av = t.value(a);
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] > 0.0 ? av[i] : 0.0;
  return out;
}

Var exp(Tape& t, Var a) {
  const Var out = unary(t, Op::kExp, a);
  Tape::Node& n = t.node(out);
  const Array& av = t.value(a);
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = std::exp(av[i]);
  return out;
}

Var sin(Tape& t, Var a) {
  const Var out = unary(t, Op::kSin, a);
  Tape::Node& n = t.node(out);
  const Array& av = t.value(a);
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = std::sin(av[i]);
  return out;
}

Var cos(Tape& t, Var a) {
  const Var out = unary(t, Op::kCos, a);
  Tape::Node& n = t.node(out);
  const Array& av = t.value(a);
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = std::cos(av[i]);
  return out;
}

Var softmax_rows(Tape& t, Var a, bool causal) {
  const std::size_t rows = t.rows(a), cols = t.cols(a);
  if (cols == 0) throw InvalidInput("softmax_rows: empty rows");
  if (causal && cols < rows) throw InvalidInput("softmax_rows: causal mask needs cols >= rows");
  const Var out = unary(t, Op::kSoftmaxRows, a);
  Tape::Node& n = t.node(out);
  const Array& av = t.value(a);
  const std::size_t shift = cols - rows;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t visible = causal ? r + shift + 1 : cols;
    const double* x = av.data() + r * cols;
    double* y = n.value.data() + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < visible; ++c) mx = std::max(mx, x[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < visible; ++c) {
      y[c] = std::exp(x[c] - mx);
      total += y[c];
    }
    const double inv = 1.0 / total;
    for (std::size_t c = 0; c < visible; ++c) y[c] *= inv;
    for (std::size_t c = visible; c < cols; ++c) y[c] = 0.0;
  }
  return out;
}

Var layer_norm(Tape& t, Var a, Var gain, Var bias) {
  const std::size_t rows = t.rows(a), cols = t.cols(a);
  const Array& gv = t.value(gain);
  const Array& bv = t.value(bias);
  if (gv.size() != cols || bv.size() != cols || gv.rows() != 1 || bv.rows() != 1) {
    shape_error("layer_norm", t.value(a), gv);
  }
  const Var out = unary(t, Op::kLayerNorm, a);
  Tape::Node& n = t.node(out);
  n.in[1] = gain.id;
  n.in[2] = bias.id;
  n.cache.reset(rows, cols);
  n.cache2.reset(rows, 1);
  const Array& av = t.value(a);
  const Array& g = t.value(gain);
  const Array& b = t.value(bias);
  const double inv_n = 1.0 / static_cast<double>(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += x[c];
    mean *= inv_n;
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (x[c] - mean) * (x[c] - mean);
    var *= inv_n;
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    n.cache2[r] = rstd;
    for (std::size_t c = 0; c < cols; ++c) {
      const double xh = (x[c] - mean) * rstd;
      n.cache[r * cols + c] = xh;
      n.value[r * cols + c] = g[c] * xh + b[c];
    }
  }
  return out;
}

Var linear(Tape& t, Var x, Var weight, Var bias) { return add_row(t, matmul(t, x, weight), bias); }

Var concat_features(Tape& t, Var a, Var b) {
  const std::size_t rows = t.rows(a), ca = t.cols(a), cb = t.cols(b);
  if (t.rows(b) != rows) shape_error("concat_features", t.value(a), t.value(b));
  Tape::Node& n = t.push(Op::kConcatCols, rows, ca + cb);
  n.in[0] = a.id;
  n.in[1] = b.id;
  const Array& av = t.value(a);
  const Array& bv = t.value(b);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * ca, ca, n.value.data() + r * (ca + cb));
    std::copy_n(bv.data() + r * cb, cb, n.value.data() + r * (ca + cb) + ca);
  }
  return t.last();
}

Var concat_rows(Tape& t, Var a, Var b) {
  const std::size_t cols = t.cols(a);
  if (t.cols(b) != cols) shape_error("concat_rows", t.value(a), t.value(b));
  const std::size_t ra = t.rows(a), rb = t.rows(b);
  Tape::Node& n = t.push(Op::kConcatRows, ra + rb, cols);
  n.in[0] = a.id;
  n.in[1] = b.id;
  const Array& av = t.value(a);
  const Array& bv = t.value(b);
  std::copy_n(av.data(), av.size(), n.value.data());
  std::copy_n(bv.data(), bv.size(), n.value.data() + av.size());
  return t.last();
}

Var slice_cols(Tape& t, Var a, std::size_t start, std::size_t count) {
  const std::size_t rows = t.rows(a), cols = t.cols(a);
  if (start + count > cols || count == 0) throw InvalidInput("slice_cols: range out of bounds");
  Tape::Node& n = t.push(Op::kSliceCols, rows, count);
  n.in[0] = a.id;
  n.offset = start;
  n.count = count;
  const Array& av = t.value(a);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * cols + start, count, n.value.data() + r * count);
  }
  return t.last();
}

Var slice_rows(Tape& t, Var a, std::size_t start, std::size_t count) {
  const std::size_t rows = t.rows(a), cols = t.cols(a);
  if (start + count > rows || count == 0) throw InvalidInput("slice_rows: range out of bounds");
  Tape::Node& n = t.push(Op::kSliceRows, count, cols);
  n.in[0] = a.id;
  n.offset = start;
  n.count = count;
  const Array& av = t.value(a);
  std::copy_n(av.data() + start * cols, count * cols, n.value.data());
  return t.last();
}

Var mean_rows(Tape& t, Var a) {
  const std::size_t rows = t.rows(a), cols = t.cols(a);
  if (rows == 0) throw InvalidInput("mean_rows: no rows");
  Tape::Node& n = t.push(Op::kMeanRows, 1, cols);
  n.in[0] = a.id;
  const Array& av = t.value(a);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) n.value[c] += av[r * cols + c];
  }
  const double inv = 1.0 / static_cast<double>(rows);
  for (std::size_t c = 0; c < cols; ++c) n.value[c] *= inv;
  return t.last();
}

Var sum(Tape& t, Var a) {
  Tape::Node& n = t.push(Op::kSum, 1, 1);
  n.in[0] = a.id;
  double s = 0.0;
  for (double v : t.value(a).values()) s += v;
  n.value[0] = s;
  return t.last();
}

Var kl_diag_gaussians(Tape& t, Var mu_q, Var sigma_q, Var mu_p, Var sigma_p) {
  const Array& mq = t.value(mu_q);
  const Array& sq = t.value(sigma_q);
  const Array& mp = t.value(mu_p);
  const Array& sp = t.value(sigma_p);
  if (mq.size() != sq.size() || mq.size() != mp.size() || mq.size() != sp.size()) {
    throw InvalidInput("kl_diag_gaussians: dimension mismatch");
  }
  for (std::size_t i = 0; i < sq.size(); ++i) {
    if (!(sq[i] > 0.0) || !(sp[i] > 0.0)) {
      throw InvalidInput("kl_diag_gaussians: sigma must be positive");
    }
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < mq.size(); ++i) {
    const double diff = mq[i] - mp[i];
    kl += std::log(sp[i] / sq[i]) + (sq[i] * sq[i] + diff * diff) / (2.0 * sp[i] * sp[i]) - 0.5;
  }
  Tape::Node& n = t.push(Op::kKlDiag, 1, 1);
  n.in = {mu_q.id, sigma_q.id, mu_p.id, sigma_p.id};
  n.value[0] = kl;
  return t.last();
}

}  // namespace trajtrack::ad
