#include "cdcor/tape.hpp"

#include <algorithm>
#include <cmath>

#include "cdcor/acyclicity.hpp"
#include "cdcor/error.hpp"
#include "cdcor/kernels.hpp"

namespace cdcor {

namespace {

constexpr double kProbabilityFloor = 1e-7;
constexpr double kNormGuard = 1e-12;

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": operand shapes differ, " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

Matrix scalar_matrix(double v) { return Matrix(1, 1, v); }

}  // namespace

// --- ParameterSet ----------------------------------------------------------

std::size_t ParameterSet::add(std::string name, Matrix value) {
  if (index_.contains(name)) throw Error("duplicate parameter name '" + name + "'");
  const std::size_t id = params_.size();
  Matrix grad(value.rows(), value.cols());
  index_.emplace(name, id);
  params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad)});
  return id;
}

bool ParameterSet::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParameterSet::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

std::size_t ParameterSet::entry_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) {
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      p.grad = Matrix(p.value.rows(), p.value.cols());
    } else {
      p.grad.fill(0.0);
    }
  }
}

// --- Var -------------------------------------------------------------------

const Matrix& Var::value() const { return tape->value(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("scalar(): node has shape " + v.shape_string());
  return v[0];
}

// --- Tape ------------------------------------------------------------------

const char* Tape::op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kParameter: return "parameter";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kHadamard: return "hadamard";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kConcatRows: return "concat_rows";
    case Op::kSlice: return "slice";
    case Op::kGather: return "gather_columns";
    case Op::kRelu: return "relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSoftmax2: return "softmax2";
    case Op::kLog: return "log";
    case Op::kSqrt: return "sqrt";
    case Op::kBinaryCrossEntropy: return "binary_cross_entropy";
    case Op::kSum: return "sum";
    case Op::kSquaredNorm: return "squared_norm";
    case Op::kL1Norm: return "l1_norm";
    case Op::kL2Norm: return "l2_norm";
    case Op::kColumnL1: return "column_l1";
    case Op::kGradientReversal: return "gradient_reversal";
    case Op::kAcyclicity: return "acyclicity";
  }
  return "?";
}

void Tape::check_tape(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) throw Error("variable does not belong to this tape");
}

const Matrix& Tape::node_value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.is_param ? (*params_)[n.param].value : n.value;
}

const Matrix& Tape::value(Var v) const {
  check_tape(v);
  return node_value(v.id);
}

Matrix Tape::grad(Var v) const {
  check_tape(v);
  const Node& n = nodes_[v.id];
  if (n.is_param) return (*params_)[n.param].grad;
  const Matrix& val = node_value(v.id);
  if (n.grad.rows() != val.rows() || n.grad.cols() != val.cols()) {
    return Matrix(val.rows(), val.cols());
  }
  return n.grad;
}

Var Tape::push(Node node) {
  if (!node.is_param && !node.value.all_finite()) {
    throw NonFiniteError(std::string("operation '") + op_name(node.op) +
                         "' produced a non-finite value (output " + node.value.shape_string() +
                         ")");
  }
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(std::string_view name) {
  if (params_ == nullptr) throw Error("tape has no parameter set");
  const std::size_t pid = params_->index_of(name);
  if (auto it = param_nodes_.find(pid); it != param_nodes_.end()) return Var{this, it->second};
  if (!(*params_)[pid].value.all_finite()) {
    throw NonFiniteError("parameter '" + std::string(name) + "' holds non-finite values");
  }
  Node n;
  n.op = Op::kParameter;
  n.is_param = true;
  n.param = pid;
  Var v = push(std::move(n));
  param_nodes_.emplace(pid, v.id);
  return v;
}

Var Tape::matmul(Var a, Var b) {
  check_tape(a);
  check_tape(b);
  Node n;
  n.op = Op::kMatMul;
  n.lhs = a.id;
  n.rhs = b.id;
  n.value = kernels::matmul(node_value(a.id), node_value(b.id));
  return push(std::move(n));
}

Var Tape::transpose(Var a) {
  check_tape(a);
  Node n;
  n.op = Op::kTranspose;
  n.lhs = a.id;
  n.value = node_value(a.id).transposed();
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_tape(a);
  check_tape(b);
  const Matrix& x = node_value(a.id);
  const Matrix& y = node_value(b.id);
  require_same_shape("add", x, y);
  Node n;
  n.op = Op::kAdd;
  n.lhs = a.id;
  n.rhs = b.id;
  n.value = x;
  for (std::size_t i = 0; i < y.size(); ++i) n.value[i] += y[i];
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_tape(a);
  check_tape(b);
  const Matrix& x = node_value(a.id);
  const Matrix& y = node_value(b.id);
  require_same_shape("sub", x, y);
  Node n;
  n.op = Op::kSub;
  n.lhs = a.id;
  n.rhs = b.id;
  n.value = x;
  for (std::size_t i = 0; i < y.size(); ++i) n.value[i] -= y[i];
  return push(std::move(n));
}

Var Tape::hadamard(Var a, Var b) {
  check_tape(a);
  check_tape(b);
  const Matrix& x = node_value(a.id);
  const Matrix& y = node_value(b.id);
  require_same_shape("hadamard", x, y);
  Node n;
  n.op = Op::kHadamard;
  n.lhs = a.id;
  n.rhs = b.id;
  n.value = x;
  for (std::size_t i = 0; i < y.size(); ++i) n.value[i] *= y[i];
  return push(std::move(n));
}

Var Tape::scale(Var a, double factor) {
  check_tape(a);
  Node n;
  n.op = Op::kScale;
  n.lhs = a.id;
  n.scalar = factor;
  n.value = node_value(a.id);
  for (auto& v : n.value.values()) v *= factor;
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double offset) {
  check_tape(a);
  Node n;
  n.op = Op::kAddScalar;
  n.lhs = a.id;
  n.value = node_value(a.id);
  for (auto& v : n.value.values()) v += offset;
  return push(std::move(n));
}

Var Tape::concat_rows(Var top, Var bottom) {
  check_tape(top);
  check_tape(bottom);
  const Matrix& x = node_value(top.id);
  const Matrix& y = node_value(bottom.id);
  if (x.cols() != y.cols()) {
    throw ShapeError("concat_rows: column counts differ, " + x.shape_string() + " vs " +
                     y.shape_string());
  }
  Node n;
  n.op = Op::kConcatRows;
  n.lhs = top.id;
  n.rhs = bottom.id;
  n.value = Matrix(x.rows() + y.rows(), x.cols());
  std::copy(x.values().begin(), x.values().end(), n.value.values().begin());
  std::copy(y.values().begin(), y.values().end(), n.value.values().begin() + x.size());
  return push(std::move(n));
}

Var Tape::slice(Var a, std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
                std::size_t col_end) {
  check_tape(a);
  const Matrix& x = node_value(a.id);
  if (row_begin > row_end || row_end > x.rows() || col_begin > col_end || col_end > x.cols()) {
    throw ShapeError("slice: range rows [" + std::to_string(row_begin) + "," +
                     std::to_string(row_end) + ") cols [" + std::to_string(col_begin) + "," +
                     std::to_string(col_end) + ") outside " + x.shape_string());
  }
  Node n;
  n.op = Op::kSlice;
  n.lhs = a.id;
  n.bounds[0] = row_begin;
  n.bounds[1] = row_end;
  n.bounds[2] = col_begin;
  n.bounds[3] = col_end;
  n.value = Matrix(row_end - row_begin, col_end - col_begin);
  for (std::size_t r = row_begin; r < row_end; ++r)
    for (std::size_t c = col_begin; c < col_end; ++c) n.value(r - row_begin, c - col_begin) = x(r, c);
  return push(std::move(n));
}

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t end) {
  return slice(a, begin, end, 0, value(a).cols());
}

Var Tape::gather_columns(Var a, std::vector<std::size_t> indices) {
  check_tape(a);
  const Matrix& x = node_value(a.id);
  Node n;
  n.op = Op::kGather;
  n.lhs = a.id;
  n.value = Matrix(x.rows(), indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= x.cols()) {
      throw ShapeError("gather_columns: index " + std::to_string(indices[j]) + " outside " +
                       x.shape_string());
    }
    for (std::size_t r = 0; r < x.rows(); ++r) n.value(r, j) = x(r, indices[j]);
  }
  n.indices = std::move(indices);
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  check_tape(a);
  Node n;
  n.op = Op::kRelu;
  n.lhs = a.id;
  n.value = node_value(a.id);
  for (auto& v : n.value.values()) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  check_tape(a);
  Node n;
  n.op = Op::kSigmoid;
  n.lhs = a.id;
  n.value = node_value(a.id);
  for (auto& v : n.value.values()) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return push(std::move(n));
}

Var Tape::softmax2(Var a) {
  check_tape(a);
  const Matrix& x = node_value(a.id);
  if (x.rows() != 2) throw ShapeError("softmax2: expected 2 rows, got " + x.shape_string());
  Node n;
  n.op = Op::kSoftmax2;
  n.lhs = a.id;
  n.value = Matrix(2, x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    const double p1 = kernels::logistic(x(1, c) - x(0, c));
    n.value(1, c) = p1;
    n.value(0, c) = 1.0 - p1;
  }
  return push(std::move(n));
}

Var Tape::log(Var a) {
  check_tape(a);
  Node n;
  n.op = Op::kLog;
  n.lhs = a.id;
  n.value = node_value(a.id);
  for (auto& v : n.value.values()) v = std::log(v);
  return push(std::move(n));
}

Var Tape::sqrt(Var a) {
  check_tape(a);
  Node n;
  n.op = Op::kSqrt;
  n.lhs = a.id;
  n.value = node_value(a.id);
  for (auto& v : n.value.values()) v = std::sqrt(v);
  return push(std::move(n));
}

Var Tape::binary_cross_entropy(Var probabilities, const Matrix& labels) {
  check_tape(probabilities);
  const Matrix& p = node_value(probabilities.id);
  require_same_shape("binary_cross_entropy", p, labels);
  Node n;
  n.op = Op::kBinaryCrossEntropy;
  n.lhs = probabilities.id;
  n.aux = labels;
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], kProbabilityFloor, 1.0 - kProbabilityFloor);
    total -= labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q);
  }
  n.value = scalar_matrix(total);
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  check_tape(a);
  Node n;
  n.op = Op::kSum;
  n.lhs = a.id;
  double total = 0.0;
  for (double v : node_value(a.id).values()) total += v;
  n.value = scalar_matrix(total);
  return push(std::move(n));
}

Var Tape::squared_norm(Var a) {
  check_tape(a);
  Node n;
  n.op = Op::kSquaredNorm;
  n.lhs = a.id;
  double total = 0.0;
  for (double v : node_value(a.id).values()) total += v * v;
  n.value = scalar_matrix(total);
  return push(std::move(n));
}

Var Tape::l1_norm(Var a) {
  check_tape(a);
  Node n;
  n.op = Op::kL1Norm;
  n.lhs = a.id;
  double total = 0.0;
  for (double v : node_value(a.id).values()) total += std::abs(v);
  n.value = scalar_matrix(total);
  return push(std::move(n));
}

Var Tape::l2_norm(Var a) {
  check_tape(a);
  Node n;
  n.op = Op::kL2Norm;
  n.lhs = a.id;
  double total = 0.0;
  for (double v : node_value(a.id).values()) total += v * v;
  n.value = scalar_matrix(std::sqrt(total));
  return push(std::move(n));
}

Var Tape::column_l1(Var a) {
  check_tape(a);
  const Matrix& x = node_value(a.id);
  Node n;
  n.op = Op::kColumnL1;
  n.lhs = a.id;
  n.value = Matrix(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) n.value(0, c) += std::abs(x(r, c));
  return push(std::move(n));
}

Var Tape::gradient_reversal(Var a, double scale) {
  check_tape(a);
  if (!(scale >= 0.0) || !std::isfinite(scale)) {
    throw Error("gradient_reversal: scale must be finite and non-negative, got " +
                std::to_string(scale));
  }
  Node n;
  n.op = Op::kGradientReversal;
  n.lhs = a.id;
  n.scalar = scale;
  n.value = node_value(a.id);
  return push(std::move(n));
}

Var Tape::acyclicity(Var a) {
  check_tape(a);
  auto result = acyclicity_with_gradient(node_value(a.id));
  Node n;
  n.op = Op::kAcyclicity;
  n.lhs = a.id;
  n.value = scalar_matrix(result.value);
  n.aux = std::move(result.gradient);
  return push(std::move(n));
}

Matrix& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.is_param) return (*params_)[n.param].grad;
  const Matrix& v = n.value;
  if (n.grad.rows() != v.rows() || n.grad.cols() != v.cols()) n.grad = Matrix(v.rows(), v.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  check_tape(loss);
  if (backward_done_) throw Error("tape already ran backward()");
  if (node_value(loss.id).size() != 1) {
    throw ShapeError("backward: loss must be 1x1, got " + node_value(loss.id).shape_string());
  }
  backward_done_ = true;
  if (params_ != nullptr) {
    for (auto& p : *params_) {
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
        p.grad = Matrix(p.value.rows(), p.value.cols());
      }
    }
  }

  std::vector<bool> reached(nodes_.size(), false);
  reached[loss.id] = true;
  Matrix seed(1, 1, 1.0);
  if (nodes_[loss.id].is_param) {
    (*params_)[nodes_[loss.id].param].grad[0] += 1.0;
  } else {
    nodes_[loss.id].grad = seed;
  }

  auto accumulate = [&](std::size_t id) -> Matrix& {
    reached[id] = true;
    return grad_slot(id);
  };

  for (std::size_t idx = loss.id + 1; idx-- > 0;) {
    if (!reached[idx]) continue;
    Node& n = nodes_[idx];
    if (n.op == Op::kConstant || n.op == Op::kParameter) continue;
    const Matrix& g = n.grad;
    switch (n.op) {
      case Op::kMatMul: {
        const Matrix& a = node_value(n.lhs);
        const Matrix& b = node_value(n.rhs);
        const Matrix ga = kernels::matmul_nt(g, b);
        const Matrix gb = kernels::matmul_tn(a, g);
        Matrix& sa = accumulate(n.lhs);
        for (std::size_t i = 0; i < ga.size(); ++i) sa[i] += ga[i];
        Matrix& sb = accumulate(n.rhs);
        for (std::size_t i = 0; i < gb.size(); ++i) sb[i] += gb[i];
        break;
      }
      case Op::kTranspose: {
        const Matrix gt = g.transposed();
        Matrix& s = accumulate(n.lhs);
        for (std::size_t i = 0; i < gt.size(); ++i) s[i] += gt[i];
        break;
      }
      case Op::kAdd:
      case Op::kSub: {
        const double sign_rhs = n.op == Op::kAdd ? 1.0 : -1.0;
        {
          Matrix& sa = accumulate(n.lhs);
          for (std::size_t i = 0; i < g.size(); ++i) sa[i] += g[i];
        }
        Matrix& sb = accumulate(n.rhs);
        for (std::size_t i = 0; i < g.size(); ++i) sb[i] += sign_rhs * g[i];
        break;
      }
      case Op::kHadamard: {
        const Matrix& a = node_value(n.lhs);
        const Matrix& b = node_value(n.rhs);
        {
          Matrix& sa = accumulate(n.lhs);
          for (std::size_t i = 0; i < g.size(); ++i) sa[i] += g[i] * b[i];
        }
        Matrix& sb = accumulate(n.rhs);
        for (std::size_t i = 0; i < g.size(); ++i) sb[i] += g[i] * a[i];
        break;
      }
      case Op::kScale: {
        Matrix& s = accumulate(n.lhs);
        for (std::size_t i = 0; i < g.size(); ++i) s[i] += n.scalar * g[i];
        break;
      }
      case Op::kAddScalar: {
        Matrix& s = accumulate(n.lhs);
        for (std::size_t i = 0; i < g.size(); ++i) s[i] += g[i];
        break;
      }
      case Op::kConcatRows: {
        const std::size_t split = node_value(n.lhs).size();
        {
          Matrix& sa = accumulate(n.lhs);
          for (std::size_t i = 0; i < split; ++i) sa[i] += g[i];
        }
        Matrix& sb = accumulate(n.rhs);
        for (std::size_t i = split; i < g.size(); ++i) sb[i - split] += g[i];
        break;
      }
      case Op::kSlice: {
        Matrix& s = accumulate(n.lhs);
        for (std::size_t r = n.bounds[0]; r < n.bounds[1]; ++r)
          for (std::size_t c = n.bounds[2]; c < n.bounds[3]; ++c)
            s(r, c) += g(r - n.bounds[0], c - n.bounds[2]);
        break;
      }
      case Op::kGather: {
        Matrix& s = accumulate(n.lhs);
        for (std::size_t j = 0; j < n.indices.size(); ++j)
          for (std::size_t r = 0; r < g.rows(); ++r) s(r, n.indices[j]) += g(r, j);
        break;
      }
      case Op::kRelu: {
        const Matrix& x = node_value(n.lhs);
        Matrix& s = accumulate(n.lhs);
        for (std::size_t i = 0; i < g.size(); ++i) s[i] += x[i] > 0.0 ? g[i] : 0.0;
        break;
      }
      case Op::kSigmoid: {
        Matrix& s = accumulate(n.lhs);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = n.value[i];
          s[i] += g[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::kSoftmax2: {
        Matrix& s = accumulate(n.lhs);
        for (std::size_t c = 0; c < g.cols(); ++c) {
          const double p0 = n.value(0, c);
          const double p1 = n.value(1, c);
          const double dot = g(0, c) * p0 + g(1, c) * p1;
          s(0, c) += p0 * (g(0, c) - dot);
          s(1, c) += p1 * (g(1, c) - dot);
        }
        break;
      }
      case Op::kLog: {
        const Matrix& x = node_value(n.lhs);
        Matrix& s = accumulate(n.lhs);
        for (std::size_t i = 0; i < g.size(); ++i) s[i] += g[i] / x[i];
        break;
      }
      case Op::kSqrt: {
        Matrix& s = accumulate(n.lhs);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (n.value[i] >= kNormGuard) s[i] += g[i] / (2.0 * n.value[i]);
        }
        break;
      }
      case Op::kBinaryCrossEntropy: {
        const Matrix& p = node_value(n.lhs);
        Matrix& s = accumulate(n.lhs);
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (p[i] <= kProbabilityFloor || p[i] >= 1.0 - kProbabilityFloor) continue;
          const double y = n.aux[i];
          s[i] += g[0] * (-y / p[i] + (1.0 - y) / (1.0 - p[i]));
        }
        break;
      }
      case Op::kSum: {
        Matrix& s = accumulate(n.lhs);
        for (auto& v : s.values()) v += g[0];
        break;
      }
      case Op::kSquaredNorm: {
        const Matrix& x = node_value(n.lhs);
        Matrix& s = accumulate(n.lhs);
        for (std::size_t i = 0; i < x.size(); ++i) s[i] += 2.0 * x[i] * g[0];
        break;
      }
      case Op::kL1Norm: {
        const Matrix& x = node_value(n.lhs);
        Matrix& s = accumulate(n.lhs);
        for (std::size_t i = 0; i < x.size(); ++i) s[i] += sign(x[i]) * g[0];
        break;
      }
      case Op::kL2Norm: {
        const double norm = n.value[0];
        if (norm < kNormGuard) {
          accumulate(n.lhs);
          break;
        }
        const Matrix& x = node_value(n.lhs);
        Matrix& s = accumulate(n.lhs);
        for (std::size_t i = 0; i < x.size(); ++i) s[i] += x[i] / norm * g[0];
        break;
      }
      case Op::kColumnL1: {
        const Matrix& x = node_value(n.lhs);
        Matrix& s = accumulate(n.lhs);
        for (std::size_t r = 0; r < x.rows(); ++r)
          for (std::size_t c = 0; c < x.cols(); ++c) s(r, c) += sign(x(r, c)) * g(0, c);
        break;
      }
      case Op::kGradientReversal: {
        Matrix& s = accumulate(n.lhs);
        for (std::size_t i = 0; i < g.size(); ++i) s[i] += -n.scalar * g[i];
        break;
      }
      case Op::kAcyclicity: {
        Matrix& s = accumulate(n.lhs);
        for (std::size_t i = 0; i < n.aux.size(); ++i) s[i] += n.aux[i] * g[0];
        break;
      }
      case Op::kConstant:
      case Op::kParameter:
        break;
    }
  }
}

}  // namespace cdcor
