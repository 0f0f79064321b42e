#pragma once

// Reverse-mode gradient tape over dense matrices.
//
// A Tape records primitive operations in execution order. Parameters live in
// a ParameterSet owned by the caller; parameter leaves read the stored value
// in place and backward() accumulates into the stored gradient. A tape is
// single-use and must stay on one thread; independent tapes over the same
// read-only ParameterSet can run concurrently as long as none of them calls
// backward().

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdcor/matrix.hpp"

namespace cdcor {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

class ParameterSet {
 public:
  // Registers a parameter; names must be unique.
  std::size_t add(std::string name, Matrix value);

  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  Parameter& at(std::string_view name) { return params_[index_of(name)]; }
  const Parameter& at(std::string_view name) const { return params_[index_of(name)]; }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }

  std::size_t size() const { return params_.size(); }
  std::size_t entry_count() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;
};

class Tape {
 public:
  explicit Tape(ParameterSet* params = nullptr) : params_(params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Leaf bound to a registered parameter. Repeated calls with the same name
  // return the same node.
  Var parameter(std::string_view name);

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double factor);
  Var add_scalar(Var a, double offset);
  Var concat_rows(Var top, Var bottom);
  // Rows [row_begin, row_end) x columns [col_begin, col_end).
  Var slice(Var a, std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
            std::size_t col_end);
  Var slice_rows(Var a, std::size_t begin, std::size_t end);
  // Columns of `a` picked by index; the one-hot embedding lookup.
  Var gather_columns(Var a, std::vector<std::size_t> indices);
  Var relu(Var a);
  Var sigmoid(Var a);
  // Softmax down each column of a 2 x n matrix.
  Var softmax2(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  // Summed binary cross-entropy between probabilities and 0/1 labels of the
  // same shape. Probabilities are clamped to [1e-7, 1 - 1e-7].
  Var binary_cross_entropy(Var probabilities, const Matrix& labels);
  Var sum(Var a);
  Var squared_norm(Var a);
  Var l1_norm(Var a);
  // Euclidean norm; the gradient is zero when the norm is below 1e-12.
  Var l2_norm(Var a);
  // 1 x cols row of per-column absolute sums.
  Var column_l1(Var a);
  // Identity forward; backward multiplies the incoming gradient by -scale.
  Var gradient_reversal(Var a, double scale);
  // Tr(exp(A o A)) - d with the closed-form gradient.
  Var acyclicity(Var a);

  // Runs the backward sweep from a 1 x 1 loss. Parameter gradients are added
  // to the ParameterSet accumulators, which are not cleared first.
  void backward(Var loss);

  const Matrix& value(Var v) const;
  // Gradient of the loss with respect to a node after backward(). Nodes the
  // loss does not reach report a zero matrix.
  Matrix grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  ParameterSet* parameters() const { return params_; }

 private:
  enum class Op {
    kConstant,
    kParameter,
    kMatMul,
    kTranspose,
    kAdd,
    kSub,
    kHadamard,
    kScale,
    kAddScalar,
    kConcatRows,
    kSlice,
    kGather,
    kRelu,
    kSigmoid,
    kSoftmax2,
    kLog,
    kSqrt,
    kBinaryCrossEntropy,
    kSum,
    kSquaredNorm,
    kL1Norm,
    kL2Norm,
    kColumnL1,
    kGradientReversal,
    kAcyclicity,
  };

  struct Node {
    Op op = Op::kConstant;
    std::size_t lhs = 0;
    std::size_t rhs = 0;
    Matrix value;
    Matrix grad;
    Matrix aux;  // op-specific saved state (labels, closed-form gradient)
    double scalar = 0.0;
    std::size_t bounds[4] = {0, 0, 0, 0};
    std::vector<std::size_t> indices;
    std::size_t param = 0;
    bool is_param = false;
  };

  static const char* op_name(Op op);
  Var push(Node node);
  const Matrix& node_value(std::size_t id) const;
  Matrix& grad_slot(std::size_t id);
  void check_tape(Var v) const;

  ParameterSet* params_;
  std::vector<Node> nodes_;
  std::map<std::size_t, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

inline Var matmul(Var a, Var b) { return a.tape->matmul(a, b); }
inline Var transpose(Var a) { return a.tape->transpose(a); }
inline Var hadamard(Var a, Var b) { return a.tape->hadamard(a, b); }
inline Var concat_rows(Var a, Var b) { return a.tape->concat_rows(a, b); }
inline Var relu(Var a) { return a.tape->relu(a); }
inline Var sigmoid(Var a) { return a.tape->sigmoid(a); }
inline Var softmax2(Var a) { return a.tape->softmax2(a); }
inline Var sum(Var a) { return a.tape->sum(a); }
inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(double s, Var a) { return a.tape->scale(a, s); }

}  // namespace cdcor
