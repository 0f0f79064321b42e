#include "cdcor/acyclicity.hpp"

#include <cmath>

#include "cdcor/error.hpp"
#include "cdcor/kernels.hpp"

namespace cdcor {

namespace {

constexpr int kTaylorOrder = 12;
constexpr double kScaledNormBound = 0.5;

double inf_norm(const Matrix& m) {
  double worst = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) row += std::abs(m(r, c));
    worst = std::max(worst, row);
  }
  return worst;
}

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw ShapeError(std::string(what) + ": expected a square matrix, got " + m.shape_string());
  }
}

Matrix squared_entries(const Matrix& a) {
  Matrix m = a;
  for (auto& x : m.values()) x *= x;
  return m;
}

}  // namespace

Matrix expm(const Matrix& m) {
  require_square(m, "expm");
  const std::size_t n = m.rows();
  if (!m.all_finite()) throw NonFiniteError("expm: non-finite input");

  int squarings = 0;
  const double norm = inf_norm(m);
  if (norm > kScaledNormBound) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / kScaledNormBound)));
  }
  Matrix x = m;
  const double scale = std::ldexp(1.0, -squarings);
  for (auto& v : x.values()) v *= scale;

  // Horner: I + x(I + x/2(I + x/3(... (I + x/12)))).
  Matrix acc = Matrix::identity(n);
  for (int j = kTaylorOrder; j >= 1; --j) {
    Matrix next = kernels::matmul(x, acc);
    for (auto& v : next.values()) v /= static_cast<double>(j);
    for (std::size_t i = 0; i < n; ++i) next(i, i) += 1.0;
    acc = std::move(next);
  }
  for (int s = 0; s < squarings; ++s) acc = kernels::matmul(acc, acc);
  return acc;
}

AcyclicityValue acyclicity_with_gradient(const Matrix& adjacency) {
  require_square(adjacency, "acyclicity");
  const Matrix e = expm(squared_entries(adjacency));
  const std::size_t d = adjacency.rows();
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += e(i, i);

  AcyclicityValue out;
  out.value = trace - static_cast<double>(d);
  out.gradient = Matrix(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out.gradient(i, j) = e(j, i) * 2.0 * adjacency(i, j);
  if (!std::isfinite(out.value) || !out.gradient.all_finite()) {
    throw NonFiniteError("acyclicity: exponential overflowed for adjacency " +
                         adjacency.shape_string());
  }
  return out;
}

double acyclicity(const Matrix& adjacency) { return acyclicity_with_gradient(adjacency).value; }

Matrix acyclicity_gradient(const Matrix& adjacency) {
  return acyclicity_with_gradient(adjacency).gradient;
}

}  // namespace cdcor
