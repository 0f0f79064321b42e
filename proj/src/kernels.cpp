#include "cdcor/kernels.hpp"

#include <omp.h>

#include "cdcor/error.hpp"

namespace cdcor::kernels {

namespace {

void check_inner(const char* op, std::size_t lhs_inner, std::size_t rhs_inner, const Matrix& a,
                 const Matrix& b) {
  if (lhs_inner != rhs_inner) {
    throw ShapeError(std::string(op) + ": incompatible operands " + a.shape_string() + " and " +
                     b.shape_string());
  }
}

// C(i, :) = sum_p A(i, p) * B(p, :), p ascending.
void matmul_rows(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  const std::size_t n = b.cols();
  double* crow = c.data() + i * n;
  for (std::size_t p = 0; p < a.cols(); ++p) {
    const double av = a(i, p);
    const double* brow = b.data() + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

// C(i, :) = sum_p A(p, i) * B(p, :), p ascending.
void matmul_tn_rows(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  const std::size_t n = b.cols();
  double* crow = c.data() + i * n;
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const double av = a(p, i);
    const double* brow = b.data() + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

// C(i, j) = sum_p A(i, p) * B(j, p), p ascending.
void matmul_nt_rows(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  const std::size_t inner = a.cols();
  const double* arow = a.data() + i * inner;
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const double* brow = b.data() + j * inner;
    double acc = 0.0;
    for (std::size_t p = 0; p < inner; ++p) acc += arow[p] * brow[p];
    c(i, j) = acc;
  }
}

}  // namespace

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_inner("matmul", a.cols(), b.rows(), a, b);
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_rows(a, b, c, i);
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_inner("matmul_tn", a.rows(), b.rows(), a, b);
  Matrix c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) matmul_tn_rows(a, b, c, i);
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_inner("matmul_nt", a.cols(), b.cols(), a, b);
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_nt_rows(a, b, c, i);
  return c;
}

}  // namespace serial

namespace parallel {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_inner("matmul", a.cols(), b.rows(), a, b);
  Matrix c(a.rows(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
  const bool big = a.rows() * a.cols() * b.cols() >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < rows; ++i) matmul_rows(a, b, c, static_cast<std::size_t>(i));
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_inner("matmul_tn", a.rows(), b.rows(), a, b);
  Matrix c(a.cols(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.cols());
  const bool big = a.rows() * a.cols() * b.cols() >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < rows; ++i) matmul_tn_rows(a, b, c, static_cast<std::size_t>(i));
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_inner("matmul_nt", a.cols(), b.cols(), a, b);
  Matrix c(a.rows(), b.rows());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
  const bool big = a.rows() * a.cols() * b.rows() >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < rows; ++i) matmul_nt_rows(a, b, c, static_cast<std::size_t>(i));
  return c;
}

}  // namespace parallel

int max_threads() { return omp_get_max_threads(); }

}  // namespace cdcor::kernels
