#pragma once

#include <cmath>

#include "cdcor/matrix.hpp"

// Dense products used by the tape. `serial` is the reference implementation;
// `parallel` splits output rows across OpenMP threads. Both accumulate each
// output entry in the same order, so their results are bitwise identical.
namespace cdcor::kernels {

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);     // a * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
}  // namespace serial

namespace parallel {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
}  // namespace parallel

// Entry points used by the rest of the library.
using parallel::matmul;
using parallel::matmul_nt;
using parallel::matmul_tn;

// Output size (rows * cols * inner) below which the parallel kernels stay
// on one thread.
inline constexpr std::size_t kParallelWorkThreshold = 1u << 15;

int max_threads();

// softmax([z0, z1])[1] = sigmoid(d) with d = z1 - z0, without overflow.
inline double logistic(double d) {
  return d >= 0.0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
}

}  // namespace cdcor::kernels
