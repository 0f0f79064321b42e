#pragma once

#include "cdcor/matrix.hpp"

namespace cdcor {

// Matrix exponential by scaling and squaring: the argument is halved until
// its infinity norm is at most 0.5, expanded with a degree-12 Taylor
// polynomial, then squared back.
Matrix expm(const Matrix& m);

// h(A) = Tr(exp(A o A)) - d for a d x d adjacency. Zero exactly when the
// weighted graph has no directed cycle, positive otherwise.
double acyclicity(const Matrix& adjacency);

// Closed-form gradient of acyclicity(): exp(A o A)^T o 2A.
Matrix acyclicity_gradient(const Matrix& adjacency);

// Both of the above from one exponential.
struct AcyclicityValue {
  double value = 0.0;
  Matrix gradient;
};
AcyclicityValue acyclicity_with_gradient(const Matrix& adjacency);

}  // namespace cdcor
