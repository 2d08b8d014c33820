#pragma once

#include "dtcert/matrix.hpp"

namespace dtcert {

/// e^{A t} by scaling-and-squaring with the diagonal Pade-13 approximant
/// (scaling threshold ||At||_1 <= 5.37). Throws NumericError when the
/// required scaling exceeds the budget or the result overflows.
Matrix expm(const Matrix& a, double t = 1.0);

}  // namespace dtcert
