#pragma once

#include <complex>
#include <vector>

#include "dtcert/matrix.hpp"

namespace dtcert {

struct SymEig {
    std::vector<double> values;  // ascending
    Matrix vectors;              // orthonormal columns, M v_k = values[k] v_k
};

/// Symmetric eigendecomposition via Householder tridiagonalization and
/// implicit-shift QL. Input must be square and symmetric to the Matrix
/// tolerance; it is symmetrized before factorization.
SymEig sym_eig(const Matrix& m);

/// Smallest eigenvalue of the symmetrized input.
double min_eig(const Matrix& m);

/// All eigenvalues of a general square real matrix (Hessenberg reduction
/// followed by a Francis double-shift QR sweep).
std::vector<std::complex<double>> eigenvalues(const Matrix& m);

/// max |lambda| over the (possibly complex) spectrum.
double spectral_radius(const Matrix& m);

}  // namespace dtcert
