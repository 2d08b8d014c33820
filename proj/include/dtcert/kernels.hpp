#pragma once

#include <cstddef>
#include <vector>

#include "dtcert/matrix.hpp"

namespace dtcert {
class Matrix;
}

// Dense compute kernels on the hot paths (GEMM, factorizations, Gram
// Schur-complement assembly). Each kernel exists twice: a plain serial
// reference under kernels::serial and an OpenMP version under
// kernels::parallel. The parallel versions distribute whole output
// entries across threads, so both variants produce bitwise-identical
// results; tests assert exact equality and the bench target compares
// their throughput. Top-level wrappers dispatch on the runtime switch.
namespace dtcert::kernels {

bool parallel_enabled();
void set_parallel(bool on);
int max_threads();

namespace serial {
void gemm(const Matrix& a, const Matrix& b, Matrix& c);
/// In-place lower Cholesky of the leading n x n of `a` (full storage).
/// Returns false if a pivot falls below `tol`.
bool cholesky(Matrix& a, double tol);
/// Signed LDL^T without pivoting for quasi-definite matrices: expected
/// pivot signs in `sign` (+1/-1). Pivots crossing zero against their
/// sign are clamped to sign*floor; returns the number of clamps.
int ldlt(Matrix& a, std::vector<double>& d, const std::vector<int>& sign, double floor);
/// Gram Schur-complement block for a matrix-variable (unit-coefficient)
/// PSD block: h[(r,c),(p,q)] = tr(E_rc X E_pq Y) over upper-triangle
/// index pairs, written into `h` (dense s(s+1)/2 square).
void gram_schur(const Matrix& x, const Matrix& y, Matrix& h);
/// Forward substitution L * Z = B for unit-diagonal==false lower L,
/// many right-hand sides (columns of b, in place).
void trsm_lower(const Matrix& l, Matrix& b);
/// Backward substitution L^T * Z = B.
void trsm_lower_t(const Matrix& l, Matrix& b);
}  // namespace serial

namespace parallel {
void gemm(const Matrix& a, const Matrix& b, Matrix& c);
bool cholesky(Matrix& a, double tol);
int ldlt(Matrix& a, std::vector<double>& d, const std::vector<int>& sign, double floor);
void gram_schur(const Matrix& x, const Matrix& y, Matrix& h);
void trsm_lower(const Matrix& l, Matrix& b);
void trsm_lower_t(const Matrix& l, Matrix& b);
}  // namespace parallel

void gemm(const Matrix& a, const Matrix& b, Matrix& c);
bool cholesky(Matrix& a, double tol);
int ldlt(Matrix& a, std::vector<double>& d, const std::vector<int>& sign, double floor);
void gram_schur(const Matrix& x, const Matrix& y, Matrix& h);
void trsm_lower(const Matrix& l, Matrix& b);
void trsm_lower_t(const Matrix& l, Matrix& b);

/// Upper-triangle linear index for (r,c), r <= c, in an s x s block.
inline std::size_t tri_index(std::size_t r, std::size_t c, std::size_t s) {
    return r * s - r * (r - 1) / 2 + (c - r);
}
inline std::size_t tri_count(std::size_t s) { return s * (s + 1) / 2; }

/// Solve A x = b after kernels::cholesky(a) succeeded (a holds L).
std::vector<double> cholesky_solve(const Matrix& l, std::vector<double> b);
/// Solve A X = B columnwise (b overwritten).
void cholesky_solve_inplace(const Matrix& l, Matrix& b);
/// Solve A x = b after kernels::ldlt(a, d, ...) (a holds unit-lower L in
/// its strict lower triangle, d the pivots).
std::vector<double> ldlt_solve(const Matrix& l, const std::vector<double>& d,
                               std::vector<double> b);

}  // namespace dtcert::kernels
