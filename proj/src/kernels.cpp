#include "dtcert/kernels.hpp"

#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dtcert/matrix.hpp"

namespace dtcert::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() {
#ifdef _OPENMP
    return g_parallel.load();
#else
    return false;
#endif
}

void set_parallel(bool on) { g_parallel.store(on); }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// ---------------------------------------------------------------- serial

namespace serial {

void gemm(const Matrix& a, const Matrix& b, Matrix& c) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) ci[j] = 0.0;
        const double* ai = a.data() + i * k;
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = ai[l];
            if (ail == 0.0) continue;
            const double* bl = b.data() + l * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += ail * bl[j];
        }
    }
}

bool cholesky(Matrix& a, double tol) {
    const std::size_t n = a.rows();
    for (std::size_t k = 0; k < n; ++k) {
        double d = a(k, k);
        if (d < tol) return false;
        d = std::sqrt(d);
        a(k, k) = d;
        for (std::size_t i = k + 1; i < n; ++i) a(i, k) /= d;
        for (std::size_t i = k + 1; i < n; ++i) {
            const double lik = a(i, k);
            if (lik == 0.0) continue;
            for (std::size_t j = k + 1; j <= i; ++j) a(i, j) -= lik * a(j, k);
        }
        for (std::size_t j = k + 1; j < n; ++j) a(k, j) = 0.0;
    }
    return true;
}

int ldlt(Matrix& a, std::vector<double>& d, const std::vector<int>& sign, double floor) {
    const std::size_t n = a.rows();
    d.assign(n, 0.0);
    int clamps = 0;
    for (std::size_t k = 0; k < n; ++k) {
        double dk = a(k, k);
        if (sign[k] > 0 ? dk < floor : dk > -floor) {
            dk = sign[k] > 0 ? floor : -floor;
            ++clamps;
        }
        d[k] = dk;
        for (std::size_t i = k + 1; i < n; ++i) a(i, k) /= dk;
        for (std::size_t i = k + 1; i < n; ++i) {
            const double lik = a(i, k);
            if (lik == 0.0) continue;
            const double likd = lik * dk;
            for (std::size_t j = k + 1; j <= i; ++j) a(i, j) -= likd * a(j, k);
        }
    }
    return clamps;
}

void gram_schur(const Matrix& x, const Matrix& y, Matrix& h) {
    const std::size_t s = x.rows();
    for (std::size_t r = 0; r < s; ++r) {
        for (std::size_t c = r; c < s; ++c) {
            const std::size_t row = tri_index(r, c, s);
            for (std::size_t p = 0; p < s; ++p) {
                for (std::size_t q = p; q < s; ++q) {
                    const std::size_t col = tri_index(p, q, s);
                    if (col < row) continue;
                    double v;
                    if (r == c && p == q) {
                        v = x(r, p) * y(p, r);
                    } else if (r == c) {
                        v = x(r, p) * y(q, r) + x(r, q) * y(p, r);
                    } else if (p == q) {
                        v = x(c, p) * y(p, r) + x(r, p) * y(p, c);
                    } else {
                        v = x(c, p) * y(q, r) + x(c, q) * y(p, r) + x(r, p) * y(q, c) +
                            x(r, q) * y(p, c);
                    }
                    h(row, col) = v;
                    h(col, row) = v;
                }
            }
        }
    }
}

void trsm_lower(const Matrix& l, Matrix& b) {
    const std::size_t n = l.rows(), m = b.cols();
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = b(i, j);
            for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * b(k, j);
            b(i, j) = s / l(i, i);
        }
    }
}

void trsm_lower_t(const Matrix& l, Matrix& b) {
    const std::size_t n = l.rows(), m = b.cols();
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t ii = n; ii-- > 0;) {
            double s = b(ii, j);
            for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * b(k, j);
            b(ii, j) = s / l(ii, ii);
        }
    }
}

}  // namespace serial

// -------------------------------------------------------------- parallel

namespace parallel {

void gemm(const Matrix& a, const Matrix& b, Matrix& c) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) ci[j] = 0.0;
        const double* ai = a.data() + i * k;
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = ai[l];
            if (ail == 0.0) continue;
            const double* bl = b.data() + l * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += ail * bl[j];
        }
    }
}

bool cholesky(Matrix& a, double tol) {
    const std::size_t n = a.rows();
    for (std::size_t k = 0; k < n; ++k) {
        double d = a(k, k);
        if (d < tol) return false;
        d = std::sqrt(d);
        a(k, k) = d;
        for (std::size_t i = k + 1; i < n; ++i) a(i, k) /= d;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n - k > 64)
#endif
        for (std::size_t i = k + 1; i < n; ++i) {
            const double lik = a(i, k);
            if (lik == 0.0) continue;
            for (std::size_t j = k + 1; j <= i; ++j) a(i, j) -= lik * a(j, k);
        }
        for (std::size_t j = k + 1; j < n; ++j) a(k, j) = 0.0;
    }
    return true;
}

int ldlt(Matrix& a, std::vector<double>& d, const std::vector<int>& sign, double floor) {
    const std::size_t n = a.rows();
    d.assign(n, 0.0);
    int clamps = 0;
    for (std::size_t k = 0; k < n; ++k) {
        double dk = a(k, k);
        if (sign[k] > 0 ? dk < floor : dk > -floor) {
            dk = sign[k] > 0 ? floor : -floor;
            ++clamps;
        }
        d[k] = dk;
        for (std::size_t i = k + 1; i < n; ++i) a(i, k) /= dk;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n - k > 64)
#endif
        for (std::size_t i = k + 1; i < n; ++i) {
            const double lik = a(i, k);
            if (lik == 0.0) continue;
            const double likd = lik * d[k];
            for (std::size_t j = k + 1; j <= i; ++j) a(i, j) -= likd * a(j, k);
        }
    }
    return clamps;
}

void gram_schur(const Matrix& x, const Matrix& y, Matrix& h) {
    const std::size_t s = x.rows();
    const std::size_t nt = tri_count(s);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8)
#endif
    for (std::size_t row = 0; row < nt; ++row) {
        // invert the triangular index
        std::size_t r = 0, rem = row;
        while (rem >= s - r) { rem -= s - r; ++r; }
        const std::size_t c = r + rem;
        for (std::size_t p = 0; p < s; ++p) {
            for (std::size_t q = p; q < s; ++q) {
                const std::size_t col = tri_index(p, q, s);
                if (col < row) continue;
                double v;
                if (r == c && p == q) {
                    v = x(r, p) * y(p, r);
                } else if (r == c) {
                    v = x(r, p) * y(q, r) + x(r, q) * y(p, r);
                } else if (p == q) {
                    v = x(c, p) * y(p, r) + x(r, p) * y(p, c);
                } else {
                    v = x(c, p) * y(q, r) + x(c, q) * y(p, r) + x(r, p) * y(q, c) +
                        x(r, q) * y(p, c);
                }
                h(row, col) = v;
                h(col, row) = v;
            }
        }
    }
}

void trsm_lower(const Matrix& l, Matrix& b) {
    const std::size_t n = l.rows(), m = b.cols();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m > 8)
#endif
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = b(i, j);
            for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * b(k, j);
            b(i, j) = s / l(i, i);
        }
    }
}

void trsm_lower_t(const Matrix& l, Matrix& b) {
    const std::size_t n = l.rows(), m = b.cols();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m > 8)
#endif
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t ii = n; ii-- > 0;) {
            double s = b(ii, j);
            for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * b(k, j);
            b(ii, j) = s / l(ii, ii);
        }
    }
}

}  // namespace parallel

// -------------------------------------------------------------- dispatch

void gemm(const Matrix& a, const Matrix& b, Matrix& c) {
    parallel_enabled() ? parallel::gemm(a, b, c) : serial::gemm(a, b, c);
}
bool cholesky(Matrix& a, double tol) {
    return parallel_enabled() ? parallel::cholesky(a, tol) : serial::cholesky(a, tol);
}
int ldlt(Matrix& a, std::vector<double>& d, const std::vector<int>& sign, double floor) {
    return parallel_enabled() ? parallel::ldlt(a, d, sign, floor) : serial::ldlt(a, d, sign, floor);
}
void gram_schur(const Matrix& x, const Matrix& y, Matrix& h) {
    parallel_enabled() ? parallel::gram_schur(x, y, h) : serial::gram_schur(x, y, h);
}
void trsm_lower(const Matrix& l, Matrix& b) {
    parallel_enabled() ? parallel::trsm_lower(l, b) : serial::trsm_lower(l, b);
}
void trsm_lower_t(const Matrix& l, Matrix& b) {
    parallel_enabled() ? parallel::trsm_lower_t(l, b) : serial::trsm_lower_t(l, b);
}

std::vector<double> cholesky_solve(const Matrix& l, std::vector<double> b) {
    const std::size_t n = l.rows();
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * b[k];
        b[i] = s / l(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * b[k];
        b[ii] = s / l(ii, ii);
    }
    return b;
}

void cholesky_solve_inplace(const Matrix& l, Matrix& b) {
    trsm_lower(l, b);
    trsm_lower_t(l, b);
}

std::vector<double> ldlt_solve(const Matrix& l, const std::vector<double>& d,
                               std::vector<double> b) {
    const std::size_t n = l.rows();
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * b[k];
        b[i] = s;
    }
    for (std::size_t i = 0; i < n; ++i) b[i] /= d[i];
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * b[k];
        b[ii] = s;
    }
    return b;
}

}  // namespace dtcert::kernels
