#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace dtcert {

/// Raised when an iterative numeric routine cannot reach its target
/// accuracy; `best_estimate` carries the last iterate where meaningful.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what, double best_estimate = 0.0)
        : std::runtime_error(what), best_estimate(best_estimate) {}
    double best_estimate;
};

/// Dense real matrix, row-major. Sized at runtime; everything in this
/// project is small (state dimension <= 10, Gram blocks <= ~200).
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), a_(rows * cols, 0.0) {}
    Matrix(std::initializer_list<std::initializer_list<double>> init);

    static Matrix identity(std::size_t n);
    static Matrix zero(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
    static Matrix diag(const std::vector<double>& d);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return a_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

    double* data() { return a_.data(); }
    const double* data() const { return a_.data(); }

    Matrix transpose() const;
    double trace() const;
    double max_abs() const;
    double norm_fro() const;
    /// Maximum absolute column sum (induced 1-norm).
    double norm1() const;

    /// max|M - M^T| <= tol * (1 + max|M|), the symmetry test used by all
    /// symmetric-matrix operations.
    bool is_symmetric(double tol = 1e-12) const;
    /// (M + M^T) / 2.
    Matrix symmetrized() const;
    /// Throws std::invalid_argument unless square and is_symmetric(tol).
    void require_symmetric(const char* where, double tol = 1e-12) const;

    Matrix& operator+=(const Matrix& o);
    Matrix& operator-=(const Matrix& o);
    Matrix& operator*=(double s);

    bool all_finite() const;

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> a_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator*(double s, Matrix a);
Matrix operator-(Matrix a);

/// a^T * b * a (congruence transform; b square, a.rows() == b.rows()).
Matrix congruence(const Matrix& a, const Matrix& b);
/// a * b * a^T.
Matrix sandwich(const Matrix& a, const Matrix& b);
/// a + a^T.
Matrix he(const Matrix& a);
/// Block-diagonal concatenation.
Matrix block_diag(const std::vector<Matrix>& blocks);

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x);
double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& v);
double norm_inf(const std::vector<double>& v);

}  // namespace dtcert
