#include "dtcert/expm.hpp"

#include <cmath>
#include <vector>

namespace dtcert {

namespace {

// Solve M X = B by LU with partial pivoting, overwriting B with X.
void lu_solve(Matrix m, Matrix& b) {
    const int n = static_cast<int>(m.rows());
    std::vector<int> piv(n);
    for (int i = 0; i < n; ++i) piv[i] = i;

    for (int k = 0; k < n; ++k) {
        int p = k;
        for (int i = k + 1; i < n; ++i)
            if (std::abs(m(i, k)) > std::abs(m(p, k))) p = i;
        if (m(p, k) == 0.0) throw NumericError("expm: singular Pade denominator");
        if (p != k) {
            for (int j = 0; j < n; ++j) std::swap(m(k, j), m(p, j));
            std::swap(piv[k], piv[p]);
        }
        for (int i = k + 1; i < n; ++i) {
            m(i, k) /= m(k, k);
            for (int j = k + 1; j < n; ++j) m(i, j) -= m(i, k) * m(k, j);
        }
    }

    Matrix x(n, b.cols());
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (int i = 0; i < n; ++i) x(i, c) = b(piv[i], c);
        for (int i = 1; i < n; ++i)
            for (int j = 0; j < i; ++j) x(i, c) -= m(i, j) * x(j, c);
        for (int i = n - 1; i >= 0; --i) {
            for (int j = i + 1; j < n; ++j) x(i, c) -= m(i, j) * x(j, c);
            x(i, c) /= m(i, i);
        }
    }
    b = std::move(x);
}

constexpr double kTheta13 = 5.371920351148152;
constexpr int kMaxSquarings = 60;

}  // namespace

Matrix expm(const Matrix& a, double t) {
    if (a.rows() != a.cols()) throw std::invalid_argument("expm: matrix not square");
    if (!std::isfinite(t)) throw std::invalid_argument("expm: t not finite");
    const std::size_t n = a.rows();
    if (n == 0) return Matrix();

    Matrix at = t * a;
    if (!at.all_finite()) throw NumericError("expm: non-finite input product A*t");
    const double nrm = at.norm1();

    int s = 0;
    if (nrm > kTheta13) {
        s = static_cast<int>(std::ceil(std::log2(nrm / kTheta13)));
        if (s > kMaxSquarings)
            throw NumericError("expm: scaling budget exceeded (||At||_1 too large)", nrm);
        at *= std::ldexp(1.0, -s);
    }

    static const double b[14] = {
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0,  129060195264000.0,   10559470521600.0,
        670442572800.0,      33522128640.0,       1323241920.0,
        40840800.0,          960960.0,            16380.0,
        182.0,               1.0};

    const Matrix id = Matrix::identity(n);
    const Matrix a2 = at * at;
    const Matrix a4 = a2 * a2;
    const Matrix a6 = a2 * a4;

    Matrix u = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2);
    u += b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id;
    u = at * u;
    Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2);
    v += b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;

    Matrix f = v + u;
    lu_solve(v - u, f);

    for (int i = 0; i < s; ++i) {
        f = f * f;
        if (!f.all_finite()) throw NumericError("expm: overflow while squaring", nrm);
    }
    if (!f.all_finite()) throw NumericError("expm: non-finite result", nrm);
    return f;
}

}  // namespace dtcert
