#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "dtcert/lmi.hpp"
#include "dtcert/matrix.hpp"

namespace dtcert {

/// Symmetric-matrix-valued polynomial in one variable tau or two variables
/// (tau, T). Coefficients are indexed by exponent; univariate exponents use
/// key {d, 0}. All coefficients are symmetric `dim x dim`.
struct PolyMat {
    std::size_t dim = 0;
    int nvars = 1;
    std::map<std::array<int, 2>, Matrix> coeffs;

    PolyMat() = default;
    PolyMat(std::size_t dim, int nvars);

    /// Coefficient of tau^e1 (* T^e2), created as zero when absent.
    Matrix& coeff(int e1, int e2 = 0);
    const Matrix* find(int e1, int e2 = 0) const;

    int degree(int var = 0) const;

    Matrix eval(double tau) const;
    Matrix eval(double tau, double T) const;

    /// Formal partial derivative; `var` 0 = tau, 1 = T.
    PolyMat derivative(int var = 0) const;
};

/// Affine symmetric matrix expression F0 + sum_k y_k F_k in the decision
/// variables of an LmiProblem. The building block for polynomial matrix
/// inequalities whose coefficients contain unknowns.
struct AffineMat {
    std::size_t dim = 0;
    Matrix f0;
    std::vector<LmiTerm> terms;

    AffineMat() = default;
    explicit AffineMat(std::size_t dim);
    static AffineMat constant(Matrix m);

    void add_term(int var, Matrix coef);
    AffineMat& operator+=(const AffineMat& o);
    void scale(double s);
    /// this += s * o.
    void add_scaled(const AffineMat& o, double s);
    /// Merge duplicate variable entries and drop zero coefficients.
    void coalesce();
    bool is_structural_zero() const;

    Matrix eval(const std::vector<double>& y) const;
};

/// a^T M a applied to every coefficient (result dim = a.cols()).
AffineMat congruence_affine(const Matrix& a, const AffineMat& m);
/// M d + (M d)^T.
AffineMat he_product(const AffineMat& m, const Matrix& d);
/// Copy of `m` placed at diagonal offset `off` inside a dim x dim zero frame.
AffineMat embed_sym(const AffineMat& m, std::size_t dim, std::size_t off);

/// Polynomial with AffineMat coefficients: the symbolic form of Z_ij(tau),
/// Z_ij(tau, T) and of the assembled inequality blocks before compilation.
struct AffinePolyMat {
    std::size_t dim = 0;
    int nvars = 1;
    std::map<std::array<int, 2>, AffineMat> coeffs;

    AffinePolyMat() = default;
    AffinePolyMat(std::size_t dim, int nvars);

    AffineMat& coeff(int e1, int e2 = 0);
    const AffineMat* find(int e1, int e2 = 0) const;
    int degree(int var = 0) const;
    int total_degree() const;

    AffinePolyMat& operator+=(const AffinePolyMat& o);
    void scale(double s);
    AffinePolyMat derivative(int var = 0) const;

    static AffinePolyMat from_const(const PolyMat& p);
    /// Numeric polynomial at a fixed decision vector.
    PolyMat instantiate(const std::vector<double>& y) const;
    Matrix eval(const std::vector<double>& y, double tau, double T = 0.0) const;
};

/// scalar_poly (dim 1) times a constant symmetric matrix.
AffinePolyMat scalar_times_matrix(const AffinePolyMat& scalar_poly, const Matrix& m);

/// Where the SOS multipliers of one compiled constraint live: one Gram slice
/// per multiplier. `basis` holds monomial exponents (univariate certificates
/// use the shifted variable s = 2 tau / T - 1, tagged accordingly).
struct GramCertificate {
    struct Piece {
        std::string multiplier;  // "1", "tau(T-tau)", ...
        std::vector<std::array<int, 2>> basis;
        int q_start = -1;
        std::size_t gram_dim = 0;
        std::size_t block_index = 0;
    };
    std::string label;
    std::size_t dim = 0;
    std::vector<Piece> pieces;
};

/// Compiles G(tau) >= 0 on [0, T] into Gram blocks plus coefficient-matching
/// equalities appended to `p`: G = S0 + tau (T - tau) S1 with S0, S1
/// matrix-SOS. Matching runs in the shifted variable s = 2 tau / T - 1.
/// `mult_degree` overrides deg S1 (even, >= 0); default deg S0 = deg G
/// rounded up to even and deg S1 = deg S0 - 2 (absent when negative).
GramCertificate interval_psd_constraint(LmiProblem& p, const AffinePolyMat& g,
                                        double T, const std::string& label,
                                        int mult_degree = -1);

/// Compiles G(tau, T) >= 0 on {0 <= tau <= T, T in [tmin, tmax]} into a
/// Putinar certificate G = S0 + g1 S1 + g2 S2 (+ g1 g2 S3 with `cross_term`)
/// where g1 = tau (T - tau), g2 = (T - tmin)(tmax - T). `mult_degree`
/// overrides the (total) degree of S1 and S2.
GramCertificate box_psd_constraint(LmiProblem& p, const AffinePolyMat& g,
                                   double tmin, double tmax, const std::string& label,
                                   int mult_degree = -1, bool cross_term = false);

}  // namespace dtcert
