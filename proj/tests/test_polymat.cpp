#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "dtcert/eig.hpp"
#include "dtcert/lmi.hpp"
#include "dtcert/polymat.hpp"

using namespace dtcert;

namespace {

double poly_norm(const PolyMat& g) {
    double n = 0.0;
    for (const auto& [e, c] : g.coeffs) n = std::max(n, c.max_abs());
    return n;
}

// Reconstruction invariant: sample the solved polynomial on a 200-point
// grid of the domain and require near-PSD relative to its scale.
void check_grid_psd(const AffinePolyMat& g, const std::vector<double>& y, double t_lo,
                    double t_hi, bool bivariate) {
    const PolyMat inst = g.instantiate(y);
    const double tol = -1e-6 * (1.0 + poly_norm(inst));
    if (!bivariate) {
        for (int i = 0; i < 200; ++i) {
            const double tau = t_hi * i / 199.0;
            CHECK(min_eig(inst.eval(tau)) >= tol);
        }
        return;
    }
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 10; ++j) {
            const double T = t_lo + (t_hi - t_lo) * j / 9.0;
            const double tau = T * i / 19.0;
            CHECK(min_eig(inst.eval(tau, T)) >= tol);
        }
}

AffinePolyMat const_identity(std::size_t dim, int nvars) {
    AffinePolyMat g(dim, nvars);
    g.coeff(0, 0) = AffineMat::constant(Matrix::identity(dim));
    return g;
}

}  // namespace

TEST_CASE("poly_eval on constant and affine polynomials") {
    const Matrix a{{1.0, 2.0}, {2.0, -1.0}};
    const Matrix b{{0.0, 1.0}, {1.0, 3.0}};
    PolyMat c(2, 1);
    c.coeff(0) = a;
    CHECK((c.eval(0.7) - a).max_abs() <= 1e-15);

    PolyMat ab(2, 1);
    ab.coeff(0) = a;
    ab.coeff(1) = b;
    CHECK((ab.eval(0.0) - a).max_abs() <= 1e-15);
    CHECK((ab.eval(2.0) - (a + 2.0 * b)).max_abs() <= 1e-14);

    CHECK_THROWS_AS(ab.eval(1.0, 2.0), std::invalid_argument);
    PolyMat biv(2, 2);
    biv.coeff(1, 1) = a;
    CHECK_THROWS_AS(biv.eval(1.0), std::invalid_argument);
    CHECK((biv.eval(2.0, 3.0) - 6.0 * a).max_abs() <= 1e-14);
}

TEST_CASE("poly_derivative formal rules") {
    const Matrix m{{2.0, 1.0}, {1.0, 0.0}};
    PolyMat c(2, 1);
    c.coeff(0) = m;
    auto dc = c.derivative(0);
    CHECK(dc.degree(0) == 0);
    CHECK(dc.eval(0.3).max_abs() <= 1e-15);

    PolyMat t2(2, 1);
    t2.coeff(2) = m;
    auto d = t2.derivative(0);
    CHECK((d.eval(1.0) - 2.0 * m).max_abs() <= 1e-15);
    CHECK((d.eval(2.5) - 5.0 * m).max_abs() <= 1e-14);
    CHECK(d.degree(0) == 1);
}

TEST_CASE("poly_derivative matches centered finite differences") {
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    PolyMat z(3, 1);
    for (int e = 0; e <= 3; ++e) {
        Matrix c(3, 3);
        for (int r = 0; r < 3; ++r)
            for (int cc = r; cc < 3; ++cc) c(r, cc) = c(cc, r) = u(rng);
        z.coeff(e) = c;
    }
    auto dz = z.derivative(0);
    const double h = 1e-5;
    std::uniform_real_distribution<double> pt(0.0, 3.0);
    for (int k = 0; k < 10; ++k) {
        const double tau = pt(rng);
        Matrix fd = (1.0 / (2.0 * h)) * (z.eval(tau + h) - z.eval(tau - h));
        const Matrix ex = dz.eval(tau);
        CHECK((fd - ex).max_abs() <= 1e-6 * (1.0 + ex.max_abs()));
    }

    // Bivariate partials.
    PolyMat zb(2, 2);
    zb.coeff(1, 2) = Matrix{{1.0, 0.0}, {0.0, -1.0}};
    auto dT = zb.derivative(1);
    CHECK((dT.eval(2.0, 3.0) - (2.0 * 2.0 * 3.0) * Matrix{{1.0, 0.0}, {0.0, -1.0}}).max_abs() <=
          1e-13);
}

TEST_CASE("interval constraint certifies a constant identity") {
    // Default degrees: no multiplier, Q0 forced to I, margin 1.
    LmiProblem p;
    auto g = const_identity(2, 1);
    auto cert = interval_psd_constraint(p, g, 1.0, "G=I");
    REQUIRE(cert.pieces.size() == 1);
    auto res = solve_feasibility(p);
    REQUIRE(res.status == SolveStatus::Certified);
    CHECK(res.margin == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(check_solution(p, res.y).equality_residual <= 1e-9);
    check_grid_psd(g, res.y, 0.0, 1.0, false);

    // Forced multiplier: S0 = I, S1 = 0 is an exact hand certificate.
    LmiProblem pm;
    auto certm = interval_psd_constraint(pm, g, 1.0, "G=I", 0);
    REQUIRE(certm.pieces.size() == 2);
    CHECK(certm.pieces[0].basis.size() == 2);
    CHECK(certm.pieces[1].basis.size() == 1);
    std::vector<double> y(pm.num_vars, 0.0);
    y[certm.pieces[0].q_start + 0] = 1.0;  // Q0 = diag(1, 1, 0, 0)
    y[certm.pieces[0].q_start + 4] = 1.0;
    auto rep = check_solution(pm, y);
    CHECK(rep.equality_residual <= 1e-12);
    CHECK(rep.min_block_eig >= -1e-12);
    auto resm = solve_feasibility(pm);
    CHECK(resm.status == SolveStatus::Certified);
}

TEST_CASE("interval constraint rejects a sign-indefinite polynomial") {
    // G = (tau - T/2) I changes sign on [0, T].
    LmiProblem p;
    AffinePolyMat g(2, 1);
    g.coeff(0) = AffineMat::constant(-1.5 * Matrix::identity(2));
    g.coeff(1) = AffineMat::constant(Matrix::identity(2));
    interval_psd_constraint(p, g, 3.0, "indefinite");
    auto res = solve_feasibility(p);
    CHECK(res.status == SolveStatus::NotCertified);
}

TEST_CASE("interval constraint boundary case tau(1-tau)") {
    // Representable only with margin exactly zero: S0 = 0, S1 = 1.
    LmiProblem p;
    AffinePolyMat g(1, 1);
    g.coeff(1) = AffineMat::constant(Matrix{{1.0}});
    g.coeff(2) = AffineMat::constant(Matrix{{-1.0}});
    auto cert = interval_psd_constraint(p, g, 1.0, "tau(1-tau)");
    REQUIRE(cert.pieces.size() == 2);
    std::vector<double> y(p.num_vars, 0.0);
    y[cert.pieces[1].q_start] = 1.0;  // S1 = 1
    auto rep = check_solution(p, y);
    CHECK(rep.equality_residual <= 1e-12);
    CHECK(rep.min_block_eig == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("interval certificates survive multiplier degree bumps") {
    // Strictly positive instance: G(tau) = (2 + 5 tau/3 - 5 tau^2/9) I on
    // [0, 3], built from Q0 = I, Q1 = I at T = 3 plus nothing else.
    // Gram-only problem, so the epigraph falls back to every block; the
    // strict positivity of G keeps interior certificates available at all
    // three multiplier degrees.
    AffinePolyMat g(2, 1);
    g.coeff(0) = AffineMat::constant(2.0 * Matrix::identity(2));
    g.coeff(1) = AffineMat::constant((5.0 / 3.0) * Matrix::identity(2));
    g.coeff(2) = AffineMat::constant((-5.0 / 9.0) * Matrix::identity(2));
    for (int mult : {0, 2, 4}) {
        LmiProblem p;
        interval_psd_constraint(p, g, 3.0, "bump", mult);
        auto res = solve_feasibility(p);
        CHECK(res.status == SolveStatus::Certified);
        CHECK(check_solution(p, res.y).equality_residual <= 1e-9);
        check_grid_psd(g, res.y, 0.0, 3.0, false);
    }
}

TEST_CASE("boundary grams certify next to generic blocks at any degree") {
    // lambda in [0.5, 1.5] through two generic blocks; the constraint
    // G(tau) = lambda tau (3 - tau) >= 0 on [0, 3] pins the Grams to
    // singular matrices (G vanishes at both endpoints, so S0(+-1) = 0 at
    // every feasible point once the multiplier basis grows). The epigraph
    // lives on the lambda blocks only, so certification must go through
    // at every multiplier degree regardless of Gram boundary contact.
    for (int mult : {-1, 0, 2, 4}) {
        LmiProblem p;
        const int lam = p.new_var("lambda");
        auto& lo = p.add_block(1, "lambda-0.5");
        lo.f0(0, 0) = -0.5;
        lo.terms.push_back({lam, Matrix{{1.0}}});
        auto& hi = p.add_block(1, "1.5-lambda");
        hi.f0(0, 0) = 1.5;
        hi.terms.push_back({lam, Matrix{{-1.0}}});
        AffinePolyMat g(1, 1);
        g.coeff(1).add_term(lam, Matrix{{3.0}});
        g.coeff(2).add_term(lam, Matrix{{-1.0}});
        interval_psd_constraint(p, g, 3.0, "boundary", mult);
        auto res = solve_feasibility(p);
        REQUIRE(res.status == SolveStatus::Certified);
        CHECK(res.margin >= res.feas_tol_used);
        CHECK(res.y[lam] >= 0.5 + res.feas_tol_used - 1e-12);
        CHECK(res.y[lam] <= 1.5 - res.feas_tol_used + 1e-12);
        CHECK(res.min_block_eig >= -res.feas_tol_used);
        CHECK(res.equality_residual <= 1e-8);
        check_grid_psd(g, res.y, 0.0, 3.0, false);
    }
}

TEST_CASE("interval constraint input validation") {
    LmiProblem p;
    auto g = const_identity(2, 1);
    CHECK_THROWS_AS(interval_psd_constraint(p, g, 0.0, "bad"), std::invalid_argument);
    CHECK_THROWS_AS(interval_psd_constraint(p, g, -1.0, "bad"), std::invalid_argument);
    CHECK_THROWS_AS(interval_psd_constraint(p, g, 1.0, "bad", 1), std::invalid_argument);
    auto biv = const_identity(2, 2);
    CHECK_THROWS_AS(interval_psd_constraint(p, biv, 1.0, "bad"), std::invalid_argument);
}

TEST_CASE("box constraint certifies constants with and without multipliers") {
    auto g = const_identity(2, 2);
    LmiProblem p0;
    auto c0 = box_psd_constraint(p0, g, 1.0, 2.0, "box I");
    REQUIRE(c0.pieces.size() == 1);
    auto r0 = solve_feasibility(p0);
    REQUIRE(r0.status == SolveStatus::Certified);
    CHECK(r0.margin == doctest::Approx(1.0).epsilon(1e-6));

    LmiProblem p1;
    auto c1 = box_psd_constraint(p1, g, 1.0, 2.0, "box I mult", 0);
    REQUIRE(c1.pieces.size() == 3);
    auto r1 = solve_feasibility(p1);
    REQUIRE(r1.status == SolveStatus::Certified);
    CHECK(check_solution(p1, r1.y).equality_residual <= 1e-9);
    check_grid_psd(g, r1.y, 1.0, 2.0, true);
}

TEST_CASE("box constraint represents the domain polynomial g2 exactly") {
    // G = (T - 1)(2 - T) I with S2 = I, everything else zero.
    const double tmin = 1.0, tmax = 2.0;
    AffinePolyMat g(2, 2);
    g.coeff(0, 1) = AffineMat::constant((tmin + tmax) * Matrix::identity(2));
    g.coeff(0, 2) = AffineMat::constant(-1.0 * Matrix::identity(2));
    g.coeff(0, 0) = AffineMat::constant(-tmin * tmax * Matrix::identity(2));
    LmiProblem p;
    auto cert = box_psd_constraint(p, g, tmin, tmax, "g2 I", 0);
    REQUIRE(cert.pieces.size() == 3);
    std::vector<double> y(p.num_vars, 0.0);
    y[cert.pieces[2].q_start + 0] = 1.0;  // S2 = I (2x2 Gram diag)
    y[cert.pieces[2].q_start + 2] = 1.0;
    auto rep = check_solution(p, y);
    CHECK(rep.equality_residual <= 1e-12);
    CHECK(rep.min_block_eig == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("box constraint rejects a sign-indefinite bivariate polynomial") {
    AffinePolyMat g(1, 2);
    g.coeff(1, 0) = AffineMat::constant(Matrix{{1.0}});
    g.coeff(0, 1) = AffineMat::constant(Matrix{{-0.5}});
    LmiProblem p;
    box_psd_constraint(p, g, 1.0, 2.0, "indefinite box");
    auto res = solve_feasibility(p);
    CHECK(res.status == SolveStatus::NotCertified);
}

TEST_CASE("box constraint cross term flag adds the g1 g2 piece") {
    auto g = const_identity(2, 2);
    LmiProblem p;
    auto cert = box_psd_constraint(p, g, 1.0, 2.0, "cross", 2, true);
    REQUIRE(cert.pieces.size() == 4);
    CHECK(cert.pieces[3].multiplier == "g1 g2 S3");
    auto res = solve_feasibility(p);
    CHECK(res.status == SolveStatus::Certified);
}

TEST_CASE("box constraint input validation") {
    auto g = const_identity(2, 2);
    LmiProblem p;
    CHECK_THROWS_AS(box_psd_constraint(p, g, -1.0, 2.0, "bad"), std::invalid_argument);
    CHECK_THROWS_AS(box_psd_constraint(p, g, 2.0, 2.0, "bad"), std::invalid_argument);
    CHECK_THROWS_AS(
        box_psd_constraint(p, g, 1.0, std::numeric_limits<double>::infinity(), "bad"),
        std::invalid_argument);
    auto uni = const_identity(2, 1);
    CHECK_THROWS_AS(box_psd_constraint(p, uni, 1.0, 2.0, "bad"), std::invalid_argument);
}

TEST_CASE("affine expressions evaluate and differentiate consistently") {
    // Z(tau) = C0 + tau C1 with decision-variable coefficients.
    LmiProblem p;
    const int v0 = p.new_var("a");
    const int v1 = p.new_var("b");
    AffinePolyMat z(2, 1);
    z.coeff(0).add_term(v0, Matrix::identity(2));
    z.coeff(1).add_term(v1, Matrix{{0.0, 1.0}, {1.0, 0.0}});
    z.coeff(1).f0 = Matrix{{1.0, 0.0}, {0.0, -1.0}};

    const std::vector<double> y = {2.0, 3.0};
    const Matrix at1 = z.eval(y, 1.0);
    const Matrix expect{{2.0 + 1.0, 3.0}, {3.0, 2.0 - 1.0}};
    CHECK((at1 - expect).max_abs() <= 1e-14);

    auto dz = z.derivative(0);
    const Matrix d = dz.eval(y, 0.77);
    CHECK((d - Matrix{{1.0, 3.0}, {3.0, -1.0}}).max_abs() <= 1e-14);

    PolyMat inst = z.instantiate(y);
    CHECK((inst.eval(1.0) - at1).max_abs() <= 1e-14);

    // he_product and congruence against direct arithmetic.
    const Matrix dmat{{0.0, 1.0}, {0.0, 0.0}};
    AffineMat hz = he_product(z.coeff(1), dmat);
    const Matrix hval = hz.eval(y);
    const Matrix zval = z.coeff(1).eval(y);
    CHECK((hval - (zval * dmat + (zval * dmat).transpose())).max_abs() <= 1e-14);

    const Matrix ysel{{1.0}, {0.0}};
    AffineMat cz = congruence_affine(ysel, z.coeff(0));
    CHECK(cz.dim == 1);
    CHECK(cz.eval(y)(0, 0) == doctest::Approx(2.0).epsilon(1e-14));

    AffineMat wide = embed_sym(z.coeff(0), 4, 1);
    const Matrix wval = wide.eval(y);
    CHECK(wval(1, 1) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(wval(0, 0) == 0.0);
    CHECK(wval(3, 3) == 0.0);

    AffinePolyMat mu(1, 1);
    mu.coeff(0).add_term(v0, Matrix{{1.0}});
    auto lifted = scalar_times_matrix(mu, Matrix{{1.0, 0.0}, {0.0, 2.0}});
    CHECK((lifted.eval(y, 0.0) - Matrix{{2.0, 0.0}, {0.0, 4.0}}).max_abs() <= 1e-14);
}
