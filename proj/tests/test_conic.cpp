#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtcert/eig.hpp"
#include "dtcert/lmi.hpp"
#include "dtcert/matrix.hpp"

using namespace dtcert;

namespace {

// y >= 1 as the block [y - 1].
LmiProblem scalar_lower_bound() {
    LmiProblem p;
    const int y = p.new_var("y");
    auto& b = p.add_block(1, "y>=1");
    b.f0(0, 0) = -1.0;
    b.terms.push_back({y, Matrix{{1.0}}});
    return p;
}

// Infeasible pair y >= 1 and -y >= 1; the best margin is -1 at y = 0.
LmiProblem contradictory_pair() {
    LmiProblem p = scalar_lower_bound();
    auto& b = p.add_block(1, "-y>=1");
    b.f0(0, 0) = -1.0;
    b.terms.push_back({0, Matrix{{-1.0}}});
    return p;
}

// Block [y] with the equality y = 2; the optimal margin is exactly 2.
LmiProblem pinned_scalar() {
    LmiProblem p;
    const int y = p.new_var("y");
    auto& b = p.add_block(1, "y");
    b.terms.push_back({y, Matrix{{1.0}}});
    p.add_equality({{{y, 1.0}}, 2.0});
    return p;
}

// Symmetric matrix variable P entered term by term; returns first var index.
int add_sym_var(LmiProblem& p, LmiBlock& b, int n, double sign, const std::string& prefix) {
    const int base = p.new_vars(n * (n + 1) / 2, prefix);
    int k = base;
    for (int r = 0; r < n; ++r)
        for (int c = r; c < n; ++c) {
            Matrix e(n, n);
            e(r, c) = e(c, r) = sign;
            b.terms.push_back({k++, e});
        }
    return base;
}

Matrix sym_from_slice(const std::vector<double>& y, int base, int n) {
    Matrix m(n, n);
    int k = base;
    for (int r = 0; r < n; ++r)
        for (int c = r; c < n; ++c) m(r, c) = m(c, r) = y[k++];
    return m;
}

LmiProblem random_problem(std::mt19937& rng, int nvars, int nblocks, int bsize) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    LmiProblem p;
    p.new_vars(nvars, "y");
    for (int b = 0; b < nblocks; ++b) {
        auto& blk = p.add_block(bsize, "r" + std::to_string(b));
        for (int r = 0; r < bsize; ++r)
            for (int c = r; c < bsize; ++c) blk.f0(r, c) = blk.f0(c, r) = u(rng);
        for (int k = 0; k < nvars; ++k) {
            Matrix e(bsize, bsize);
            for (int r = 0; r < bsize; ++r)
                for (int c = r; c < bsize; ++c) e(r, c) = e(c, r) = u(rng);
            blk.terms.push_back({k, e});
        }
    }
    return p;
}

}  // namespace

TEST_CASE("solve_feasibility certifies a strict scalar bound") {
    auto p = scalar_lower_bound();
    auto res = solve_feasibility(p);
    REQUIRE(res.status == SolveStatus::Certified);
    CHECK(res.y.size() == 1);
    CHECK(res.y[0] >= 1.0 + res.feas_tol_used);
    CHECK(res.margin == doctest::Approx(res.y[0] - 1.0).epsilon(1e-12));
    // check_solution must agree with the solver's own recheck.
    auto rep = check_solution(p, res.y);
    CHECK(std::abs(rep.min_block_eig - res.margin) <= 1e-7 * (1.0 + std::abs(res.margin)));
}

TEST_CASE("solve_feasibility rejects contradictory scalar bounds") {
    auto res = solve_feasibility(contradictory_pair());
    REQUIRE(res.status == SolveStatus::NotCertified);
    // max_y min(y - 1, -y - 1) = -1 at y = 0.
    CHECK(res.margin <= 0.0);
    CHECK(res.t_opt == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("solve_feasibility on constant blocks") {
    LmiProblem pos;
    pos.add_block(1, "one").f0(0, 0) = 1.0;
    auto r1 = solve_feasibility(pos);
    CHECK(r1.status == SolveStatus::Certified);
    CHECK(r1.margin == doctest::Approx(1.0).epsilon(1e-6));

    LmiProblem neg;
    neg.add_block(1, "minus").f0(0, 0) = -1.0;
    auto r2 = solve_feasibility(neg);
    CHECK(r2.status == SolveStatus::NotCertified);
    CHECK(r2.margin == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("solve_feasibility handles equalities in place") {
    auto p = pinned_scalar();
    auto res = solve_feasibility(p);
    REQUIRE(res.status == SolveStatus::Certified);
    CHECK(res.y[0] == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(res.margin == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(res.equality_residual <= 1e-8);
}

TEST_CASE("lyapunov feasibility splits stable from unstable") {
    const Matrix a_stable{{-1.0, 1.0}, {0.0, -2.0}};
    const Matrix a_unstable{{1.0, 0.0}, {0.0, 1.0}};
    for (int which = 0; which < 2; ++which) {
        const Matrix& a = which == 0 ? a_stable : a_unstable;
        LmiProblem p;
        auto& lower = p.add_block(2, "P-I");
        lower.f0 = -1.0 * Matrix::identity(2);
        const int pbase = add_sym_var(p, lower, 2, 1.0, "p");
        auto& lyap = p.add_block(2, "-He(A'P)");
        int k = pbase;
        for (int r = 0; r < 2; ++r)
            for (int c = r; c < 2; ++c) {
                Matrix e(2, 2);
                e(r, c) = e(c, r) = 1.0;
                lyap.terms.push_back({k++, -1.0 * (a.transpose() * e + e * a)});
            }
        auto res = solve_feasibility(p);
        if (which == 0) {
            REQUIRE(res.status == SolveStatus::Certified);
            const Matrix pm = sym_from_slice(res.y, pbase, 2);
            CHECK(min_eig(pm - Matrix::identity(2)) >= res.feas_tol_used - 1e-12);
            CHECK(min_eig(-1.0 * (a.transpose() * pm + pm * a)) > 0.0);
        } else {
            // tr(A'P + PA) = 2 tr(P) >= 4 > 0 whenever P >= I, so the
            // Lyapunov block cannot be PSD: margin stays negative.
            CHECK(res.status == SolveStatus::NotCertified);
            CHECK(res.margin < 0.0);
        }
    }
}

TEST_CASE("gram block pinned by equalities reaches the exact eigenvalue margin") {
    // Q >= 0 with Q fixed entrywise to [[1, .3], [.3, 2]]: the optimal
    // epigraph value equals min_eig = (3 - sqrt(1.36)) / 2.
    LmiProblem p;
    const int g = p.add_gram_block(2, "Q");
    p.add_equality({{{g + 0, 1.0}}, 1.0});
    p.add_equality({{{g + 1, 1.0}}, 0.3});
    p.add_equality({{{g + 2, 1.0}}, 2.0});
    auto res = solve_feasibility(p);
    REQUIRE(res.status == SolveStatus::Certified);
    const double expect = (3.0 - std::sqrt(1.36)) / 2.0;
    CHECK(res.margin == doctest::Approx(expect).epsilon(1e-6));
    CHECK(res.equality_residual <= 1e-8);
}

TEST_CASE("gram and scalar variables coupled through equalities") {
    // Q >= 0 (2x2 Gram), Q = y I via equalities, plus the block [5 - y].
    // Any certified point has 0 < y < 5; the epigraph margin is 5 - y
    // (the Gram block carries no shift) and the solver exits at the first
    // certifiable iterate, so only feasibility and self-consistency are
    // pinned here (optimal margins are covered by the fully pinned cases
    // above).
    LmiProblem p;
    const int y = p.new_var("y");
    auto& cap = p.add_block(1, "5-y");
    cap.f0(0, 0) = 5.0;
    cap.terms.push_back({y, Matrix{{-1.0}}});
    const int g = p.add_gram_block(2, "Q");
    p.add_equality({{{g + 0, 1.0}, {y, -1.0}}, 0.0});
    p.add_equality({{{g + 1, 1.0}}, 0.0});
    p.add_equality({{{g + 2, 1.0}, {y, -1.0}}, 0.0});
    auto res = solve_feasibility(p);
    REQUIRE(res.status == SolveStatus::Certified);
    CHECK(res.margin >= res.feas_tol_used);
    CHECK(5.0 - res.y[y] == doctest::Approx(res.margin).epsilon(1e-9));
    CHECK(res.y[y] >= -res.feas_tol_used);
    CHECK(res.equality_residual <= 1e-8);
    auto rep = check_solution(p, res.y);
    CHECK(rep.min_block_eig == doctest::Approx(res.min_block_eig).epsilon(1e-9));
    CHECK(res.min_block_eig >= -res.feas_tol_used);
}

TEST_CASE("free variable chained through equality rows only") {
    // x appears in the block, z only in equalities: x - z = 0, z = 1.5.
    LmiProblem p;
    const int x = p.new_var("x");
    const int z = p.new_var("z");
    auto& b = p.add_block(1, "x");
    b.terms.push_back({x, Matrix{{1.0}}});
    p.add_equality({{{x, 1.0}, {z, -1.0}}, 0.0});
    p.add_equality({{{z, 1.0}}, 1.5});
    auto res = solve_feasibility(p);
    REQUIRE(res.status == SolveStatus::Certified);
    CHECK(res.y[x] == doctest::Approx(1.5).epsilon(1e-7));
    CHECK(res.y[z] == doctest::Approx(1.5).epsilon(1e-7));
    CHECK(res.margin == doctest::Approx(1.5).epsilon(1e-6));
}

TEST_CASE("redundant block copy never changes the status") {
    auto feasible = pinned_scalar();
    auto r0 = solve_feasibility(feasible);
    feasible.blocks.push_back(feasible.blocks[0]);
    auto r1 = solve_feasibility(feasible);
    CHECK(r0.status == r1.status);
    CHECK(r1.margin == doctest::Approx(r0.margin).epsilon(1e-5));

    auto infeasible = contradictory_pair();
    auto r2 = solve_feasibility(infeasible);
    infeasible.blocks.push_back(infeasible.blocks[1]);
    auto r3 = solve_feasibility(infeasible);
    CHECK(r2.status == SolveStatus::NotCertified);
    CHECK(r3.status == SolveStatus::NotCertified);
}

TEST_CASE("positive block scaling rescales the margin and keeps the verdict") {
    auto p = pinned_scalar();
    auto base = solve_feasibility(p);
    auto scaled = p;
    const double alpha = 100.0;
    scaled.blocks[0].f0 *= alpha;
    for (auto& t : scaled.blocks[0].terms) t.coef *= alpha;
    auto res = solve_feasibility(scaled);
    REQUIRE(res.status == SolveStatus::Certified);
    CHECK(res.margin == doctest::Approx(alpha * base.margin).epsilon(1e-5));

    auto bad = contradictory_pair();
    for (auto& b : bad.blocks) {
        b.f0 *= alpha;
        for (auto& t : b.terms) t.coef *= alpha;
    }
    CHECK(solve_feasibility(bad).status == SolveStatus::NotCertified);
}

TEST_CASE("repeated solves are deterministic") {
    auto p = contradictory_pair();
    auto r1 = solve_feasibility(p);
    auto r2 = solve_feasibility(p);
    REQUIRE(r1.y.size() == r2.y.size());
    for (std::size_t i = 0; i < r1.y.size(); ++i) CHECK(r1.y[i] == r2.y[i]);
    CHECK(r1.margin == r2.margin);
    CHECK(r1.iterations == r2.iterations);
}

TEST_CASE("check_solution reports hand-fed certificates exactly") {
    auto p = scalar_lower_bound();
    auto rep = check_solution(p, {3.0});
    CHECK(rep.min_block_eig == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(rep.equality_residual == 0.0);
    REQUIRE(rep.block_eigs.size() == 1);

    // Perturbing a strictly feasible point degrades but keeps the margin.
    std::mt19937 rng(77);
    std::uniform_real_distribution<double> u(-1e-3, 1e-3);
    for (int trial = 0; trial < 20; ++trial) {
        auto noisy = check_solution(p, {3.0 + u(rng)});
        CHECK(noisy.min_block_eig >= 0.0);
        CHECK(noisy.min_block_eig <= 2.0 + 1e-3);
    }

    CHECK_THROWS_AS(check_solution(p, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("eliminate_equalities reduces a sum-zero pair to one direction") {
    LmiProblem p;
    const int y1 = p.new_var("y1");
    const int y2 = p.new_var("y2");
    auto& b = p.add_block(1, "y1");
    b.terms.push_back({y1, Matrix{{1.0}}});
    p.add_equality({{{y1, 1.0}, {y2, 1.0}}, 0.0});
    auto [red, map] = eliminate_equalities(p);
    CHECK(red.num_vars == 1);
    CHECK(red.equalities.empty());
    REQUIRE(map.null_basis.rows() == 2);
    REQUIRE(map.null_basis.cols() == 1);
    // Null direction is +-(1, -1)/sqrt(2).
    const double n0 = map.null_basis(0, 0), n1 = map.null_basis(1, 0);
    CHECK(n0 + n1 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(n0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    // y0 solves the equality.
    CHECK(map.y0[0] + map.y0[1] == doctest::Approx(0.0).epsilon(1e-12));
    // Reduced block carries the projected coefficient.
    REQUIRE(red.blocks.size() == 1);
    REQUIRE(red.blocks[0].terms.size() == 1);
    CHECK(std::abs(red.blocks[0].terms[0].coef(0, 0)) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("eliminate_equalities with no rows is the identity map") {
    auto p = scalar_lower_bound();
    auto [red, map] = eliminate_equalities(p);
    CHECK(red.num_vars == p.num_vars);
    CHECK((map.null_basis - Matrix::identity(1)).max_abs() <= 1e-14);
    CHECK(map.y0[0] == 0.0);
    auto back = map.apply({4.0});
    CHECK(back[0] == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("eliminate_equalities flags inconsistent and tolerates redundant rows") {
    LmiProblem p;
    const int y = p.new_var("y");
    p.add_block(1, "y").terms.push_back({y, Matrix{{1.0}}});
    p.add_equality({{{y, 1.0}}, 1.0});
    p.add_equality({{{y, 1.0}}, 2.0});
    CHECK_THROWS_AS(eliminate_equalities(p), std::runtime_error);

    p.equalities[1].rhs = 1.0;  // duplicate of the first row
    auto [red, map] = eliminate_equalities(p);
    CHECK(red.num_vars == 0);
    CHECK(map.y0[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("eliminated solutions satisfy the original equalities") {
    std::mt19937 rng(20240812);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        auto p = random_problem(rng, 8, 3, 3);
        // Consistent equalities: E y* = f for a random target point.
        std::vector<double> target(8);
        for (auto& v : target) v = u(rng);
        for (int r = 0; r < 4; ++r) {
            EqRow row;
            double rhs = 0.0;
            for (int k = 0; k < 8; ++k) {
                const double c = u(rng);
                row.coef.push_back({k, c});
                rhs += c * target[k];
            }
            row.rhs = rhs;
            p.add_equality(row);
        }
        auto [red, map] = eliminate_equalities(p);
        CHECK(red.num_vars == 4);
        std::vector<double> z(red.num_vars);
        for (auto& v : z) v = u(rng);
        auto y = map.apply(z);
        auto rep = check_solution(p, y);
        CHECK(rep.equality_residual <= 1e-9);
        // Reduced and original blocks agree at mapped points.
        auto rrep = check_solution(red, z);
        CHECK(rrep.min_block_eig == doctest::Approx(rep.min_block_eig).epsilon(1e-9));
    }
}

TEST_CASE("solving the reduced problem matches the in-place equality path") {
    auto p = pinned_scalar();
    auto direct = solve_feasibility(p);
    auto [red, map] = eliminate_equalities(p);
    auto reduced = solve_feasibility(red);
    REQUIRE(direct.status == SolveStatus::Certified);
    REQUIRE(reduced.status == SolveStatus::Certified);
    CHECK(reduced.margin == doctest::Approx(direct.margin).epsilon(1e-6));
    auto y = map.apply(reduced.y);
    CHECK(check_solution(p, y).equality_residual <= 1e-9);
}

TEST_CASE("export_sdpa writes the minimal problem verbatim") {
    auto p = scalar_lower_bound();
    const std::string text = export_sdpa(p);
    std::istringstream in(text);
    int m = -1, nblocks = -1;
    in >> m >> nblocks;
    CHECK(m == 1);
    CHECK(nblocks == 1);
    int size = 0;
    in >> size;
    CHECK(size == 1);
    double obj = -1.0;
    in >> obj;
    CHECK(obj == 0.0);
    // F0 is negated on output: constant -1 becomes entry value 1.
    int k, b, i, j;
    double v;
    REQUIRE((in >> k >> b >> i >> j >> v));
    CHECK(k == 0);
    CHECK(b == 1);
    CHECK(i == 1);
    CHECK(j == 1);
    CHECK(v == 1.0);
    REQUIRE((in >> k >> b >> i >> j >> v));
    CHECK(k == 1);
    CHECK(v == 1.0);
    CHECK_FALSE((in >> k));
}

TEST_CASE("export_sdpa of an empty problem is header-only") {
    LmiProblem p;
    const std::string text = export_sdpa(p);
    std::istringstream in(text);
    int m = -1, nblocks = -1;
    in >> m >> nblocks;
    CHECK(m == 0);
    CHECK(nblocks == 0);
    double rest;
    CHECK_FALSE((in >> rest));
}

TEST_CASE("export_sdpa epigraph form appends the margin variable") {
    auto p = contradictory_pair();
    const std::string text = export_sdpa(p, true);
    std::istringstream in(text);
    int m = -1, nblocks = -1;
    in >> m >> nblocks;
    CHECK(m == 2);  // y plus the epigraph variable
    CHECK(nblocks == 2);
    int s1, s2;
    in >> s1 >> s2;
    CHECK(s1 == 1);
    CHECK(s2 == 1);
    double c1, c2;
    in >> c1 >> c2;
    CHECK(c1 == 0.0);
    CHECK(c2 == -1.0);  // SDPA minimizes, so max t enters as -1
    int identity_terms = 0;
    int k, b, i, j;
    double v;
    while (in >> k >> b >> i >> j >> v)
        if (k == 2) {
            CHECK(v == -1.0);
            ++identity_terms;
        }
    CHECK(identity_terms == 2);
}

TEST_CASE("export_sdpa refuses unresolved equalities") {
    CHECK_THROWS_AS(export_sdpa(pinned_scalar()), std::invalid_argument);
}

TEST_CASE("gram slices round-trip through for_each_term and eval_block") {
    LmiProblem p;
    const int g = p.add_gram_block(3, "Q");
    CHECK(p.num_vars == 6);
    std::vector<double> y = {1.0, 0.2, -0.3, 2.0, 0.1, 1.5};
    const Matrix q = eval_block(p.blocks[0], y);
    CHECK(q(0, 0) == 1.0);
    CHECK(q(0, 1) == 0.2);
    CHECK(q(1, 0) == 0.2);
    CHECK(q(2, 2) == 1.5);
    int terms = 0;
    Matrix sum(3, 3);
    for_each_term(p.blocks[0], [&](int var, const Matrix& coef) {
        sum += y[var] * coef;
        ++terms;
    });
    CHECK(terms == 6);
    CHECK((sum - q).max_abs() <= 1e-15);
    CHECK(g == 0);
}

TEST_CASE("add_block references stay valid across later insertions") {
    LmiProblem p;
    const int y = p.new_var("y");
    auto& first = p.add_block(1, "a");
    auto& second = p.add_block(1, "b");
    for (int i = 0; i < 40; ++i) p.add_block(1, "pad" + std::to_string(i));
    first.terms.push_back({y, Matrix{{1.0}}});
    second.f0(0, 0) = 3.0;
    CHECK(p.blocks[0].terms.size() == 1);
    CHECK(p.blocks[1].f0(0, 0) == 3.0);
}

TEST_CASE("validate rejects malformed problems") {
    LmiProblem bad;
    const int y = bad.new_var("y");
    auto& b = bad.add_block(2, "asym");
    b.terms.push_back({y, Matrix{{0.0, 1.0}, {0.0, 0.0}}});
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    LmiProblem range;
    range.add_block(1, "oob").terms.push_back({3, Matrix{{1.0}}});
    CHECK_THROWS_AS(range.validate(), std::invalid_argument);

    LmiProblem wrongdim;
    const int z = wrongdim.new_var("z");
    wrongdim.add_block(2, "dim").terms.push_back({z, Matrix{{1.0}}});
    CHECK_THROWS_AS(wrongdim.validate(), std::invalid_argument);
}
