#include "dtcert/conditions.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "dtcert/expm.hpp"

namespace dtcert {

namespace {

std::size_t tri(std::size_t n) { return n * (n + 1) / 2; }

std::string idx(std::size_t i) { return std::to_string(i + 1); }
std::string idx(std::size_t i, std::size_t j) { return idx(i) + idx(j); }

Matrix sym_unit(std::size_t n, std::size_t r, std::size_t c) {
    Matrix e(n, n);
    e(r, c) = 1.0;
    e(c, r) = 1.0;
    return e;
}

/// Places a symmetric block at diagonal offset `off` in a dim x dim frame.
Matrix embed_at3(const Matrix& m, std::size_t dim, std::size_t off) {
    Matrix out(dim, dim);
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(off + r, off + c) = m(r, c);
    return out;
}

/// Visits the upper-triangle unit basis of a symmetric variable slice in
/// the same row-major order used by the layout.
void for_sym_basis(std::size_t n, int start,
                   const std::function<void(int, const Matrix&)>& fn) {
    int v = start;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = r; c < n; ++c) fn(v++, sym_unit(n, r, c));
}

AffineMat sym_slice(std::size_t n, int start) {
    AffineMat m(n);
    for_sym_basis(n, start, [&](int v, const Matrix& e) { m.add_term(v, e); });
    return m;
}

Matrix sym_from_slice(const std::vector<double>& y, int start, std::size_t n) {
    Matrix m(n, n);
    int k = start;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = r; c < n; ++c) {
            m(r, c) = y[k];
            m(c, r) = y[k];
            ++k;
        }
    return m;
}

/// P_i - I >= 0 (homogeneity normalization).
void add_p_floor(LmiProblem& prob, std::size_t n, int pstart, const std::string& label) {
    auto& b = prob.add_block(n, label);
    b.f0 = -1.0 * Matrix::identity(n);
    for_sym_basis(n, pstart, [&](int v, const Matrix& e) { b.terms.push_back({v, e}); });
}

/// -(A'P + PA) > 0.
void add_lyapunov(LmiProblem& prob, const Matrix& a, int pstart, const std::string& label) {
    const std::size_t n = a.rows();
    auto& b = prob.add_block(n, label);
    for_sym_basis(n, pstart, [&](int v, const Matrix& e) {
        b.terms.push_back({v, -1.0 * (a.transpose() * e + e * a)});
    });
}

/// P_outer - M' P_inner M > 0.
void add_discrete(LmiProblem& prob, const Matrix& m, std::size_t n, int p_inner,
                  int p_outer, const std::string& label) {
    auto& b = prob.add_block(n, label);
    for_sym_basis(n, p_outer, [&](int v, const Matrix& e) { b.terms.push_back({v, e}); });
    for_sym_basis(n, p_inner, [&](int v, const Matrix& e) {
        b.terms.push_back({v, -1.0 * congruence(m, e)});
    });
}

void add_eps_floor(LmiProblem& prob, int eps_var) {
    auto& b = prob.add_block(1, "eps");
    b.f0(0, 0) = -kEpsFloor;
    b.terms.push_back({eps_var, Matrix{{1.0}}});
}

/// The (0,0) block of Psi without its horizon factor: A'P_i + P_iA_i
/// embedded into 3n.
AffineMat psi_rate_part(const Matrix& a, int pstart) {
    const std::size_t n = a.rows();
    AffineMat m(3 * n);
    for_sym_basis(n, pstart, [&](int v, const Matrix& e) {
        m.add_term(v, embed_at3(a.transpose() * e + e * a, 3 * n, 0));
    });
    return m;
}

/// The (1,1) block of Psi: P_i - P_j + eps I embedded at offset n.
AffineMat psi_jump_part(std::size_t n, int p_i, int p_j, int eps_var) {
    AffineMat m(3 * n);
    for_sym_basis(n, p_i, [&](int v, const Matrix& e) {
        m.add_term(v, embed_at3(e, 3 * n, n));
    });
    for_sym_basis(n, p_j, [&](int v, const Matrix& e) {
        m.add_term(v, embed_at3(-1.0 * e, 3 * n, n));
    });
    m.add_term(eps_var, embed_at3(Matrix::identity(n), 3 * n, n));
    return m;
}

/// Z_ij as a symbolic polynomial over its variable slice.
AffinePolyMat z_affine(const ZEntry& z) {
    AffinePolyMat out(z.dim, z.nvars);
    const std::size_t step = tri(z.dim);
    for (std::size_t k = 0; k < z.exps.size(); ++k)
        out.coeff(z.exps[k][0], z.exps[k][1]) +=
            sym_slice(z.dim, z.start + static_cast<int>(k * step));
    return out;
}

void append_zero_rows(std::vector<EqRow>& rows, AffineMat m) {
    m.coalesce();
    for (std::size_t r = 0; r < m.dim; ++r)
        for (std::size_t c = r; c < m.dim; ++c) {
            EqRow row;
            for (const auto& t : m.terms)
                if (t.coef(r, c) != 0.0) row.coef.push_back({t.var, t.coef(r, c)});
            row.rhs = -m.f0(r, c);
            if (row.coef.empty()) {
                if (std::abs(row.rhs) > 1e-14)
                    throw std::runtime_error("boundary row constant and nonzero");
                continue;
            }
            rows.push_back(std::move(row));
        }
}

ZEntry make_z_entry(LmiProblem& prob, std::size_t i, std::size_t j, std::size_t dim,
                    int nvars, const std::vector<std::array<int, 2>>& exps) {
    ZEntry z;
    z.i = i;
    z.j = j;
    z.dim = dim;
    z.nvars = nvars;
    z.exps = exps;
    z.start = prob.new_vars(static_cast<int>(exps.size() * tri(dim)), "Z" + idx(i, j));
    return z;
}

std::vector<std::array<int, 2>> univariate_exps(int degree) {
    std::vector<std::array<int, 2>> e;
    for (int k = 0; k <= degree; ++k) e.push_back({k, 0});
    return e;
}

std::vector<std::array<int, 2>> bivariate_exps(int degree) {
    std::vector<std::array<int, 2>> e;
    for (int a = 0; a <= degree; ++a)
        for (int b = 0; a + b <= degree; ++b) e.push_back({a, b});
    return e;
}

/// Psi + He(Z D_n(A)) + dZ/dtau, the left-hand side of the looped LMI.
/// `psi` carries both Psi blocks already assembled per query flavor.
AffinePolyMat looped_lhs(const AffinePolyMat& psi, const AffinePolyMat& zc,
                         const Matrix& a) {
    AffinePolyMat lhs = psi;
    const Matrix d = dn(a);
    for (const auto& [e, c] : zc.coeffs) {
        AffineMat h = he_product(c, d);
        lhs.coeff(e[0], e[1]) += h;
    }
    lhs += zc.derivative(0);
    return lhs;
}

void require_certain(const SwitchedSystem& sys, const char* who) {
    if (sys.uncertain())
        throw std::invalid_argument(std::string(who) + ": requires a certain system");
}

void check_ranges(const SwitchedSystem& sys, const std::vector<ModeRange>& ranges) {
    if (ranges.size() != sys.mode_count())
        throw std::invalid_argument("mode ranges: need one range per mode");
    for (const auto& r : ranges) {
        if (!(r.tmin > 0.0) || std::isnan(r.tmax))
            throw std::invalid_argument("mode ranges: tmin must be positive");
        if (r.bounded() && !(r.tmin < r.tmax))
            throw std::invalid_argument("mode ranges: tmin < tmax required");
    }
}

}  // namespace

Matrix SwitchedSystem::sample(std::size_t i, double delta) const {
    if (!uncertain()) throw std::invalid_argument("sample: no uncertainty channel");
    const auto& ch = channels.at(i);
    if (ch.u.cols() != ch.v.rows())
        throw std::invalid_argument("sample: scalar slice needs square Delta");
    return modes.at(i) + (ch.kappa * delta) * (ch.u * ch.v);
}

void SwitchedSystem::validate() const {
    if (n == 0) throw std::invalid_argument("SwitchedSystem: empty state space");
    if (modes.empty()) throw std::invalid_argument("SwitchedSystem: no modes");
    for (const auto& a : modes)
        if (a.rows() != n || a.cols() != n)
            throw std::invalid_argument("SwitchedSystem: mode dimension mismatch");
    if (channels.empty()) return;
    if (channels.size() != modes.size())
        throw std::invalid_argument("SwitchedSystem: need one channel per mode");
    for (const auto& ch : channels) {
        if (ch.u.rows() != n || ch.v.cols() != n || ch.u.cols() == 0 || ch.v.rows() == 0)
            throw std::invalid_argument("SwitchedSystem: channel dimension mismatch");
        if (ch.kappa < 0.0) throw std::invalid_argument("SwitchedSystem: kappa < 0");
    }
}

Matrix loop_y1(std::size_t n) {
    Matrix y(3 * n, 2 * n);
    for (std::size_t k = 0; k < n; ++k) {
        y(k, k) = 1.0;
        y(n + k, k) = 1.0;
        y(2 * n + k, n + k) = 1.0;
    }
    return y;
}

Matrix loop_y2(std::size_t n) {
    Matrix y(3 * n, 2 * n);
    for (std::size_t k = 0; k < n; ++k) {
        y(k, n + k) = 1.0;
        y(n + k, k) = 1.0;
        y(2 * n + k, n + k) = 1.0;
    }
    return y;
}

Matrix dn(const Matrix& m) {
    const std::size_t n = m.rows();
    return block_diag({m, Matrix(n, n), Matrix(n, n)});
}

BuiltCondition build_exp_min_dwell(const SwitchedSystem& sys, double tbar, bool dual) {
    sys.validate();
    require_certain(sys, "build_exp_min_dwell");
    if (!(tbar > 0.0)) throw std::invalid_argument("build_exp_min_dwell: tbar <= 0");

    BuiltCondition bc;
    auto& prob = bc.problem;
    auto& lay = bc.layout;
    const std::size_t n = sys.n, nm = sys.mode_count();
    lay.n = n;
    lay.modes = nm;
    for (std::size_t i = 0; i < nm; ++i)
        lay.p_start.push_back(prob.new_vars(static_cast<int>(tri(n)), "P" + idx(i)));

    std::vector<Matrix> em;
    for (std::size_t i = 0; i < nm; ++i) em.push_back(expm(sys.modes[i], tbar));

    for (std::size_t i = 0; i < nm; ++i) {
        add_p_floor(prob, n, lay.p_start[i], "P" + idx(i));
        add_lyapunov(prob, sys.modes[i], lay.p_start[i], "lyap" + idx(i));
    }
    for (std::size_t i = 0; i < nm; ++i)
        for (std::size_t j = 0; j < nm; ++j) {
            if (i == j) continue;
            const int inner = dual ? lay.p_start[i] : lay.p_start[j];
            const int outer = dual ? lay.p_start[j] : lay.p_start[i];
            add_discrete(prob, em[i], n, inner, outer, "disc" + idx(i, j));
        }
    return bc;
}

BuiltCondition build_exp_mode_dependent(const SwitchedSystem& sys,
                                        const std::vector<ModeRange>& ranges,
                                        int grid_density) {
    sys.validate();
    require_certain(sys, "build_exp_mode_dependent");
    check_ranges(sys, ranges);
    if (grid_density < 2)
        throw std::invalid_argument("build_exp_mode_dependent: grid_density < 2");

    BuiltCondition bc;
    auto& prob = bc.problem;
    auto& lay = bc.layout;
    const std::size_t n = sys.n, nm = sys.mode_count();
    lay.n = n;
    lay.modes = nm;
    for (std::size_t i = 0; i < nm; ++i)
        lay.p_start.push_back(prob.new_vars(static_cast<int>(tri(n)), "P" + idx(i)));

    for (std::size_t i = 0; i < nm; ++i) add_p_floor(prob, n, lay.p_start[i], "P" + idx(i));

    for (std::size_t i = 0; i < nm; ++i) {
        const auto& r = ranges[i];
        std::vector<double> grid;
        if (r.bounded()) {
            for (int g = 0; g < grid_density; ++g)
                grid.push_back(r.tmin + (r.tmax - r.tmin) * g / (grid_density - 1));
        } else {
            grid.push_back(r.tmin);
            add_lyapunov(prob, sys.modes[i], lay.p_start[i], "lyap" + idx(i));
        }
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const Matrix em = expm(sys.modes[i], grid[g]);
            for (std::size_t j = 0; j < nm; ++j) {
                if (i == j) continue;
                add_discrete(prob, em, n, lay.p_start[i], lay.p_start[j],
                             "disc" + idx(i, j) + "@" + std::to_string(g));
            }
        }
    }
    return bc;
}

std::vector<EqRow> boundary_constraint(const ZEntry& z, double tbar) {
    if (z.nvars != 1)
        throw std::invalid_argument("boundary_constraint: univariate slice expected");
    if (z.dim % 3 != 0) throw std::invalid_argument("boundary_constraint: dim not 3n");
    const std::size_t n = z.dim / 3;
    const Matrix y1 = loop_y1(n), y2 = loop_y2(n);
    AffineMat b(2 * n);
    const std::size_t step = tri(z.dim);
    for (std::size_t k = 0; k < z.exps.size(); ++k) {
        AffineMat c = sym_slice(z.dim, z.start + static_cast<int>(k * step));
        b.add_scaled(congruence_affine(y2, c), std::pow(tbar, z.exps[k][0]));
        if (z.exps[k][0] == 0) b.add_scaled(congruence_affine(y1, c), -1.0);
    }
    std::vector<EqRow> rows;
    append_zero_rows(rows, std::move(b));
    return rows;
}

BuiltCondition build_affine_min_dwell(const SwitchedSystem& sys, double tbar,
                                      int degree) {
    sys.validate();
    require_certain(sys, "build_affine_min_dwell");
    if (!(tbar > 0.0)) throw std::invalid_argument("build_affine_min_dwell: tbar <= 0");
    if (degree < 1) throw std::invalid_argument("build_affine_min_dwell: degree < 1");

    BuiltCondition bc;
    auto& prob = bc.problem;
    auto& lay = bc.layout;
    const std::size_t n = sys.n, nm = sys.mode_count();
    lay.n = n;
    lay.modes = nm;
    for (std::size_t i = 0; i < nm; ++i)
        lay.p_start.push_back(prob.new_vars(static_cast<int>(tri(n)), "P" + idx(i)));
    lay.eps_var = prob.new_var("eps");
    for (std::size_t i = 0; i < nm; ++i)
        for (std::size_t j = 0; j < nm; ++j)
            if (i != j)
                lay.z.push_back(make_z_entry(prob, i, j, 3 * n, 1, univariate_exps(degree)));

    for (std::size_t i = 0; i < nm; ++i) {
        add_p_floor(prob, n, lay.p_start[i], "P" + idx(i));
        add_lyapunov(prob, sys.modes[i], lay.p_start[i], "lyap" + idx(i));
    }
    add_eps_floor(prob, lay.eps_var);

    for (const auto& z : lay.z) {
        for (auto& row : boundary_constraint(z, tbar)) prob.add_equality(std::move(row));
        AffinePolyMat psi(3 * n, 1);
        AffineMat rate = psi_rate_part(sys.modes[z.i], lay.p_start[z.i]);
        rate.scale(tbar);
        psi.coeff(0) += rate;
        psi.coeff(0) += psi_jump_part(n, lay.p_start[z.i], lay.p_start[z.j], lay.eps_var);
        AffinePolyMat g = looped_lhs(psi, z_affine(z), sys.modes[z.i]);
        g.scale(-1.0);
        interval_psd_constraint(prob, g, tbar, "G" + idx(z.i, z.j));
    }
    return bc;
}

BuiltCondition build_affine_mode_dependent(const SwitchedSystem& sys,
                                           const std::vector<ModeRange>& ranges,
                                           int degree) {
    sys.validate();
    require_certain(sys, "build_affine_mode_dependent");
    check_ranges(sys, ranges);
    if (degree < 1)
        throw std::invalid_argument("build_affine_mode_dependent: degree < 1");

    BuiltCondition bc;
    auto& prob = bc.problem;
    auto& lay = bc.layout;
    const std::size_t n = sys.n, nm = sys.mode_count();
    lay.n = n;
    lay.modes = nm;
    for (std::size_t i = 0; i < nm; ++i)
        lay.p_start.push_back(prob.new_vars(static_cast<int>(tri(n)), "P" + idx(i)));
    lay.eps_var = prob.new_var("eps");
    for (std::size_t i = 0; i < nm; ++i)
        for (std::size_t j = 0; j < nm; ++j) {
            if (i == j) continue;
            if (ranges[i].bounded())
                lay.z.push_back(make_z_entry(prob, i, j, 3 * n, 2, bivariate_exps(degree)));
            else
                lay.z.push_back(make_z_entry(prob, i, j, 3 * n, 1, univariate_exps(degree)));
        }

    for (std::size_t i = 0; i < nm; ++i) {
        add_p_floor(prob, n, lay.p_start[i], "P" + idx(i));
        if (!ranges[i].bounded())
            add_lyapunov(prob, sys.modes[i], lay.p_start[i], "lyap" + idx(i));
    }
    add_eps_floor(prob, lay.eps_var);

    const Matrix y1 = loop_y1(n), y2 = loop_y2(n);
    for (const auto& z : lay.z) {
        const auto& r = ranges[z.i];
        if (z.nvars == 1) {
            for (auto& row : boundary_constraint(z, r.tmin)) prob.add_equality(std::move(row));
            AffinePolyMat psi(3 * n, 1);
            AffineMat rate = psi_rate_part(sys.modes[z.i], lay.p_start[z.i]);
            rate.scale(r.tmin);
            psi.coeff(0) += rate;
            psi.coeff(0) += psi_jump_part(n, lay.p_start[z.i], lay.p_start[z.j], lay.eps_var);
            AffinePolyMat g = looped_lhs(psi, z_affine(z), sys.modes[z.i]);
            g.scale(-1.0);
            interval_psd_constraint(prob, g, r.tmin, "G" + idx(z.i, z.j));
            continue;
        }
        // Boundary as a polynomial identity in T: per power k,
        // sum_{a+b=k} Y2' C_ab Y2 - Y1' C_0k Y1 = 0.
        const std::size_t step = tri(z.dim);
        std::vector<EqRow> rows;
        for (int k = 0; k <= degree; ++k) {
            AffineMat b(2 * n);
            for (std::size_t s = 0; s < z.exps.size(); ++s) {
                const auto e = z.exps[s];
                AffineMat c = sym_slice(z.dim, z.start + static_cast<int>(s * step));
                if (e[0] + e[1] == k) b += congruence_affine(y2, c);
                if (e[0] == 0 && e[1] == k) b.add_scaled(congruence_affine(y1, c), -1.0);
            }
            append_zero_rows(rows, std::move(b));
        }
        for (auto& row : rows) prob.add_equality(std::move(row));

        AffinePolyMat psi(3 * n, 2);
        psi.coeff(0, 1) += psi_rate_part(sys.modes[z.i], lay.p_start[z.i]);
        psi.coeff(0, 0) += psi_jump_part(n, lay.p_start[z.i], lay.p_start[z.j], lay.eps_var);
        AffinePolyMat g = looped_lhs(psi, z_affine(z), sys.modes[z.i]);
        g.scale(-1.0);
        box_psd_constraint(prob, g, r.tmin, r.tmax, "G" + idx(z.i, z.j));
    }
    return bc;
}

BuiltCondition build_robust_min_dwell(const SwitchedSystem& sys, double tbar,
                                      int degree, int mu_degree) {
    sys.validate();
    if (!sys.uncertain())
        throw std::invalid_argument("build_robust_min_dwell: missing uncertainty channel");
    if (!(tbar > 0.0)) throw std::invalid_argument("build_robust_min_dwell: tbar <= 0");
    if (degree < 1) throw std::invalid_argument("build_robust_min_dwell: degree < 1");
    const int mu_deg = mu_degree < 0 ? degree + (degree % 2) : mu_degree;

    BuiltCondition bc;
    auto& prob = bc.problem;
    auto& lay = bc.layout;
    const std::size_t n = sys.n, nm = sys.mode_count();
    lay.n = n;
    lay.modes = nm;
    for (std::size_t i = 0; i < nm; ++i)
        lay.p_start.push_back(prob.new_vars(static_cast<int>(tri(n)), "P" + idx(i)));
    lay.eps_var = prob.new_var("eps");
    for (std::size_t i = 0; i < nm; ++i)
        lay.mu_const.push_back(prob.new_var("mu" + idx(i)));
    for (std::size_t i = 0; i < nm; ++i)
        for (std::size_t j = 0; j < nm; ++j)
            if (i != j)
                lay.z.push_back(make_z_entry(prob, i, j, 3 * n, 1, univariate_exps(degree)));
    for (std::size_t i = 0; i < nm; ++i)
        for (std::size_t j = 0; j < nm; ++j) {
            if (i == j) continue;
            MuEntry m;
            m.i = i;
            m.j = j;
            m.ncoef = mu_deg + 1;
            m.start = prob.new_vars(m.ncoef, "m" + idx(i, j));
            lay.mu_poly.push_back(m);
        }

    // Scaled continuous blocks: -[F'P+PF+mu V'V, PU; *, -mu I] > 0.
    for (std::size_t i = 0; i < nm; ++i) {
        add_p_floor(prob, n, lay.p_start[i], "P" + idx(i));
        const auto& ch = sys.channels[i];
        Matrix u = ch.u;
        u *= ch.kappa;
        const Matrix vv = ch.v.transpose() * ch.v;
        const std::size_t m = u.cols(), q = n + m;
        auto& b = prob.add_block(q, "cont" + idx(i));
        for_sym_basis(n, lay.p_start[i], [&](int v, const Matrix& e) {
            Matrix c(q, q);
            const Matrix tl = -1.0 * (sys.modes[i].transpose() * e + e * sys.modes[i]);
            const Matrix tr = -1.0 * (e * u);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t cc = 0; cc < n; ++cc) c(r, cc) = tl(r, cc);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t cc = 0; cc < m; ++cc) {
                    c(r, n + cc) = tr(r, cc);
                    c(n + cc, r) = tr(r, cc);
                }
            b.terms.push_back({v, c});
        });
        Matrix cmu(q, q);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t cc = 0; cc < n; ++cc) cmu(r, cc) = -vv(r, cc);
        for (std::size_t r = 0; r < m; ++r) cmu(n + r, n + r) = 1.0;
        b.terms.push_back({lay.mu_const[i], cmu});
    }
    add_eps_floor(prob, lay.eps_var);

    // mu_ij(tau) >= 0 on [0, tbar].
    for (const auto& mp : lay.mu_poly) {
        AffinePolyMat sp(1, 1);
        for (int k = 0; k < mp.ncoef; ++k)
            sp.coeff(k).add_term(mp.start + k, Matrix{{1.0}});
        interval_psd_constraint(prob, sp, tbar, "mu" + idx(mp.i, mp.j));
    }

    // Looped blocks with the Petersen scalings, dimension 3n + m_i.
    for (std::size_t pz = 0; pz < lay.z.size(); ++pz) {
        const auto& z = lay.z[pz];
        const auto& mp = lay.mu_poly[pz];
        const auto& ch = sys.channels[z.i];
        Matrix u = ch.u;
        u *= ch.kappa;
        const Matrix vv = ch.v.transpose() * ch.v;
        const std::size_t m = u.cols(), q = 3 * n + m;

        for (auto& row : boundary_constraint(z, tbar)) prob.add_equality(std::move(row));

        AffinePolyMat psi(3 * n, 1);
        AffineMat rate = psi_rate_part(sys.modes[z.i], lay.p_start[z.i]);
        rate.scale(tbar);
        psi.coeff(0) += rate;
        psi.coeff(0) += psi_jump_part(n, lay.p_start[z.i], lay.p_start[z.j], lay.eps_var);
        AffinePolyMat xi1 = looped_lhs(psi, z_affine(z), sys.modes[z.i]);

        AffinePolyMat big(q, 1);
        for (const auto& [e, c] : xi1.coeffs) big.coeff(e[0]) += embed_sym(c, q, 0);
        for (int k = 0; k < mp.ncoef; ++k) {
            // D_n(mu(tau) V'V) at the top-left corner, -mu(tau) I at the tail.
            Matrix c(q, q);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t cc = 0; cc < n; ++cc) c(r, cc) = vv(r, cc);
            for (std::size_t r = 0; r < m; ++r) c(3 * n + r, 3 * n + r) = -1.0;
            big.coeff(k).add_term(mp.start + k, c);
        }
        // Off-diagonal column [Z11 + tbar P_i; Z21; Z31] U.
        const std::size_t step = tri(z.dim);
        for (std::size_t s = 0; s < z.exps.size(); ++s) {
            const int e = z.exps[s][0];
            for_sym_basis(z.dim, z.start + static_cast<int>(s * step),
                          [&](int v, const Matrix& kmat) {
                              Matrix col(3 * n, n);
                              for (std::size_t r = 0; r < 3 * n; ++r)
                                  for (std::size_t cc = 0; cc < n; ++cc)
                                      col(r, cc) = kmat(r, cc);
                              const Matrix cu = col * u;
                              if (cu.max_abs() == 0.0) return;
                              Matrix c(q, q);
                              for (std::size_t r = 0; r < 3 * n; ++r)
                                  for (std::size_t cc = 0; cc < m; ++cc) {
                                      c(r, 3 * n + cc) = cu(r, cc);
                                      c(3 * n + cc, r) = cu(r, cc);
                                  }
                              big.coeff(e).add_term(v, c);
                          });
        }
        for_sym_basis(n, lay.p_start[z.i], [&](int v, const Matrix& e) {
            const Matrix eu = e * u;
            Matrix c(q, q);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t cc = 0; cc < m; ++cc) {
                    c(r, 3 * n + cc) = tbar * eu(r, cc);
                    c(3 * n + cc, r) = tbar * eu(r, cc);
                }
            big.coeff(0).add_term(v, c);
        });
        big.scale(-1.0);
        interval_psd_constraint(prob, big, tbar, "G" + idx(z.i, z.j));
    }
    return bc;
}

DwellCertificate extract_certificate(const DwellQuery& query,
                                     const CertificateLayout& layout,
                                     const SolverResult& result) {
    if (result.status != SolveStatus::Certified)
        throw std::invalid_argument("extract_certificate: result is not Certified");
    DwellCertificate cert;
    cert.query = query;
    const auto& y = result.y;
    for (std::size_t i = 0; i < layout.modes; ++i)
        cert.p.push_back(sym_from_slice(y, layout.p_start[i], layout.n));
    if (layout.eps_var >= 0) cert.eps = y[layout.eps_var];
    for (int v : layout.mu_const) cert.mu_const.push_back(y[v]);
    for (const auto& z : layout.z) {
        PolyMat pm(z.dim, z.nvars);
        const std::size_t step = tri(z.dim);
        for (std::size_t k = 0; k < z.exps.size(); ++k)
            pm.coeff(z.exps[k][0], z.exps[k][1]) =
                sym_from_slice(y, z.start + static_cast<int>(k * step), z.dim);
        cert.z.emplace(std::make_pair(z.i, z.j), std::move(pm));
    }
    for (const auto& mp : layout.mu_poly) {
        PolyMat pm(1, 1);
        for (int k = 0; k < mp.ncoef; ++k) pm.coeff(k) = Matrix{{y[mp.start + k]}};
        cert.mu_poly.emplace(std::make_pair(mp.i, mp.j), std::move(pm));
    }
    return cert;
}

double boundary_residual(const DwellCertificate& cert) {
    double worst = 0.0;
    for (const auto& [pair, z] : cert.z) {
        const std::size_t n = z.dim / 3;
        const Matrix y1 = loop_y1(n), y2 = loop_y2(n);
        if (z.nvars == 1) {
            double horizon = cert.query.tbar;
            if (cert.query.kind == DwellKind::ModeDependent)
                horizon = cert.query.ranges.at(pair.first).tmin;
            const Matrix b = congruence(y2, z.eval(horizon)) - congruence(y1, z.eval(0.0));
            worst = std::max(worst, b.max_abs());
            continue;
        }
        int dmax = 0;
        for (const auto& [e, c] : z.coeffs) dmax = std::max(dmax, e[0] + e[1]);
        for (int k = 0; k <= dmax; ++k) {
            Matrix b(2 * n, 2 * n);
            for (const auto& [e, c] : z.coeffs) {
                if (e[0] + e[1] == k) b += congruence(y2, c);
                if (e[0] == 0 && e[1] == k) b -= congruence(y1, c);
            }
            worst = std::max(worst, b.max_abs());
        }
    }
    return worst;
}

}  // namespace dtcert
