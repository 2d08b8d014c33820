// Margin-maximization SDP feasibility solver.
//
// Solves  max t  s.t.  F0_b + sum_k y_k F_kb - t I >= 0 for every block b,
//                      E y = f,  |y_k| <= R (non-Gram variables),
// with a dual-form HKM interior-point method and Mehrotra
// predictor-corrector steps. Equalities are kept in an augmented
// quasi-definite KKT system instead of being eliminated up front; Gram
// matrix-variable blocks are condensed out of the KKT analytically each
// iteration (their Schur block has the closed-form kernels::gram_schur
// structure), which keeps the factored system at
// (#non-Gram vars + #equalities + 1) regardless of the SOS block sizes.
//
// The factorization is a signed LDL^T without pivoting. Quasi-definiteness
// makes that well defined for any symmetric ordering; the ordering below
// (generic vars, Gram-coupled equality rows, matched free vars, remaining
// equality rows, remaining free vars, epigraph t) keeps every pivot away
// from the saddle-point cancellations that a naive ordering hits once the
// barrier weight of the trust box vanishes. Ruiz equilibration, static
// regularization and iterative refinement against the exact reduced system
// cover the rest.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include "dtcert/eig.hpp"
#include "dtcert/kernels.hpp"
#include "dtcert/lmi.hpp"

namespace dtcert {

namespace {

constexpr double kStepFrac = 0.98;       // fraction-to-boundary
constexpr double kKktReg = 1e-11;        // static regularization (scaled system)
constexpr double kRefineTarget = 1e-10;  // refinement stop (relative)
constexpr double kRefineAccept = 1e-6;   // beyond this the factor is unusable
constexpr int kRefineRounds = 5;
constexpr int kStallWindow = 30;
constexpr double kInf = std::numeric_limits<double>::infinity();

double trace_prod(const Matrix& a, const Matrix& b) {
    const std::size_t n = a.rows(), m = a.cols();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) s += a(i, j) * b(j, i);
    return s;
}

enum VarKind : int { kGeneric = 0, kFreeMatched = 1, kFreeTail = 2, kGram = 3 };

struct BlockWork {
    const LmiBlock* def = nullptr;
    std::size_t size = 0;
    bool gram = false;
    std::vector<std::pair<int, Matrix>> terms;  // coalesced (var, coef)

    // Whether the epigraph variable t shifts this block. Gram blocks are
    // plain cone constraints (their boundary is a legitimate certificate,
    // e.g. zero-padded SOS multipliers), so t applies to generic blocks
    // only; pure-Gram problems fall back to shifting every block.
    bool epi = true;

    Matrix X, S, Ls, Sinv, Lx;
    std::vector<Matrix> px, qs;  // F_u X, F_u Sinv caches
    Matrix n2;                   // dXa dSa Sinv (corrector second order)

    // Gram condensation data (valid per iteration)
    Matrix hgg;                  // Cholesky factor of the Gram Schur block
    Matrix u, w;                 // coupling columns and Hgg^{-1} * u
    std::vector<int> ucols;      // KKT positions of u's columns
    std::vector<int> urows;      // equality row ids per u column (from col 1)

    Matrix dS, dX, dSa, dXa;
};

struct Direction {
    std::vector<double> dy;  // per variable (including Gram slices)
    double dt = 0.0;
    std::vector<double> dnu;
    std::vector<double> dxp, dxm, dsp, dsm;  // box primal/slack steps
};

struct Solver {
    const LmiProblem& p;
    SolveOptions opt;
    int m = 0;  // decision variables (excluding t)

    std::vector<BlockWork> blocks;
    std::vector<int> kind;          // per variable
    std::vector<int> pos;           // variable -> KKT position (-1 for Gram)
    std::vector<int> row_pos;       // equality row -> KKT position
    std::vector<int> boxed;         // variables with trust-box constraints
    int pos_t = -1;
    int nred = 0;
    std::vector<int> sgn;

    std::vector<std::vector<std::pair<int, double>>> rows;      // equality rows
    std::vector<std::vector<std::pair<int, double>>> var_rows;  // transpose
    std::vector<double> f;

    double maxnorm = 0.0, feas_tol = 0.0;
    std::size_t cone_dim = 0;

    // iterate
    std::vector<double> y;
    double t = 0.0;
    std::vector<double> nu;
    std::vector<double> xp, xm, sp, sm;

    // KKT state
    Matrix kmat, kfac;
    std::vector<double> kdiag, kscale;
    std::vector<int> ksign;
    double worst_relres = 0.0;

    // affine box directions stashed for the corrector
    std::vector<double> dxpa_, dxma_, dspa_, dsma_;
    bool trace_ = false;

    // cached Cholesky factor of E E^T for the equality polish
    Matrix eet_l;
    bool eet_ready = false, eet_ok = false;

    explicit Solver(const LmiProblem& prob, const SolveOptions& o)
        : p(prob), opt(o), trace_(o.trace || std::getenv("DTCERT_IPM_TRACE") != nullptr) {}

    void build_structure();
    void initialize();
    bool refresh_state(std::string& err);
    double residual_pinf() const;
    double residual_einf() const;
    double eqresid_at(const std::vector<double>& yy) const;
    double margin_at(const std::vector<double>& yy) const;
    double nonepi_min_at(const std::vector<double>& yy) const;
    /// Minimum-norm projection of `yy` onto {E y = f}; false when the
    /// normal equations are numerically rank-deficient.
    bool project_equalities(std::vector<double>& yy);
    /// Exact certification attempt at the current iterate: equality
    /// polish, then margin recheck. Fills `res` on success.
    bool certify_into(SolverResult& res, double t_now);
    void assemble_kkt();
    bool factor_kkt(double reg);
    std::vector<double> kkt_solve(const std::vector<double>& rhs);
    Direction solve_direction(double sigmu, bool corrector);
    SolverResult run();
};

void Solver::build_structure() {
    m = p.num_vars;
    kind.assign(m, kFreeTail);
    pos.assign(m, -1);

    for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
        const auto& b = p.blocks[bi];
        BlockWork w;
        w.def = &b;
        w.size = b.size;
        w.gram = b.gram_start >= 0;
        if (w.gram) {
            int nq = static_cast<int>(kernels::tri_count(b.size));
            for (int q = 0; q < nq; ++q) {
                int v = b.gram_start + q;
                if (kind[v] == kGram)
                    throw std::invalid_argument("solve_feasibility: overlapping gram slices");
                kind[v] = kGram;
            }
        } else {
            // coalesce repeated variables
            std::vector<std::pair<int, Matrix>> acc;
            for (const auto& t : b.terms) {
                auto it = std::find_if(acc.begin(), acc.end(),
                                       [&](const auto& e) { return e.first == t.var; });
                if (it == acc.end())
                    acc.emplace_back(t.var, t.coef);
                else
                    for (std::size_t i = 0; i < b.size; ++i)
                        for (std::size_t j = 0; j < b.size; ++j)
                            it->second(i, j) += t.coef(i, j);
            }
            w.terms = std::move(acc);
        }
        blocks.push_back(std::move(w));
    }
    bool has_generic = false;
    for (const auto& b : blocks) has_generic = has_generic || !b.gram;
    for (auto& b : blocks) b.epi = !b.gram || !has_generic;
    for (auto& b : blocks)
        if (!b.gram)
            for (auto& [v, c] : b.terms) {
                if (kind[v] == kGram)
                    throw std::invalid_argument(
                        "solve_feasibility: gram variable used in a generic block");
                kind[v] = kGeneric;
            }

    // equality rows (coalesced) and their transpose
    const std::size_t q = p.equalities.size();
    rows.resize(q);
    f.resize(q);
    var_rows.assign(m, {});
    for (std::size_t r = 0; r < q; ++r) {
        f[r] = p.equalities[r].rhs;
        auto& out = rows[r];
        for (const auto& [v, c] : p.equalities[r].coef) {
            auto it = std::find_if(out.begin(), out.end(),
                                   [&](const auto& e) { return e.first == v; });
            if (it == out.end()) out.emplace_back(v, c);
            else it->second += c;
        }
        for (const auto& [v, c] : out) var_rows[v].emplace_back(static_cast<int>(r), c);
    }

    // row classes: rows touching a Gram variable are condensed against the
    // Gram Schur block and get healthy negative pivots; free variables that
    // appear in such a row pivot cleanly right after them.
    std::vector<bool> row_gram(q, false);
    for (std::size_t r = 0; r < q; ++r)
        for (const auto& [v, c] : rows[r])
            if (kind[v] == kGram) { row_gram[r] = true; break; }
    for (std::size_t r = 0; r < q; ++r)
        if (row_gram[r])
            for (const auto& [v, c] : rows[r])
                if (kind[v] == kFreeTail) kind[v] = kFreeMatched;

    // KKT ordering
    row_pos.assign(q, -1);
    int cur = 0;
    for (int v = 0; v < m; ++v)
        if (kind[v] == kGeneric) pos[v] = cur++;
    for (std::size_t r = 0; r < q; ++r)
        if (row_gram[r]) row_pos[r] = cur++;
    for (int v = 0; v < m; ++v)
        if (kind[v] == kFreeMatched) pos[v] = cur++;
    for (std::size_t r = 0; r < q; ++r)
        if (!row_gram[r]) row_pos[r] = cur++;
    for (int v = 0; v < m; ++v)
        if (kind[v] == kFreeTail) pos[v] = cur++;
    pos_t = cur++;
    nred = cur;
    sgn.assign(nred, 1);
    for (std::size_t r = 0; r < q; ++r) sgn[row_pos[r]] = -1;

    for (int v = 0; v < m; ++v)
        if (kind[v] != kGram) boxed.push_back(v);

    // Gram coupling columns: [t | touching equality rows]
    for (auto& b : blocks) {
        if (!b.gram) continue;
        int lo = b.def->gram_start;
        int hi = lo + static_cast<int>(kernels::tri_count(b.size));
        std::vector<bool> seen(q, false);
        b.ucols.push_back(pos_t);
        for (int v = lo; v < hi; ++v)
            for (const auto& [r, c] : var_rows[v])
                if (!seen[r]) {
                    seen[r] = true;
                    b.urows.push_back(r);
                    b.ucols.push_back(row_pos[r]);
                }
    }

    maxnorm = p.max_block_norm();
    feas_tol = opt.feas_tol >= 0 ? opt.feas_tol : 1e-7 * (1.0 + maxnorm);
    cone_dim = 2 * boxed.size();
    for (const auto& b : blocks) cone_dim += b.size;
}

void Solver::initialize() {
    y.assign(m, 0.0);
    // Gram slices start at the identity so their cone blocks are interior.
    for (const auto& b : blocks)
        if (b.gram)
            for (std::size_t i = 0; i < b.size; ++i)
                y[b.def->gram_start + kernels::tri_index(i, i, b.size)] = 1.0;
    nu.assign(rows.size(), 0.0);
    double tmin = kInf;
    std::size_t ntot = 0;
    for (const auto& b : blocks)
        if (b.epi) {
            tmin = std::min(tmin, min_eig(b.def->f0));
            ntot += b.size;
        }
    t = tmin - 1.0 - 0.1 * maxnorm;
    const double xscale = ntot ? 1.0 / static_cast<double>(ntot) : 1.0;
    for (auto& b : blocks)
        b.X = (b.epi ? xscale : 1.0) * Matrix::identity(b.size);
    // O(1) total box mass: keeps the barrier diagonal xp/sp well above the
    // static regularization so near-collinear (y, t) directions stay
    // factorable from the first iteration.
    const double xbox =
        boxed.empty() ? 0.0 : std::max(0.5 / static_cast<double>(boxed.size()), 1e-8);
    xp.assign(boxed.size(), xbox);
    xm.assign(boxed.size(), xbox);
    sp.assign(boxed.size(), opt.r_bound);
    sm.assign(boxed.size(), opt.r_bound);
}

// Recomputes S, factorizations and per-term caches at the current iterate.
bool Solver::refresh_state(std::string& err) {
    for (auto& b : blocks) {
        b.S = eval_block(*b.def, y);
        if (b.epi)
            for (std::size_t i = 0; i < b.size; ++i) b.S(i, i) -= t;
        b.Ls = b.S;
        if (!kernels::cholesky(b.Ls, 1e-300)) {
            err = "dual block left the cone (" + b.def->label + ")";
            return false;
        }
        b.Sinv = Matrix::identity(b.size);
        kernels::trsm_lower(b.Ls, b.Sinv);
        kernels::trsm_lower_t(b.Ls, b.Sinv);
        b.Sinv = b.Sinv.symmetrized();
        b.Lx = b.X;
        if (!kernels::cholesky(b.Lx, 1e-300)) {
            err = "primal block left the cone (" + b.def->label + ")";
            return false;
        }
        if (!b.gram) {
            b.px.assign(b.terms.size(), Matrix(b.size, b.size));
            b.qs.assign(b.terms.size(), Matrix(b.size, b.size));
            for (std::size_t u = 0; u < b.terms.size(); ++u) {
                kernels::gemm(b.terms[u].second, b.X, b.px[u]);
                kernels::gemm(b.terms[u].second, b.Sinv, b.qs[u]);
            }
        }
    }
    for (std::size_t k = 0; k < boxed.size(); ++k) {
        sp[k] = opt.r_bound - y[boxed[k]];
        sm[k] = opt.r_bound + y[boxed[k]];
        if (sp[k] <= 0 || sm[k] <= 0) {
            err = "trust box violated";
            return false;
        }
    }
    return true;
}

double Solver::residual_pinf() const {
    double pinf = 0.0;
    std::vector<double> g(m, 0.0);
    double gt = 1.0;
    for (const auto& b : blocks) {
        if (b.epi) gt -= b.X.trace();
        if (b.gram) {
            const std::size_t s = b.size;
            int lo = b.def->gram_start;
            for (std::size_t r = 0; r < s; ++r)
                for (std::size_t c = r; c < s; ++c)
                    g[lo + kernels::tri_index(r, c, s)] +=
                        (r == c) ? b.X(r, r) : 2.0 * b.X(r, c);
        } else {
            for (std::size_t u = 0; u < b.terms.size(); ++u)
                g[b.terms[u].first] += trace_prod(b.terms[u].second, b.X);
        }
    }
    for (std::size_t k = 0; k < boxed.size(); ++k)
        g[boxed[k]] += -xp[k] + xm[k];
    for (int v = 0; v < m; ++v) {
        double acc = g[v];
        for (const auto& [r, c] : var_rows[v]) acc -= c * nu[r];
        pinf = std::max(pinf, std::abs(acc));
    }
    return std::max(pinf, std::abs(gt));
}

double Solver::residual_einf() const { return eqresid_at(y); }

double Solver::eqresid_at(const std::vector<double>& yy) const {
    double einf = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        double acc = -f[r];
        for (const auto& [v, c] : rows[r]) acc += c * yy[v];
        einf = std::max(einf, std::abs(acc));
    }
    return einf;
}

double Solver::margin_at(const std::vector<double>& yy) const {
    double mg = kInf;
    for (const auto& b : blocks)
        if (b.epi) mg = std::min(mg, min_eig(eval_block(*b.def, yy)));
    return mg == kInf ? 0.0 : mg;
}

double Solver::nonepi_min_at(const std::vector<double>& yy) const {
    double mg = kInf;
    for (const auto& b : blocks)
        if (!b.epi) mg = std::min(mg, min_eig(eval_block(*b.def, yy)));
    return mg;
}

bool Solver::project_equalities(std::vector<double>& yy) {
    if (rows.empty()) return true;
    if (!eet_ready) {
        const std::size_t q = rows.size();
        eet_l = Matrix::zero(q, q);
        for (std::size_t r = 0; r < q; ++r)
            for (std::size_t s = r; s < q; ++s) {
                double acc = 0.0;
                for (const auto& [v, c] : rows[r])
                    for (const auto& [w, d] : rows[s])
                        if (v == w) acc += c * d;
                eet_l(r, s) = acc;
                eet_l(s, r) = acc;
            }
        double scale = 0.0;
        for (std::size_t r = 0; r < q; ++r) scale = std::max(scale, eet_l(r, r));
        eet_ok = kernels::cholesky(eet_l, 1e-13 * (1.0 + scale));
        eet_ready = true;
    }
    if (!eet_ok) return false;
    std::vector<double> r(rows.size(), 0.0);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        r[k] = -f[k];
        for (const auto& [v, c] : rows[k]) r[k] += c * yy[v];
    }
    const std::vector<double> lam = kernels::cholesky_solve(eet_l, std::move(r));
    for (std::size_t k = 0; k < rows.size(); ++k)
        for (const auto& [v, c] : rows[k]) yy[v] -= c * lam[k];
    return true;
}

bool Solver::certify_into(SolverResult& res, double t_now) {
    std::vector<double> yc = y;
    for (double v : yc)
        if (!std::isfinite(v)) return false;
    double einf = eqresid_at(yc);
    if (einf > opt.eq_tol) {
        // Minimum-norm correction onto E y = f; the exact margin is
        // rechecked below, so this cannot over-certify.
        if (!project_equalities(yc)) return false;
        einf = eqresid_at(yc);
        if (einf > opt.eq_tol) return false;
    }
    const double mg = margin_at(yc);
    const double gmin = nonepi_min_at(yc);
    if (!(mg >= feas_tol && gmin >= -feas_tol)) return false;
    res.status = SolveStatus::Certified;
    res.y = std::move(yc);
    res.margin = mg;
    res.min_block_eig = std::min(mg, gmin);
    res.t_opt = t_now;
    res.equality_residual = einf;
    return true;
}

void Solver::assemble_kkt() {
    kmat = Matrix::zero(nred, nred);
    auto addsym = [&](int i, int j, double v) {
        kmat(i, j) += v;
        if (i != j) kmat(j, i) += v;
    };

    for (auto& b : blocks) {
        if (b.gram) continue;
        const std::size_t nt = b.terms.size();
        for (std::size_t u = 0; u < nt; ++u) {
            const int pu = pos[b.terms[u].first];
            for (std::size_t w = u; w < nt; ++w)
                addsym(pu, pos[b.terms[w].first], trace_prod(b.px[u], b.qs[w]));
            addsym(pu, pos_t, -trace_prod(b.px[u], b.Sinv));
        }
        kmat(pos_t, pos_t) += trace_prod(b.X, b.Sinv);
    }
    for (std::size_t k = 0; k < boxed.size(); ++k) {
        int pv = pos[boxed[k]];
        kmat(pv, pv) += xp[k] / sp[k] + xm[k] / sm[k];
    }
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (const auto& [v, c] : rows[r])
            if (kind[v] != kGram) addsym(pos[v], row_pos[r], c);

    // Gram blocks: assemble their Schur block, factor it, and condense the
    // coupling to (t, touching rows) out of the reduced system.
    for (auto& b : blocks) {
        if (!b.gram) continue;
        const std::size_t s = b.size;
        const std::size_t nq = kernels::tri_count(s);
        if (b.epi) kmat(pos_t, pos_t) += trace_prod(b.X, b.Sinv);

        b.hgg = Matrix(nq, nq);
        kernels::gram_schur(b.X, b.Sinv, b.hgg);
        double dmax = 0.0;
        for (std::size_t i = 0; i < nq; ++i) dmax = std::max(dmax, b.hgg(i, i));
        Matrix hf = b.hgg;
        double shift = 0.0;
        for (int attempt = 0;; ++attempt) {
            if (kernels::cholesky(hf, 0.0)) break;
            if (attempt >= 3)
                throw NumericError("solve_feasibility: gram Schur block not PD", dmax);
            shift = shift == 0.0 ? 1e-14 * (1.0 + dmax) : shift * 100.0;
            hf = b.hgg;
            for (std::size_t i = 0; i < nq; ++i) hf(i, i) += shift;
        }
        b.hgg = std::move(hf);

        const std::size_t ncols = b.ucols.size();
        b.u = Matrix::zero(nq, ncols);
        if (b.epi) {
            Matrix xsinv(s, s);
            kernels::gemm(b.X, b.Sinv, xsinv);
            for (std::size_t r = 0; r < s; ++r)
                for (std::size_t c = r; c < s; ++c) {
                    std::size_t qi = kernels::tri_index(r, c, s);
                    b.u(qi, 0) = (r == c) ? -xsinv(r, r) : -(xsinv(r, c) + xsinv(c, r));
                }
        }
        const int lo = b.def->gram_start;
        for (std::size_t j = 1; j < ncols; ++j)
            for (const auto& [v, c] : rows[b.urows[j - 1]])
                if (kind[v] == kGram && v >= lo && v < lo + static_cast<int>(nq))
                    b.u(v - lo, j) = c;
        b.w = b.u;
        kernels::trsm_lower(b.hgg, b.w);
        kernels::trsm_lower_t(b.hgg, b.w);
        Matrix ut = b.u.transpose();
        Matrix cm(ncols, ncols);
        kernels::gemm(ut, b.w, cm);
        for (std::size_t a = 0; a < ncols; ++a)
            for (std::size_t c2 = a; c2 < ncols; ++c2)
                addsym(b.ucols[a], b.ucols[c2], -0.5 * (cm(a, c2) + cm(c2, a)));
    }
}

bool Solver::factor_kkt(double reg) {
    kfac = kmat;
    kscale.assign(nred, 1.0);
    for (int sweep = 0; sweep < 4; ++sweep) {
        for (int i = 0; i < nred; ++i) {
            double rmax = 0.0;
            for (int j = 0; j < nred; ++j) rmax = std::max(rmax, std::abs(kfac(i, j)));
            double si = rmax > 1e-300 ? 1.0 / std::sqrt(rmax) : 1.0;
            kscale[i] *= si;
            for (int j = 0; j < nred; ++j) {
                kfac(i, j) *= si;
                kfac(j, i) *= si;
            }
        }
    }
    for (int i = 0; i < nred; ++i) kfac(i, i) += sgn[i] * reg;
    ksign = sgn;
    kernels::ldlt(kfac, kdiag, ksign, 1e-13);
    return true;
}

std::vector<double> Solver::kkt_solve(const std::vector<double>& rhs) {
    std::vector<double> x(nred, 0.0), r = rhs;
    double rhsn = 1.0;
    for (double v : rhs) rhsn = std::max(rhsn, std::abs(v));
    double relres = kInf;
    for (int round = 0; round <= kRefineRounds; ++round) {
        std::vector<double> rs(nred);
        for (int i = 0; i < nred; ++i) rs[i] = r[i] * kscale[i];
        rs = kernels::ldlt_solve(kfac, kdiag, std::move(rs));
        for (int i = 0; i < nred; ++i) x[i] += rs[i] * kscale[i];
        // exact residual against the reduced (unregularized) system
        double rn = 0.0;
        for (int i = 0; i < nred; ++i) {
            double acc = rhs[i];
            const double* ki = kmat.data() + static_cast<std::size_t>(i) * nred;
            for (int j = 0; j < nred; ++j) acc -= ki[j] * x[j];
            r[i] = acc;
            rn = std::max(rn, std::abs(acc));
        }
        relres = rn / rhsn;
        if (relres <= kRefineTarget) break;
    }
    worst_relres = std::max(worst_relres, relres);
    return x;
}

// Builds the Newton right-hand side for target sigma*mu (0 for the
// predictor), solves the reduced system, and expands the direction.
Direction Solver::solve_direction(double sigmu, bool corrector) {
    std::vector<double> rhs(nred, 0.0);

    // r1 over non-Gram variables and t: sigmu*tr(A S^-1) - corr - E'nu + b
    std::vector<double> r1(m, 0.0);
    double r1t = 1.0;  // b_t
    for (auto& b : blocks) {
        if (corrector) {
            Matrix tmp(b.size, b.size);
            kernels::gemm(b.dXa, b.dSa, tmp);
            b.n2 = Matrix(b.size, b.size);
            kernels::gemm(tmp, b.Sinv, b.n2);
        }
        if (!b.gram) {
            for (std::size_t u = 0; u < b.terms.size(); ++u) {
                double v = 0.0;
                if (sigmu != 0.0) v += sigmu * trace_prod(b.terms[u].second, b.Sinv);
                if (corrector) v -= trace_prod(b.terms[u].second, b.n2);
                r1[b.terms[u].first] += v;
            }
        } else {
            const std::size_t s = b.size;
            const int lo = b.def->gram_start;
            for (std::size_t r = 0; r < s; ++r)
                for (std::size_t c = r; c < s; ++c) {
                    double v = 0.0;
                    if (sigmu != 0.0)
                        v += sigmu * ((r == c) ? b.Sinv(r, r) : 2.0 * b.Sinv(r, c));
                    if (corrector)
                        v -= (r == c) ? b.n2(r, r) : (b.n2(r, c) + b.n2(c, r));
                    r1[lo + kernels::tri_index(r, c, s)] += v;
                }
        }
        if (b.epi && sigmu != 0.0) r1t -= sigmu * b.Sinv.trace();
        if (b.epi && corrector) r1t += b.n2.trace();
    }
    for (std::size_t k = 0; k < boxed.size(); ++k) {
        double v = 0.0;
        if (sigmu != 0.0) v += sigmu * (-1.0 / sp[k] + 1.0 / sm[k]);
        if (corrector) v += dxpa_[k] * dspa_[k] / sp[k] - dxma_[k] * dsma_[k] / sm[k];
        r1[boxed[k]] += v;
    }
    for (int v = 0; v < m; ++v)
        for (const auto& [r, c] : var_rows[v]) r1[v] -= c * nu[r];

    for (int v = 0; v < m; ++v)
        if (kind[v] != kGram) rhs[pos[v]] = r1[v];
    rhs[pos_t] = r1t;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        double acc = f[r];
        for (const auto& [v, c] : rows[r]) acc -= c * y[v];
        rhs[row_pos[r]] = acc;
    }

    // condense Gram right-hand sides
    std::vector<std::vector<double>> gtmp(blocks.size());
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        auto& b = blocks[bi];
        if (!b.gram) continue;
        const std::size_t nq = kernels::tri_count(b.size);
        const int lo = b.def->gram_start;
        std::vector<double> rg(nq);
        for (std::size_t q = 0; q < nq; ++q) rg[q] = r1[lo + q];
        gtmp[bi] = kernels::cholesky_solve(b.hgg, rg);
        for (std::size_t j = 0; j < b.ucols.size(); ++j) {
            double acc = 0.0;
            for (std::size_t q = 0; q < nq; ++q) acc += b.u(q, j) * gtmp[bi][q];
            rhs[b.ucols[j]] -= acc;
        }
    }

    std::vector<double> sol = kkt_solve(rhs);

    Direction d;
    d.dy.assign(m, 0.0);
    d.dnu.assign(rows.size(), 0.0);
    d.dt = sol[pos_t];
    for (int v = 0; v < m; ++v)
        if (kind[v] != kGram) d.dy[v] = sol[pos[v]];
    for (std::size_t r = 0; r < rows.size(); ++r) d.dnu[r] = sol[row_pos[r]];
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        auto& b = blocks[bi];
        if (!b.gram) continue;
        const std::size_t nq = kernels::tri_count(b.size);
        const int lo = b.def->gram_start;
        for (std::size_t q = 0; q < nq; ++q) {
            double acc = gtmp[bi][q];
            for (std::size_t j = 0; j < b.ucols.size(); ++j)
                acc -= b.w(q, j) * sol[b.ucols[j]];
            d.dy[lo + q] = acc;
        }
    }

    // cone directions
    for (auto& b : blocks) {
        b.dS = Matrix::zero(b.size, b.size);
        if (b.gram) {
            const int lo = b.def->gram_start;
            for (std::size_t r = 0; r < b.size; ++r)
                for (std::size_t c = r; c < b.size; ++c) {
                    double v = d.dy[lo + kernels::tri_index(r, c, b.size)];
                    b.dS(r, c) += v;
                    if (c != r) b.dS(c, r) += v;
                }
        } else {
            for (const auto& [v, cf] : b.terms)
                for (std::size_t i = 0; i < b.size; ++i)
                    for (std::size_t j = 0; j < b.size; ++j)
                        b.dS(i, j) += d.dy[v] * cf(i, j);
        }
        if (b.epi)
            for (std::size_t i = 0; i < b.size; ++i) b.dS(i, i) -= d.dt;

        Matrix tmp(b.size, b.size), msd(b.size, b.size);
        kernels::gemm(b.X, b.dS, tmp);
        kernels::gemm(tmp, b.Sinv, msd);
        b.dX = Matrix::zero(b.size, b.size);
        for (std::size_t i = 0; i < b.size; ++i)
            for (std::size_t j = 0; j < b.size; ++j) {
                double v = -b.X(i, j) - 0.5 * (msd(i, j) + msd(j, i));
                if (corrector) v -= 0.5 * (b.n2(i, j) + b.n2(j, i));
                b.dX(i, j) = v;
            }
        if (sigmu != 0.0)
            for (std::size_t i = 0; i < b.size; ++i)
                for (std::size_t j = 0; j < b.size; ++j)
                    b.dX(i, j) += sigmu * b.Sinv(i, j);
    }
    d.dxp.resize(boxed.size());
    d.dxm.resize(boxed.size());
    d.dsp.resize(boxed.size());
    d.dsm.resize(boxed.size());
    for (std::size_t k = 0; k < boxed.size(); ++k) {
        double dyk = d.dy[boxed[k]];
        d.dsp[k] = -dyk;
        d.dsm[k] = dyk;
        double vp = -xp[k] - xp[k] * d.dsp[k] / sp[k];
        double vm = -xm[k] - xm[k] * d.dsm[k] / sm[k];
        if (sigmu != 0.0) {
            vp += sigmu / sp[k];
            vm += sigmu / sm[k];
        }
        if (corrector) {
            vp -= dxpa_[k] * dspa_[k] / sp[k];
            vm -= dxma_[k] * dsma_[k] / sm[k];
        }
        d.dxp[k] = vp;
        d.dxm[k] = vm;
    }
    return d;
}

SolverResult Solver::run() {
    SolverResult res;
    build_structure();
    res.feas_tol_used = feas_tol;
    if (blocks.empty()) {
        // equality-only problem: defer to the null-space reduction
        res.status = SolveStatus::Certified;
        res.y = eliminate_equalities(p).second.y0;
        res.margin = res.min_block_eig = kInf;
        res.t_opt = kInf;
        res.equality_residual = eqresid_at(res.y);
        res.note = "no conic blocks";
        return res;
    }
    initialize();

    double best_mu = kInf;
    int stall = 0, tiny_steps = 0;
    double last_pobj = kInf, last_pinf = kInf;
    std::string err;

    for (int iter = 0; iter < opt.max_iter; ++iter) {
        res.iterations = iter;
        if (!refresh_state(err)) {
            res.status = SolveStatus::NumericFailure;
            res.note = err;
            break;
        }

        double gap = 0.0;
        for (const auto& b : blocks) gap += trace_prod(b.X, b.S);
        for (std::size_t k = 0; k < boxed.size(); ++k)
            gap += xp[k] * sp[k] + xm[k] * sm[k];
        const double mu = gap / static_cast<double>(cone_dim);
        if (!std::isfinite(mu)) {
            res.note = "non-finite iterate";
            break;
        }
        double pobj = 0.0;
        for (const auto& b : blocks) pobj += trace_prod(b.def->f0, b.X);
        for (std::size_t k = 0; k < boxed.size(); ++k)
            pobj += opt.r_bound * (xp[k] + xm[k]);
        for (std::size_t r = 0; r < rows.size(); ++r) pobj += f[r] * nu[r];
        const double relgap = gap / (1.0 + std::abs(pobj) + std::abs(t));
        const double pinf = residual_pinf();
        const double einf = residual_einf();
        last_pobj = pobj;
        last_pinf = pinf;
        if (trace_)
            std::fprintf(stderr, "ipm %3d mu=%9.3e t=%+12.5e gap=%8.1e pinf=%8.1e einf=%8.1e\n",
                         iter, mu, t, relgap, pinf, einf);

        // sound early exit: the (polished) dual iterate is a certificate
        if (t >= feas_tol && certify_into(res, t)) return res;

        const double ptol = 1e-9 * (1.0 + maxnorm);
        if (relgap <= opt.gap_tol && pinf <= ptol && einf <= opt.eq_tol) {
            if (certify_into(res, t)) return res;
            const double mg = margin_at(y);
            res.y = y;
            res.margin = mg;
            res.min_block_eig = std::min(mg, nonepi_min_at(y));
            res.t_opt = t;
            res.equality_residual = einf;
            res.status = SolveStatus::NotCertified;
            res.note = "optimal margin " + std::to_string(mg) + " below tolerance " +
                       std::to_string(feas_tol);
            return res;
        }

        if (mu < 0.9 * best_mu) {
            best_mu = mu;
            stall = 0;
        } else if (++stall >= kStallWindow) {
            res.note = "merit stagnated for " + std::to_string(kStallWindow) + " steps";
            break;
        }

        assemble_kkt();
        worst_relres = 0.0;
        factor_kkt(kKktReg);

        Direction aff = solve_direction(0.0, false);
        if (worst_relres > kRefineAccept) {
            factor_kkt(kKktReg * 1e3);
            worst_relres = 0.0;
            aff = solve_direction(0.0, false);
            if (worst_relres > kRefineAccept) {
                res.note = "KKT residual stagnation (relres " +
                           std::to_string(worst_relres) + ")";
                break;
            }
        }

        // ratio tests for the affine direction; NaN directions (KKT
        // breakdown at endgame) raise the flag instead of flowing through
        // std::min, which would silently drop them
        bool bad_dir = false;
        auto cone_step = [&](const Matrix& lfac, const Matrix& dm) {
            Matrix bmat = dm;
            kernels::trsm_lower(lfac, bmat);
            bmat = bmat.transpose();
            kernels::trsm_lower(lfac, bmat);
            bmat = bmat.symmetrized();
            if (!bmat.all_finite()) {
                bad_dir = true;
                return 0.0;
            }
            double lmin = min_eig(bmat);
            return lmin >= 0.0 ? kInf : -1.0 / lmin;
        };
        auto box_step = [&](double xv, double dxv) {
            if (!std::isfinite(dxv)) {
                bad_dir = true;
                return 0.0;
            }
            return dxv < 0.0 ? -xv / dxv : kInf;
        };
        double tpa = kInf, tda = kInf;
        for (auto& b : blocks) {
            tpa = std::min(tpa, cone_step(b.Lx, b.dX));
            tda = std::min(tda, cone_step(b.Ls, b.dS));
        }
        for (std::size_t k = 0; k < boxed.size(); ++k) {
            tpa = std::min({tpa, box_step(xp[k], aff.dxp[k]), box_step(xm[k], aff.dxm[k])});
            tda = std::min({tda, box_step(sp[k], aff.dsp[k]), box_step(sm[k], aff.dsm[k])});
        }
        if (bad_dir) {
            res.note = "non-finite affine direction";
            break;
        }
        const double apa = std::min(1.0, tpa);
        const double ada = std::min(1.0, tda);
        double mu_aff = 0.0;
        for (const auto& b : blocks) {
            Matrix xn = b.X, sn = b.S;
            for (std::size_t i = 0; i < b.size; ++i)
                for (std::size_t j = 0; j < b.size; ++j) {
                    xn(i, j) += apa * b.dX(i, j);
                    sn(i, j) += ada * b.dS(i, j);
                }
            mu_aff += trace_prod(xn, sn);
        }
        for (std::size_t k = 0; k < boxed.size(); ++k)
            mu_aff += (xp[k] + apa * aff.dxp[k]) * (sp[k] + ada * aff.dsp[k]) +
                      (xm[k] + apa * aff.dxm[k]) * (sm[k] + ada * aff.dsm[k]);
        mu_aff /= static_cast<double>(cone_dim);
        double sigma = mu_aff / mu;
        sigma = std::clamp(sigma * sigma * sigma, 0.0, 1.0);

        // stash affine directions for the corrector
        dxpa_ = aff.dxp;
        dxma_ = aff.dxm;
        dspa_ = aff.dsp;
        dsma_ = aff.dsm;
        for (auto& b : blocks) {
            b.dXa = b.dX;
            b.dSa = b.dS;
        }

        Direction dir = solve_direction(sigma * mu, true);

        double tp = kInf, td = kInf;
        for (auto& b : blocks) {
            tp = std::min(tp, cone_step(b.Lx, b.dX));
            td = std::min(td, cone_step(b.Ls, b.dS));
        }
        for (std::size_t k = 0; k < boxed.size(); ++k) {
            tp = std::min({tp, box_step(xp[k], dir.dxp[k]), box_step(xm[k], dir.dxm[k])});
            td = std::min({td, box_step(sp[k], dir.dsp[k]), box_step(sm[k], dir.dsm[k])});
        }
        if (bad_dir) {
            res.note = "non-finite corrector direction";
            break;
        }
        const double ap = std::min(1.0, kStepFrac * tp);
        const double ad = std::min(1.0, kStepFrac * td);
        if (trace_)
            std::fprintf(stderr, "        sigma=%8.1e ap=%8.1e ad=%8.1e relres=%8.1e\n",
                         sigma, ap, ad, worst_relres);
        if (std::max(ap, ad) < 1e-8) {
            if (++tiny_steps >= 5) {
                res.note = "step lengths collapsed";
                break;
            }
        } else {
            tiny_steps = 0;
        }

        for (auto& b : blocks) {
            for (std::size_t i = 0; i < b.size; ++i)
                for (std::size_t j = 0; j < b.size; ++j) b.X(i, j) += ap * b.dX(i, j);
            b.X = b.X.symmetrized();
        }
        for (std::size_t k = 0; k < boxed.size(); ++k) {
            xp[k] += ap * dir.dxp[k];
            xm[k] += ap * dir.dxm[k];
        }
        for (std::size_t r = 0; r < rows.size(); ++r) nu[r] += ap * dir.dnu[r];
        for (int v = 0; v < m; ++v) y[v] += ad * dir.dy[v];
        t += ad * dir.dt;
    }

    // termination without a conclusive interior-point exit: last chance
    // for the current iterate to certify after the equality polish
    if (certify_into(res, t)) return res;
    bool y_finite = true;
    for (double v : y) y_finite = y_finite && std::isfinite(v);
    res.y = y;
    if (y_finite) {
        res.margin = margin_at(y);
        res.min_block_eig = std::min(res.margin, nonepi_min_at(y));
        res.t_opt = t;
        res.equality_residual = eqresid_at(y);
    }
    // weak duality: a near-feasible primal iterate whose objective sits
    // below the tolerance rules out any certifiable margin
    if (y_finite && last_pinf <= 1e-6 * (1.0 + maxnorm) && last_pobj < feas_tol) {
        res.status = SolveStatus::NotCertified;
        std::string why = res.note;
        res.note = "margin upper bound " + std::to_string(last_pobj) + " below tolerance " +
                   std::to_string(feas_tol);
        if (!why.empty()) res.note += " (" + why + ")";
        return res;
    }
    res.status = SolveStatus::NumericFailure;
    if (res.note.empty()) res.note = y_finite ? "iteration limit reached" : "non-finite iterate";
    return res;
}

}  // namespace

SolverResult solve_feasibility(const LmiProblem& p, const SolveOptions& opts) {
    p.validate();
    Solver s(p, opts);
    return s.run();
}

}  // namespace dtcert
