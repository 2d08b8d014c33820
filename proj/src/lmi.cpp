#include "dtcert/lmi.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dtcert/eig.hpp"
#include "dtcert/kernels.hpp"

namespace dtcert {

int LmiProblem::new_var(const std::string& name) {
    var_names.push_back(name);
    return num_vars++;
}

int LmiProblem::new_vars(int count, const std::string& prefix) {
    int first = num_vars;
    for (int i = 0; i < count; ++i)
        var_names.push_back(prefix + "[" + std::to_string(i) + "]");
    num_vars += count;
    return first;
}

LmiBlock& LmiProblem::add_block(std::size_t size, const std::string& label) {
    LmiBlock b;
    b.size = size;
    b.f0 = Matrix::zero(size, size);
    b.label = label;
    blocks.push_back(std::move(b));
    return blocks.back();
}

int LmiProblem::add_gram_block(std::size_t size, const std::string& label) {
    int start = new_vars(static_cast<int>(kernels::tri_count(size)), label);
    LmiBlock b;
    b.size = size;
    b.f0 = Matrix::zero(size, size);
    b.gram_start = start;
    b.label = label;
    blocks.push_back(std::move(b));
    return start;
}

void LmiProblem::add_equality(EqRow row) { equalities.push_back(std::move(row)); }

double LmiProblem::max_block_norm() const {
    double m = 0.0;
    for (const auto& b : blocks) {
        m = std::max(m, b.f0.max_abs());
        for (const auto& t : b.terms) m = std::max(m, t.coef.max_abs());
        if (b.gram_start >= 0) m = std::max(m, 1.0);
    }
    return m;
}

void LmiProblem::validate() const {
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        const auto& b = blocks[bi];
        const std::string where = "block " + std::to_string(bi) + " (" + b.label + ")";
        if (b.size == 0) throw std::invalid_argument(where + ": empty block");
        if (b.f0.rows() != b.size || b.f0.cols() != b.size)
            throw std::invalid_argument(where + ": F0 dimension mismatch");
        b.f0.require_symmetric((where + " F0").c_str());
        if (b.gram_start >= 0) {
            if (!b.terms.empty())
                throw std::invalid_argument(where + ": gram block with explicit terms");
            if (b.gram_start + static_cast<int>(kernels::tri_count(b.size)) > num_vars)
                throw std::invalid_argument(where + ": gram slice out of range");
            if (b.f0.max_abs() != 0.0)
                throw std::invalid_argument(where + ": gram block with nonzero F0");
        }
        for (const auto& t : b.terms) {
            if (t.var < 0 || t.var >= num_vars)
                throw std::invalid_argument(where + ": term variable out of range");
            if (t.coef.rows() != b.size || t.coef.cols() != b.size)
                throw std::invalid_argument(where + ": term dimension mismatch");
            t.coef.require_symmetric((where + " term").c_str());
        }
    }
    for (std::size_t ri = 0; ri < equalities.size(); ++ri)
        for (const auto& [v, c] : equalities[ri].coef) {
            if (v < 0 || v >= num_vars)
                throw std::invalid_argument("equality row " + std::to_string(ri) +
                                            ": variable out of range");
            if (!std::isfinite(c))
                throw std::invalid_argument("equality row " + std::to_string(ri) +
                                            ": non-finite coefficient");
        }
}

void for_each_term(const LmiBlock& b,
                   const std::function<void(int, const Matrix&)>& fn) {
    if (b.gram_start < 0) {
        for (const auto& t : b.terms) fn(t.var, t.coef);
        return;
    }
    const std::size_t s = b.size;
    Matrix e(s, s);
    for (std::size_t r = 0; r < s; ++r)
        for (std::size_t c = r; c < s; ++c) {
            e(r, c) = 1.0;
            e(c, r) = 1.0;
            fn(b.gram_start + static_cast<int>(kernels::tri_index(r, c, s)), e);
            e(r, c) = 0.0;
            e(c, r) = 0.0;
        }
}

Matrix eval_block(const LmiBlock& b, const std::vector<double>& y) {
    Matrix m = b.f0;
    if (b.gram_start >= 0) {
        const std::size_t s = b.size;
        for (std::size_t r = 0; r < s; ++r)
            for (std::size_t c = r; c < s; ++c) {
                double v = y[b.gram_start + kernels::tri_index(r, c, s)];
                m(r, c) += v;
                if (c != r) m(c, r) += v;
            }
        return m;
    }
    for (const auto& t : b.terms) {
        double v = y[static_cast<std::size_t>(t.var)];
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) += v * t.coef(i, j);
    }
    return m.symmetrized();
}

CheckReport check_solution(const LmiProblem& p, const std::vector<double>& y) {
    if (y.size() != static_cast<std::size_t>(p.num_vars))
        throw std::invalid_argument("check_solution: y has wrong length");
    CheckReport rep;
    rep.block_eigs.reserve(p.blocks.size());
    rep.min_block_eig = std::numeric_limits<double>::infinity();
    for (const auto& b : p.blocks) {
        double e = min_eig(eval_block(b, y));
        rep.block_eigs.push_back(e);
        rep.min_block_eig = std::min(rep.min_block_eig, e);
    }
    if (p.blocks.empty()) rep.min_block_eig = 0.0;
    for (const auto& row : p.equalities) {
        double r = -row.rhs;
        for (const auto& [v, c] : row.coef) r += c * y[static_cast<std::size_t>(v)];
        rep.equality_residual = std::max(rep.equality_residual, std::abs(r));
    }
    return rep;
}

std::vector<double> EliminationMap::apply(const std::vector<double>& z) const {
    if (z.size() != null_basis.cols())
        throw std::invalid_argument("EliminationMap: z has wrong length");
    std::vector<double> y = y0;
    for (std::size_t i = 0; i < null_basis.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < null_basis.cols(); ++j)
            acc += null_basis(i, j) * z[j];
        y[i] += acc;
    }
    return y;
}

namespace {

struct DenseQr {
    std::vector<std::vector<double>> hh;  // full Householder vectors
    std::vector<double> beta;
    Matrix r;
    std::vector<std::size_t> perm;
    std::size_t rank = 0;
};

DenseQr qr_dense_pivot(const Matrix& input, double tol) {
    Matrix a = input;
    const std::size_t m = a.rows(), n = a.cols();
    DenseQr qr;
    qr.perm.resize(n);
    for (std::size_t j = 0; j < n; ++j) qr.perm[j] = j;
    double norm0 = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += a(i, j) * a(i, j);
        norm0 = std::max(norm0, s);
    }
    norm0 = std::sqrt(norm0);
    const double thresh = tol * (1.0 + norm0);

    const std::size_t kmax = std::min(m, n);
    for (std::size_t k = 0; k < kmax; ++k) {
        std::size_t best = k;
        double bestn = -1.0;
        for (std::size_t j = k; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < m; ++i) s += a(i, j) * a(i, j);
            if (s > bestn) { bestn = s; best = j; }
        }
        if (best != k) {
            for (std::size_t i = 0; i < m; ++i) std::swap(a(i, k), a(i, best));
            std::swap(qr.perm[k], qr.perm[best]);
        }
        if (std::sqrt(std::max(bestn, 0.0)) <= thresh) break;

        double alpha = std::sqrt(bestn);
        if (a(k, k) > 0) alpha = -alpha;
        std::vector<double> v(m, 0.0);
        v[k] = a(k, k) - alpha;
        for (std::size_t i = k + 1; i < m; ++i) v[i] = a(i, k);
        double vnorm2 = 0.0;
        for (std::size_t i = k; i < m; ++i) vnorm2 += v[i] * v[i];
        double beta = vnorm2 > 0.0 ? 2.0 / vnorm2 : 0.0;
        for (std::size_t j = k; j < n; ++j) {
            double dotv = 0.0;
            for (std::size_t i = k; i < m; ++i) dotv += v[i] * a(i, j);
            dotv *= beta;
            for (std::size_t i = k; i < m; ++i) a(i, j) -= dotv * v[i];
        }
        a(k, k) = alpha;  // clean the exact diagonal
        for (std::size_t i = k + 1; i < m; ++i) a(i, k) = 0.0;
        qr.hh.push_back(std::move(v));
        qr.beta.push_back(beta);
        qr.rank = k + 1;
    }
    qr.r = std::move(a);
    return qr;
}

// y <- Q y using the stored Householder vectors (apply in reverse).
void apply_q(const DenseQr& qr, std::vector<double>& y) {
    for (std::size_t k = qr.rank; k-- > 0;) {
        const auto& v = qr.hh[k];
        double dotv = 0.0;
        for (std::size_t i = k; i < v.size(); ++i) dotv += v[i] * y[i];
        dotv *= qr.beta[k];
        for (std::size_t i = k; i < v.size(); ++i) y[i] -= dotv * v[i];
    }
}

}  // namespace

std::pair<LmiProblem, EliminationMap> eliminate_equalities(const LmiProblem& p,
                                                           double tol) {
    p.validate();
    const std::size_t m = static_cast<std::size_t>(p.num_vars);
    const std::size_t q = p.equalities.size();

    // E^T is m x q; QR of E^T gives range (first r columns of Q) and the
    // orthonormal null-space basis of E (remaining columns).
    Matrix et(m, q);
    std::vector<double> f(q, 0.0);
    for (std::size_t r = 0; r < q; ++r) {
        f[r] = p.equalities[r].rhs;
        for (const auto& [v, c] : p.equalities[r].coef)
            et(static_cast<std::size_t>(v), r) += c;
    }
    DenseQr qr = qr_dense_pivot(et, tol);
    const std::size_t rank = qr.rank;
    const std::size_t nz = m - rank;

    // Particular solution: y0 = Q_1 R_1^{-T} (P^T f)_states. E = P R^T Q^T
    // restricted to the leading rank columns; consistency of the dropped
    // rows is checked against the residual afterwards.
    std::vector<double> y0(m, 0.0);
    if (rank > 0) {
        std::vector<double> fp(rank, 0.0);
        for (std::size_t k = 0; k < rank; ++k) fp[k] = f[qr.perm[k]];
        // solve R_1^T w = fp (forward substitution on the transpose)
        std::vector<double> w(rank, 0.0);
        for (std::size_t i = 0; i < rank; ++i) {
            double acc = fp[i];
            for (std::size_t j = 0; j < i; ++j) acc -= qr.r(j, i) * w[j];
            w[i] = acc / qr.r(i, i);
        }
        std::vector<double> ext(m, 0.0);
        for (std::size_t i = 0; i < rank; ++i) ext[i] = w[i];
        apply_q(qr, ext);
        y0 = std::move(ext);
    }
    double resid = 0.0;
    for (std::size_t r = 0; r < q; ++r) {
        double acc = -f[r];
        for (const auto& [v, c] : p.equalities[r].coef)
            acc += c * y0[static_cast<std::size_t>(v)];
        resid = std::max(resid, std::abs(acc));
    }
    double fscale = 0.0;
    for (double v : f) fscale = std::max(fscale, std::abs(v));
    if (resid > 1e-8 * (1.0 + fscale))
        throw std::runtime_error("eliminate_equalities: inconsistent equalities (residual " +
                                 std::to_string(resid) + ")");

    // Null basis: columns rank..m-1 of Q.
    Matrix nbasis(m, nz);
    for (std::size_t j = 0; j < nz; ++j) {
        std::vector<double> e(m, 0.0);
        e[rank + j] = 1.0;
        apply_q(qr, e);
        for (std::size_t i = 0; i < m; ++i) nbasis(i, j) = e[i];
    }

    LmiProblem red;
    red.num_vars = static_cast<int>(nz);
    for (std::size_t j = 0; j < nz; ++j) red.var_names.push_back("z[" + std::to_string(j) + "]");
    for (const auto& b : p.blocks) {
        LmiBlock nb;
        nb.size = b.size;
        nb.label = b.label;
        std::vector<Matrix> combo(nz, Matrix::zero(b.size, b.size));
        Matrix f0 = b.f0;
        for_each_term(b, [&](int var, const Matrix& coef) {
            const auto v = static_cast<std::size_t>(var);
            if (y0[v] != 0.0) {
                for (std::size_t i = 0; i < b.size; ++i)
                    for (std::size_t jj = 0; jj < b.size; ++jj)
                        f0(i, jj) += y0[v] * coef(i, jj);
            }
            for (std::size_t j = 0; j < nz; ++j) {
                double w = nbasis(v, j);
                if (w == 0.0) continue;
                auto& t = combo[j];
                for (std::size_t i = 0; i < b.size; ++i)
                    for (std::size_t jj = 0; jj < b.size; ++jj)
                        t(i, jj) += w * coef(i, jj);
            }
        });
        nb.f0 = f0.symmetrized();
        for (std::size_t j = 0; j < nz; ++j)
            if (combo[j].max_abs() > 0.0)
                nb.terms.push_back({static_cast<int>(j), combo[j].symmetrized()});
        red.blocks.push_back(std::move(nb));
    }

    EliminationMap map;
    map.y0 = std::move(y0);
    map.null_basis = std::move(nbasis);
    return {std::move(red), std::move(map)};
}

std::string export_sdpa(const LmiProblem& p, bool margin_epigraph) {
    p.validate();
    if (!p.equalities.empty())
        throw std::invalid_argument("export_sdpa: eliminate equalities first");
    const int m = p.num_vars + (margin_epigraph ? 1 : 0);
    std::string out;
    out.reserve(1 << 16);
    char buf[128];
    std::snprintf(buf, sizeof buf, "%d\n%zu\n", m, p.blocks.size());
    out += buf;
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        std::snprintf(buf, sizeof buf, "%zu%s", p.blocks[b].size,
                      b + 1 == p.blocks.size() ? "\n" : " ");
        out += buf;
    }
    // objective: SDPA minimizes c^T x; margin epigraph maximizes t.
    for (int k = 0; k < m; ++k) {
        bool last = (k + 1 == m);
        double c = (margin_epigraph && k + 1 == m) ? -1.0 : 0.0;
        std::snprintf(buf, sizeof buf, "%.17g%s", c, last ? "\n" : " ");
        out += buf;
    }
    auto emit = [&](int k, std::size_t b, const Matrix& mat, double scale) {
        for (std::size_t i = 0; i < mat.rows(); ++i)
            for (std::size_t j = i; j < mat.cols(); ++j) {
                double v = scale * mat(i, j);
                if (v == 0.0) continue;
                std::snprintf(buf, sizeof buf, "%d %zu %zu %zu %.17g\n", k, b + 1,
                              i + 1, j + 1, v);
                out += buf;
            }
    };
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        // SDPA's constraint reads sum x_k F_k - F0 >= 0, so the file's F0
        // is the negation of ours.
        emit(0, b, p.blocks[b].f0, -1.0);
        for_each_term(p.blocks[b], [&](int var, const Matrix& coef) {
            emit(var + 1, b, coef, 1.0);
        });
        if (margin_epigraph) {
            Matrix negi = Matrix::identity(p.blocks[b].size);
            emit(m, b, negi, -1.0);
        }
    }
    return out;
}

}  // namespace dtcert
