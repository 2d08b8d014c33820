#include "dtcert/polymat.hpp"

#include <cmath>
#include <stdexcept>

#include "dtcert/kernels.hpp"

namespace dtcert {

namespace {

using Key = std::array<int, 2>;

void check_sym_coeff(const Matrix& m, std::size_t dim, const char* where) {
    if (m.rows() != dim || m.cols() != dim)
        throw std::invalid_argument(std::string(where) + ": coefficient dimension mismatch");
    m.require_symmetric(where);
}

double binom(int n, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
    return r;
}

}  // namespace

PolyMat::PolyMat(std::size_t dim, int nvars) : dim(dim), nvars(nvars) {
    if (nvars < 1 || nvars > 2) throw std::invalid_argument("PolyMat: 1 or 2 variables");
}

Matrix& PolyMat::coeff(int e1, int e2) {
    if (e1 < 0 || e2 < 0 || (nvars == 1 && e2 != 0))
        throw std::invalid_argument("PolyMat::coeff: bad exponent");
    auto it = coeffs.find({e1, e2});
    if (it == coeffs.end()) it = coeffs.emplace(Key{e1, e2}, Matrix(dim, dim)).first;
    return it->second;
}

const Matrix* PolyMat::find(int e1, int e2) const {
    auto it = coeffs.find({e1, e2});
    return it == coeffs.end() ? nullptr : &it->second;
}

int PolyMat::degree(int var) const {
    int d = 0;
    for (const auto& [e, c] : coeffs)
        if (c.max_abs() != 0.0) d = std::max(d, e[var]);
    return d;
}

Matrix PolyMat::eval(double tau) const {
    if (nvars != 1) throw std::invalid_argument("PolyMat::eval: expected 2 arguments");
    Matrix out(dim, dim);
    for (const auto& [e, c] : coeffs) out += std::pow(tau, e[0]) * c;
    return out.symmetrized();
}

Matrix PolyMat::eval(double tau, double T) const {
    if (nvars != 2) throw std::invalid_argument("PolyMat::eval: expected 1 argument");
    Matrix out(dim, dim);
    for (const auto& [e, c] : coeffs) out += (std::pow(tau, e[0]) * std::pow(T, e[1])) * c;
    return out.symmetrized();
}

PolyMat PolyMat::derivative(int var) const {
    if (var < 0 || var >= nvars) throw std::invalid_argument("PolyMat::derivative: bad var");
    PolyMat out(dim, nvars);
    for (const auto& [e, c] : coeffs) {
        if (e[var] == 0) continue;
        Key k = e;
        k[var] -= 1;
        out.coeff(k[0], k[1]) += static_cast<double>(e[var]) * c;
    }
    return out;
}

AffineMat::AffineMat(std::size_t dim) : dim(dim), f0(dim, dim) {}

AffineMat AffineMat::constant(Matrix m) {
    AffineMat a(m.rows());
    check_sym_coeff(m, a.dim, "AffineMat::constant");
    a.f0 = std::move(m);
    return a;
}

void AffineMat::add_term(int var, Matrix coef) {
    check_sym_coeff(coef, dim, "AffineMat::add_term");
    terms.push_back({var, std::move(coef)});
}

AffineMat& AffineMat::operator+=(const AffineMat& o) {
    add_scaled(o, 1.0);
    return *this;
}

void AffineMat::scale(double s) {
    f0 *= s;
    for (auto& t : terms) t.coef *= s;
}

void AffineMat::add_scaled(const AffineMat& o, double s) {
    if (o.dim != dim) throw std::invalid_argument("AffineMat: dimension mismatch");
    Matrix sf = o.f0;
    sf *= s;
    f0 += sf;
    for (const auto& t : o.terms) {
        Matrix c = t.coef;
        c *= s;
        terms.push_back({t.var, std::move(c)});
    }
}

void AffineMat::coalesce() {
    std::map<int, Matrix> merged;
    for (auto& t : terms) {
        auto it = merged.find(t.var);
        if (it == merged.end())
            merged.emplace(t.var, std::move(t.coef));
        else
            it->second += t.coef;
    }
    terms.clear();
    for (auto& [v, c] : merged)
        if (c.max_abs() != 0.0) terms.push_back({v, std::move(c)});
}

bool AffineMat::is_structural_zero() const {
    if (f0.max_abs() != 0.0) return false;
    for (const auto& t : terms)
        if (t.coef.max_abs() != 0.0) return false;
    return true;
}

Matrix AffineMat::eval(const std::vector<double>& y) const {
    Matrix out = f0;
    for (const auto& t : terms) {
        if (t.var < 0 || t.var >= static_cast<int>(y.size()))
            throw std::invalid_argument("AffineMat::eval: variable out of range");
        out += y[t.var] * t.coef;
    }
    return out;
}

AffineMat congruence_affine(const Matrix& a, const AffineMat& m) {
    AffineMat out(a.cols());
    out.f0 = congruence(a, m.f0);
    for (const auto& t : m.terms) out.terms.push_back({t.var, congruence(a, t.coef)});
    return out;
}

AffineMat he_product(const AffineMat& m, const Matrix& d) {
    if (d.rows() != m.dim || d.cols() != m.dim)
        throw std::invalid_argument("he_product: dimension mismatch");
    AffineMat out(m.dim);
    out.f0 = he(m.f0 * d);
    for (const auto& t : m.terms) out.terms.push_back({t.var, he(t.coef * d)});
    return out;
}

namespace {
Matrix embed_mat(const Matrix& m, std::size_t dim, std::size_t off) {
    Matrix out(dim, dim);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(off + i, off + j) = m(i, j);
    return out;
}
}  // namespace

AffineMat embed_sym(const AffineMat& m, std::size_t dim, std::size_t off) {
    if (off + m.dim > dim) throw std::invalid_argument("embed_sym: block out of range");
    AffineMat out(dim);
    out.f0 = embed_mat(m.f0, dim, off);
    for (const auto& t : m.terms) out.terms.push_back({t.var, embed_mat(t.coef, dim, off)});
    return out;
}

AffinePolyMat::AffinePolyMat(std::size_t dim, int nvars) : dim(dim), nvars(nvars) {
    if (nvars < 1 || nvars > 2)
        throw std::invalid_argument("AffinePolyMat: 1 or 2 variables");
}

AffineMat& AffinePolyMat::coeff(int e1, int e2) {
    if (e1 < 0 || e2 < 0 || (nvars == 1 && e2 != 0))
        throw std::invalid_argument("AffinePolyMat::coeff: bad exponent");
    auto it = coeffs.find({e1, e2});
    if (it == coeffs.end()) it = coeffs.emplace(Key{e1, e2}, AffineMat(dim)).first;
    return it->second;
}

const AffineMat* AffinePolyMat::find(int e1, int e2) const {
    auto it = coeffs.find({e1, e2});
    return it == coeffs.end() ? nullptr : &it->second;
}

int AffinePolyMat::degree(int var) const {
    int d = 0;
    for (const auto& [e, c] : coeffs)
        if (!c.is_structural_zero()) d = std::max(d, e[var]);
    return d;
}

int AffinePolyMat::total_degree() const {
    int d = 0;
    for (const auto& [e, c] : coeffs)
        if (!c.is_structural_zero()) d = std::max(d, e[0] + e[1]);
    return d;
}

AffinePolyMat& AffinePolyMat::operator+=(const AffinePolyMat& o) {
    if (o.dim != dim || o.nvars != nvars)
        throw std::invalid_argument("AffinePolyMat: shape mismatch");
    for (const auto& [e, c] : o.coeffs) coeff(e[0], e[1]) += c;
    return *this;
}

void AffinePolyMat::scale(double s) {
    for (auto& [e, c] : coeffs) c.scale(s);
}

AffinePolyMat AffinePolyMat::derivative(int var) const {
    if (var < 0 || var >= nvars)
        throw std::invalid_argument("AffinePolyMat::derivative: bad var");
    AffinePolyMat out(dim, nvars);
    for (const auto& [e, c] : coeffs) {
        if (e[var] == 0) continue;
        Key k = e;
        k[var] -= 1;
        AffineMat scaled = c;
        scaled.scale(static_cast<double>(e[var]));
        out.coeff(k[0], k[1]) += scaled;
    }
    return out;
}

AffinePolyMat AffinePolyMat::from_const(const PolyMat& p) {
    AffinePolyMat out(p.dim, p.nvars);
    for (const auto& [e, c] : p.coeffs) out.coeff(e[0], e[1]) = AffineMat::constant(c);
    return out;
}

PolyMat AffinePolyMat::instantiate(const std::vector<double>& y) const {
    PolyMat out(dim, nvars);
    for (const auto& [e, c] : coeffs) out.coeff(e[0], e[1]) = c.eval(y).symmetrized();
    return out;
}

Matrix AffinePolyMat::eval(const std::vector<double>& y, double tau, double T) const {
    Matrix out(dim, dim);
    for (const auto& [e, c] : coeffs)
        out += (std::pow(tau, e[0]) * std::pow(T, e[1])) * c.eval(y);
    return out.symmetrized();
}

AffinePolyMat scalar_times_matrix(const AffinePolyMat& scalar_poly, const Matrix& m) {
    if (scalar_poly.dim != 1)
        throw std::invalid_argument("scalar_times_matrix: expected dim-1 polynomial");
    AffinePolyMat out(m.rows(), scalar_poly.nvars);
    for (const auto& [e, c] : scalar_poly.coeffs) {
        AffineMat& dst = out.coeff(e[0], e[1]);
        dst.f0 = c.f0(0, 0) * m;
        for (const auto& t : c.terms) dst.terms.push_back({t.var, t.coef(0, 0) * m});
    }
    return out;
}

namespace {

// One SOS multiplier: monomial basis, weight polynomial (exponent ->
// coefficient) and its human-readable tag.
struct SosPiece {
    std::string tag;
    std::vector<Key> basis;
    std::map<Key, double> weight;
};

// Emits Gram blocks for `pieces` and the coefficient-matching equalities
//   sum_g w_g(x) B_g(x)^T Q_g B_g(x) = target(x)
// over every reachable monomial. Throws when the target has a coefficient
// no piece can reach (degree bookkeeping mismatch).
GramCertificate compile_sos(LmiProblem& p, std::size_t dim,
                            const std::map<Key, AffineMat>& target,
                            const std::vector<SosPiece>& pieces,
                            const std::string& label) {
    GramCertificate cert;
    cert.label = label;
    cert.dim = dim;

    struct PieceRef {
        int q_start;
        std::size_t gram_dim;
        const SosPiece* def;
    };
    std::vector<PieceRef> refs;
    for (const auto& piece : pieces) {
        const std::size_t gdim = piece.basis.size() * dim;
        const std::size_t bindex = p.blocks.size();
        const int q = p.add_gram_block(gdim, label + " " + piece.tag);
        refs.push_back({q, gdim, &piece});
        cert.pieces.push_back({piece.tag, piece.basis, q, gdim, bindex});
    }

    // Reachable monomials: basis-pair sums shifted by weight exponents.
    std::map<Key, int> reachable;
    for (const auto& r : refs)
        for (const auto& ep : r.def->basis)
            for (const auto& eq : r.def->basis)
                for (const auto& [w, cw] : r.def->weight)
                    reachable[{ep[0] + eq[0] + w[0], ep[1] + eq[1] + w[1]}] = 1;
    for (const auto& [e, c] : target) {
        if (c.is_structural_zero()) continue;
        if (!reachable.count(e))
            throw std::invalid_argument(label + ": degree bookkeeping mismatch at exponent (" +
                                        std::to_string(e[0]) + "," + std::to_string(e[1]) + ")");
    }

    for (const auto& [key, unused] : reachable) {
        (void)unused;
        for (std::size_t r = 0; r < dim; ++r)
            for (std::size_t c = r; c < dim; ++c) {
                std::map<int, double> row;
                for (const auto& ref : refs) {
                    const auto& basis = ref.def->basis;
                    for (std::size_t pi = 0; pi < basis.size(); ++pi)
                        for (std::size_t qi = 0; qi < basis.size(); ++qi)
                            for (const auto& [w, cw] : ref.def->weight) {
                                if (basis[pi][0] + basis[qi][0] + w[0] != key[0] ||
                                    basis[pi][1] + basis[qi][1] + w[1] != key[1])
                                    continue;
                                std::size_t i = pi * dim + r, j = qi * dim + c;
                                if (i > j) std::swap(i, j);
                                row[ref.q_start +
                                    static_cast<int>(kernels::tri_index(i, j, ref.gram_dim))] += cw;
                            }
                }
                double rhs = 0.0;
                auto it = target.find(key);
                if (it != target.end()) {
                    rhs = it->second.f0(r, c);
                    for (const auto& t : it->second.terms) row[t.var] -= t.coef(r, c);
                }
                EqRow eq;
                for (const auto& [v, cv] : row)
                    if (cv != 0.0) eq.coef.push_back({v, cv});
                eq.rhs = rhs;
                if (eq.coef.empty() && rhs == 0.0) continue;
                p.add_equality(std::move(eq));
            }
    }
    return cert;
}

std::vector<Key> monomials_upto(int deg, bool bivariate) {
    std::vector<Key> out;
    for (int a = 0; a <= deg; ++a) {
        if (!bivariate) {
            out.push_back({a, 0});
            continue;
        }
        for (int b = 0; a + b <= deg; ++b) out.push_back({a, b});
    }
    return out;
}

}  // namespace

GramCertificate interval_psd_constraint(LmiProblem& p, const AffinePolyMat& g,
                                        double T, const std::string& label,
                                        int mult_degree) {
    if (g.nvars != 1) throw std::invalid_argument(label + ": univariate polynomial expected");
    if (!(T > 0.0)) throw std::invalid_argument(label + ": interval length must be positive");
    const int dg = g.degree(0);
    int s1deg = mult_degree >= 0 ? mult_degree : 2 * ((dg + 1) / 2) - 2;
    if (s1deg >= 0 && s1deg % 2 != 0)
        throw std::invalid_argument(label + ": multiplier degree must be even");
    const int s0deg = std::max(2 * ((dg + 1) / 2), s1deg + 2);

    // Matching runs in s = 2 tau / T - 1: tau^d = (T/2)^d sum_e C(d,e) s^e,
    // tau (T - tau) = (T^2/4)(1 - s^2).
    std::map<Key, AffineMat> target;
    for (const auto& [e, c] : g.coeffs) {
        if (c.is_structural_zero()) continue;
        const int d = e[0];
        const double base = std::pow(T / 2.0, d);
        for (int k = 0; k <= d; ++k) {
            auto it = target.find({k, 0});
            if (it == target.end()) it = target.emplace(Key{k, 0}, AffineMat(g.dim)).first;
            it->second.add_scaled(c, base * binom(d, k));
        }
    }
    for (auto& [e, c] : target) c.coalesce();

    std::vector<SosPiece> pieces;
    pieces.push_back({"S0", monomials_upto(s0deg / 2, false), {{{0, 0}, 1.0}}});
    if (s1deg >= 0)
        pieces.push_back({"tau(T-tau) S1",
                          monomials_upto(s1deg / 2, false),
                          {{{0, 0}, T * T / 4.0}, {{2, 0}, -T * T / 4.0}}});
    return compile_sos(p, g.dim, target, pieces, label);
}

GramCertificate box_psd_constraint(LmiProblem& p, const AffinePolyMat& g,
                                   double tmin, double tmax, const std::string& label,
                                   int mult_degree, bool cross_term) {
    if (g.nvars != 2) throw std::invalid_argument(label + ": bivariate polynomial expected");
    if (!(tmin >= 0.0) || !(tmax > tmin) || !std::isfinite(tmax))
        throw std::invalid_argument(label + ": degenerate box");
    const int dg = g.total_degree();
    int sdeg = mult_degree >= 0 ? mult_degree : 2 * ((dg + 1) / 2) - 2;
    if (sdeg >= 0 && sdeg % 2 != 0)
        throw std::invalid_argument(label + ": multiplier degree must be even");
    const int s0deg = std::max(2 * ((dg + 1) / 2), sdeg + 2);

    std::map<Key, AffineMat> target;
    for (const auto& [e, c] : g.coeffs) {
        if (c.is_structural_zero()) continue;
        AffineMat copy = c;
        copy.coalesce();
        target.emplace(e, std::move(copy));
    }

    // g1 = tau T - tau^2, g2 = (tmin + tmax) T - T^2 - tmin tmax.
    const std::map<Key, double> w1 = {{{1, 1}, 1.0}, {{2, 0}, -1.0}};
    const std::map<Key, double> w2 = {
        {{0, 1}, tmin + tmax}, {{0, 2}, -1.0}, {{0, 0}, -tmin * tmax}};
    std::vector<SosPiece> pieces;
    pieces.push_back({"S0", monomials_upto(s0deg / 2, true), {{{0, 0}, 1.0}}});
    if (sdeg >= 0) {
        pieces.push_back({"tau(T-tau) S1", monomials_upto(sdeg / 2, true), w1});
        pieces.push_back({"(T-tmin)(tmax-T) S2", monomials_upto(sdeg / 2, true), w2});
        if (cross_term && sdeg >= 2) {
            std::map<Key, double> w12;
            for (const auto& [a, ca] : w1)
                for (const auto& [b, cb] : w2) w12[{a[0] + b[0], a[1] + b[1]}] += ca * cb;
            pieces.push_back({"g1 g2 S3", monomials_upto(sdeg / 2 - 1, true), w12});
        }
    }
    return compile_sos(p, g.dim, target, pieces, label);
}

}  // namespace dtcert
