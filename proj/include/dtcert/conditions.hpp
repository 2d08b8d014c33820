#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dtcert/lmi.hpp"
#include "dtcert/matrix.hpp"
#include "dtcert/polymat.hpp"

namespace dtcert {

/// Norm-bounded uncertainty channel: the mode matrix ranges over
/// { F + kappa U Delta V : ||Delta||_2 <= 1 }.
struct UncertaintyChannel {
    Matrix u;  // n x m
    Matrix v;  // p x n
    double kappa = 0.0;
};

/// Switched linear system x'(t) = A_{sigma(t)} x(t). When `channels` is
/// nonempty, `modes` holds the nominal matrices F_i.
struct SwitchedSystem {
    std::size_t n = 0;
    std::vector<Matrix> modes;
    std::vector<UncertaintyChannel> channels;  // empty, or one per mode

    std::size_t mode_count() const { return modes.size(); }
    bool uncertain() const { return !channels.empty(); }
    /// F_i + kappa * delta * U_i V_i: the scalar slice of the uncertainty
    /// set used by gridding oracles. Requires square Delta (U cols == V
    /// rows).
    Matrix sample(std::size_t i, double delta) const;
    void validate() const;
};

/// Per-mode dwell range [tmin, tmax]; tmax may be infinite, in which case
/// the mode must be stable (minimum-dwell style conditions apply to it).
struct ModeRange {
    double tmin = 0.0;
    double tmax = std::numeric_limits<double>::infinity();
    bool bounded() const { return std::isfinite(tmax); }
};

enum class DwellKind { MinDwell, ModeDependent, Robust };
enum class DwellMethod { Exponential, Affine };

struct DwellQuery {
    DwellKind kind = DwellKind::MinDwell;
    DwellMethod method = DwellMethod::Exponential;
    double tbar = 0.0;              // MinDwell / Robust horizon
    std::vector<ModeRange> ranges;  // ModeDependent, one per mode
    int degree = 1;                 // Affine: polynomial degree of Z_ij
    int mu_degree = -1;             // Robust: degree of mu_ij; -1 = degree
                                    // rounded up to even
    double kappa = 0.0;             // Robust: certified amplitude (record)
};

/// The strict "eps > 0" of the theorems becomes eps >= kEpsFloor with eps
/// a decision variable, so the solver picks its own scaling.
inline constexpr double kEpsFloor = 1e-6;

/// Variable positions of one Z_ij slice: the coefficient of exponent
/// exps[k] is the symmetric dim x dim matrix whose upper triangle
/// (row-major) starts at variable start + k * dim(dim+1)/2.
struct ZEntry {
    std::size_t i = 0, j = 0;
    int start = -1;
    std::size_t dim = 0;  // 3n
    int nvars = 1;        // 1: Z(tau); 2: Z(tau, T)
    std::vector<std::array<int, 2>> exps;
};

/// Scalar polynomial mu_ij(tau): coefficient of tau^k at variable start+k.
struct MuEntry {
    std::size_t i = 0, j = 0;
    int start = -1;
    int ncoef = 0;
};

/// Where every certificate quantity lives inside the decision vector of
/// the built LmiProblem (Gram variables appended by the SOS compilers are
/// not part of the certificate and are not tracked here).
struct CertificateLayout {
    std::size_t n = 0;
    std::size_t modes = 0;
    std::vector<int> p_start;  // upper triangle of P_i, n(n+1)/2 each
    int eps_var = -1;
    std::vector<int> mu_const;  // robust scalings mu_i
    std::vector<ZEntry> z;      // lexicographic (i, j), i != j
    std::vector<MuEntry> mu_poly;
};

struct DwellCertificate {
    DwellQuery query;
    std::vector<Matrix> p;
    double eps = 0.0;
    std::map<std::pair<std::size_t, std::size_t>, PolyMat> z;
    std::vector<double> mu_const;
    std::map<std::pair<std::size_t, std::size_t>, PolyMat> mu_poly;
};

struct BuiltCondition {
    LmiProblem problem;
    CertificateLayout layout;
};

/// Boundary selectors: xi(0) = Y1 [x(0); x(T)], xi(T) = Y2 [x(0); x(T)]
/// for xi(tau) = col(x(tau), x(0), x(T)).
/// Y1 = [I 0; I 0; 0 I], Y2 = [0 I; I 0; 0 I] (3n x 2n).
Matrix loop_y1(std::size_t n);
Matrix loop_y2(std::size_t n);

/// diag(m, 0_n, 0_n) with n = m.rows().
Matrix dn(const Matrix& m);

/// Mixed continuous/discrete minimum dwell-time conditions at horizon
/// tbar: P_i >= I, A_i'P_i + P_iA_i < 0 and, per ordered pair i != j,
/// P_j - e^{A_i' tbar} P_i e^{A_i tbar} > 0 (dual form; `dual = false`
/// swaps to P_i - e^{A_i' tbar} P_j e^{A_i tbar} > 0). Requires a certain
/// system.
BuiltCondition build_exp_min_dwell(const SwitchedSystem& sys, double tbar,
                                   bool dual = true);

/// Mode-dependent discrete conditions sampled on a uniform grid of
/// grid_density points per bounded range (a necessary-only surrogate used
/// as an oracle, never a certificate); infinite ranges get the single
/// tmin-point condition plus the Lyapunov block for that mode.
BuiltCondition build_exp_mode_dependent(const SwitchedSystem& sys,
                                        const std::vector<ModeRange>& ranges,
                                        int grid_density);

/// Looped-functional minimum dwell-time conditions: boundary equality
/// rows, Lyapunov and P_i >= I blocks, eps >= kEpsFloor, and per pair the
/// interval SOS compilation of
///   G_ij(tau) = -[Psi_ij(tbar) + He(Z_ij(tau) D_n(A_i)) + Z_ij'(tau)]
/// required PSD on [0, tbar], with Z_ij of degree `degree`.
BuiltCondition build_affine_min_dwell(const SwitchedSystem& sys, double tbar,
                                      int degree);

/// Mode-dependent looped conditions: bounded modes get bivariate
/// Z_ij(tau, T) of total degree `degree`, the boundary equality imposed
/// coefficient-wise in T, and a box SOS compilation over
/// {0 <= tau <= T, T in [tmin_i, tmax_i]}; infinite modes take the
/// univariate conditions at T = tmin_i plus their Lyapunov block. No
/// Lyapunov constraint is placed on bounded modes (they may be unstable).
BuiltCondition build_affine_mode_dependent(const SwitchedSystem& sys,
                                           const std::vector<ModeRange>& ranges,
                                           int degree);

/// Robust minimum dwell-time conditions for norm-bounded uncertainty
/// (kappa folded into U_i): per mode the scaled continuous block
///   [F_i'P_i + P_iF_i + mu_i V_i'V_i,  P_i U_i; *, -mu_i I] < 0,
/// per pair the (3n+m)-dimensional looped block with multiplier
/// mu_ij(tau) >= 0 on [0, tbar], everything compiled through interval
/// SOS. mu_degree < 0 selects `degree` rounded up to even.
BuiltCondition build_robust_min_dwell(const SwitchedSystem& sys, double tbar,
                                      int degree, int mu_degree = -1);

/// Equality rows of Y2' Z_ij(tbar) Y2 - Y1' Z_ij(0) Y1 = 0 for one
/// univariate slice: 2n(2n+1)/2 rows, linear in the Z coefficients.
std::vector<EqRow> boundary_constraint(const ZEntry& z, double tbar);

/// Reassembles the certificate quantities from a Certified solve; throws
/// std::invalid_argument on NotCertified/NumericFailure input.
DwellCertificate extract_certificate(const DwellQuery& query,
                                     const CertificateLayout& layout,
                                     const SolverResult& result);

/// Max-abs residual of the boundary identity over all Z slices; bivariate
/// slices are checked coefficient-wise in T, univariate ones at their
/// horizon (tbar, or tmin_i for mode-dependent infinite modes).
double boundary_residual(const DwellCertificate& cert);

}  // namespace dtcert
