#pragma once

#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dtcert/matrix.hpp"

namespace dtcert {

/// One decision-variable coefficient inside an LMI block.
struct LmiTerm {
    int var;
    Matrix coef;
};

/// Affine symmetric block F0 + sum_k y_k F_k required PSD (up to the
/// solver's margin). Gram blocks (gram_start >= 0) are matrix variables
/// Q >= 0 whose upper-triangle entries are the decision variables
/// [gram_start, gram_start + size(size+1)/2); their unit-basis terms are
/// implicit (E_rr = e_r e_r', E_rc = e_r e_c' + e_c e_r') and `terms`
/// stays empty.
struct LmiBlock {
    std::size_t size = 0;
    Matrix f0;
    std::vector<LmiTerm> terms;
    int gram_start = -1;
    std::string label;
};

/// Sparse linear equality  sum coef_k * y_k = rhs.
struct EqRow {
    std::vector<std::pair<int, double>> coef;
    double rhs = 0.0;
};

struct LmiProblem {
    int num_vars = 0;
    /// deque so references from add_block survive later insertions
    std::deque<LmiBlock> blocks;
    std::vector<EqRow> equalities;
    std::vector<std::string> var_names;

    int new_var(const std::string& name);
    int new_vars(int count, const std::string& prefix);
    /// Appends a generic block and returns its index.
    LmiBlock& add_block(std::size_t size, const std::string& label);
    /// Appends a Gram matrix-variable block; returns the first variable
    /// index of its upper-triangle slice.
    int add_gram_block(std::size_t size, const std::string& label);
    void add_equality(EqRow row);

    /// Largest entry magnitude over all block data (F0 and terms); the
    /// default feasibility tolerance scales with this.
    double max_block_norm() const;
    /// Dimension and symmetry checks; throws std::invalid_argument.
    void validate() const;
};

/// Iterates the (var, coefficient-matrix) terms of a block, materializing
/// the implicit unit-basis terms of Gram blocks.
void for_each_term(const LmiBlock& b,
                   const std::function<void(int var, const Matrix& coef)>& fn);

/// Evaluates F0 + sum_k y_k F_k for one block.
Matrix eval_block(const LmiBlock& b, const std::vector<double>& y);

enum class SolveStatus { Certified, NotCertified, NumericFailure };

struct SolveOptions {
    /// Certification threshold on the achieved margin; < 0 selects the
    /// default 1e-7 * (1 + max block norm).
    double feas_tol = -1.0;
    double eq_tol = 1e-8;
    /// Relative duality-gap stopping tolerance.
    double gap_tol = 1e-9;
    int max_iter = 200;
    /// Trust bound ||y||_inf <= R on non-Gram variables.
    double r_bound = 1e6;
    /// Per-iteration progress on stderr (also enabled by the
    /// DTCERT_IPM_TRACE environment variable).
    bool trace = false;
};

struct SolverResult {
    SolveStatus status = SolveStatus::NumericFailure;
    std::vector<double> y;
    /// Exact post-solve margin over the epigraph blocks (generic blocks;
    /// all blocks when the problem is Gram-only): min eig of F0 + sum y F.
    double margin = 0.0;
    /// The interior-point epigraph value at termination.
    double t_opt = 0.0;
    int iterations = 0;
    double equality_residual = 0.0;
    /// Minimum eigenvalue over every block, Gram blocks included (these
    /// may legitimately touch zero, e.g. padded multiplier slices).
    double min_block_eig = 0.0;
    double feas_tol_used = 0.0;
    std::string note;
};

struct CheckReport {
    double equality_residual = 0.0;
    double min_block_eig = 0.0;
    std::vector<double> block_eigs;
};

/// Affine map back to the original decision space after equality
/// elimination: y = y0 + N z.
struct EliminationMap {
    std::vector<double> y0;
    Matrix null_basis;
    std::vector<double> apply(const std::vector<double>& z) const;
};

/// Margin-maximization feasibility solve: max t s.t. each generic block
/// F0 + sum y F - t I >= 0, each Gram block Q >= 0, E y = f,
/// ||y||_inf <= R on non-Gram variables. Gram blocks carry no epigraph
/// shift (their optima may sit on the cone boundary); with no generic
/// blocks the shift falls back to every block. Certified iff the
/// rechecked epigraph margin reaches feas_tol, every Gram block is PSD
/// within feas_tol, and equalities hold within eq_tol. Returns the first
/// certifiable iterate, not the max-margin point.
SolverResult solve_feasibility(const LmiProblem& p, const SolveOptions& opts = {});

/// From-scratch residual check (linalg only, no solver state).
CheckReport check_solution(const LmiProblem& p, const std::vector<double>& y);

/// Null-space reduction of the equality constraints (rank-revealing QR,
/// tolerance `tol`; redundant rows dropped). Throws std::runtime_error on
/// inconsistent equalities.
std::pair<LmiProblem, EliminationMap> eliminate_equalities(const LmiProblem& p,
                                                           double tol = 1e-10);

/// SDPA sparse (".dat-s") text. Requires equalities already eliminated.
/// With margin_epigraph, appends the epigraph variable t (objective
/// maximizes it) so external solvers reproduce solve_feasibility's margin.
std::string export_sdpa(const LmiProblem& p, bool margin_epigraph = false);

}  // namespace dtcert
