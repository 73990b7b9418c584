#pragma once

#include "ocs/common.hpp"
#include "ocs/task_data.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ocs {

/// Input-output and input-input correlations, both with the 1/N factor.
struct CorrelationPair {
    Matrix sigma_yx; ///< (1/N) Y X^T
    Matrix sigma_x;  ///< (1/N) X X^T
};

CorrelationPair correlation_matrices(const Dataset& d);

struct CommutatorResult {
    double residual = 0.0; ///< |[Y^T Y, X^T X]|_F / (|Y^T Y|_F |X^T X|_F)
    bool commutes = false;
};

CommutatorResult commutator_check(const Dataset& d, double tol = 1e-10);

/// [start, end) range of modes whose singular values coincide.
struct ModeBlock {
    Index start = 0;
    Index end = 0;
    Index size() const { return end - start; }
    bool degenerate() const { return size() > 1; }
};

/// SVD of Sigma^{yx} with the input eigenvalues d_alpha aligned to the right
/// singular vectors.
struct ModeDecomposition {
    Matrix U; ///< N_out x r
    Vector S; ///< r, descending
    Matrix V; ///< N_in x r
    std::optional<Vector> D; ///< v_alpha^T Sigma^x v_alpha; absent when Sigma^x is not jointly diagonal
    std::optional<Index> ocs_index;
    std::vector<ModeBlock> blocks;
    double joint_residual = 0.0; ///< |Sigma^x V - V diag(D)|_F / |Sigma^x|_F
    std::vector<std::string> warnings;

    Index rank() const { return S.size(); }
    /// Block containing mode `alpha`.
    const ModeBlock& block_of(Index alpha) const;
};

struct TaskSvdOptions {
    /// Whether the source dataset passed commutator_check; D is only kept when true.
    bool commutes = true;
    /// Sample-mean input used to locate the OCS mode.
    std::optional<Vector> mean_input;
    double rank_tolerance = 1e-12;
    double degeneracy_tolerance = 1e-9;
    double ocs_alignment = 0.999;
};

ModeDecomposition task_svd(const CorrelationPair& pair, const TaskSvdOptions& options = {});

/// Correlations, commutator check and SVD in one call.
ModeDecomposition task_svd(const Dataset& d);

/// Checks whether the all-ones sample vector is an eigenvector of M^T M and,
/// if so, whether the column mean of M is an eigenvector of M M^T with the
/// same eigenvalue. M is features x samples (X or Y).
struct EigenTransfer {
    double lambda = 0.0;           ///< Rayleigh quotient of 1 under M^T M
    double ones_residual = 0.0;    ///< |M^T M 1 - lambda 1| / (lambda |1|)
    bool ones_is_eigenvector = false;
    double mean_lambda = 0.0;      ///< Rayleigh quotient of the column mean under M M^T
    double transfer_residual = 0.0; ///< |M M^T m - lambda m| / (lambda |m|)
};

EigenTransfer eigen_transfer(const Matrix& M, double tol = 1e-10);

struct LeadingModeReport {
    double u_alignment = 0.0; ///< alignment(u_0, ybar)
    double v_alignment = 0.0; ///< alignment(v_0, xbar)
    double gap = 0.0;         ///< s_0 - s_1
    bool leading_is_ocs = false;
    bool hypothesis_holds = false;
    bool perron_positive = false; ///< X^T X and Y^T Y have strictly positive entries
    bool irreducible = false;     ///< both similarity matrices are irreducible
    double outer_residual = 0.0;  ///< |s0 u0 v0^T - s0 yhat xhat^T|_F / s0 (unit vectors)
    EigenTransfer outputs;
    EigenTransfer inputs;
    std::vector<std::string> warnings;
};

LeadingModeReport leading_mode_check(const ModeDecomposition& dec, const Dataset& d);

struct EigenAlignment {
    double eigenvalue = 0.0;
    double alignment = 0.0; ///< alignment with the all-ones vector
    bool degenerate = false; ///< eigenvalue shared with a neighbour; alignment is basis dependent
};

/// Top-k eigenpairs of a symmetric N x N similarity matrix and their
/// alignment with the constant vector.
std::vector<EigenAlignment> constant_mode_alignment(const Matrix& similarity, Index k);

/// Eigenvalue of the ones vector under (1/N) X^T X (Rayleigh quotient).
double ones_mode_eigenvalue(const Dataset& d);

/// CSV columns: mode,singular_value,input_eigenvalue,block,is_ocs
void write_spectrum_csv(std::ostream& out, const ModeDecomposition& dec);

} // namespace ocs
