#pragma once

#include "ocs/common.hpp"
#include "ocs/task_data.hpp"
#include "ocs/trainer.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace ocs {

/// Kernel over (output unit, sample) pairs stored as an (N_out N) x (N_out N)
/// matrix with row/column index m * N + i.
struct NtkTensor {
    Index outputs = 0;
    Index samples = 0;
    Matrix values;

    double operator()(Index m1, Index m2, Index i1, Index i2) const { return values(m1 * samples + i1, m2 * samples + i2); }
};

/// Maximum N_out * N for dense materialization.
inline constexpr Index kNtkMaxSize = 4000;

/// How the output-bias term enters the closed form. `per_unit` is I (x) 11^T, the
/// kernel an independent bias per output unit actually induces; `all_ones` is
/// 11^T (x) 11^T, which couples every pair of output units.
enum class OutputBiasTerm { per_unit, all_ones };

const char* to_string(OutputBiasTerm t);
OutputBiasTerm parse_output_bias_term(const std::string& text);

/// Gradient-product contributions, each (N_out N) x (N_out N).
struct NtkBlocks {
    Matrix w2; ///< I (x) H^T H
    Matrix w1; ///< W2 W2^T (x) X^T X
    Matrix b1; ///< W2 W2^T (x) 11^T, zero without an input bias
    Matrix b2; ///< I (x) 11^T, zero without an output bias
};

NtkBlocks ntk_direct_blocks(const NetworkState& net, const Dataset& d);

/// sum_k dy_m(x_i)/dtheta_k dy_m'(x_i')/dtheta_k over all parameters of a deep network.
NtkTensor ntk_direct(const NetworkState& net, const Dataset& d);

/// sigma^2 I (x) (2 X^T X + [input bias] 11^T) + [output bias] B, with B chosen by `term`.
NtkTensor ntk_closed_form(double sigma, const Dataset& d, BiasPlacement bias, OutputBiasTerm term = OutputBiasTerm::per_unit);

struct NtkBlockError {
    std::string name;
    double max_abs = 0.0;
    double mean_abs = 0.0;
};

struct NtkComparison {
    double max_abs = 0.0;
    double relative_frobenius = 0.0;
    std::vector<NtkBlockError> blocks; ///< weights, input_bias, output_bias
    double symmetry_residual = 0.0;
    double min_eigenvalue = 0.0;
    double trace = 0.0;
    std::vector<std::string> warnings;
};

/// Compares ntk_direct against ntk_closed_form(sigma) for the network's own bias
/// placement. `init` is the mode the network was initialized with; anything
/// other than exact_isotropy, or non-zero biases, is flagged.
NtkComparison ntk_compare(const NetworkState& net, const Dataset& d, double sigma, InitMode init,
                          OutputBiasTerm term = OutputBiasTerm::per_unit);

/// eps * NTK * vec(Y - Yhat) reshaped to N_out x N.
Matrix ntk_output_step(const NetworkState& net, const Dataset& d, double eps);

struct OutputStepCheck {
    Matrix predicted;
    Matrix actual;
    double relative_error = 0.0; ///< |predicted - actual|_F / |actual|_F
};

/// Predicted output change versus the change after one real full-batch GD step.
OutputStepCheck ntk_one_step_check(const NetworkState& net, const Dataset& d, double eps);

/// CSV dump of the matrix view: row,col,value.
void write_ntk_csv(std::ostream& out, const NtkTensor& k);
void write_ntk_report(std::ostream& out, const NtkComparison& c);

} // namespace ocs
