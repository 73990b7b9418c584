#pragma once

#include "ocs/common.hpp"
#include "ocs/spectral.hpp"
#include "ocs/task_data.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ocs {

enum class BiasPlacement { none, input, output, both };
enum class InitMode { spectral, random_small, exact_isotropy };

inline bool has_input_bias(BiasPlacement b) { return b == BiasPlacement::input || b == BiasPlacement::both; }
inline bool has_output_bias(BiasPlacement b) { return b == BiasPlacement::output || b == BiasPlacement::both; }

const char* to_string(BiasPlacement b);
const char* to_string(InitMode m);
BiasPlacement parse_bias_placement(const std::string& text);
InitMode parse_init_mode(const std::string& text);
Depth parse_depth(const std::string& text);

struct NetworkConfig {
    Depth depth = Depth::deep;
    Index input_dim = 0;
    Index hidden_dim = 0;
    Index output_dim = 0;
    /// Shallow networks take no explicit bias; train them on a bias-augmented dataset instead.
    BiasPlacement bias = BiasPlacement::none;
    InitMode init = InitMode::random_small;
    /// sigma for random_small / exact_isotropy; the initial mode strength a0 for spectral.
    double init_scale = 1e-2;
    std::uint64_t seed = 0;
};

/// Two-layer network y = W2 (W1 x + b1) + b2, or shallow y = Ws x.
struct NetworkState {
    Depth depth = Depth::deep;
    Matrix W1; ///< N_hid x N_in
    Matrix W2; ///< N_out x N_hid
    Matrix Ws; ///< N_out x N_in (shallow)
    std::optional<Vector> b1;
    std::optional<Vector> b2;
    /// Hidden-space basis used by spectral init (N_hid x r).
    std::optional<Matrix> R;

    Index input_dim() const { return depth == Depth::deep ? W1.cols() : Ws.cols(); }
    Index output_dim() const { return depth == Depth::deep ? W2.rows() : Ws.rows(); }
};

/// Spectral init needs `dec`; for an input-bias network `dec` must come from
/// the bias-augmented task and the aligned initial weights are split into
/// [b1 W1], so b1 starts at O(sqrt(a0)) rather than zero.
NetworkState init_network(const NetworkConfig& cfg, const ModeDecomposition* dec = nullptr);

Matrix forward(const NetworkState& net, const Matrix& X);
double loss(const NetworkState& net, const Dataset& d);

struct Gradients {
    Matrix W1, W2, Ws;
    std::optional<Vector> b1, b2;
};

/// Exact gradients of (1/2)|Y - Yhat|_F^2, summed over samples:
///   dW2 = -E H^T, dW1 = -W2^T E X^T, db1 = -W2^T E 1, db2 = -E 1, dWs = -E X^T
/// with E = Y - Yhat and H = W1 X + b1 1^T.
Gradients gradients(const NetworkState& net, const Dataset& d);

/// Parameters flattened in the order W2, W1, b1, b2 (deep) or Ws (shallow),
/// each matrix column-major.
Vector flatten_parameters(const NetworkState& net);
void assign_parameters(NetworkState& net, const Vector& theta);
Vector flatten_gradients(const NetworkState& net, const Gradients& g);

struct TrainConfig {
    double learning_rate = 1e-3;
    Index steps = 1000;
    Index log_stride = 1;
    bool log_outputs = true;
};

/// tau = 1 / (N eps).
double time_constant(const TrainConfig& cfg, Index samples);

struct TrajectorySeries {
    std::vector<Index> steps; ///< continuous time t equals the step index
    std::vector<double> loss;
    /// U^T W_eff V per logged step when a decomposition was supplied.
    std::vector<Matrix> projections;
    std::vector<Matrix> outputs;
    std::vector<double> b1_norm;
    std::vector<double> b2_norm;
    double tau = 0.0;
    std::vector<std::string> warnings;

    std::vector<double> times() const { return {steps.begin(), steps.end()}; }
};

/// Runs cfg.steps full-batch gradient-descent steps, updating `net` in place.
/// `dec` (optional) must describe the effective weight of `net`; see
/// effective_weights. Throws DivergenceError when the loss exceeds 1e6 x its
/// initial value.
TrajectorySeries train(NetworkState& net, const Dataset& d, const TrainConfig& cfg, const ModeDecomposition* dec = nullptr);

/// The linear map from (possibly augmented) inputs to outputs: W2 W1, W2 [b1 W1]
/// with an input bias, or Ws.
Matrix effective_weights(const NetworkState& net);

/// U^T W_eff V.
Matrix mode_projection(const NetworkState& net, const ModeDecomposition& dec);
/// diag(U^T W_eff V).
Vector extract_mode_strengths(const NetworkState& net, const ModeDecomposition& dec);
/// Per block of `dec`: |P_BB|_F / sqrt(|B|) for P = U^T W_eff V.
Vector block_strengths(const Matrix& projection, const ModeDecomposition& dec);

struct BiasGradientReport {
    std::optional<Vector> grad_b1; ///< sample-averaged dL/db1
    std::optional<Vector> grad_b2; ///< sample-averaged dL/db2
    double norm_b1 = 0.0;
    double norm_b2 = 0.0;
    std::optional<double> ratio; ///< |dL/db1| / |dL/db2| when both exist
    /// |ybar - mean(yhat)|, the scale |dL/db2| should match.
    double mean_residual = 0.0;
    /// b1^T R_alpha per mode when the network carries a spectral basis.
    std::optional<Vector> b1_mode_projections;
};

BiasGradientReport bias_gradient_diagnostics(const NetworkState& net, const Dataset& d);

/// Long-format CSV: step,series,index,value. Series are loss, mode (diagonal
/// of the projection), b1_norm, b2_norm and, when logged, output (index = m*N + i).
void write_trajectory_csv(std::ostream& out, const TrajectorySeries& series, bool include_outputs = false);

} // namespace ocs
