#pragma once

#include "ocs/common.hpp"
#include "ocs/spectral.hpp"
#include "ocs/task_data.hpp"

#include <iosfwd>
#include <span>
#include <vector>

namespace ocs {

/// Parameters of one mode's closed-form trajectory. `a0` is the initial mode
/// strength (a_0 for deep networks, b_0 for shallow ones) and `tau = 1/(N eps)`.
struct TrajectoryParams {
    double s = 0.0;
    double d = 0.0;
    double a0 = 0.0;
    double tau = 1.0;
    Depth depth = Depth::deep;
};

/// Sigmoidal strength of a balanced two-layer mode:
///   a(t) = (s/d) / (1 - (1 - s/(d a0)) exp(-2 s t / tau)),
/// evaluated in an overflow-free rearrangement. For s = 0 the limit
/// a0 / (1 + 2 a0 d t / tau) is returned.
double deep_mode_trajectory(const TrajectoryParams& p, double t);

/// Exponential relaxation of a shallow mode:
///   b(t) = (s/d)(1 - exp(-d t / tau)) + b0 exp(-d t / tau).
/// A mode with d = 0 is frozen at b0.
double shallow_mode_trajectory(const TrajectoryParams& p, double t);

double mode_trajectory(const TrajectoryParams& p, double t);

/// One TrajectoryParams per mode of `dec`, all starting from `a0`.
std::vector<TrajectoryParams> mode_params(const ModeDecomposition& dec, Depth depth, double a0, double tau);

/// U diag(a(t)) V^T.
Matrix analytic_network(const ModeDecomposition& dec, std::span<const TrajectoryParams> params, double t);

/// (1/2) |Y - W(t) X|_F^2.
double analytic_loss(const ModeDecomposition& dec, std::span<const TrajectoryParams> params, const Dataset& d, double t);

/// Output contributed by the OCS mode alone: a_ocs(t) u_ocs (v_ocs . x).
Vector ocs_contribution(const ModeDecomposition& dec, std::span<const TrajectoryParams> params, const Vector& x, double t);

/// `count` points from 0 to t_max; the geometric grid starts at `t_min` after
/// an explicit t = 0 sample.
std::vector<double> geometric_time_grid(double t_min, double t_max, Index count);
std::vector<double> linear_time_grid(double t_max, Index count);

/// CSV with columns t,mode,value.
void write_mode_curves_csv(std::ostream& out, std::span<const TrajectoryParams> params, std::span<const double> times);
/// CSV with columns t,loss.
void write_loss_curve_csv(std::ostream& out, const ModeDecomposition& dec, std::span<const TrajectoryParams> params,
                          const Dataset& d, std::span<const double> times);

} // namespace ocs
