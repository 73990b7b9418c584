#include "ocs/analytic_dynamics.hpp"

#include <cstdio>
#include <ostream>

namespace ocs {

namespace {

[[noreturn]] void fail(const std::string& message) { throw Error("analytic_dynamics", message); }

void check_common(const TrajectoryParams& p, double t) {
    if (!(p.tau > 0.0)) fail("tau must be positive");
    if (p.d < 0.0) fail("input eigenvalue d must be non-negative");
    if (p.s < 0.0) fail("singular value s must be non-negative");
    if (!(t >= 0.0)) fail("time must be non-negative");
}

void check_aligned(const ModeDecomposition& dec, std::span<const TrajectoryParams> params) {
    if (static_cast<Index>(params.size()) != dec.rank())
        fail("got " + std::to_string(params.size()) + " mode parameters for " + std::to_string(dec.rank()) + " modes");
}

} // namespace

double deep_mode_trajectory(const TrajectoryParams& p, double t) {
    check_common(p, t);
    if (!(p.a0 > 0.0)) fail("deep trajectories need a0 > 0");
    if (p.s == 0.0) return p.a0 / (1.0 + 2.0 * p.a0 * p.d * t / p.tau);
    if (p.d == 0.0) fail("a mode with s > 0 needs d > 0");

    const double x = 2.0 * p.s * t / p.tau;
    const double target = p.s / p.d;
    if (x > 700.0) return target;
    // Multiply numerator and denominator by a0 d to keep every term bounded.
    const double decay = std::exp(-x);
    return p.s * p.a0 / (p.d * p.a0 + (p.s - p.d * p.a0) * decay);
}

double shallow_mode_trajectory(const TrajectoryParams& p, double t) {
    check_common(p, t);
    if (p.d == 0.0) return p.a0;
    const double decay = std::exp(-p.d * t / p.tau);
    return (p.s / p.d) * (1.0 - decay) + p.a0 * decay;
}

double mode_trajectory(const TrajectoryParams& p, double t) {
    return p.depth == Depth::deep ? deep_mode_trajectory(p, t) : shallow_mode_trajectory(p, t);
}

std::vector<TrajectoryParams> mode_params(const ModeDecomposition& dec, Depth depth, double a0, double tau) {
    if (!dec.D) fail("closed-form dynamics need input eigenvalues aligned with V (commuting dataset)");
    std::vector<TrajectoryParams> params;
    params.reserve(static_cast<std::size_t>(dec.rank()));
    for (Index a = 0; a < dec.rank(); ++a) params.push_back({dec.S(a), (*dec.D)(a), a0, tau, depth});
    return params;
}

Matrix analytic_network(const ModeDecomposition& dec, std::span<const TrajectoryParams> params, double t) {
    check_aligned(dec, params);
    Vector a(dec.rank());
    for (Index k = 0; k < dec.rank(); ++k) a(k) = mode_trajectory(params[k], t);
    return dec.U * a.asDiagonal() * dec.V.transpose();
}

double analytic_loss(const ModeDecomposition& dec, std::span<const TrajectoryParams> params, const Dataset& d, double t) {
    const Matrix w = analytic_network(dec, params, t);
    if (w.cols() != d.input_dim() || w.rows() != d.output_dim())
        fail("decomposition does not match dataset '" + d.name + "'");
    return 0.5 * (d.Y - w * d.X).squaredNorm();
}

Vector ocs_contribution(const ModeDecomposition& dec, std::span<const TrajectoryParams> params, const Vector& x, double t) {
    check_aligned(dec, params);
    if (!dec.ocs_index) fail("decomposition has no OCS mode");
    const Index k = *dec.ocs_index;
    if (x.size() != dec.V.rows()) fail("input has dimension " + std::to_string(x.size()) + ", expected " + std::to_string(dec.V.rows()));
    return mode_trajectory(params[k], t) * dec.V.col(k).dot(x) * dec.U.col(k);
}

std::vector<double> geometric_time_grid(double t_min, double t_max, Index count) {
    if (!(t_min > 0.0) || !(t_max > t_min) || count < 2) fail("geometric grid needs 0 < t_min < t_max and count >= 2");
    std::vector<double> times{0.0};
    const double ratio = std::log(t_max / t_min) / static_cast<double>(count - 2);
    for (Index k = 0; k < count - 1; ++k) times.push_back(t_min * std::exp(ratio * static_cast<double>(k)));
    times.back() = t_max;
    return times;
}

std::vector<double> linear_time_grid(double t_max, Index count) {
    if (!(t_max > 0.0) || count < 2) fail("linear grid needs t_max > 0 and count >= 2");
    std::vector<double> times;
    for (Index k = 0; k < count; ++k) times.push_back(t_max * static_cast<double>(k) / static_cast<double>(count - 1));
    return times;
}

void write_mode_curves_csv(std::ostream& out, std::span<const TrajectoryParams> params, std::span<const double> times) {
    out << "t,mode,value\n";
    char buf[96];
    for (double t : times)
        for (std::size_t k = 0; k < params.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g,%zu,%.17g\n", t, k, mode_trajectory(params[k], t));
            out << buf;
        }
}

void write_loss_curve_csv(std::ostream& out, const ModeDecomposition& dec, std::span<const TrajectoryParams> params,
                          const Dataset& d, std::span<const double> times) {
    out << "t,loss\n";
    char buf[64];
    for (double t : times) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", t, analytic_loss(dec, params, d, t));
        out << buf;
    }
}

} // namespace ocs
