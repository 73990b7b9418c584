#include "ocs/analytic_dynamics.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <sstream>

using namespace ocs;

namespace {

// Classical RK4 on da/dt = f(a).
double integrate(const std::function<double(double)>& f, double a0, double t, int steps) {
    const double h = t / steps;
    double a = a0;
    for (int k = 0; k < steps; ++k) {
        const double k1 = f(a), k2 = f(a + 0.5 * h * k1), k3 = f(a + 0.5 * h * k2), k4 = f(a + h * k3);
        a += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return a;
}

} // namespace

TEST(AnalyticDynamics, DeepMatchesOde) {
    for (double s : {0.48, 1.45, 0.125}) {
        for (double d : {0.125, 1.125}) {
            const TrajectoryParams p{s, d, 1e-4, 1000.0, Depth::deep};
            auto f = [&](double a) { return 2.0 / p.tau * a * (s - d * a); };
            for (double t : {0.0, 3000.0, 10000.0, 40000.0}) {
                const double ode = t == 0.0 ? p.a0 : integrate(f, p.a0, t, 20000);
                EXPECT_NEAR(deep_mode_trajectory(p, t), ode, 1e-9 * (s / d)) << "s=" << s << " d=" << d << " t=" << t;
            }
        }
    }
}

TEST(AnalyticDynamics, DeepZeroSingularValue) {
    const TrajectoryParams p{0.0, 0.5, 0.3, 10.0, Depth::deep};
    auto f = [&](double a) { return 2.0 / p.tau * a * (0.0 - p.d * a); };
    EXPECT_NEAR(deep_mode_trajectory(p, 50.0), integrate(f, p.a0, 50.0, 20000), 1e-12);
}

TEST(AnalyticDynamics, DeepZeroSingularValueMatchesGradientDescent) {
    // Scalar balanced pair w2 = w1 = sqrt(a) with loss (d/2) a^2 summed over N samples.
    const double d = 0.5, tau = 1000.0;
    const double n = 4.0, eps = 1.0 / (n * tau);
    double w1 = std::sqrt(0.2), w2 = std::sqrt(0.2);
    const int steps = 5000;
    for (int k = 0; k < steps; ++k) {
        const double a = w1 * w2;
        const double g = n * d * a; // dL/da for L = N d a^2 / 2
        const double g1 = g * w2, g2 = g * w1;
        w1 -= eps * g1;
        w2 -= eps * g2;
    }
    const TrajectoryParams p{0.0, d, 0.2, tau, Depth::deep};
    EXPECT_NEAR(w1 * w2, deep_mode_trajectory(p, steps), 1e-4);
}

TEST(AnalyticDynamics, DeepLimits) {
    const TrajectoryParams p{1.45, 1.125, 1e-4, 1000.0, Depth::deep};
    EXPECT_DOUBLE_EQ(deep_mode_trajectory(p, 0.0), 1e-4);
    EXPECT_NEAR(deep_mode_trajectory(p, 1e7), 1.45 / 1.125, 1e-15);
    // Starting above the fixed point decays onto it.
    const TrajectoryParams high{0.5, 0.125, 10.0, 100.0, Depth::deep};
    EXPECT_LT(deep_mode_trajectory(high, 50.0), 10.0);
    EXPECT_GT(deep_mode_trajectory(high, 50.0), 4.0);
}

TEST(AnalyticDynamics, ShallowMatchesOde) {
    const TrajectoryParams p{0.48, 0.125, 0.01, 1000.0, Depth::shallow};
    auto f = [&](double b) { return (p.s - p.d * b) / p.tau; };
    for (double t : {500.0, 8000.0, 60000.0}) EXPECT_NEAR(shallow_mode_trajectory(p, t), integrate(f, p.a0, t, 20000), 1e-10);
    EXPECT_DOUBLE_EQ(shallow_mode_trajectory({0.3, 0.0, 0.7, 1.0, Depth::shallow}, 100.0), 0.7);
}

TEST(AnalyticDynamics, Errors) {
    EXPECT_THROW(deep_mode_trajectory({1.0, 1.0, 0.0, 1.0, Depth::deep}, 1.0), Error);
    EXPECT_THROW(deep_mode_trajectory({1.0, 0.0, 1e-3, 1.0, Depth::deep}, 1.0), Error);
    EXPECT_THROW(deep_mode_trajectory({1.0, 1.0, 1e-3, 0.0, Depth::deep}, 1.0), Error);
    EXPECT_THROW(deep_mode_trajectory({1.0, 1.0, 1e-3, 1.0, Depth::deep}, -1.0), Error);
}

TEST(AnalyticDynamics, NetworkConvergesToLeastSquares) {
    const Dataset d = build_hierarchy({});
    const ModeDecomposition dec = task_svd(d);
    const auto params = mode_params(dec, Depth::deep, 1e-4, 1000.0);
    const Matrix w = analytic_network(dec, params, 1e6);
    EXPECT_LE((w * d.X - d.Y).norm(), 1e-10);
    EXPECT_LE(analytic_loss(dec, params, d, 1e6), 1e-20);
    EXPECT_NEAR(analytic_loss(dec, params, d, 0.0), 0.5 * d.Y.squaredNorm(), 1e-2);
}

TEST(AnalyticDynamics, OcsContributionPlateau) {
    const Dataset d = augment_bias(build_hierarchy({}));
    const ModeDecomposition dec = task_svd(d);
    const auto params = mode_params(dec, Depth::deep, 1e-4, 1000.0);
    const Vector xbar = mean_input(d);
    // Once the OCS mode saturates its contribution at the mean input equals ybar.
    const Vector out = ocs_contribution(dec, params, xbar, 1e5);
    EXPECT_LE((out - ocs_vector(d)).norm(), 1e-10);
}

TEST(AnalyticDynamics, ModeParamsNeedAlignedEigenvalues) {
    ModeDecomposition dec = task_svd(build_hierarchy({}));
    dec.D.reset();
    EXPECT_THROW(mode_params(dec, Depth::deep, 1e-4, 1000.0), Error);
}

TEST(AnalyticDynamics, TimeGrids) {
    const auto g = geometric_time_grid(1.0, 1000.0, 5);
    ASSERT_EQ(g.size(), 5u);
    EXPECT_EQ(g[0], 0.0);
    EXPECT_DOUBLE_EQ(g[1], 1.0);
    EXPECT_NEAR(g[2], 10.0, 1e-9);
    EXPECT_EQ(g.back(), 1000.0);
    const auto l = linear_time_grid(10.0, 3);
    EXPECT_EQ(l, (std::vector<double>{0.0, 5.0, 10.0}));
}

TEST(AnalyticDynamics, Csv) {
    std::ostringstream out;
    const std::vector<TrajectoryParams> p{{0.5, 0.125, 1e-4, 1000.0, Depth::deep}};
    const std::vector<double> t{0.0};
    write_mode_curves_csv(out, p, t);
    EXPECT_EQ(out.str(), "t,mode,value\n0,0,0.0001\n");
}
