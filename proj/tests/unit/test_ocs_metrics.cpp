#include "ocs/analytic_dynamics.hpp"
#include "ocs/ocs_metrics.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace ocs;

TEST(OcsMetrics, L1ToOcs) {
    const Dataset d = build_hierarchy({});
    const Vector ybar = ocs_vector(d);
    EXPECT_EQ(l1_to_ocs(ybar.replicate(1, 8), ybar), 0.0);
    EXPECT_DOUBLE_EQ(l1_to_ocs(Matrix::Zero(15, 8), ybar), 4.0);
    EXPECT_LE(l1_to_ocs(d.Y, ybar), 1e-8);
    EXPECT_THROW(l1_to_ocs(Matrix::Zero(3, 8), ybar), Error);
}

TEST(OcsMetrics, TnrBasics) {
    const Dataset d = build_hierarchy({});
    const Vector y = d.Y.col(2);
    for (const Vector& yh : {Vector(Vector::Zero(15)), y}) {
        const LevelValues v = tnr(yh, y, d.level_slices);
        ASSERT_EQ(v.size(), 4u);
        EXPECT_FALSE(v[0]); // root level has no zero targets
        for (std::size_t k = 1; k < 4; ++k) EXPECT_DOUBLE_EQ(*v[k], 1.0);
    }
}

TEST(OcsMetrics, TnrAtOcsLeafLevel) {
    const Dataset d = build_hierarchy({});
    const LevelValues v = tnr(ocs_vector(d), d.Y.col(5), d.level_slices);
    EXPECT_DOUBLE_EQ(*v[3], 0.875);
    EXPECT_DOUBLE_EQ(*v[2], 0.75);
    EXPECT_DOUBLE_EQ(*v[1], 0.5);
}

TEST(OcsMetrics, TnrMonotone) {
    const Dataset d = build_hierarchy({});
    Vector yh = ocs_vector(d);
    const Vector y = d.Y.col(0);
    const double before = *tnr(yh, y, d.level_slices)[3];
    yh(10) += 0.2; // leaf unit with target 0 for item 0
    EXPECT_LT(*tnr(yh, y, d.level_slices)[3], before);
}

TEST(OcsMetrics, TprIsComplementOfTnr) {
    const Dataset d = build_hierarchy({});
    const Vector y = d.Y.col(4);
    Vector yh(15);
    for (Index k = 0; k < 15; ++k) yh(k) = 0.05 * static_cast<double>(k);
    const LevelValues p = tpr(yh, y, d.level_slices);
    const LevelValues n = tnr(Vector::Ones(15) - yh, Vector::Ones(15) - y, d.level_slices);
    for (std::size_t k = 0; k < p.size(); ++k) {
        ASSERT_EQ(p[k].has_value(), n[k].has_value());
        if (p[k]) EXPECT_NEAR(*p[k], *n[k], 1e-15);
    }
}

TEST(OcsMetrics, BaselineHierarchy) {
    const LevelValues b = ocs_baseline_tnr(build_hierarchy({}));
    EXPECT_FALSE(b[0]);
    EXPECT_DOUBLE_EQ(*b[1], 0.5);
    EXPECT_DOUBLE_EQ(*b[2], 0.75);
    EXPECT_DOUBLE_EQ(*b[3], 0.875);
}

TEST(OcsMetrics, BaselineImbalance) {
    // ybar = (2/3, 1/3, 1/3). Level 0 is defined only for the minority item: 1 - 2/3.
    // Level 1 is defined only for the two majority items: (2/3 + 2/3) / 2.
    const LevelValues b = ocs_baseline_tnr(build_imbalance_case());
    EXPECT_NEAR(*b[0], 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(*b[1], 2.0 / 3.0, 1e-15);
}

TEST(OcsMetrics, BaselinePermutationInvariant) {
    Dataset d = build_hierarchy({});
    const LevelValues before = ocs_baseline_tnr(d);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(8);
    perm.indices() << 3, 1, 7, 0, 5, 2, 6, 4;
    d.Y = d.Y * perm;
    d.X = d.X * perm;
    const LevelValues after = ocs_baseline_tnr(d);
    for (std::size_t k = 1; k < 4; ++k) EXPECT_NEAR(*before[k], *after[k], 1e-15);
}

TEST(OcsMetrics, Indifference) {
    const Matrix constant = Vector::LinSpaced(3, 0.0, 1.0).replicate(1, 5);
    const IndifferenceReport c = indifference(constant);
    EXPECT_FALSE(c.indifferent[0]); // mean 0
    EXPECT_TRUE(c.indifferent[1]);
    EXPECT_TRUE(c.indifferent[2]);

    const Dataset d = build_hierarchy({});
    const IndifferenceReport leaf = indifference(d.Y);
    // A leaf row is one-hot across 8 items: std = sqrt(1/8 - 1/64).
    EXPECT_NEAR(leaf.stddev(14), std::sqrt(1.0 / 8.0 - 1.0 / 64.0), 1e-15);
    EXPECT_FALSE(leaf.indifferent[14]);
    EXPECT_TRUE(leaf.indifferent[0]); // the root unit is always on
}

TEST(OcsMetrics, TimingSummary) {
    const std::vector<double> t{0, 1, 2, 3, 4};
    const std::vector<double> l1{4, 3, 0.1, 0.1, 0.0};
    const std::vector<double> loss{10, 9, 8, 4, 1};
    const TimingSummary s = timing_summary(t, l1, loss, 4.0);
    EXPECT_EQ(*s.t_ocs, 2.0);
    EXPECT_EQ(*s.t_diff, 3.0);
    const std::vector<double> flat_l1{4, 4, 4, 4, 4};
    const std::vector<double> flat_loss{10, 10, 10, 10, 10};
    const TimingSummary f = timing_summary(t, flat_l1, flat_loss, 4.0);
    EXPECT_FALSE(f.t_ocs);
    EXPECT_FALSE(f.t_diff);
}

TEST(OcsMetrics, OcsModePlateauIsCloseToOcs) {
    const Dataset d = augment_bias(build_hierarchy({}));
    const ModeDecomposition dec = task_svd(d);
    const auto params = mode_params(dec, Depth::deep, 1e-4, 1000.0);
    // The OCS mode saturates long before the slowest leaf modes leave zero.
    const TrajectoryParams& ocs = params[*dec.ocs_index];
    const double t = 5.0 * ocs.tau / ocs.s * std::log(ocs.s / (ocs.d * ocs.a0));
    Matrix out(d.output_dim(), d.samples());
    for (Index i = 0; i < d.samples(); ++i) out.col(i) = ocs_contribution(dec, params, d.X.col(i), t);
    EXPECT_LE(l1_to_ocs(out, ocs_vector(d)), 0.05 * ocs_vector(d).lpNorm<1>());
}

TEST(OcsMetrics, ComputeMetricsFromRun) {
    const Dataset d = build_hierarchy({});
    NetworkConfig c;
    c.input_dim = 8;
    c.hidden_dim = 8;
    c.output_dim = 15;
    c.bias = BiasPlacement::output;
    c.init_scale = 1e-3;
    NetworkState net = init_network(c);
    TrainConfig cfg;
    cfg.learning_rate = 1e-3 / 8.0;
    cfg.steps = 20'000;
    cfg.log_stride = 100;
    const TrajectorySeries run = train(net, d, cfg);
    const MetricsSeries m = compute_metrics(run, d);
    ASSERT_EQ(m.times.size(), run.steps.size());
    EXPECT_DOUBLE_EQ(m.ocs_l1_norm, 4.0);
    ASSERT_TRUE(m.timing.t_ocs);
    EXPECT_TRUE(!m.timing.t_diff || *m.timing.t_ocs < *m.timing.t_diff);
    std::ostringstream out;
    write_metrics_csv(out, m);
    EXPECT_EQ(out.str().rfind("time,metric,index,value\n", 0), 0u);
}
