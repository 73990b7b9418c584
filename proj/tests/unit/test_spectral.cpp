#include "ocs/spectral.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace ocs;

namespace {

// Singular values of the 8-item hierarchy, sqrt(lambda)/8 for the Y^T Y spectrum {15, 7, 3, 3, 1, 1, 1, 1}.
const double kPlain[] = {0.48412291827592713, 0.33071891388307384, 0.21650635094610965, 0.21650635094610965,
                         0.125, 0.125, 0.125, 0.125};

} // namespace

TEST(Spectral, CorrelationMatrices) {
    const Dataset d = build_hierarchy({});
    const CorrelationPair p = correlation_matrices(d);
    EXPECT_TRUE(p.sigma_x.isApprox(Matrix::Identity(8, 8) / 8.0));
    EXPECT_EQ(p.sigma_yx.rows(), 15);
    EXPECT_DOUBLE_EQ(p.sigma_yx(0, 0), 0.125);
}

TEST(Spectral, HierarchySpectrum) {
    const ModeDecomposition dec = task_svd(build_hierarchy({}));
    ASSERT_EQ(dec.rank(), 8);
    for (Index a = 0; a < 8; ++a) EXPECT_NEAR(dec.S(a), kPlain[a], 1e-12);
    ASSERT_TRUE(dec.D);
    for (Index a = 0; a < 8; ++a) EXPECT_NEAR((*dec.D)(a), 0.125, 1e-12);
    ASSERT_EQ(dec.blocks.size(), 4u);
    EXPECT_EQ(dec.blocks[2].size(), 2);
    EXPECT_EQ(dec.blocks[3].size(), 4);
    ASSERT_TRUE(dec.ocs_index);
    EXPECT_EQ(*dec.ocs_index, 0);
    EXPECT_TRUE((dec.U.transpose() * dec.U).isIdentity(1e-12));
    EXPECT_TRUE((dec.V.transpose() * dec.V).isIdentity(1e-12));
}

TEST(Spectral, AugmentedSpectrum) {
    const ModeDecomposition dec = task_svd(augment_bias(build_hierarchy({})));
    ASSERT_EQ(dec.rank(), 8);
    EXPECT_NEAR(dec.S(0), 1.4523687548277813, 1e-12); // sqrt(135)/8
    EXPECT_NEAR((*dec.D)(0), 1.125, 1e-12);
    for (Index a = 1; a < 8; ++a) {
        EXPECT_NEAR(dec.S(a), kPlain[a], 1e-12);
        EXPECT_NEAR((*dec.D)(a), 0.125, 1e-12);
    }
    EXPECT_EQ(*dec.ocs_index, 0);
}

TEST(Spectral, SvdReconstructs) {
    const Dataset d = augment_bias(build_hierarchy({}));
    const CorrelationPair p = correlation_matrices(d);
    const ModeDecomposition dec = task_svd(d);
    EXPECT_LE((dec.U * dec.S.asDiagonal() * dec.V.transpose() - p.sigma_yx).norm(), 1e-12);
    EXPECT_LE(dec.joint_residual, 1e-12);
}

TEST(Spectral, OnesModeEigenvalueShift) {
    const Dataset d = build_hierarchy({});
    const double before = ones_mode_eigenvalue(d);
    const double after = ones_mode_eigenvalue(augment_bias(d));
    EXPECT_NEAR(before, 1.0 / 8.0, 1e-15);
    EXPECT_NEAR(after - before, 1.0, 1e-10);
}

TEST(Spectral, CommutatorOnHierarchy) {
    const Dataset d = build_hierarchy({});
    EXPECT_LE(commutator_check(d).residual, 1e-12);
    EXPECT_LE(commutator_check(augment_bias(d)).residual, 1e-12);
    EXPECT_LE(commutator_check(build_imbalance_case()).residual, 1e-12);
    EXPECT_LE(commutator_check(augment_bias(build_imbalance_case())).residual, 1e-12);
}

TEST(Spectral, CommutatorCounterexample) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    Dataset d;
    d.X = Matrix::NullaryExpr(6, 8, [&]() { return g(rng); });
    d.Y = Matrix::NullaryExpr(5, 8, [&]() { return g(rng); });
    d.level_slices = {{0, 5}};
    const CommutatorResult r = commutator_check(d);
    EXPECT_GT(r.residual, 1e-3);
    EXPECT_FALSE(r.commutes);
    const ModeDecomposition dec = task_svd(d);
    EXPECT_FALSE(dec.D);
    EXPECT_FALSE(dec.warnings.empty());
}

TEST(Spectral, LeadingModeOnAugmentedTask) {
    const Dataset d = augment_bias(build_hierarchy({}));
    const ModeDecomposition dec = task_svd(d);
    const LeadingModeReport rep = leading_mode_check(dec, d);
    EXPECT_GE(rep.u_alignment, 1.0 - 1e-8);
    EXPECT_GE(rep.v_alignment, 1.0 - 1e-8);
    EXPECT_LE(rep.outputs.transfer_residual, 1e-10);
    EXPECT_LE(rep.inputs.transfer_residual, 1e-10);
    EXPECT_TRUE(rep.hypothesis_holds);
    EXPECT_TRUE(rep.leading_is_ocs);
    EXPECT_LE(rep.outer_residual, 1e-8);
    // Y^T Y has zero entries (items in different branches share only the root) but is positive.
    EXPECT_TRUE(rep.irreducible);
}

TEST(Spectral, EigenTransferValues) {
    const Dataset d = build_hierarchy({});
    const EigenTransfer t = eigen_transfer(d.Y);
    EXPECT_TRUE(t.ones_is_eigenvector);
    EXPECT_NEAR(t.lambda, 15.0, 1e-12);
    EXPECT_NEAR(t.mean_lambda, 15.0, 1e-12);
}

TEST(Spectral, HypothesisFailureIsReported) {
    Dataset d;
    d.X = Matrix::Identity(3, 3);
    d.Y = Matrix(2, 3);
    d.Y << 1, 1, 0, 0, 0, 1;
    d.Y(0, 2) = 0.3;
    d.level_slices = {{0, 2}};
    const ModeDecomposition dec = task_svd(d);
    const LeadingModeReport rep = leading_mode_check(dec, d);
    EXPECT_FALSE(rep.hypothesis_holds);
    EXPECT_FALSE(rep.warnings.empty());
}

TEST(Spectral, ConstantModeAlignmentCorrelated) {
    CorrelatedInputSpec spec;
    const Matrix x = correlated_inputs(spec);
    const auto top = constant_mode_alignment(x.transpose() * x, 2);
    ASSERT_EQ(top.size(), 2u);
    EXPECT_GE(top[0].alignment, 0.999);
    EXPECT_LT(top[1].alignment, 0.1);
    EXPECT_GT(top[0].eigenvalue, 5.0 * top[1].eigenvalue);
}

TEST(Spectral, ConstantModeAlignmentDegenerate) {
    const auto top = constant_mode_alignment(Matrix::Identity(4, 4), 1);
    EXPECT_TRUE(top[0].degenerate);
    EXPECT_THROW(constant_mode_alignment(Matrix::Ones(2, 3), 1), Error);
}

TEST(Spectral, RankTruncation) {
    Dataset d;
    d.X = Matrix::Identity(3, 3);
    d.Y = Matrix::Zero(2, 3);
    d.Y(0, 0) = 1.0;
    d.level_slices = {{0, 2}};
    const ModeDecomposition dec = task_svd(d);
    EXPECT_EQ(dec.rank(), 1);
}

TEST(Spectral, SpectrumCsv) {
    std::ostringstream out;
    write_spectrum_csv(out, task_svd(build_hierarchy({})));
    const std::string s = out.str();
    EXPECT_EQ(s.rfind("mode,singular_value,input_eigenvalue,block,is_ocs\n", 0), 0u);
    EXPECT_NE(s.find("\n0,0.48412291827592"), std::string::npos);
}
