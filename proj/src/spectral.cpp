#include "ocs/spectral.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

namespace ocs {

namespace {

[[noreturn]] void fail(const std::string& message) { throw Error("spectral", message); }

// Connectivity of the non-zero pattern of a symmetric matrix.
bool is_irreducible(const Matrix& m) {
    const Index n = m.rows();
    if (n == 0) return false;
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<Index> stack{0};
    seen[0] = 1;
    Index visited = 1;
    while (!stack.empty()) {
        const Index i = stack.back();
        stack.pop_back();
        for (Index j = 0; j < n; ++j) {
            if (!seen[j] && m(i, j) != 0.0) {
                seen[j] = 1;
                ++visited;
                stack.push_back(j);
            }
        }
    }
    return visited == n;
}

} // namespace

const ModeBlock& ModeDecomposition::block_of(Index alpha) const {
    for (const auto& b : blocks)
        if (alpha >= b.start && alpha < b.end) return b;
    fail("mode index " + std::to_string(alpha) + " out of range");
}

CorrelationPair correlation_matrices(const Dataset& d) {
    if (d.X.cols() != d.Y.cols() || d.samples() == 0) fail("dataset '" + d.name + "' has inconsistent or empty samples");
    const double inv_n = 1.0 / static_cast<double>(d.samples());
    CorrelationPair pair;
    pair.sigma_yx = inv_n * d.Y * d.X.transpose();
    pair.sigma_x = inv_n * d.X * d.X.transpose();
    return pair;
}

CommutatorResult commutator_check(const Dataset& d, double tol) {
    const Matrix yy = d.Y.transpose() * d.Y;
    const Matrix xx = d.X.transpose() * d.X;
    const double scale = yy.norm() * xx.norm();
    CommutatorResult r;
    r.residual = scale == 0.0 ? 0.0 : (yy * xx - xx * yy).norm() / scale;
    r.commutes = r.residual <= tol;
    return r;
}

ModeDecomposition task_svd(const CorrelationPair& pair, const TaskSvdOptions& options) {
    const Matrix& syx = pair.sigma_yx;
    if (pair.sigma_x.rows() != syx.cols() || pair.sigma_x.cols() != syx.cols())
        fail("Sigma^x must be " + std::to_string(syx.cols()) + " x " + std::to_string(syx.cols()));
    if (!syx.allFinite() || !pair.sigma_x.allFinite()) fail("correlation matrices contain non-finite entries");

    ModeDecomposition dec;
    Eigen::JacobiSVD<Matrix> svd(syx, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) {
        const Vector sv = svd.singularValues();
        fail("SVD did not converge (largest singular value " + std::to_string(sv.size() ? sv(0) : 0.0) +
             ", smallest " + std::to_string(sv.size() ? sv(sv.size() - 1) : 0.0) + ")");
    }
    const Vector& sv = svd.singularValues();
    const double s0 = sv.size() ? sv(0) : 0.0;
    Index r = 0;
    while (r < sv.size() && s0 > 0.0 && sv(r) > options.rank_tolerance * s0) ++r;

    dec.S = sv.head(r);
    dec.U = svd.matrixU().leftCols(r);
    dec.V = svd.matrixV().leftCols(r);

    // Make the largest-magnitude entry of each right singular vector positive.
    for (Index a = 0; a < r; ++a) {
        const double peak = dec.V.col(a).cwiseAbs().maxCoeff();
        Index pivot = 0;
        while (std::abs(dec.V(pivot, a)) < peak * (1.0 - 1e-12)) ++pivot;
        if (dec.V(pivot, a) < 0.0) {
            dec.V.col(a) *= -1.0;
            dec.U.col(a) *= -1.0;
        }
    }

    for (Index a = 0; a < r;) {
        Index b = a + 1;
        while (b < r && std::abs(dec.S(b) - dec.S(b - 1)) <= options.degeneracy_tolerance * s0) ++b;
        dec.blocks.push_back({a, b});
        a = b;
    }

    Vector d(r);
    for (Index a = 0; a < r; ++a) d(a) = dec.V.col(a).dot(pair.sigma_x * dec.V.col(a));
    const double sx_norm = pair.sigma_x.norm();
    dec.joint_residual = sx_norm == 0.0 ? 0.0 : (pair.sigma_x * dec.V - dec.V * d.asDiagonal()).norm() / sx_norm;
    if (options.commutes) {
        dec.D = d;
        if (dec.joint_residual > 1e-8)
            dec.warnings.push_back("Sigma^x is not diagonal in V (residual " + std::to_string(dec.joint_residual) + ")");
    } else {
        dec.warnings.push_back("Y^T Y and X^T X do not commute; input eigenvalues are not aligned with V");
    }

    if (options.mean_input && options.mean_input->norm() > 0.0) {
        double best = options.ocs_alignment;
        for (Index a = 0; a < r; ++a) {
            const double al = alignment(dec.V.col(a), *options.mean_input);
            if (al >= best) {
                best = al;
                dec.ocs_index = a;
            }
        }
        if (dec.ocs_index && dec.block_of(*dec.ocs_index).degenerate())
            dec.warnings.push_back("OCS mode lies in a degenerate block");
    }
    return dec;
}

ModeDecomposition task_svd(const Dataset& d) {
    TaskSvdOptions options;
    options.commutes = commutator_check(d).commutes;
    options.mean_input = mean_input(d);
    return task_svd(correlation_matrices(d), options);
}

EigenTransfer eigen_transfer(const Matrix& M, double tol) {
    EigenTransfer t;
    const Index n = M.cols();
    if (n == 0) return t;
    const Vector ones = Vector::Ones(n);
    const Vector g1 = M.transpose() * (M * ones);
    t.lambda = ones.dot(g1) / static_cast<double>(n);
    if (t.lambda == 0.0) {
        t.ones_residual = g1.norm();
        t.ones_is_eigenvector = t.ones_residual == 0.0;
        return t;
    }
    t.ones_residual = (g1 - t.lambda * ones).norm() / (std::abs(t.lambda) * std::sqrt(static_cast<double>(n)));
    t.ones_is_eigenvector = t.ones_residual <= tol;

    const Vector m = M.rowwise().mean();
    const double mm = m.squaredNorm();
    if (mm == 0.0) return t;
    const Vector mmt_m = M * (M.transpose() * m);
    t.mean_lambda = m.dot(mmt_m) / mm;
    t.transfer_residual = (mmt_m - t.lambda * m).norm() / (std::abs(t.lambda) * std::sqrt(mm));
    return t;
}

LeadingModeReport leading_mode_check(const ModeDecomposition& dec, const Dataset& d) {
    if (dec.rank() < 1) fail("leading_mode_check needs at least one mode");
    LeadingModeReport rep;
    const Vector ybar = ocs_vector(d);
    const Vector xbar = mean_input(d);
    rep.u_alignment = alignment(dec.U.col(0), ybar);
    rep.v_alignment = alignment(dec.V.col(0), xbar);
    rep.gap = dec.rank() > 1 ? dec.S(0) - dec.S(1) : dec.S(0);
    rep.leading_is_ocs = dec.ocs_index && *dec.ocs_index == 0;

    rep.outputs = eigen_transfer(d.Y);
    rep.inputs = eigen_transfer(d.X);

    const Matrix yy = d.Y.transpose() * d.Y;
    const Matrix xx = d.X.transpose() * d.X;
    rep.perron_positive = (yy.array() > 0.0).all() && (xx.array() > 0.0).all();
    rep.irreducible = is_irreducible(yy) && is_irreducible(xx);

    const bool non_degenerate = !dec.blocks.front().degenerate();
    rep.hypothesis_holds = rep.outputs.ones_is_eigenvector && rep.inputs.ones_is_eigenvector && non_degenerate;
    if (!rep.outputs.ones_is_eigenvector)
        rep.warnings.push_back("hypothesis not satisfied: Y^T Y 1 is not proportional to 1 (residual " +
                               std::to_string(rep.outputs.ones_residual) + ")");
    if (!rep.inputs.ones_is_eigenvector)
        rep.warnings.push_back("hypothesis not satisfied: X^T X 1 is not proportional to 1 (residual " +
                               std::to_string(rep.inputs.ones_residual) + ")");
    if (!non_degenerate) rep.warnings.push_back("leading singular value is degenerate");
    if (rep.hypothesis_holds && !rep.perron_positive)
        rep.warnings.push_back(rep.irreducible
                                   ? "similarity matrices have zero entries but are irreducible; leading status reported, not guaranteed"
                                   : "similarity matrices are reducible; leading status reported, not guaranteed");

    if (ybar.norm() > 0.0 && xbar.norm() > 0.0) {
        const double sign = (dec.U.col(0).dot(ybar) >= 0.0 ? 1.0 : -1.0) * (dec.V.col(0).dot(xbar) >= 0.0 ? 1.0 : -1.0);
        const Matrix expected = sign * (ybar.normalized() * xbar.normalized().transpose());
        rep.outer_residual = (dec.U.col(0) * dec.V.col(0).transpose() - expected).norm();
    }
    return rep;
}

std::vector<EigenAlignment> constant_mode_alignment(const Matrix& similarity, Index k) {
    if (similarity.rows() != similarity.cols()) fail("similarity matrix must be square");
    const double sym = (similarity - similarity.transpose()).norm();
    if (sym > 1e-10 * std::max(1.0, similarity.norm())) fail("similarity matrix must be symmetric");
    const Index n = similarity.rows();
    k = std::min(k, n);
    Eigen::SelfAdjointEigenSolver<Matrix> es(similarity);
    if (es.info() != Eigen::Success) fail("eigendecomposition did not converge");
    const Vector& ev = es.eigenvalues(); // ascending
    const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    const Vector ones = Vector::Ones(n);

    std::vector<EigenAlignment> out;
    for (Index j = 0; j < k; ++j) {
        const Index idx = n - 1 - j;
        EigenAlignment e;
        e.eigenvalue = ev(idx);
        e.alignment = alignment(es.eigenvectors().col(idx), ones);
        const bool below = idx > 0 && std::abs(ev(idx) - ev(idx - 1)) <= 1e-9 * scale;
        const bool above = idx + 1 < n && std::abs(ev(idx + 1) - ev(idx)) <= 1e-9 * scale;
        e.degenerate = below || above;
        out.push_back(e);
    }
    return out;
}

double ones_mode_eigenvalue(const Dataset& d) {
    const double n = static_cast<double>(d.samples());
    const Vector x1 = d.X * Vector::Ones(d.samples());
    return x1.squaredNorm() / (n * n);
}

void write_spectrum_csv(std::ostream& out, const ModeDecomposition& dec) {
    out << "mode,singular_value,input_eigenvalue,block,is_ocs\n";
    char buf[128];
    for (Index a = 0; a < dec.rank(); ++a) {
        Index block = 0;
        for (std::size_t b = 0; b < dec.blocks.size(); ++b)
            if (a >= dec.blocks[b].start && a < dec.blocks[b].end) block = static_cast<Index>(b);
        std::snprintf(buf, sizeof buf, "%ld,%.17g,", static_cast<long>(a), dec.S(a));
        out << buf;
        if (dec.D) {
            std::snprintf(buf, sizeof buf, "%.17g", (*dec.D)(a));
            out << buf;
        }
        out << ',' << block << ',' << (dec.ocs_index && *dec.ocs_index == a ? 1 : 0) << '\n';
    }
}

} // namespace ocs
