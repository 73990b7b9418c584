#include "ocs/ntk.hpp"

#include <cstdio>
#include <ostream>

namespace ocs {

namespace {

[[noreturn]] void fail(const std::string& message) { throw Error("ntk", message); }

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index r = 0; r < a.rows(); ++r)
        for (Index c = 0; c < a.cols(); ++c) out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
    return out;
}

void guard_size(Index outputs, Index samples) {
    if (outputs * samples > kNtkMaxSize)
        fail("N_out * N = " + std::to_string(outputs * samples) + " exceeds the dense limit of " + std::to_string(kNtkMaxSize));
}

// Row-major flattening, index m * N + i.
Vector vec_rows(const Matrix& m) {
    Vector v(m.size());
    for (Index r = 0; r < m.rows(); ++r) v.segment(r * m.cols(), m.cols()) = m.row(r).transpose();
    return v;
}

Matrix unvec_rows(const Vector& v, Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) m.row(r) = v.segment(r * cols, cols).transpose();
    return m;
}

NtkBlockError block_error(const std::string& name, const Matrix& a, const Matrix& b) {
    const Matrix diff = (a - b).cwiseAbs();
    return {name, diff.maxCoeff(), diff.mean()};
}

} // namespace

const char* to_string(OutputBiasTerm t) { return t == OutputBiasTerm::per_unit ? "per_unit" : "all_ones"; }

OutputBiasTerm parse_output_bias_term(const std::string& text) {
    if (text == "per_unit") return OutputBiasTerm::per_unit;
    if (text == "all_ones") return OutputBiasTerm::all_ones;
    fail("unknown output bias term '" + text + "' (expected per_unit or all_ones)");
}

NtkBlocks ntk_direct_blocks(const NetworkState& net, const Dataset& d) {
    if (net.depth != Depth::deep) fail("the NTK is defined here for two-layer networks");
    if (net.input_dim() != d.input_dim() || net.output_dim() != d.output_dim()) fail("network and dataset shapes differ");
    const Index no = d.output_dim();
    const Index n = d.samples();
    guard_size(no, n);
    Matrix h = net.W1 * d.X;
    if (net.b1) h.colwise() += *net.b1;
    const Matrix eye = Matrix::Identity(no, no);
    const Matrix ww = net.W2 * net.W2.transpose();
    const Matrix ones = Matrix::Ones(n, n);

    NtkBlocks b;
    b.w2 = kron(eye, h.transpose() * h);
    b.w1 = kron(ww, d.X.transpose() * d.X);
    b.b1 = net.b1 ? kron(ww, ones) : Matrix::Zero(no * n, no * n);
    b.b2 = net.b2 ? kron(eye, ones) : Matrix::Zero(no * n, no * n);
    return b;
}

NtkTensor ntk_direct(const NetworkState& net, const Dataset& d) {
    const NtkBlocks b = ntk_direct_blocks(net, d);
    return {d.output_dim(), d.samples(), b.w2 + b.w1 + b.b1 + b.b2};
}

NtkTensor ntk_closed_form(double sigma, const Dataset& d, BiasPlacement bias, OutputBiasTerm term) {
    const Index no = d.output_dim();
    const Index n = d.samples();
    guard_size(no, n);
    const Matrix ones = Matrix::Ones(n, n);
    Matrix inner = 2.0 * d.X.transpose() * d.X;
    if (has_input_bias(bias)) inner += ones;
    Matrix k = sigma * sigma * kron(Matrix::Identity(no, no), inner);
    if (has_output_bias(bias))
        k += kron(term == OutputBiasTerm::per_unit ? Matrix(Matrix::Identity(no, no)) : Matrix(Matrix::Ones(no, no)), ones);
    return {no, n, k};
}

NtkComparison ntk_compare(const NetworkState& net, const Dataset& d, double sigma, InitMode init, OutputBiasTerm term) {
    NtkComparison c;
    if (init != InitMode::exact_isotropy)
        c.warnings.push_back(std::string("network was initialized with ") + to_string(init) +
                             "; the closed form is exact only for exact_isotropy");
    if ((net.b1 && net.b1->norm() != 0.0) || (net.b2 && net.b2->norm() != 0.0))
        c.warnings.push_back("biases are non-zero; the closed form assumes zero biases");

    const BiasPlacement bias = net.b1 ? (net.b2 ? BiasPlacement::both : BiasPlacement::input)
                                      : (net.b2 ? BiasPlacement::output : BiasPlacement::none);
    const NtkBlocks blocks = ntk_direct_blocks(net, d);
    const Matrix direct = blocks.w2 + blocks.w1 + blocks.b1 + blocks.b2;
    const NtkTensor closed = ntk_closed_form(sigma, d, bias, term);

    const Index no = d.output_dim();
    const Index n = d.samples();
    const Matrix eye = Matrix::Identity(no, no);
    const Matrix ones = Matrix::Ones(n, n);
    const Matrix zero = Matrix::Zero(no * n, no * n);
    c.blocks.push_back(block_error("weights", blocks.w2 + blocks.w1, sigma * sigma * kron(eye, 2.0 * d.X.transpose() * d.X)));
    c.blocks.push_back(block_error("input_bias", blocks.b1, net.b1 ? Matrix(sigma * sigma * kron(eye, ones)) : zero));
    const Matrix b2_closed = net.b2 ? kron(term == OutputBiasTerm::per_unit ? eye : Matrix::Ones(no, no), ones) : zero;
    c.blocks.push_back(block_error("output_bias", blocks.b2, b2_closed));

    const Matrix diff = direct - closed.values;
    c.max_abs = diff.cwiseAbs().maxCoeff();
    const double scale = closed.values.norm();
    c.relative_frobenius = scale == 0.0 ? diff.norm() : diff.norm() / scale;
    c.symmetry_residual = (direct - direct.transpose()).norm();
    c.trace = direct.trace();
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (direct + direct.transpose()), Eigen::EigenvaluesOnly);
    c.min_eigenvalue = es.eigenvalues()(0);
    if (c.min_eigenvalue < -1e-8 * std::max(c.trace, 1e-300))
        c.warnings.push_back("direct NTK has a negative eigenvalue " + std::to_string(c.min_eigenvalue));
    return c;
}

Matrix ntk_output_step(const NetworkState& net, const Dataset& d, double eps) {
    const NtkTensor k = ntk_direct(net, d);
    const Matrix residual = d.Y - forward(net, d.X);
    return unvec_rows(eps * (k.values * vec_rows(residual)), d.output_dim(), d.samples());
}

OutputStepCheck ntk_one_step_check(const NetworkState& net, const Dataset& d, double eps) {
    OutputStepCheck r;
    r.predicted = ntk_output_step(net, d, eps);
    NetworkState next = net;
    TrainConfig cfg;
    cfg.learning_rate = eps;
    cfg.steps = 1;
    cfg.log_outputs = false;
    train(next, d, cfg);
    r.actual = forward(next, d.X) - forward(net, d.X);
    const double scale = r.actual.norm();
    r.relative_error = scale == 0.0 ? (r.predicted.norm() == 0.0 ? 0.0 : INFINITY) : (r.predicted - r.actual).norm() / scale;
    return r;
}

void write_ntk_csv(std::ostream& out, const NtkTensor& k) {
    out << "row,col,value\n";
    char buf[96];
    for (Index r = 0; r < k.values.rows(); ++r)
        for (Index c = 0; c < k.values.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%ld,%ld,%.17g\n", static_cast<long>(r), static_cast<long>(c), k.values(r, c));
            out << buf;
        }
}

void write_ntk_report(std::ostream& out, const NtkComparison& c) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "max_abs_error %.6e\nrelative_frobenius %.6e\nsymmetry_residual %.3e\nmin_eigenvalue %.6e\ntrace %.6e\n",
                  c.max_abs, c.relative_frobenius, c.symmetry_residual, c.min_eigenvalue, c.trace);
    out << buf;
    for (const auto& b : c.blocks) {
        std::snprintf(buf, sizeof buf, "block %-12s max_abs %.6e mean_abs %.6e\n", b.name.c_str(), b.max_abs, b.mean_abs);
        out << buf;
    }
    for (const auto& w : c.warnings) out << "warning " << w << '\n';
}

} // namespace ocs
