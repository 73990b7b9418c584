#include "ocs/trainer.hpp"

#include <cstdio>
#include <ostream>
#include <random>

namespace ocs {

namespace {

constexpr Index kMaxLoggedOutputEntries = 1'000'000;

[[noreturn]] void fail(const std::string& message) { throw Error("trainer", message); }

Matrix gaussian(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, stddev);
    Matrix m(rows, cols);
    for (Index c = 0; c < cols; ++c)
        for (Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
    return m;
}

// rows x cols with orthonormal columns (rows >= cols).
Matrix orthonormal_columns(Index rows, Index cols, std::mt19937_64& rng) {
    const Matrix g = gaussian(rows, cols, 1.0, rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
    // Fix signs so the factor is a deterministic function of g.
    const Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (Index c = 0; c < cols; ++c)
        if (r(c, c) < 0.0) q.col(c) *= -1.0;
    return q;
}

Matrix hidden_activity(const NetworkState& net, const Matrix& X) {
    Matrix h = net.W1 * X;
    if (net.b1) h.colwise() += *net.b1;
    return h;
}

void check_dataset(const NetworkState& net, const Dataset& d) {
    if (net.input_dim() != d.input_dim() || net.output_dim() != d.output_dim())
        fail("network maps " + std::to_string(net.input_dim()) + " -> " + std::to_string(net.output_dim()) +
             " but dataset '" + d.name + "' is " + std::to_string(d.input_dim()) + " -> " + std::to_string(d.output_dim()));
}

} // namespace

const char* to_string(BiasPlacement b) {
    switch (b) {
    case BiasPlacement::none: return "none";
    case BiasPlacement::input: return "input";
    case BiasPlacement::output: return "output";
    case BiasPlacement::both: return "both";
    }
    return "?";
}

const char* to_string(InitMode m) {
    switch (m) {
    case InitMode::spectral: return "spectral";
    case InitMode::random_small: return "random_small";
    case InitMode::exact_isotropy: return "exact_isotropy";
    }
    return "?";
}

BiasPlacement parse_bias_placement(const std::string& text) {
    if (text == "none") return BiasPlacement::none;
    if (text == "input") return BiasPlacement::input;
    if (text == "output") return BiasPlacement::output;
    if (text == "both") return BiasPlacement::both;
    fail("unknown bias placement '" + text + "' (expected none, input, output or both)");
}

InitMode parse_init_mode(const std::string& text) {
    if (text == "spectral") return InitMode::spectral;
    if (text == "random_small") return InitMode::random_small;
    if (text == "exact_isotropy") return InitMode::exact_isotropy;
    fail("unknown init mode '" + text + "' (expected spectral, random_small or exact_isotropy)");
}

Depth parse_depth(const std::string& text) {
    if (text == "deep") return Depth::deep;
    if (text == "shallow") return Depth::shallow;
    fail("unknown depth '" + text + "' (expected deep or shallow)");
}

NetworkState init_network(const NetworkConfig& cfg, const ModeDecomposition* dec) {
    if (cfg.input_dim < 1 || cfg.output_dim < 1) fail("network needs positive input and output sizes");
    if (!(cfg.init_scale > 0.0)) fail("init_scale must be positive");
    std::mt19937_64 rng(cfg.seed);
    NetworkState net;
    net.depth = cfg.depth;

    if (cfg.depth == Depth::shallow) {
        if (cfg.bias != BiasPlacement::none)
            fail("shallow networks take their bias through a bias-augmented dataset; set bias to none");
        switch (cfg.init) {
        case InitMode::spectral:
            if (!dec) fail("spectral init needs a mode decomposition");
            if (dec->U.rows() != cfg.output_dim || dec->V.rows() != cfg.input_dim)
                fail("decomposition shape does not match the shallow network");
            net.Ws = cfg.init_scale * dec->U * dec->V.transpose();
            break;
        case InitMode::random_small:
            net.Ws = gaussian(cfg.output_dim, cfg.input_dim, cfg.init_scale / std::sqrt(double(cfg.input_dim)), rng);
            break;
        case InitMode::exact_isotropy:
            fail("exact_isotropy init applies to deep networks only");
        }
        return net;
    }

    if (cfg.hidden_dim < 1) fail("deep networks need a positive hidden size");
    const bool in_bias = has_input_bias(cfg.bias);
    switch (cfg.init) {
    case InitMode::spectral: {
        if (!dec) fail("spectral init needs a mode decomposition");
        const Index aug_in = cfg.input_dim + (in_bias ? 1 : 0);
        if (dec->U.rows() != cfg.output_dim || dec->V.rows() != aug_in)
            fail("decomposition is " + std::to_string(dec->U.rows()) + " x " + std::to_string(dec->V.rows()) +
                 ", network needs " + std::to_string(cfg.output_dim) + " x " + std::to_string(aug_in) +
                 (in_bias ? " (bias-augmented task)" : ""));
        const Index r = dec->rank();
        if (cfg.hidden_dim < r)
            fail("spectral init needs hidden_dim >= rank (" + std::to_string(cfg.hidden_dim) + " < " + std::to_string(r) + ")");
        const Matrix R = orthonormal_columns(cfg.hidden_dim, r, rng);
        const double root = std::sqrt(cfg.init_scale);
        net.W2 = root * dec->U * R.transpose();
        const Matrix w1_aug = root * R * dec->V.transpose();
        if (in_bias) {
            net.b1 = w1_aug.col(0);
            net.W1 = w1_aug.rightCols(cfg.input_dim);
        } else {
            net.W1 = w1_aug;
        }
        net.R = R;
        break;
    }
    case InitMode::random_small: {
        const double stddev = cfg.init_scale / std::sqrt(double(cfg.hidden_dim));
        net.W1 = gaussian(cfg.hidden_dim, cfg.input_dim, stddev, rng);
        net.W2 = gaussian(cfg.output_dim, cfg.hidden_dim, stddev, rng);
        break;
    }
    case InitMode::exact_isotropy: {
        if (cfg.hidden_dim < std::max(cfg.input_dim, cfg.output_dim))
            fail("exact_isotropy needs hidden_dim >= max(input_dim, output_dim)");
        net.W1 = cfg.init_scale * orthonormal_columns(cfg.hidden_dim, cfg.input_dim, rng);
        net.W2 = cfg.init_scale * orthonormal_columns(cfg.hidden_dim, cfg.output_dim, rng).transpose();
        break;
    }
    }
    if (in_bias && !net.b1) net.b1 = Vector::Zero(cfg.hidden_dim);
    if (has_output_bias(cfg.bias)) net.b2 = Vector::Zero(cfg.output_dim);
    return net;
}

Matrix forward(const NetworkState& net, const Matrix& X) {
    if (net.depth == Depth::shallow) return net.Ws * X;
    Matrix y = net.W2 * hidden_activity(net, X);
    if (net.b2) y.colwise() += *net.b2;
    return y;
}

double loss(const NetworkState& net, const Dataset& d) {
    check_dataset(net, d);
    return 0.5 * (d.Y - forward(net, d.X)).squaredNorm();
}

Gradients gradients(const NetworkState& net, const Dataset& d) {
    check_dataset(net, d);
    Gradients g;
    if (net.depth == Depth::shallow) {
        const Matrix e = d.Y - net.Ws * d.X;
        g.Ws = -e * d.X.transpose();
        return g;
    }
    const Matrix h = hidden_activity(net, d.X);
    Matrix yhat = net.W2 * h;
    if (net.b2) yhat.colwise() += *net.b2;
    const Matrix e = d.Y - yhat;
    const Matrix back = net.W2.transpose() * e; // -dL/dH
    g.W2 = -e * h.transpose();
    g.W1 = -back * d.X.transpose();
    if (net.b1) g.b1 = -back.rowwise().sum();
    if (net.b2) g.b2 = -e.rowwise().sum();
    return g;
}

Vector flatten_parameters(const NetworkState& net) {
    std::vector<const double*> parts;
    std::vector<Index> sizes;
    auto add = [&](const double* p, Index n) {
        parts.push_back(p);
        sizes.push_back(n);
    };
    if (net.depth == Depth::shallow) {
        add(net.Ws.data(), net.Ws.size());
    } else {
        add(net.W2.data(), net.W2.size());
        add(net.W1.data(), net.W1.size());
        if (net.b1) add(net.b1->data(), net.b1->size());
        if (net.b2) add(net.b2->data(), net.b2->size());
    }
    Index total = 0;
    for (Index n : sizes) total += n;
    Vector theta(total);
    Index offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        theta.segment(offset, sizes[k]) = Eigen::Map<const Vector>(parts[k], sizes[k]);
        offset += sizes[k];
    }
    return theta;
}

void assign_parameters(NetworkState& net, const Vector& theta) {
    Index offset = 0;
    auto take = [&](double* p, Index n) {
        if (offset + n > theta.size()) fail("parameter vector is too short");
        Eigen::Map<Vector>(p, n) = theta.segment(offset, n);
        offset += n;
    };
    if (net.depth == Depth::shallow) {
        take(net.Ws.data(), net.Ws.size());
    } else {
        take(net.W2.data(), net.W2.size());
        take(net.W1.data(), net.W1.size());
        if (net.b1) take(net.b1->data(), net.b1->size());
        if (net.b2) take(net.b2->data(), net.b2->size());
    }
    if (offset != theta.size()) fail("parameter vector is too long");
}

Vector flatten_gradients(const NetworkState& net, const Gradients& g) {
    NetworkState shaped = net;
    if (net.depth == Depth::shallow) {
        shaped.Ws = g.Ws;
    } else {
        shaped.W2 = g.W2;
        shaped.W1 = g.W1;
        shaped.b1 = g.b1;
        shaped.b2 = g.b2;
    }
    return flatten_parameters(shaped);
}

double time_constant(const TrainConfig& cfg, Index samples) {
    if (!(cfg.learning_rate > 0.0) || samples < 1) return std::numeric_limits<double>::infinity();
    return 1.0 / (static_cast<double>(samples) * cfg.learning_rate);
}

Matrix effective_weights(const NetworkState& net) {
    if (net.depth == Depth::shallow) return net.Ws;
    if (!net.b1) return net.W2 * net.W1;
    Matrix w1_aug(net.W1.rows(), net.W1.cols() + 1);
    w1_aug.col(0) = *net.b1;
    w1_aug.rightCols(net.W1.cols()) = net.W1;
    return net.W2 * w1_aug;
}

Matrix mode_projection(const NetworkState& net, const ModeDecomposition& dec) {
    const Matrix w = effective_weights(net);
    if (w.rows() != dec.U.rows() || w.cols() != dec.V.rows())
        fail("effective weight is " + std::to_string(w.rows()) + " x " + std::to_string(w.cols()) +
             " but the decomposition expects " + std::to_string(dec.U.rows()) + " x " + std::to_string(dec.V.rows()));
    return dec.U.transpose() * w * dec.V;
}

Vector extract_mode_strengths(const NetworkState& net, const ModeDecomposition& dec) {
    return mode_projection(net, dec).diagonal();
}

Vector block_strengths(const Matrix& projection, const ModeDecomposition& dec) {
    Vector out(static_cast<Index>(dec.blocks.size()));
    for (std::size_t b = 0; b < dec.blocks.size(); ++b) {
        const auto& blk = dec.blocks[b];
        out(static_cast<Index>(b)) =
            projection.block(blk.start, blk.start, blk.size(), blk.size()).norm() / std::sqrt(double(blk.size()));
    }
    return out;
}

TrajectorySeries train(NetworkState& net, const Dataset& d, const TrainConfig& cfg, const ModeDecomposition* dec) {
    check_dataset(net, d);
    if (cfg.learning_rate < 0.0) fail("learning rate must be non-negative");
    if (cfg.steps < 0 || cfg.log_stride < 1) fail("steps must be >= 0 and log_stride >= 1");

    TrajectorySeries series;
    series.tau = time_constant(cfg, d.samples());
    if (series.tau < 10.0)
        series.warnings.push_back("gradient-flow guard: tau = 1/(N eps) = " + std::to_string(series.tau) +
                                  " < 10; discrete steps do not track gradient flow");
    const bool log_outputs = cfg.log_outputs && d.output_dim() * d.samples() <= kMaxLoggedOutputEntries;
    if (cfg.log_outputs && !log_outputs) series.warnings.push_back("output logging disabled: Yhat exceeds 1e6 entries");

    double initial = 0.0;
    auto record = [&](Index step, const Matrix& yhat, double current) {
        series.steps.push_back(step);
        series.loss.push_back(current);
        if (dec) series.projections.push_back(mode_projection(net, *dec));
        if (log_outputs) series.outputs.push_back(yhat);
        series.b1_norm.push_back(net.b1 ? net.b1->norm() : 0.0);
        series.b2_norm.push_back(net.b2 ? net.b2->norm() : 0.0);
    };

    const double eps = cfg.learning_rate;
    for (Index step = 0;; ++step) {
        const Matrix yhat = forward(net, d.X);
        const double current = 0.5 * (d.Y - yhat).squaredNorm();
        if (step == 0) initial = current;
        if (!std::isfinite(current) || current > 1e6 * std::max(initial, 1e-300)) throw DivergenceError(step, current, initial);
        if (step % cfg.log_stride == 0 || step == cfg.steps) record(step, yhat, current);
        if (step == cfg.steps) break;

        const Gradients g = gradients(net, d);
        if (net.depth == Depth::shallow) {
            net.Ws -= eps * g.Ws;
        } else {
            net.W2 -= eps * g.W2;
            net.W1 -= eps * g.W1;
            if (net.b1) *net.b1 -= eps * *g.b1;
            if (net.b2) *net.b2 -= eps * *g.b2;
        }
    }
    return series;
}

BiasGradientReport bias_gradient_diagnostics(const NetworkState& net, const Dataset& d) {
    if (net.depth != Depth::deep || (!net.b1 && !net.b2)) fail("bias_gradient_diagnostics needs a deep network with a bias term");
    const Gradients g = gradients(net, d);
    const double inv_n = 1.0 / static_cast<double>(d.samples());
    BiasGradientReport rep;
    if (g.b1) {
        rep.grad_b1 = inv_n * *g.b1;
        rep.norm_b1 = rep.grad_b1->norm();
        if (net.R) rep.b1_mode_projections = net.R->transpose() * *net.b1;
    }
    if (g.b2) {
        rep.grad_b2 = inv_n * *g.b2;
        rep.norm_b2 = rep.grad_b2->norm();
    }
    if (g.b1 && g.b2 && rep.norm_b2 > 0.0) rep.ratio = rep.norm_b1 / rep.norm_b2;
    rep.mean_residual = (ocs_vector(d) - forward(net, d.X).rowwise().mean()).norm();
    return rep;
}

void write_trajectory_csv(std::ostream& out, const TrajectorySeries& series, bool include_outputs) {
    out << "step,series,index,value\n";
    char buf[128];
    auto row = [&](Index step, const char* name, Index index, double value) {
        std::snprintf(buf, sizeof buf, "%ld,%s,%ld,%.17g\n", static_cast<long>(step), name, static_cast<long>(index), value);
        out << buf;
    };
    for (std::size_t k = 0; k < series.steps.size(); ++k) {
        const Index step = series.steps[k];
        row(step, "loss", 0, series.loss[k]);
        if (k < series.projections.size()) {
            const Matrix& p = series.projections[k];
            for (Index a = 0; a < p.rows(); ++a) row(step, "mode", a, p(a, a));
        }
        row(step, "b1_norm", 0, series.b1_norm[k]);
        row(step, "b2_norm", 0, series.b2_norm[k]);
        if (include_outputs && k < series.outputs.size()) {
            const Matrix& y = series.outputs[k];
            for (Index m = 0; m < y.rows(); ++m)
                for (Index i = 0; i < y.cols(); ++i) row(step, "output", m * y.cols() + i, y(m, i));
        }
    }
}

} // namespace ocs
