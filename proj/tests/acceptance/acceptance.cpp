// One PASS/FAIL line per acceptance criterion. Tolerances are fixed here;
// thresholds tied to a preset are read from that preset's "thresholds" block.
#include "ocs/experiment.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>

using namespace ocs;

namespace {

struct Verdict {
    int id;
    std::string name;
    bool ok;
    std::string detail;
};

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

std::string opt(const std::optional<double>& v) { return v ? fmt("%.0f", *v) : "absent"; }

ExperimentConfig preset(const std::string& name) { return load_experiment(preset_path(name, OCS_TEST_PRESET_DIR)); }

double threshold(const ExperimentConfig& cfg, const std::string& key) {
    const auto it = cfg.thresholds.find(key);
    if (it == cfg.thresholds.end()) throw Error("acceptance", "preset " + cfg.name + " records no threshold '" + key + "'");
    return it->second;
}

std::vector<ConditionResult> run_all(const ExperimentConfig& cfg) {
    std::vector<ConditionResult> out;
    for (const auto& c : cfg.conditions) out.push_back(run_condition(c));
    return out;
}

const ConditionResult& find(const std::vector<ConditionResult>& rs, const std::string& name) {
    for (const auto& r : rs)
        if (r.name == name) return r;
    throw Error("acceptance", "no condition " + name);
}

Dataset hierarchy() { return build_hierarchy(HierarchySpec{}); }

Verdict trajectory_exactness() {
    const ExperimentConfig cfg = preset("fig2");
    const double limit = threshold(cfg, "max_relative_deviation");
    const auto start = std::chrono::steady_clock::now();
    const auto rs = run_all(cfg);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool ok = seconds <= threshold(cfg, "runtime_seconds");
    std::string detail;
    for (const auto& r : rs) {
        ok = ok && r.max_deviation && *r.max_deviation <= limit;
        detail += r.name + " " + fmt("%.2e", r.max_deviation.value_or(NAN)) + ", ";
    }
    return {1, "trajectory_exactness", ok, detail + "limit " + fmt("%.0e", limit) + ", runtime " + fmt("%.2f", seconds) + " s"};
}

// Eigenvalue of the ones vector under (1/N) X^T X, with its eigen-residual.
std::pair<double, double> ones_eigen(const Matrix& X) {
    const double n = static_cast<double>(X.cols());
    const Matrix k = X.transpose() * X / n;
    const Vector one = Vector::Ones(X.cols());
    const double lambda = one.dot(k * one) / one.squaredNorm();
    return {lambda, (k * one - lambda * one).norm()};
}

Verdict eigenvalue_shift() {
    const Dataset d = hierarchy();
    const bool identity = d.X.isApprox(Matrix::Identity(d.samples(), d.samples()));
    const auto [plain, r0] = ones_eigen(d.X);
    const auto [aug, r1] = ones_eigen(augment_bias(d).X);
    const Matrix ka = augment_bias(d).X.transpose() * augment_bias(d).X / static_cast<double>(d.samples());
    Eigen::SelfAdjointEigenSolver<Matrix> es(ka);
    const double top = es.eigenvalues().maxCoeff();
    const double err = std::abs(aug - plain - 1.0);
    const bool ok = identity && err <= 1e-10 && r0 <= 1e-12 && r1 <= 1e-12 && std::abs(top - aug) <= 1e-12;
    return {2, "eigenvalue_shift", ok,
            "lambda " + fmt("%.12f", plain) + " -> " + fmt("%.12f", aug) + ", |shift - 1| " + fmt("%.2e", err) + " (limit 1e-10)"};
}

Verdict commutativity() {
    const Dataset d = hierarchy();
    const double plain = commutator_check(d).residual;
    const double aug = commutator_check(augment_bias(d)).residual;
    Dataset random = d;
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> g;
    for (Index i = 0; i < random.X.size(); ++i) random.X.data()[i] = g(rng);
    const double counter = commutator_check(random).residual;
    const bool ok = plain <= 1e-12 && aug <= 1e-12 && counter > 1e-3;
    return {3, "commutativity", ok,
            "hierarchy " + fmt("%.2e", plain) + ", augmented " + fmt("%.2e", aug) + " (limit 1e-12), random counterexample " +
                fmt("%.3f", counter) + " (needs > 1e-3)"};
}

Verdict leading_ocs_mode() {
    const Dataset aug = augment_bias(hierarchy());
    const ModeDecomposition dec = task_svd(aug);
    const LeadingModeReport rep = leading_mode_check(dec, aug);
    const bool ok = rep.u_alignment >= 1.0 - 1e-8 && rep.outputs.transfer_residual <= 1e-10 && rep.inputs.transfer_residual <= 1e-10;
    return {4, "leading_ocs_mode", ok,
            "alignment(u0, ybar) " + fmt("%.12f", rep.u_alignment) + ", transfer residual " +
                fmt("%.2e", std::max(rep.outputs.transfer_residual, rep.inputs.transfer_residual)) + " (limit 1e-10)"};
}

Verdict ntk_equality() {
    const Dataset d = hierarchy();
    double worst = 0.0, worst_step = 0.0;
    for (BiasPlacement b : {BiasPlacement::none, BiasPlacement::input, BiasPlacement::output, BiasPlacement::both}) {
        NetworkConfig nc;
        nc.input_dim = d.input_dim();
        nc.hidden_dim = 32;
        nc.output_dim = d.output_dim();
        nc.bias = b;
        nc.init = InitMode::exact_isotropy;
        nc.init_scale = 0.4;
        nc.seed = 11;
        const NetworkState net = init_network(nc);
        worst = std::max(worst, ntk_compare(net, d, nc.init_scale, nc.init).relative_frobenius);
        worst_step = std::max(worst_step, ntk_one_step_check(net, d, 1e-4).relative_error);
    }
    return {5, "ntk_equality", worst <= 1e-10 && worst_step <= 1e-3,
            "relative Frobenius " + fmt("%.2e", worst) + " (limit 1e-10), one-step " + fmt("%.2e", worst_step) + " (limit 1e-3)"};
}

Verdict early_ocs_timing() {
    const ExperimentConfig cfg = preset("fig5");
    const double frac = threshold(cfg, "bias_ocs_fraction_of_t_diff");
    const auto rs = run_all(cfg);
    const TimingSummary bias = find(rs, "deep_input_bias").metrics.timing;
    const TimingSummary white = find(rs, "deep_no_bias").metrics.timing;
    const TimingSummary corr = find(rs, "correlated_no_bias").metrics.timing;
    const TimingSummary orth = find(rs, "orthogonalized_no_bias").metrics.timing;
    const auto late = [](const TimingSummary& t) { return !t.t_ocs || (t.t_diff && *t.t_ocs >= *t.t_diff); };
    const bool ok_bias = bias.t_ocs && bias.t_diff && *bias.t_ocs < frac * *bias.t_diff;
    const bool ok_corr = corr.t_ocs && corr.t_diff && *corr.t_ocs < *corr.t_diff;
    const bool ok = ok_bias && late(white) && ok_corr && late(orth);
    return {6, "early_ocs_timing", ok,
            "input bias " + opt(bias.t_ocs) + "/" + opt(bias.t_diff) + ", white no bias " + opt(white.t_ocs) + "/" + opt(white.t_diff) +
                ", correlated " + opt(corr.t_ocs) + "/" + opt(corr.t_diff) + ", orthogonalized " + opt(orth.t_ocs) + "/" +
                opt(orth.t_diff) + " (t_ocs/t_diff)"};
}

Verdict tnr_signature() {
    const ExperimentConfig cfg = preset("fig3");
    const auto rs = run_all(cfg);
    const ConditionResult& bias = find(rs, "deep_bias");
    const ConditionResult& none = find(rs, "deep_no_bias");
    const double base = *bias.baseline_tnr.back();
    const double mb = *bias.min_tnr.back();
    const double mn = *none.min_tnr.back();
    const bool ok = std::abs(mb - base) <= threshold(cfg, "leaf_baseline_distance") && mn - mb >= threshold(cfg, "no_bias_min_gap");
    return {7, "tnr_signature", ok,
            "leaf baseline " + fmt("%.4f", base) + ", bias min " + fmt("%.4f", mb) + ", no-bias min " + fmt("%.4f", mn) + ", gap " +
                fmt("%.4f", mn - mb) + " (limits 0.05, 0.05)"};
}

Verdict bias_gradient_asymmetry() {
    const Dataset d = hierarchy();
    NetworkConfig nc;
    nc.input_dim = d.input_dim();
    nc.hidden_dim = 64;
    nc.output_dim = d.output_dim();
    nc.bias = BiasPlacement::both;
    nc.init = InitMode::random_small;
    nc.init_scale = 1e-3;
    nc.seed = 8;
    const NetworkState net = init_network(nc);
    const BiasGradientReport rep = bias_gradient_diagnostics(net, d);
    const Vector ybar = ocs_vector(d);
    const double cosine = std::abs(rep.grad_b2->dot(-ybar)) / (rep.grad_b2->norm() * ybar.norm());
    const bool ok = rep.ratio && *rep.ratio <= 2e-3 && cosine >= 1.0 - 1e-10;
    return {8, "bias_gradient_asymmetry", ok,
            "ratio " + fmt("%.3e", rep.ratio.value_or(NAN)) + " (limit 2e-3), 1 - cosine(db2, -ybar) " + fmt("%.2e", 1.0 - cosine) +
                " (limit 1e-10)"};
}

Verdict response_model() {
    const Dataset d = hierarchy();
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-0.2, 1.2);
    Vector y(d.output_dim());
    for (Index k = 0; k < y.size(); ++k) y(k) = u(rng);
    const Vector target = d.Y.col(5);
    DiscretizationConfig cfg;

    double total = 0.0;
    for_each_subset(y.size(), cfg.picks, [&](std::span<const Index> s) { total += subset_probability(y, cfg, s); });
    const double sum_err = std::abs(total - 1.0);

    const LevelValues exact = expected_tnr(y, target, d.level_slices, cfg);
    const MonteCarloTnr mc = monte_carlo_tnr(y, target, d.level_slices, cfg, 1'000'000, rng);
    double z = 0.0;
    for (std::size_t k = 0; k < exact.size(); ++k)
        if (exact[k] && *mc.standard_error[k] > 0.0) z = std::max(z, std::abs(*mc.mean[k] - *exact[k]) / *mc.standard_error[k]);

    DiscretizationConfig cold = cfg;
    cold.temperature = 1e-6;
    std::vector<Index> order(y.size());
    for (Index k = 0; k < y.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return y(a) > y(b); });
    Vector top = Vector::Zero(y.size());
    for (int k = 0; k < cfg.picks; ++k) top(order[k]) = 1.0;
    const LevelValues limit = expected_tnr(y, target, d.level_slices, cold);
    const LevelValues hard = tnr(top, target, d.level_slices);
    double gap = 0.0;
    for (std::size_t k = 0; k < limit.size(); ++k)
        if (limit[k] || hard[k]) gap = (limit[k] && hard[k]) ? std::max(gap, std::abs(*limit[k] - *hard[k])) : INFINITY;

    const bool ok = sum_err <= 1e-12 && z <= 3.0 && gap == 0.0;
    return {9, "response_model", ok,
            "sum error " + fmt("%.2e", sum_err) + " (limit 1e-12), Monte Carlo " + fmt("%.2f", z) + " std errors (limit 3), cold limit gap " +
                fmt("%.1e", gap)};
}

Verdict imbalance_case() {
    const ExperimentConfig cfg = preset("imbalance");
    const Dataset d = build_imbalance_case();
    const double comm = std::max(commutator_check(d).residual, commutator_check(augment_bias(d)).residual);
    const ConditionResult r = run_condition(cfg.conditions.front());
    const bool ok = comm <= threshold(cfg, "commutator_residual") && r.imbalance && r.imbalance->dominated &&
                    r.imbalance->min_margin > threshold(cfg, "min_margin") && r.max_deviation && *r.max_deviation <= 0.01;
    return {10, "imbalance_case", ok,
            "commutator " + fmt("%.2e", comm) + ", closed-form deviation " + fmt("%.2e", r.max_deviation.value_or(NAN)) + ", window " +
                opt(r.imbalance ? r.imbalance->onset : std::nullopt) + " to " + opt(r.imbalance ? r.imbalance->t_diff : std::nullopt) +
                ", min margin " + fmt("%.4f", r.imbalance ? r.imbalance->min_margin : NAN)};
}

Verdict gradient_correctness() {
    const Dataset d = hierarchy();
    struct Variant {
        Depth depth;
        BiasPlacement bias;
        bool augmented;
    };
    const std::vector<Variant> variants{{Depth::deep, BiasPlacement::none, false},  {Depth::deep, BiasPlacement::input, false},
                                        {Depth::deep, BiasPlacement::output, false}, {Depth::deep, BiasPlacement::both, false},
                                        {Depth::shallow, BiasPlacement::none, false}, {Depth::shallow, BiasPlacement::none, true}};
    std::mt19937_64 rng(123);
    double worst = 0.0;
    for (const Variant& v : variants) {
        const Dataset data = v.augmented ? augment_bias(d) : d;
        NetworkConfig nc;
        nc.depth = v.depth;
        nc.input_dim = data.input_dim();
        nc.hidden_dim = 12;
        nc.output_dim = data.output_dim();
        nc.bias = v.bias;
        nc.init = InitMode::random_small;
        nc.init_scale = 0.5;
        nc.seed = 5;
        NetworkState net = init_network(nc);
        // Non-zero biases so their gradients are exercised away from the init point.
        if (net.b1) net.b1->setConstant(0.1);
        if (net.b2) net.b2->setConstant(-0.2);
        const Vector theta = flatten_parameters(net);
        const Vector g = flatten_gradients(net, gradients(net, data));
        std::uniform_int_distribution<Index> pick(0, theta.size() - 1);
        const double h = 1e-5;
        for (int k = 0; k < 5; ++k) {
            const Index i = pick(rng);
            NetworkState p = net, m = net;
            Vector tp = theta, tm = theta;
            tp(i) += h;
            tm(i) -= h;
            assign_parameters(p, tp);
            assign_parameters(m, tm);
            const double fd = (loss(p, data) - loss(m, data)) / (2.0 * h);
            const double scale = std::max(std::abs(fd), std::abs(g(i)));
            worst = std::max(worst, scale == 0.0 ? 0.0 : std::abs(fd - g(i)) / scale);
        }
    }
    return {11, "gradient_correctness", worst <= 1e-6, "worst relative error " + fmt("%.2e", worst) + " over 6 variants x 5 coordinates (limit 1e-6)"};
}

} // namespace

int main() {
    std::vector<Verdict (*)()> checks{trajectory_exactness, eigenvalue_shift, commutativity,  leading_ocs_mode,
                                      ntk_equality,         early_ocs_timing, tnr_signature,  bias_gradient_asymmetry,
                                      response_model,       imbalance_case,   gradient_correctness};
    int failed = 0;
    for (std::size_t k = 0; k < checks.size(); ++k) {
        Verdict v;
        try {
            v = checks[k]();
        } catch (const std::exception& e) {
            v = {static_cast<int>(k + 1), "criterion", false, std::string("error: ") + e.what()};
        }
        std::cout << (v.ok ? "PASS" : "FAIL") << " [" << v.id << "] " << v.name << ": " << v.detail << std::endl;
        failed += v.ok ? 0 : 1;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
    return failed ? 1 : 0;
}
