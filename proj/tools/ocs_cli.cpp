#include "ocs/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace ocs;
namespace fs = std::filesystem;

namespace {

struct DatasetFlags {
    std::string kind = "hierarchy";
    std::string path;
    int depth = 3;
    int branching = 2;
    bool no_root = false;
    bool human_layout = false;
    bool augment = false;
    double bias_feature = 1.0;
    Index input_dim = 32;
    double shared_scale = 1.0;
    double noise_scale = 0.1;
    std::string slices;

    void attach(CLI::App* app) {
        app->add_option("--kind", kind, "hierarchy, imbalance, correlated or orthogonalized")
            ->check(CLI::IsMember({"hierarchy", "imbalance", "correlated", "orthogonalized"}));
        app->add_option("--dataset", path, "dataset file (ocs-dataset text format)");
        app->add_option("--depth", depth, "hierarchy levels below the root");
        app->add_option("--branching", branching, "children per node");
        app->add_flag("--no-root", no_root, "drop the root output");
        app->add_flag("--human-layout", human_layout, "14-output layout without the root");
        app->add_flag("--augment-bias", augment, "append a constant input feature");
        app->add_option("--bias-feature", bias_feature, "value of the constant feature");
        app->add_option("--input-dim", input_dim, "input size for correlated kinds");
        app->add_option("--shared-scale", shared_scale, "shared input component");
        app->add_option("--noise-scale", noise_scale, "per-sample noise");
        app->add_option("--slices", slices, "level slices, e.g. 0:1,1:3");
    }

    DatasetSpec spec(std::uint64_t seed) const {
        DatasetSpec s;
        s.kind = path.empty() ? kind : "file";
        s.path = path;
        s.hierarchy.depth = depth;
        s.hierarchy.branching = branching;
        s.hierarchy.include_root = !no_root;
        s.hierarchy.human_layout = human_layout;
        s.augment = augment;
        s.bias_feature = bias_feature;
        s.inputs.input_dim = input_dim;
        s.inputs.shared_scale = shared_scale;
        s.inputs.noise_scale = noise_scale;
        s.inputs.seed = seed;
        s.slices = slices;
        return s;
    }
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cli", "cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

std::string level_text(const LevelValues& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? " " : "") + (v[k] ? fmt("%.6f", *v[k]) : std::string("-"));
    return s;
}

// The experiment named by --config or --preset.
struct Source {
    std::string config;
    std::string preset;
    std::string preset_dir;

    void attach(CLI::App* app) {
        auto* c = app->add_option("--config", config, "experiment config (JSON)");
        auto* p = app->add_option("--preset", preset, "bundled preset name");
        c->excludes(p);
        app->add_option("--preset-dir", preset_dir, "directory with preset files");
    }

    bool given() const { return !config.empty() || !preset.empty(); }

    fs::path path() const {
        if (!config.empty()) return config;
        if (preset.empty()) throw Error("cli", "give --config <path> or --preset <name>");
        return preset_path(preset, preset_dir.empty() ? default_preset_dir() : fs::path(preset_dir));
    }
};

const ConditionConfig& pick_condition(const ExperimentConfig& cfg, const std::string& name) {
    if (name.empty()) return cfg.conditions.front();
    for (const auto& c : cfg.conditions)
        if (c.name == name) return c;
    throw Error("cli", "experiment '" + cfg.name + "' has no condition '" + name + "'");
}

void print_condition(const ConditionResult& r) {
    std::cout << "condition " << r.name << " (" << r.dataset.name << ", tau " << r.tau << ", " << r.steps << " steps)\n";
    std::cout << "  loss " << fmt("%.6e", r.run.loss.front()) << " -> " << fmt("%.6e", r.run.loss.back()) << '\n';
    std::cout << "  t_ocs " << (r.metrics.timing.t_ocs ? fmt("%.0f", *r.metrics.timing.t_ocs) : "absent") << "  t_diff "
              << (r.metrics.timing.t_diff ? fmt("%.0f", *r.metrics.timing.t_diff) : "absent") << '\n';
    std::cout << "  min tnr per level   " << level_text(r.min_tnr) << '\n';
    std::cout << "  OCS baseline tnr    " << level_text(r.baseline_tnr) << '\n';
    for (const auto& d : r.deviations) std::cout << "  " << d.label << " max relative deviation " << fmt("%.3e", d.max_relative) << '\n';
    if (r.imbalance)
        std::cout << "  imbalance: onset " << (r.imbalance->onset ? fmt("%.0f", *r.imbalance->onset) : "absent") << ", dominated until t_diff "
                  << (r.imbalance->dominated ? "yes" : "no") << ", min margin " << fmt("%.4f", r.imbalance->min_margin) << '\n';
    if (r.ntk)
        std::cout << "  ntk relative error " << fmt("%.3e", r.ntk->relative_frobenius) << ", one-step error "
                  << fmt("%.3e", r.ntk_step_error.value_or(NAN)) << '\n';
    for (const auto& w : r.warnings) std::cout << "  warning: " << w << '\n';
}

Matrix load_outputs(const std::string& path) {
    if (path.empty()) throw Error("cli", "give --outputs <csv> with the N_out x N prediction matrix");
    return read_matrix_csv(path);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learning-dynamics experiments for linear networks with bias terms"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    std::string out;

    // generate
    auto* gen = app.add_subcommand("generate", "build a dataset and write it in the ocs-dataset text format");
    DatasetFlags gen_data;
    gen_data.attach(gen);
    gen->add_option("--out", out, "output file (default: stdout)");
    gen->add_option("--seed", seed, "seed for random inputs");

    // spectrum
    auto* spec = app.add_subcommand("spectrum", "SVD of the correlation matrices, commutator and leading-mode checks");
    DatasetFlags spec_data;
    spec_data.attach(spec);
    spec->add_option("--out", out, "directory for spectrum.csv");
    spec->add_option("--seed", seed, "seed for random inputs");

    // analytic
    auto* ana = app.add_subcommand("analytic", "closed-form mode and loss curves");
    DatasetFlags ana_data;
    ana_data.attach(ana);
    std::string ana_depth = "deep";
    double a0 = 1e-4, tau = 1000.0, horizon = 20.0;
    Index points = 401;
    ana->add_option("--network-depth", ana_depth, "deep or shallow")->check(CLI::IsMember({"deep", "shallow"}));
    ana->add_option("--a0", a0, "initial mode strength");
    ana->add_option("--tau", tau, "time constant 1/(N eps)");
    ana->add_option("--horizon", horizon, "curve length in units of tau/s0");
    ana->add_option("--points", points, "number of time points");
    ana->add_option("--out", out, "output directory")->required();
    ana->add_option("--seed", seed, "seed for random inputs");

    // simulate / compare
    Source sim_src, cmp_src;
    std::string condition;
    auto* sim = app.add_subcommand("simulate", "train one condition of an experiment");
    sim_src.attach(sim);
    sim->add_option("--condition", condition, "condition name (default: first)");
    sim->add_option("--out", out, "output directory");
    sim->add_option("--seed", seed, "override the experiment seed");
    auto* cmp = app.add_subcommand("compare", "train one condition from spectral init and compare with the closed form");
    cmp_src.attach(cmp);
    cmp->add_option("--condition", condition, "condition name (default: first)");
    cmp->add_option("--out", out, "output directory");
    cmp->add_option("--seed", seed, "override the experiment seed");

    // ntk
    auto* ntk = app.add_subcommand("ntk", "empirical NTK against the closed form and the one-step output check");
    DatasetFlags ntk_data;
    ntk_data.attach(ntk);
    double sigma = 0.4, eps = 1e-4;
    Index hidden = 32;
    std::string bias = "both", init = "exact_isotropy", term = "per_unit";
    ntk->add_option("--sigma", sigma, "weight scale");
    ntk->add_option("--hidden", hidden, "hidden units");
    ntk->add_option("--bias", bias, "none, input, output or both");
    ntk->add_option("--init", init, "exact_isotropy or random_small");
    ntk->add_option("--output-bias-term", term, "per_unit (I x 11^T) or all_ones (11^T x 11^T)");
    ntk->add_option("--eps", eps, "learning rate for the one-step check");
    ntk->add_option("--out", out, "directory for ntk.csv and ntk_report.txt");
    ntk->add_option("--seed", seed, "init seed");

    // metrics
    auto* met = app.add_subcommand("metrics", "OCS metrics of a prediction matrix");
    DatasetFlags met_data;
    met_data.attach(met);
    std::string outputs_path;
    met->add_option("--outputs", outputs_path, "CSV with the N_out x N predictions");
    met->add_option("--out", out, "directory for metrics.json");
    met->add_option("--seed", seed, "seed for random inputs");

    // discretize
    auto* dis = app.add_subcommand("discretize", "expected tnr of discretized responses");
    DatasetFlags dis_data;
    dis_data.attach(dis);
    DiscretizationConfig dcfg;
    std::string convention = "divide";
    Index draws = 0;
    dis->add_option("--outputs", outputs_path, "CSV with the N_out x N predictions");
    dis->add_option("--temperature", dcfg.temperature, "softmax temperature");
    dis->add_option("--picks", dcfg.picks, "responses per trial");
    dis->add_option("--convention", convention, "divide or multiply")->check(CLI::IsMember({"divide", "multiply"}));
    dis->add_option("--draws", draws, "also estimate by Monte Carlo with this many draws");
    dis->add_option("--seed", seed, "sampling seed");

    // run
    Source run_src;
    int threads = -1;
    auto* run = app.add_subcommand("run", "run every condition of a preset or config");
    run_src.attach(run);
    run->add_option("--out", out, "output directory (default: runs/<name>)");
    run->add_option("--seed", seed, "override the experiment seed");
    run->add_option("--threads", threads, "worker threads (0: all cores)");

    // verify
    auto* ver = app.add_subcommand("verify", "module property suites");
    std::string suite = "all";
    ver->add_option("suite", suite, "spectral, dynamics, ntk, metrics, response or all");
    VerifyOptions vopt;
    ver->add_option("--tau", vopt.tau, "time constant for the dynamics suite");

    CLI11_PARSE(app, argc, argv);

    auto seed_given = [&](CLI::App* sub) { return sub->count("--seed") > 0 ? std::optional<std::uint64_t>(seed) : std::nullopt; };

    try {
        if (gen->parsed()) {
            const Dataset d = build_dataset(gen_data.spec(seed));
            if (out.empty())
                std::cout << format_dataset(d);
            else
                save_dataset(d, out);
            return 0;
        }
        if (spec->parsed()) {
            const Dataset d = build_dataset(spec_data.spec(seed));
            const CommutatorResult comm = commutator_check(d);
            const ModeDecomposition dec = task_svd(d);
            std::cout << "dataset " << d.name << ": " << d.input_dim() << " inputs, " << d.output_dim() << " outputs, " << d.samples()
                      << " samples\n";
            std::cout << "commutator residual " << fmt("%.3e", comm.residual) << (comm.commutes ? " (commutes)\n" : " (does not commute)\n");
            std::cout << "mode  singular_value  input_eigenvalue  block  ocs\n";
            for (Index a = 0; a < dec.rank(); ++a) {
                const ModeBlock& b = dec.block_of(a);
                std::cout << fmt("%4.0f", double(a)) << "  " << fmt("%14.10f", dec.S(a)) << "  "
                          << (dec.D ? fmt("%16.10f", (*dec.D)(a)) : std::string(16, '-')) << "  " << b.start << "-" << b.end - 1 << "    "
                          << (dec.ocs_index && *dec.ocs_index == a ? "*" : "") << '\n';
            }
            if (dec.rank() > 0) {
                const LeadingModeReport rep = leading_mode_check(dec, d);
                std::cout << "leading mode: alignment(u0, ybar) " << fmt("%.12f", rep.u_alignment) << ", alignment(v0, xbar) "
                          << fmt("%.12f", rep.v_alignment) << ", transfer residual " << fmt("%.3e", rep.outputs.transfer_residual) << '\n';
                for (const auto& w : rep.warnings) std::cout << "warning: " << w << '\n';
            }
            std::cout << "ones-mode eigenvalue of (1/N) X^T X: " << fmt("%.12f", ones_mode_eigenvalue(d)) << '\n';
            for (const auto& w : dec.warnings) std::cout << "warning: " << w << '\n';
            if (!out.empty()) {
                fs::create_directories(out);
                std::ofstream f(fs::path(out) / "spectrum.csv");
                write_spectrum_csv(f, dec);
            }
            return 0;
        }
        if (ana->parsed()) {
            const Dataset d = build_dataset(ana_data.spec(seed));
            const ModeDecomposition dec = task_svd(d);
            if (dec.rank() == 0) throw Error("cli", "the task has no non-zero singular value");
            const auto params = mode_params(dec, parse_depth(ana_depth), a0, tau);
            const auto times = linear_time_grid(horizon * tau / dec.S(0), points);
            fs::create_directories(out);
            std::ofstream modes(fs::path(out) / "analytic_modes.csv");
            write_mode_curves_csv(modes, params, times);
            std::ofstream loss_csv(fs::path(out) / "analytic_loss.csv");
            write_loss_curve_csv(loss_csv, dec, params, d, times);
            std::cout << "wrote " << params.size() << " mode curves over t in [0, " << times.back() << "] to " << out << '\n';
            return 0;
        }
        if (sim->parsed() || cmp->parsed()) {
            const bool comparing = cmp->parsed();
            const Source& src = comparing ? cmp_src : sim_src;
            ExperimentConfig cfg = load_experiment(src.path(), seed_given(comparing ? cmp : sim));
            ConditionConfig c = pick_condition(cfg, condition);
            if (comparing) {
                if (c.network.init != InitMode::spectral) throw ConfigError(c.name + ".network.init", "compare needs spectral init");
                c.analytic = true;
            }
            const fs::path dir = out;
            const ConditionResult r = run_condition(c, out.empty() ? nullptr : &dir);
            if (!out.empty()) {
                std::ofstream(dir / "config.json", std::ios::binary) << read_file(src.path());
                Json resolved = cfg.resolved;
                for (const auto& entry : cfg.resolved["conditions"])
                    if (entry.value("name", "") == c.name) resolved["conditions"] = Json::array({entry});
                std::ofstream(dir / "resolved_config.json") << resolved.dump(2) << '\n';
            }
            print_condition(r);
            if (comparing && r.max_deviation) return *r.max_deviation <= 0.01 ? 0 : 3;
            return 0;
        }
        if (ntk->parsed()) {
            const Dataset d = build_dataset(ntk_data.spec(seed));
            NetworkConfig nc;
            nc.input_dim = d.input_dim();
            nc.hidden_dim = hidden;
            nc.output_dim = d.output_dim();
            nc.bias = parse_bias_placement(bias);
            nc.init = parse_init_mode(init);
            nc.init_scale = sigma;
            nc.seed = seed;
            const NetworkState net = init_network(nc);
            const NtkComparison c = ntk_compare(net, d, sigma, nc.init, parse_output_bias_term(term));
            write_ntk_report(std::cout, c);
            const OutputStepCheck step = ntk_one_step_check(net, d, eps);
            std::cout << "one_step_relative_error " << fmt("%.6e", step.relative_error) << '\n';
            if (!out.empty()) {
                fs::create_directories(out);
                std::ofstream k(fs::path(out) / "ntk.csv");
                write_ntk_csv(k, ntk_direct(net, d));
                std::ofstream rep(fs::path(out) / "ntk_report.txt");
                write_ntk_report(rep, c);
            }
            return 0;
        }
        if (met->parsed()) {
            const Dataset d = build_dataset(met_data.spec(seed));
            const Matrix y = load_outputs(outputs_path);
            if (y.rows() != d.output_dim() || y.cols() != d.samples())
                throw Error("cli", "outputs are " + std::to_string(y.rows()) + " x " + std::to_string(y.cols()) + ", dataset needs " +
                                       std::to_string(d.output_dim()) + " x " + std::to_string(d.samples()));
            const Vector ybar = ocs_vector(d);
            const double l1 = l1_to_ocs(y, ybar);
            const LevelValues t = mean_tnr(y, d.Y, d.level_slices);
            const LevelValues base = ocs_baseline_tnr(d);
            const IndifferenceReport ind = indifference(y);
            std::cout << "l1_to_ocs " << fmt("%.6e", l1) << " (|ybar|_1 = " << fmt("%.6f", ybar.lpNorm<1>()) << ")\n";
            std::cout << "tnr per level      " << level_text(t) << '\n';
            std::cout << "OCS baseline tnr   " << level_text(base) << '\n';
            std::cout << "indifferent units ";
            for (Index u = 0; u < y.rows(); ++u)
                if (ind.indifferent[u]) std::cout << ' ' << u;
            std::cout << '\n';
            if (!out.empty()) {
                fs::create_directories(out);
                Json j = {{"l1_to_ocs", l1}, {"tnr", Json::array()}, {"baseline_tnr", Json::array()}, {"output_std", Json::array()}};
                for (const auto& v : t) j["tnr"].push_back(v ? Json(*v) : Json(nullptr));
                for (const auto& v : base) j["baseline_tnr"].push_back(v ? Json(*v) : Json(nullptr));
                for (Index u = 0; u < y.rows(); ++u) j["output_std"].push_back(ind.stddev(u));
                std::ofstream(fs::path(out) / "metrics.json") << j.dump(2) << '\n';
            }
            return 0;
        }
        if (dis->parsed()) {
            const Dataset d = build_dataset(dis_data.spec(seed));
            const Matrix y = load_outputs(outputs_path);
            if (y.rows() != d.output_dim() || y.cols() != d.samples()) throw Error("cli", "outputs do not match the dataset shape");
            dcfg.convention = parse_softmax_convention(convention);
            dcfg.seed = seed;
            std::mt19937_64 rng(seed);
            for (Index i = 0; i < d.samples(); ++i) {
                std::cout << "sample " << i << " expected tnr " << level_text(expected_tnr(y.col(i), d.Y.col(i), d.level_slices, dcfg));
                if (draws > 0) {
                    const MonteCarloTnr mc = monte_carlo_tnr(y.col(i), d.Y.col(i), d.level_slices, dcfg, draws, rng);
                    std::cout << " | monte carlo " << level_text(mc.mean) << " (se " << level_text(mc.standard_error) << ")";
                }
                std::cout << '\n';
            }
            return 0;
        }
        if (run->parsed()) {
            const fs::path path = run_src.path();
            ExperimentConfig cfg = load_experiment(path, seed_given(run));
            if (threads >= 0) cfg.threads = threads;
            const fs::path dir = out.empty() ? fs::path("runs") / cfg.name : fs::path(out);
            const RunReport rep = run_experiment(cfg, dir, read_file(path));
            for (const auto& r : rep.results) print_condition(r);
            for (const auto& e : rep.errors) std::cerr << "error: " << e << '\n';
            std::cout << (rep.ok ? "wrote " : "FAILED, partial outputs in ") << dir.string() << '\n';
            return rep.ok ? 0 : 1;
        }
        if (ver->parsed()) {
            const auto lines = verify_suite(suite, vopt);
            bool ok = true;
            for (const auto& l : lines) {
                std::cout << (l.passed ? "PASS " : "FAIL ") << l.name << "  " << l.detail << '\n';
                ok = ok && l.passed;
            }
            return ok ? 0 : 1;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
