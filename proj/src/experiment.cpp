#include "ocs/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace ocs {

namespace {

namespace fs = std::filesystem;

std::string num(double v, const char* format = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

// Reads the members of one JSON object and rejects keys nobody asked for.
class Fields {
public:
    Fields(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj.is_object()) throw ConfigError(path_, "expected an object");
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const Json* find(const std::string& key) {
        used_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() || it->is_null() ? nullptr : &*it;
    }

    double number(const std::string& key, double fallback) {
        const Json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number()) throw ConfigError(at(key), "expected a number");
        return v->get<double>();
    }

    std::optional<double> optional_number(const std::string& key) {
        const Json* v = find(key);
        if (!v) return std::nullopt;
        if (!v->is_number()) throw ConfigError(at(key), "expected a number");
        return v->get<double>();
    }

    Index integer(const std::string& key, Index fallback) {
        const Json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number_integer()) throw ConfigError(at(key), "expected an integer");
        return v->get<Index>();
    }

    std::optional<Index> optional_integer(const std::string& key) {
        const Json* v = find(key);
        if (!v) return std::nullopt;
        if (!v->is_number_integer()) throw ConfigError(at(key), "expected an integer");
        return v->get<Index>();
    }

    std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
        const Json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
            throw ConfigError(at(key), "expected a non-negative integer");
        return v->get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool fallback) {
        const Json* v = find(key);
        if (!v) return fallback;
        if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
        return v->get<bool>();
    }

    std::string text(const std::string& key, const std::string& fallback) {
        const Json* v = find(key);
        if (!v) return fallback;
        if (!v->is_string()) throw ConfigError(at(key), "expected a string");
        return v->get<std::string>();
    }

    template <class F>
    auto parsed(const std::string& key, const std::string& fallback, F parse) {
        const std::string value = text(key, fallback);
        try {
            return parse(value);
        } catch (const Error& e) {
            throw ConfigError(at(key), e.what());
        }
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (!used_.count(it.key())) throw ConfigError(at(it.key()), "unknown field");
    }

private:
    const Json& obj_;
    std::string path_;
    std::set<std::string> used_;
};

void require(bool ok, const std::string& path, const std::string& message) {
    if (!ok) throw ConfigError(path, message);
}

DatasetSpec parse_dataset_spec(const Json& obj, const std::string& path, std::uint64_t seed) {
    Fields f(obj, path);
    DatasetSpec d;
    d.kind = f.text("kind", "hierarchy");
    static const std::set<std::string> kinds{"hierarchy", "imbalance", "correlated", "orthogonalized", "file"};
    require(kinds.count(d.kind) > 0, f.at("kind"), "unknown dataset kind '" + d.kind + "' (expected hierarchy, imbalance, correlated, orthogonalized or file)");
    d.hierarchy.depth = static_cast<int>(f.integer("depth", 3));
    d.hierarchy.branching = static_cast<int>(f.integer("branching", 2));
    d.hierarchy.include_root = f.boolean("include_root", true);
    d.hierarchy.human_layout = f.boolean("human_layout", false);
    d.augment = f.boolean("augment_bias", false);
    d.bias_feature = f.number("bias_feature", 1.0);
    d.path = f.text("path", "");
    d.slices = f.text("slices", "");
    require(d.kind != "file" || !d.path.empty(), f.at("path"), "a file dataset needs a path");
    d.inputs.seed = seed;
    if (const Json* in = f.find("inputs")) {
        Fields g(*in, f.at("inputs"));
        d.inputs.input_dim = g.integer("input_dim", d.inputs.input_dim);
        d.inputs.shared_scale = g.number("shared_scale", d.inputs.shared_scale);
        d.inputs.noise_scale = g.number("noise_scale", d.inputs.noise_scale);
        d.inputs.seed = g.seed("seed", seed);
        g.finish();
    }
    f.finish();
    return d;
}

template <class T>
std::vector<double> as_doubles(const std::vector<T>& v) {
    return {v.begin(), v.end()};
}

Json level_json(const LevelValues& v) {
    Json a = Json::array();
    for (const auto& x : v) a.push_back(x ? Json(*x) : Json(nullptr));
    return a;
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cli", "cannot write " + path.string());
    out << text;
}

template <class F>
void write_with(const fs::path& path, F writer) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cli", "cannot write " + path.string());
    writer(out);
}

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'; });
}

} // namespace

Dataset build_dataset(const DatasetSpec& spec) {
    Dataset d;
    if (spec.kind == "hierarchy") {
        d = build_hierarchy(spec.hierarchy);
    } else if (spec.kind == "imbalance") {
        d = build_imbalance_case();
    } else if (spec.kind == "correlated" || spec.kind == "orthogonalized") {
        const Dataset targets = build_hierarchy(spec.hierarchy);
        CorrelatedInputSpec in = spec.inputs;
        in.samples = targets.samples();
        in.orthogonalized = spec.kind == "orthogonalized";
        d = build_correlated(in, targets);
    } else if (spec.kind == "file") {
        const std::vector<LevelSlice> slices = spec.slices.empty() ? std::vector<LevelSlice>{} : parse_slices(spec.slices);
        d = load_dataset(spec.path, slices);
    } else {
        throw Error("cli", "unknown dataset kind '" + spec.kind + "'");
    }
    if (!spec.slices.empty() && spec.kind != "file") {
        d.level_slices = parse_slices(spec.slices);
        d.validate();
    }
    if (spec.augment) d = augment_bias(d, spec.bias_feature);
    return d;
}

ConditionConfig parse_condition(const Json& obj, const std::string& path, std::uint64_t seed) {
    Fields f(obj, path);
    ConditionConfig c;
    c.name = f.text("name", "");
    require(valid_name(c.name), f.at("name"), "condition names must be non-empty and use only letters, digits, '_', '-' or '.'");
    f.text("description", "");
    c.seed = f.seed("seed", seed);

    static const Json empty = Json::object();
    const Json* ds = f.find("dataset");
    c.dataset = parse_dataset_spec(ds ? *ds : empty, f.at("dataset"), c.seed);

    const Json* net = f.find("network");
    {
        Fields g(net ? *net : empty, f.at("network"));
        c.network.depth = g.parsed("depth", "deep", parse_depth);
        c.network.hidden_dim = g.integer("hidden_dim", c.network.hidden_dim);
        c.network.bias = g.parsed("bias", "none", parse_bias_placement);
        c.network.init = g.parsed("init", "random_small", parse_init_mode);
        c.network.init_scale = g.number("init_scale", c.network.init_scale);
        require(c.network.init_scale > 0.0, g.at("init_scale"), "must be positive");
        require(c.network.hidden_dim >= 1, g.at("hidden_dim"), "must be at least 1");
        if (c.network.depth == Depth::shallow)
            require(c.network.bias == BiasPlacement::none, g.at("bias"),
                    "shallow networks take a bias through dataset.augment_bias; use none");
        if (has_input_bias(c.network.bias))
            require(!c.dataset.augment, g.at("bias"), "an explicit input bias cannot be combined with dataset.augment_bias");
        g.finish();
    }

    const Json* tr = f.find("train");
    {
        Fields g(tr ? *tr : empty, f.at("train"));
        c.train.tau = g.optional_number("tau");
        c.train.learning_rate = g.optional_number("learning_rate");
        c.train.steps = g.optional_integer("steps");
        c.train.horizon_tau_over_s0 = g.optional_number("horizon_tau_over_s0");
        c.train.log_stride = g.integer("log_stride", 1);
        require(c.train.tau.has_value() != c.train.learning_rate.has_value(), f.at("train"), "give exactly one of tau and learning_rate");
        if (c.train.tau) require(*c.train.tau > 0.0, g.at("tau"), "must be positive");
        if (c.train.learning_rate) require(*c.train.learning_rate >= 0.0, g.at("learning_rate"), "must be non-negative");
        require(c.train.steps.has_value() != c.train.horizon_tau_over_s0.has_value(), f.at("train"),
                "give exactly one of steps and horizon_tau_over_s0");
        if (c.train.steps) require(*c.train.steps >= 0, g.at("steps"), "must be non-negative");
        if (c.train.horizon_tau_over_s0) require(*c.train.horizon_tau_over_s0 > 0.0, g.at("horizon_tau_over_s0"), "must be positive");
        require(c.train.log_stride >= 1, g.at("log_stride"), "must be at least 1");
        g.finish();
    }

    c.analytic = f.boolean("analytic", false);
    if (c.analytic)
        require(c.network.init == InitMode::spectral, f.at("analytic"), "closed-form comparison needs network.init = spectral");

    if (const Json* m = f.find("metrics")) {
        Fields g(*m, f.at("metrics"));
        c.delta = g.number("delta", c.delta);
        c.onset_fraction = g.number("onset_fraction", c.onset_fraction);
        require(c.delta > 0.0, g.at("delta"), "must be positive");
        require(c.onset_fraction > 0.0 && c.onset_fraction <= 1.0, g.at("onset_fraction"), "must lie in (0, 1]");
        g.finish();
    }
    if (const Json* m = f.find("discretization")) {
        Fields g(*m, f.at("discretization"));
        c.discretize = g.boolean("enabled", true);
        c.discretization.temperature = g.number("temperature", c.discretization.temperature);
        c.discretization.picks = static_cast<int>(g.integer("picks", c.discretization.picks));
        c.discretization.seed = g.seed("seed", c.seed);
        c.discretization.convention = g.parsed("convention", "divide", parse_softmax_convention);
        require(c.discretization.temperature > 0.0, g.at("temperature"), "must be positive");
        require(c.discretization.picks >= 1, g.at("picks"), "must be at least 1");
        g.finish();
    }
    if (const Json* m = f.find("ntk")) {
        Fields g(*m, f.at("ntk"));
        c.ntk = g.boolean("enabled", true);
        c.ntk_output_bias = g.parsed("output_bias_term", "per_unit", parse_output_bias_term);
        g.finish();
    }
    c.write_outputs = f.boolean("write_outputs", false);
    f.finish();
    return c;
}

ExperimentConfig parse_experiment(const Json& doc, std::optional<std::uint64_t> seed_override) {
    Fields f(doc, "");
    ExperimentConfig cfg;
    cfg.name = f.text("name", "experiment");
    f.text("description", "");
    cfg.seed = seed_override ? *seed_override : f.seed("seed", 0);
    if (seed_override) f.find("seed");
    cfg.threads = static_cast<int>(f.integer("threads", 0));
    require(cfg.threads >= 0, "threads", "must be non-negative");

    Json defaults = Json::object();
    if (const Json* d = f.find("defaults")) {
        require(d->is_object(), "defaults", "expected an object");
        defaults = *d;
    }
    if (const Json* t = f.find("thresholds")) {
        require(t->is_object(), "thresholds", "expected an object of numbers");
        for (auto it = t->begin(); it != t->end(); ++it) {
            require(it->is_number(), "thresholds." + it.key(), "expected a number");
            cfg.thresholds[it.key()] = it->get<double>();
        }
    }
    const Json* conds = f.find("conditions");
    require(conds && conds->is_array() && !conds->empty(), "conditions", "expected a non-empty array");
    f.finish();

    cfg.resolved = {{"name", cfg.name}, {"seed", cfg.seed}, {"threads", cfg.threads}, {"thresholds", cfg.thresholds},
                    {"conditions", Json::array()}};
    std::set<std::string> names;
    for (std::size_t k = 0; k < conds->size(); ++k) {
        const std::string path = "conditions[" + std::to_string(k) + "]";
        require((*conds)[k].is_object(), path, "expected an object");
        Json merged = defaults;
        merged.merge_patch((*conds)[k]);
        ConditionConfig c = parse_condition(merged, path, cfg.seed);
        require(names.insert(c.name).second, path + ".name", "duplicate condition name '" + c.name + "'");
        cfg.conditions.push_back(std::move(c));
        cfg.resolved["conditions"].push_back(merged);
    }
    return cfg;
}

ExperimentConfig load_experiment(const fs::path& path, std::optional<std::uint64_t> seed_override) {
    std::ifstream in(path);
    if (!in) throw Error("cli", "cannot open config " + path.string());
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string(), e.what());
    }
    return parse_experiment(doc, seed_override);
}

std::vector<std::string> preset_names() { return {"fig2", "fig3", "fig4-sim", "fig5", "fig6", "imbalance"}; }

fs::path preset_path(const std::string& name, const fs::path& dir) {
    const fs::path p = dir / (name + ".json");
    if (!fs::exists(p)) {
        std::string known;
        for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
        throw Error("cli", "no preset '" + name + "' in " + dir.string() + " (bundled presets: " + known + ")");
    }
    return p;
}

fs::path default_preset_dir() {
    if (const char* env = std::getenv("OCS_PRESET_DIR")) return env;
    if (fs::exists("presets")) return "presets";
#ifdef OCS_PRESET_DIR
    return OCS_PRESET_DIR;
#else
    return "presets";
#endif
}

std::vector<ModeDeviation> compare_with_analytic(const TrajectorySeries& run, const ModeDecomposition& dec, Depth depth, double a0,
                                                 double tau) {
    if (run.projections.size() != run.steps.size()) throw Error("cli", "training run carries no mode projections");
    const auto params = mode_params(dec, depth, a0, tau);
    std::vector<ModeDeviation> out;
    std::vector<Vector> blocks;
    for (const Matrix& p : run.projections) blocks.push_back(block_strengths(p, dec));
    for (std::size_t b = 0; b < dec.blocks.size(); ++b) {
        const ModeBlock& blk = dec.blocks[b];
        const TrajectoryParams& p = params[static_cast<std::size_t>(blk.start)];
        const double scale = p.d > 0.0 ? p.s / p.d : std::max(a0, 1.0);
        ModeDeviation dev;
        dev.label = blk.degenerate() ? "block " + std::to_string(blk.start) + "-" + std::to_string(blk.end - 1)
                                     : "mode " + std::to_string(blk.start);
        for (std::size_t k = 0; k < run.steps.size(); ++k) {
            const double analytic = mode_trajectory(p, static_cast<double>(run.steps[k]));
            const double sim = blk.degenerate() ? blocks[k](static_cast<Index>(b)) : run.projections[k](blk.start, blk.start);
            dev.max_relative = std::max(dev.max_relative, std::abs(sim - analytic) / scale);
        }
        out.push_back(dev);
    }
    return out;
}

ImbalanceCheck imbalance_check(const TrajectorySeries& run, const MetricsSeries& m, const Dataset& d, double onset_fraction) {
    if (run.outputs.size() != run.steps.size()) throw Error("cli", "imbalance check needs logged outputs");
    // Least frequent target column.
    Index minority = 0;
    Index fewest = d.samples() + 1;
    for (Index i = 0; i < d.samples(); ++i) {
        Index count = 0;
        for (Index j = 0; j < d.samples(); ++j)
            if (d.Y.col(j) == d.Y.col(i)) ++count;
        if (count < fewest) {
            fewest = count;
            minority = i;
        }
    }
    Index major = 0;
    ocs_vector(d).maxCoeff(&major);
    std::vector<Index> minor_units;
    for (Index u = 0; u < d.output_dim(); ++u)
        if (d.Y(u, minority) != 0.0 && u != major) minor_units.push_back(u);
    if (minor_units.empty()) throw Error("cli", "the minority target switches on no unit other than the majority label");

    ImbalanceCheck c;
    c.t_diff = m.timing.t_diff;
    const double threshold = onset_fraction * m.ocs_l1_norm;
    for (std::size_t k = 0; k < m.times.size(); ++k)
        if (m.l1_to_ocs[k] <= threshold) {
            c.onset = m.times[k];
            break;
        }
    if (!c.onset || !c.t_diff || *c.onset >= *c.t_diff) return c;
    c.dominated = true;
    c.min_margin = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m.times.size(); ++k) {
        if (m.times[k] < *c.onset || m.times[k] >= *c.t_diff) continue;
        const Matrix& y = run.outputs[k];
        double best_minor = -std::numeric_limits<double>::infinity();
        for (Index u : minor_units) best_minor = std::max(best_minor, y(u, minority));
        const double margin = y(major, minority) - best_minor;
        c.min_margin = std::min(c.min_margin, margin);
        if (margin <= 0.0) c.dominated = false;
    }
    return c;
}

ConditionResult run_condition(const ConditionConfig& cfg, const fs::path* out) {
    const auto start = std::chrono::steady_clock::now();
    ConditionResult r;
    r.name = cfg.name;
    r.dataset = build_dataset(cfg.dataset);
    const Dataset& d = r.dataset;
    const bool input_bias = has_input_bias(cfg.network.bias);
    if (input_bias && d.bias_augmented) throw Error("cli", "an explicit input bias needs a dataset that is not bias-augmented");
    r.dec = task_svd(input_bias ? augment_bias(d) : d);
    for (const auto& w : r.dec.warnings) r.warnings.push_back("spectral: " + w);

    const double n = static_cast<double>(d.samples());
    TrainConfig tc;
    if (cfg.train.tau) {
        r.tau = *cfg.train.tau;
        tc.learning_rate = 1.0 / (n * r.tau);
    } else {
        tc.learning_rate = *cfg.train.learning_rate;
        r.tau = time_constant(tc, d.samples());
    }
    if (cfg.train.steps) {
        tc.steps = *cfg.train.steps;
    } else {
        if (r.dec.rank() == 0) throw Error("cli", "horizon_tau_over_s0 needs a task with a non-zero singular value");
        tc.steps = static_cast<Index>(std::ceil(*cfg.train.horizon_tau_over_s0 * r.tau / r.dec.S(0)));
    }
    r.steps = tc.steps;
    tc.log_stride = cfg.train.log_stride;
    tc.log_outputs = true;

    NetworkConfig nc;
    nc.depth = cfg.network.depth;
    nc.input_dim = d.input_dim();
    nc.hidden_dim = cfg.network.hidden_dim;
    nc.output_dim = d.output_dim();
    nc.bias = cfg.network.bias;
    nc.init = cfg.network.init;
    nc.init_scale = cfg.network.init_scale;
    nc.seed = cfg.seed;
    NetworkState net = init_network(nc, &r.dec);
    const NetworkState initial = net;

    r.run = train(net, d, tc, &r.dec);
    for (const auto& w : r.run.warnings) r.warnings.push_back("trainer: " + w);
    r.metrics = compute_metrics(r.run, d, cfg.delta);
    r.baseline_tnr = ocs_baseline_tnr(d);
    r.min_tnr.assign(d.level_slices.size(), std::nullopt);
    for (const LevelValues& v : r.metrics.tnr)
        for (std::size_t k = 0; k < v.size(); ++k)
            if (v[k]) r.min_tnr[k] = r.min_tnr[k] ? std::min(*r.min_tnr[k], *v[k]) : *v[k];

    if (cfg.analytic) {
        if (!r.dec.D) throw Error("cli", "closed-form comparison needs a commuting dataset");
        r.deviations = compare_with_analytic(r.run, r.dec, cfg.network.depth, cfg.network.init_scale, r.tau);
        double worst = 0.0;
        for (const auto& dev : r.deviations) worst = std::max(worst, dev.max_relative);
        r.max_deviation = worst;
    }
    if (cfg.dataset.kind == "imbalance") r.imbalance = imbalance_check(r.run, r.metrics, d, cfg.onset_fraction);
    if (cfg.ntk) {
        if (cfg.network.depth != Depth::deep) throw Error("cli", "the NTK check needs a deep network");
        r.ntk = ntk_compare(initial, d, cfg.network.init_scale, cfg.network.init, cfg.ntk_output_bias);
        r.ntk_step_error = ntk_one_step_check(initial, d, tc.learning_rate).relative_error;
    }

    if (out) {
        fs::create_directories(*out);
        save_dataset(d, *out / "dataset.txt");
        write_with(*out / "spectrum.csv", [&](std::ostream& o) { write_spectrum_csv(o, r.dec); });
        write_with(*out / "trajectory.csv", [&](std::ostream& o) { write_trajectory_csv(o, r.run, cfg.write_outputs); });
        write_with(*out / "metrics.csv", [&](std::ostream& o) { write_metrics_csv(o, r.metrics); });
        if (cfg.analytic && r.dec.D) {
            const auto params = mode_params(r.dec, cfg.network.depth, cfg.network.init_scale, r.tau);
            const std::vector<double> times = r.run.times();
            write_with(*out / "analytic_modes.csv", [&](std::ostream& o) { write_mode_curves_csv(o, params, times); });
            write_with(*out / "analytic_loss.csv",
                       [&](std::ostream& o) { write_loss_curve_csv(o, r.dec, params, input_bias ? augment_bias(d) : d, times); });
        }
        if (r.ntk) write_with(*out / "ntk_report.txt", [&](std::ostream& o) { write_ntk_report(o, *r.ntk); });
    }
    if (cfg.discretize) {
        // Expected tnr of the discretized response, averaged over samples, at every logged step.
        std::ostringstream csv;
        csv << "time,level,value\n";
        for (std::size_t k = 0; k < r.run.steps.size(); ++k) {
            const Matrix& y = r.run.outputs[k];
            std::vector<double> sum(d.level_slices.size(), 0.0);
            std::vector<int> count(d.level_slices.size(), 0);
            for (Index i = 0; i < d.samples(); ++i) {
                const LevelValues e = expected_tnr(y.col(i), d.Y.col(i), d.level_slices, cfg.discretization);
                for (std::size_t l = 0; l < e.size(); ++l)
                    if (e[l]) {
                        sum[l] += *e[l];
                        ++count[l];
                    }
            }
            for (std::size_t l = 0; l < sum.size(); ++l)
                if (count[l]) csv << num(static_cast<double>(r.run.steps[k]), "%.17g") << ',' << l << ',' << num(sum[l] / count[l], "%.17g") << '\n';
        }
        if (out) write_text(*out / "expected_tnr.csv", csv.str());
    }
    if (out) write_text(*out / "summary.json", summarize(r).dump(2) + "\n");
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

Json summarize(const ConditionResult& r) {
    Json j;
    j["name"] = r.name;
    j["dataset"] = r.dataset.name;
    j["samples"] = r.dataset.samples();
    j["tau"] = r.tau;
    j["steps"] = r.steps;
    j["initial_loss"] = r.run.loss.empty() ? Json(nullptr) : Json(r.run.loss.front());
    j["final_loss"] = r.run.loss.empty() ? Json(nullptr) : Json(r.run.loss.back());
    j["singular_values"] = std::vector<double>(r.dec.S.data(), r.dec.S.data() + r.dec.S.size());
    if (r.dec.D) j["input_eigenvalues"] = std::vector<double>(r.dec.D->data(), r.dec.D->data() + r.dec.D->size());
    j["ocs_mode"] = r.dec.ocs_index ? Json(*r.dec.ocs_index) : Json(nullptr);
    j["ocs_l1_norm"] = r.metrics.ocs_l1_norm;
    j["t_ocs"] = optional_json(r.metrics.timing.t_ocs);
    j["t_diff"] = optional_json(r.metrics.timing.t_diff);
    j["min_l1_to_ocs"] = r.metrics.l1_to_ocs.empty() ? Json(nullptr)
                                                      : Json(*std::min_element(r.metrics.l1_to_ocs.begin(), r.metrics.l1_to_ocs.end()));
    j["baseline_tnr"] = level_json(r.baseline_tnr);
    j["min_tnr"] = level_json(r.min_tnr);
    if (r.max_deviation) {
        j["max_relative_deviation"] = *r.max_deviation;
        Json devs = Json::array();
        for (const auto& d : r.deviations) devs.push_back({{"mode", d.label}, {"max_relative", d.max_relative}});
        j["deviations"] = devs;
    }
    if (r.imbalance) {
        j["imbalance"] = {{"onset", optional_json(r.imbalance->onset)},
                          {"t_diff", optional_json(r.imbalance->t_diff)},
                          {"dominated", r.imbalance->dominated},
                          {"min_margin", r.imbalance->min_margin}};
    }
    if (r.ntk) {
        Json blocks = Json::array();
        for (const auto& b : r.ntk->blocks) blocks.push_back({{"block", b.name}, {"max_abs", b.max_abs}, {"mean_abs", b.mean_abs}});
        j["ntk"] = {{"relative_frobenius", r.ntk->relative_frobenius},
                    {"max_abs", r.ntk->max_abs},
                    {"min_eigenvalue", r.ntk->min_eigenvalue},
                    {"blocks", blocks},
                    {"one_step_relative_error", optional_json(r.ntk_step_error)},
                    {"warnings", r.ntk->warnings}};
    }
    j["warnings"] = r.warnings;
    return j;
}

RunReport run_experiment(const ExperimentConfig& cfg, const fs::path& out, const std::string& source_text) {
    fs::create_directories(out);
    fs::remove(out / "FAILED");
    write_text(out / "config.json", source_text.empty() ? cfg.resolved.dump(2) + "\n" : source_text);
    write_text(out / "resolved_config.json", cfg.resolved.dump(2) + "\n");

    const std::size_t n = cfg.conditions.size();
    std::vector<std::optional<ConditionResult>> results(n);
    std::vector<std::string> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t k = next++; k < n; k = next++) {
            const ConditionConfig& c = cfg.conditions[k];
            const fs::path dir = out / c.name;
            try {
                results[k] = run_condition(c, &dir);
            } catch (const std::exception& e) {
                errors[k] = "condition '" + c.name + "': " + e.what();
            }
        }
    };
    unsigned threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(n));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    RunReport report;
    Json summary = {{"experiment", cfg.name}, {"seed", cfg.seed}, {"conditions", Json::array()}};
    for (std::size_t k = 0; k < n; ++k) {
        if (results[k]) {
            summary["conditions"].push_back(summarize(*results[k]));
            report.results.push_back(std::move(*results[k]));
        }
        if (!errors[k].empty()) report.errors.push_back(errors[k]);
    }
    report.ok = report.errors.empty();
    summary["ok"] = report.ok;
    summary["errors"] = report.errors;
    write_text(out / "summary.json", summary.dump(2) + "\n");
    if (!report.ok) {
        std::string text;
        for (const auto& e : report.errors) text += e + "\n";
        write_text(out / "FAILED", text);
    }
    return report;
}

} // namespace ocs
