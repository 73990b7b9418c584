#pragma once

#include "ocs/analytic_dynamics.hpp"
#include "ocs/ntk.hpp"
#include "ocs/ocs_metrics.hpp"
#include "ocs/response_model.hpp"
#include "ocs/spectral.hpp"
#include "ocs/task_data.hpp"
#include "ocs/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ocs {

using Json = nlohmann::json;

/// Config errors name the offending field, e.g. "conditions[1].network.bias".
class ConfigError : public Error {
public:
    ConfigError(const std::string& path, const std::string& message) : Error("cli", path + ": " + message), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

struct DatasetSpec {
    /// hierarchy, imbalance, correlated, orthogonalized or file
    std::string kind = "hierarchy";
    HierarchySpec hierarchy;
    /// Input statistics for the correlated kinds; targets come from `hierarchy`.
    CorrelatedInputSpec inputs;
    std::string path;
    std::string slices;
    bool augment = false;
    double bias_feature = 1.0;
};

Dataset build_dataset(const DatasetSpec& spec);

struct TrainSpec {
    std::optional<double> tau;
    std::optional<double> learning_rate;
    std::optional<Index> steps;
    /// steps = ceil(horizon * tau / s0) with s0 the leading singular value of the trained task.
    std::optional<double> horizon_tau_over_s0;
    Index log_stride = 1;
};

struct NetworkSpec {
    Depth depth = Depth::deep;
    Index hidden_dim = 16;
    BiasPlacement bias = BiasPlacement::none;
    InitMode init = InitMode::random_small;
    double init_scale = 1e-2;
};

struct ConditionConfig {
    std::string name;
    DatasetSpec dataset;
    NetworkSpec network;
    TrainSpec train;
    std::uint64_t seed = 0;
    bool analytic = false;
    double delta = 0.05;
    /// Imbalance check window opens once l1_to_ocs <= onset_fraction |ybar|_1.
    double onset_fraction = 0.9;
    bool discretize = false;
    DiscretizationConfig discretization;
    bool ntk = false;
    OutputBiasTerm ntk_output_bias = OutputBiasTerm::per_unit;
    bool write_outputs = false;
};

struct ExperimentConfig {
    std::string name;
    std::uint64_t seed = 0;
    int threads = 0;
    std::vector<ConditionConfig> conditions;
    /// Pass thresholds recorded with the preset.
    std::map<std::string, double> thresholds;
    /// Resolved config (defaults merged into each condition).
    Json resolved;
};

/// Parses an experiment. Each entry of "conditions" is merged over "defaults".
/// `seed_override` replaces the top-level seed.
ExperimentConfig parse_experiment(const Json& doc, std::optional<std::uint64_t> seed_override = std::nullopt);
ExperimentConfig load_experiment(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = std::nullopt);

/// Parses one condition object (already merged) rooted at `path`.
ConditionConfig parse_condition(const Json& obj, const std::string& path, std::uint64_t seed);

std::vector<std::string> preset_names();
/// Looks for <name>.json in `dir`.
std::filesystem::path preset_path(const std::string& name, const std::filesystem::path& dir);
/// Directory holding the bundled presets: $OCS_PRESET_DIR, ./presets or the install location.
std::filesystem::path default_preset_dir();

struct ModeDeviation {
    std::string label;    ///< "mode 0" or "block 4-7"
    double max_relative = 0.0; ///< max over logged t of |sim - analytic| / (s/d)
};

struct ImbalanceCheck {
    std::optional<double> onset;
    std::optional<double> t_diff;
    bool dominated = false;
    double min_margin = 0.0; ///< min over the window of yhat_major - max(yhat_minor) for the minority input
};

struct ConditionResult {
    std::string name;
    Dataset dataset;
    ModeDecomposition dec;
    double tau = 0.0;
    Index steps = 0;
    TrajectorySeries run;
    MetricsSeries metrics;
    LevelValues baseline_tnr;
    LevelValues min_tnr;
    std::vector<ModeDeviation> deviations;
    std::optional<double> max_deviation;
    std::optional<ImbalanceCheck> imbalance;
    std::optional<NtkComparison> ntk;
    std::optional<double> ntk_step_error;
    std::vector<std::string> warnings;
    double seconds = 0.0;
};

/// Builds, trains and measures one condition. Files are written when `out` is given.
ConditionResult run_condition(const ConditionConfig& cfg, const std::filesystem::path* out = nullptr);

struct RunReport {
    bool ok = true;
    std::vector<ConditionResult> results;
    std::vector<std::string> errors;
};

/// Runs every condition (in parallel when threads != 1), writes per-condition
/// outputs under `out/<condition>/`, the resolved config, config.json (the input
/// verbatim when `source_text` is given) and summary.json. On failure a FAILED
/// file with the error is written and partial results are kept.
RunReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out, const std::string& source_text = "");

Json summarize(const ConditionResult& r);

/// Mode-by-mode comparison of a training run from spectral init against the
/// closed-form solution; degenerate blocks use block_strengths.
std::vector<ModeDeviation> compare_with_analytic(const TrajectorySeries& run, const ModeDecomposition& dec, Depth depth, double a0,
                                                 double tau);

/// For the least frequent target pattern, checks that the output of the most
/// frequent label (argmax ybar) exceeds every output the minority target
/// switches on, from the first time l1_to_ocs <= onset_fraction |ybar|_1 until t_diff.
ImbalanceCheck imbalance_check(const TrajectorySeries& run, const MetricsSeries& m, const Dataset& d, double onset_fraction);

struct CheckLine {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct VerifyOptions {
    double tau = 1000.0;
};

/// Module property suites: spectral, dynamics, ntk, metrics, response or all.
std::vector<CheckLine> verify_suite(const std::string& suite, const VerifyOptions& options = {});
std::vector<std::string> verify_suite_names();

} // namespace ocs
