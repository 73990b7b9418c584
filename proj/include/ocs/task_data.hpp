#pragma once

#include "ocs/common.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ocs {

/// Shape of the hierarchical category task. `depth` counts the levels below
/// the root, so the task has `branching^depth` items; every tree node is an
/// output property and every leaf is an item.
struct HierarchySpec {
    int depth = 3;
    int branching = 2;
    bool include_root = true;
    /// One property per level below the root (the layout shown to human
    /// learners). Drops the root row regardless of `include_root`.
    bool human_layout = false;
};

/// Paired input/output matrices. Columns are samples.
struct Dataset {
    Matrix X; ///< N_in x N
    Matrix Y; ///< N_out x N
    std::vector<LevelSlice> level_slices;
    bool bias_augmented = false;
    std::string name;

    Index samples() const { return X.cols(); }
    Index input_dim() const { return X.rows(); }
    Index output_dim() const { return Y.rows(); }

    /// Throws ocs::Error("task_data", ...) when an invariant is violated.
    void validate() const;
};

struct CorrelatedInputSpec {
    Index samples = 8;
    Index input_dim = 32;
    double shared_scale = 1.0;
    /// Expected norm of each sample's independent component.
    double noise_scale = 0.1;
    bool orthogonalized = false;
    std::uint64_t seed = 0;
};

Dataset build_hierarchy(const HierarchySpec& spec);

/// Prepends a constant input feature, turning a learnable input bias into a
/// weight column. `feature_value` is the sigma_b / sigma_w ratio needed to
/// match a bias initialised at a different scale than the weights.
Dataset augment_bias(const Dataset& d, double feature_value = 1.0);

/// Two distinct examples, the majority one listed twice. Output rows are
/// (majority label, minority label A, minority label B).
Dataset build_imbalance_case();

/// Inputs with a shared constant direction (or, orthogonalized, disjoint
/// per-sample coordinate blocks). Deterministic in `spec.seed`.
Matrix correlated_inputs(const CorrelatedInputSpec& spec);

/// Replaces the inputs of `targets` with correlated_inputs(spec).
Dataset build_correlated(const CorrelatedInputSpec& spec, const Dataset& targets);

/// Sample mean of the outputs (the optimal constant solution under squared error).
Vector ocs_vector(const Dataset& d);
Vector mean_input(const Dataset& d);

// Dataset container: a line-oriented text file. Matrices are row-major with
// round-trip decimal precision, so save followed by load is bit-identical.
void save_dataset(const Dataset& d, const std::filesystem::path& path);
std::string format_dataset(const Dataset& d);

/// Loads a dataset file. A non-empty `slices` overrides the slices stored in
/// the file.
Dataset load_dataset(const std::filesystem::path& path, std::span<const LevelSlice> slices = {});
Dataset parse_dataset(const std::string& text, const std::string& source = "<memory>",
                      std::span<const LevelSlice> slices = {});

void write_matrix_csv(const Matrix& m, const std::filesystem::path& path);
Matrix read_matrix_csv(const std::filesystem::path& path);
Matrix parse_matrix_csv(const std::string& text, const std::string& source = "<memory>");

/// Parses "0:1,1:3,3:7" into slices.
std::vector<LevelSlice> parse_slices(const std::string& text);
std::string format_slices(std::span<const LevelSlice> slices);

} // namespace ocs
