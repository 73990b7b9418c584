#pragma once

#include "ocs/common.hpp"
#include "ocs/task_data.hpp"
#include "ocs/trainer.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace ocs {

/// |mean_i yhat_i - ocs|_1.
double l1_to_ocs(const Matrix& outputs, const Vector& ocs);

/// Per-level continuous correct-rejection score
///   f_k = ((1 - yhat)_{s:e} . (1 - y)_{s:e}) / sum_{s:e} (1 - y).
/// Levels whose targets are all one have no zero entries and are reported absent.
LevelValues tnr(const Vector& y_hat, const Vector& y, std::span<const LevelSlice> slices);

/// Symmetric counterpart (yhat . y) / sum y over each level; absent when a level has no positive target.
LevelValues tpr(const Vector& y_hat, const Vector& y, std::span<const LevelSlice> slices);

/// Sample-averaged tnr over the columns of y_hat and y. A level is absent only if
/// it is absent for every sample.
LevelValues mean_tnr(const Matrix& y_hat, const Matrix& y, std::span<const LevelSlice> slices);

/// mean_i tnr(ybar, y_i).
LevelValues ocs_baseline_tnr(const Dataset& d);

struct IndifferenceReport {
    Vector mean;   ///< per output unit, across inputs
    Vector stddev; ///< population standard deviation across inputs
    std::vector<bool> indifferent;
};

/// A unit is indifferent when stddev <= rel_tol |mean| and |mean| > min_mean.
IndifferenceReport indifference(const Matrix& outputs, double rel_tol = 0.01, double min_mean = 0.05);

struct TimingSummary {
    std::optional<double> t_ocs;
    std::optional<double> t_diff;
};

/// t_ocs: first time l1 <= delta |ybar|_1. t_diff: first time loss <= loss(0) / 2.
TimingSummary timing_summary(std::span<const double> times, std::span<const double> l1, std::span<const double> loss,
                             double ocs_l1_norm, double delta = 0.05);

struct MetricsSeries {
    std::vector<double> times;
    std::vector<double> l1_to_ocs;
    std::vector<LevelValues> tnr; ///< mean tnr per level per time
    std::vector<Vector> indifference_std;
    std::vector<double> loss;
    double ocs_l1_norm = 0.0;
    TimingSummary timing;
};

/// Metrics for every logged step of a training run; the run must have logged outputs.
MetricsSeries compute_metrics(const TrajectorySeries& run, const Dataset& d, double delta = 0.05);

/// Long-format CSV: time,metric,index,value. Absent TNR levels are skipped.
void write_metrics_csv(std::ostream& out, const MetricsSeries& m);

} // namespace ocs
