#include "ocs/ocs_metrics.hpp"

#include <cstdio>
#include <ostream>

namespace ocs {

namespace {

[[noreturn]] void fail(const std::string& message) { throw Error("ocs_metrics", message); }

void check_slices(std::span<const LevelSlice> slices, Index n) {
    for (const auto& s : slices)
        if (s.start < 0 || s.end > n || s.start >= s.end)
            fail("slice " + std::to_string(s.start) + ":" + std::to_string(s.end) + " is invalid for " + std::to_string(n) + " outputs");
}

} // namespace

double l1_to_ocs(const Matrix& outputs, const Vector& ocs) {
    if (outputs.rows() != ocs.size()) fail("outputs have " + std::to_string(outputs.rows()) + " rows, OCS has " + std::to_string(ocs.size()));
    if (outputs.cols() == 0) fail("outputs have no samples");
    return (outputs.rowwise().mean() - ocs).lpNorm<1>();
}

LevelValues tnr(const Vector& y_hat, const Vector& y, std::span<const LevelSlice> slices) {
    if (y_hat.size() != y.size()) fail("prediction and target sizes differ");
    check_slices(slices, y.size());
    LevelValues out;
    for (const auto& s : slices) {
        const Vector neg = Vector::Ones(s.size()) - y.segment(s.start, s.size());
        const double denom = neg.sum();
        if (denom == 0.0) {
            out.emplace_back();
            continue;
        }
        out.emplace_back((Vector::Ones(s.size()) - y_hat.segment(s.start, s.size())).dot(neg) / denom);
    }
    return out;
}

LevelValues tpr(const Vector& y_hat, const Vector& y, std::span<const LevelSlice> slices) {
    if (y_hat.size() != y.size()) fail("prediction and target sizes differ");
    check_slices(slices, y.size());
    LevelValues out;
    for (const auto& s : slices) {
        const double denom = y.segment(s.start, s.size()).sum();
        if (denom == 0.0) {
            out.emplace_back();
            continue;
        }
        out.emplace_back(y_hat.segment(s.start, s.size()).dot(y.segment(s.start, s.size())) / denom);
    }
    return out;
}

LevelValues mean_tnr(const Matrix& y_hat, const Matrix& y, std::span<const LevelSlice> slices) {
    if (y_hat.rows() != y.rows() || y_hat.cols() != y.cols()) fail("prediction and target shapes differ");
    std::vector<double> sum(slices.size(), 0.0);
    std::vector<Index> count(slices.size(), 0);
    for (Index i = 0; i < y.cols(); ++i) {
        const LevelValues v = tnr(y_hat.col(i), y.col(i), slices);
        for (std::size_t k = 0; k < v.size(); ++k)
            if (v[k]) {
                sum[k] += *v[k];
                ++count[k];
            }
    }
    LevelValues out(slices.size());
    for (std::size_t k = 0; k < slices.size(); ++k)
        if (count[k] > 0) out[k] = sum[k] / static_cast<double>(count[k]);
    return out;
}

LevelValues ocs_baseline_tnr(const Dataset& d) {
    const Vector ybar = ocs_vector(d);
    return mean_tnr(ybar.replicate(1, d.samples()), d.Y, d.level_slices);
}

IndifferenceReport indifference(const Matrix& outputs, double rel_tol, double min_mean) {
    if (outputs.cols() == 0) fail("outputs have no samples");
    IndifferenceReport r;
    r.mean = outputs.rowwise().mean();
    const Matrix centered = outputs.colwise() - r.mean;
    r.stddev = (centered.rowwise().squaredNorm() / static_cast<double>(outputs.cols())).cwiseSqrt();
    for (Index m = 0; m < outputs.rows(); ++m)
        r.indifferent.push_back(std::abs(r.mean(m)) > min_mean && r.stddev(m) <= rel_tol * std::abs(r.mean(m)));
    return r;
}

TimingSummary timing_summary(std::span<const double> times, std::span<const double> l1, std::span<const double> loss,
                             double ocs_l1_norm, double delta) {
    if (times.size() != l1.size() || times.size() != loss.size()) fail("times, l1 and loss series differ in length");
    TimingSummary t;
    if (times.empty()) return t;
    const double l1_threshold = delta * ocs_l1_norm;
    const double loss_threshold = 0.5 * loss[0];
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (!t.t_ocs && l1[k] <= l1_threshold) t.t_ocs = times[k];
        if (!t.t_diff && loss[k] <= loss_threshold) t.t_diff = times[k];
    }
    return t;
}

MetricsSeries compute_metrics(const TrajectorySeries& run, const Dataset& d, double delta) {
    if (run.outputs.size() != run.steps.size()) fail("training run did not log outputs for every step");
    MetricsSeries m;
    m.times = run.times();
    m.loss = run.loss;
    const Vector ybar = ocs_vector(d);
    m.ocs_l1_norm = ybar.lpNorm<1>();
    for (const Matrix& y : run.outputs) {
        m.l1_to_ocs.push_back(l1_to_ocs(y, ybar));
        m.tnr.push_back(mean_tnr(y, d.Y, d.level_slices));
        m.indifference_std.push_back(indifference(y).stddev);
    }
    m.timing = timing_summary(m.times, m.l1_to_ocs, m.loss, m.ocs_l1_norm, delta);
    return m;
}

void write_metrics_csv(std::ostream& out, const MetricsSeries& m) {
    out << "time,metric,index,value\n";
    char buf[128];
    auto row = [&](double t, const char* name, std::size_t index, double value) {
        std::snprintf(buf, sizeof buf, "%.17g,%s,%zu,%.17g\n", t, name, index, value);
        out << buf;
    };
    for (std::size_t k = 0; k < m.times.size(); ++k) {
        row(m.times[k], "loss", 0, m.loss[k]);
        row(m.times[k], "l1_to_ocs", 0, m.l1_to_ocs[k]);
        for (std::size_t l = 0; l < m.tnr[k].size(); ++l)
            if (m.tnr[k][l]) row(m.times[k], "tnr", l, *m.tnr[k][l]);
        for (Index u = 0; u < m.indifference_std[k].size(); ++u)
            row(m.times[k], "output_std", static_cast<std::size_t>(u), m.indifference_std[k](u));
    }
}

} // namespace ocs
