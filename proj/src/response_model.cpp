#include "ocs/response_model.hpp"

#include "ocs/ocs_metrics.hpp"

#include <algorithm>
#include <limits>

namespace ocs {

namespace {

[[noreturn]] void fail(const std::string& message) { throw Error("response_model", message); }

Vector logits(const Vector& y_hat, const DiscretizationConfig& cfg) {
    if (!y_hat.allFinite()) fail("outputs contain non-finite values");
    return cfg.convention == SoftmaxConvention::divide ? Vector(y_hat / cfg.temperature) : Vector(y_hat * cfg.temperature);
}

// Probability of picking `pick` among the items with taken[j] == false.
double conditional_probability(const Vector& z, const std::vector<char>& taken, Index pick) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < z.size(); ++j)
        if (!taken[j]) peak = std::max(peak, z(j));
    double total = 0.0;
    for (Index j = 0; j < z.size(); ++j)
        if (!taken[j]) total += std::exp(z(j) - peak);
    return std::exp(z(pick) - peak) / total;
}

} // namespace

const char* to_string(SoftmaxConvention c) { return c == SoftmaxConvention::divide ? "divide" : "multiply"; }

SoftmaxConvention parse_softmax_convention(const std::string& text) {
    if (text == "divide") return SoftmaxConvention::divide;
    if (text == "multiply") return SoftmaxConvention::multiply;
    fail("unknown softmax convention '" + text + "' (expected divide or multiply)");
}

void DiscretizationConfig::validate(Index outputs) const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) fail("temperature must be positive and finite");
    if (picks < 1) fail("picks must be at least 1");
    if (picks > outputs) fail("picks (" + std::to_string(picks) + ") exceeds the number of outputs (" + std::to_string(outputs) + ")");
}

Vector response_probabilities(const Vector& y_hat, const DiscretizationConfig& cfg) {
    cfg.validate(y_hat.size());
    const Vector z = logits(y_hat, cfg);
    const Vector e = (z.array() - z.maxCoeff()).exp();
    return e / e.sum();
}

Vector discretize(const Vector& y_hat, const DiscretizationConfig& cfg, std::mt19937_64& rng) {
    cfg.validate(y_hat.size());
    const Vector z = logits(y_hat, cfg);
    const Index n = z.size();
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    Vector weights(n);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int draw = 0; draw < cfg.picks; ++draw) {
        double peak = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j < n; ++j)
            if (!taken[j]) peak = std::max(peak, z(j));
        double total = 0.0;
        for (Index j = 0; j < n; ++j) {
            weights(j) = taken[j] ? 0.0 : std::exp(z(j) - peak);
            total += weights(j);
        }
        const double u = unit(rng) * total;
        Index chosen = -1;
        double acc = 0.0;
        for (Index j = 0; j < n; ++j) {
            if (taken[j] || weights(j) == 0.0) continue;
            chosen = j;
            acc += weights(j);
            if (u < acc) break;
        }
        taken[chosen] = 1;
    }
    Vector out(n);
    for (Index j = 0; j < n; ++j) out(j) = taken[j] ? 1.0 : 0.0;
    return out;
}

double subset_probability(const Vector& y_hat, const DiscretizationConfig& cfg, std::span<const Index> subset) {
    cfg.validate(y_hat.size());
    if (static_cast<int>(subset.size()) != cfg.picks)
        fail("subset has " + std::to_string(subset.size()) + " indices, expected " + std::to_string(cfg.picks));
    std::vector<Index> order(subset.begin(), subset.end());
    std::sort(order.begin(), order.end());
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (order[k] < 0 || order[k] >= y_hat.size()) fail("subset index " + std::to_string(order[k]) + " out of range");
        if (k > 0 && order[k] == order[k - 1]) fail("subset contains duplicate index " + std::to_string(order[k]));
    }
    const Vector z = logits(y_hat, cfg);
    double total = 0.0;
    do {
        std::vector<char> taken(static_cast<std::size_t>(z.size()), 0);
        double p = 1.0;
        for (Index pick : order) {
            p *= conditional_probability(z, taken, pick);
            if (p == 0.0) break;
            taken[pick] = 1;
        }
        total += p;
    } while (std::next_permutation(order.begin(), order.end()));
    return total;
}

void for_each_subset(Index n, int k, const std::function<void(std::span<const Index>)>& fn) {
    if (k < 0 || k > n) return;
    std::vector<Index> idx(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) idx[j] = j;
    while (true) {
        fn(idx);
        int j = k - 1;
        while (j >= 0 && idx[j] == n - k + j) --j;
        if (j < 0) return;
        ++idx[j];
        for (int l = j + 1; l < k; ++l) idx[l] = idx[l - 1] + 1;
    }
}

LevelValues expected_tnr(const Vector& y_hat, const Vector& y, std::span<const LevelSlice> slices, const DiscretizationConfig& cfg) {
    if (y_hat.size() > kMaxEnumerationOutputs)
        fail("exact enumeration is limited to " + std::to_string(kMaxEnumerationOutputs) + " outputs, got " + std::to_string(y_hat.size()));
    if (y_hat.size() != y.size()) fail("prediction and target sizes differ");
    cfg.validate(y_hat.size());
    std::vector<double> sum(slices.size(), 0.0);
    const LevelValues defined = tnr(Vector::Zero(y.size()), y, slices);
    Vector indicator = Vector::Zero(y.size());
    for_each_subset(y_hat.size(), cfg.picks, [&](std::span<const Index> s) {
        const double p = subset_probability(y_hat, cfg, s);
        if (p == 0.0) return;
        indicator.setZero();
        for (Index j : s) indicator(j) = 1.0;
        const LevelValues v = tnr(indicator, y, slices);
        for (std::size_t k = 0; k < v.size(); ++k)
            if (v[k]) sum[k] += p * *v[k];
    });
    LevelValues out(slices.size());
    for (std::size_t k = 0; k < slices.size(); ++k)
        if (defined[k]) out[k] = sum[k];
    return out;
}

MonteCarloTnr monte_carlo_tnr(const Vector& y_hat, const Vector& y, std::span<const LevelSlice> slices,
                              const DiscretizationConfig& cfg, Index draws, std::mt19937_64& rng) {
    if (draws < 2) fail("Monte Carlo needs at least two draws");
    if (y_hat.size() != y.size()) fail("prediction and target sizes differ");
    std::vector<double> sum(slices.size(), 0.0), sum_sq(slices.size(), 0.0);
    const LevelValues defined = tnr(Vector::Zero(y.size()), y, slices);
    for (Index t = 0; t < draws; ++t) {
        const LevelValues v = tnr(discretize(y_hat, cfg, rng), y, slices);
        for (std::size_t k = 0; k < v.size(); ++k)
            if (v[k]) {
                sum[k] += *v[k];
                sum_sq[k] += *v[k] * *v[k];
            }
    }
    MonteCarloTnr r;
    r.draws = draws;
    r.mean.resize(slices.size());
    r.standard_error.resize(slices.size());
    const double n = static_cast<double>(draws);
    for (std::size_t k = 0; k < slices.size(); ++k) {
        if (!defined[k]) continue;
        const double mean = sum[k] / n;
        const double var = std::max(0.0, (sum_sq[k] - n * mean * mean) / (n - 1.0));
        r.mean[k] = mean;
        r.standard_error[k] = std::sqrt(var / n);
    }
    return r;
}

} // namespace ocs
