#pragma once

#include "ocs/common.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ocs {

/// divide: p ~ exp(y / T). multiply: p ~ exp(y * T).
enum class SoftmaxConvention { divide, multiply };

const char* to_string(SoftmaxConvention c);
SoftmaxConvention parse_softmax_convention(const std::string& text);

struct DiscretizationConfig {
    double temperature = 0.2;
    int picks = 3;
    std::uint64_t seed = 0;
    SoftmaxConvention convention = SoftmaxConvention::divide;

    void validate(Index outputs) const;
};

/// Largest output count accepted by the exact enumerations.
inline constexpr Index kMaxEnumerationOutputs = 25;

/// Softmax of the scaled outputs.
Vector response_probabilities(const Vector& y_hat, const DiscretizationConfig& cfg);

/// k indices drawn one at a time without replacement, renormalizing over the
/// remaining items after each draw. Returns a 0/1 vector with exactly k ones.
Vector discretize(const Vector& y_hat, const DiscretizationConfig& cfg, std::mt19937_64& rng);

/// Probability that the draw produces exactly `subset`, summed over its k! orders.
double subset_probability(const Vector& y_hat, const DiscretizationConfig& cfg, std::span<const Index> subset);

/// Calls fn for every k-subset of {0..n-1} in lexicographic order.
void for_each_subset(Index n, int k, const std::function<void(std::span<const Index>)>& fn);

/// Exact expectation of the per-level tnr of the discretized response.
LevelValues expected_tnr(const Vector& y_hat, const Vector& y, std::span<const LevelSlice> slices, const DiscretizationConfig& cfg);

struct MonteCarloTnr {
    LevelValues mean;
    LevelValues standard_error;
    Index draws = 0;
};

MonteCarloTnr monte_carlo_tnr(const Vector& y_hat, const Vector& y, std::span<const LevelSlice> slices,
                              const DiscretizationConfig& cfg, Index draws, std::mt19937_64& rng);

} // namespace ocs
