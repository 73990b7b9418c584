#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ocs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Half-open row range [start, end) of the output vector belonging to one
/// hierarchy level.
struct LevelSlice {
    Index start = 0;
    Index end = 0;

    Index size() const { return end - start; }
    friend bool operator==(const LevelSlice&, const LevelSlice&) = default;
};

/// A per-level metric value. Levels whose metric is undefined (for example a
/// vanishing denominator) carry no value.
using LevelValues = std::vector<std::optional<double>>;

enum class Depth { shallow, deep };

/// Base class for every error raised by the library. `module()` names the
/// component that failed so the CLI can report it.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& message)
        : std::runtime_error(module + ": " + message), module_(std::move(module)) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

class ParseError : public Error {
public:
    ParseError(const std::string& source, std::size_t line, std::size_t column, const std::string& message)
        : Error("task_data", source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + message),
          line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

class DivergenceError : public Error {
public:
    DivergenceError(Index step, double loss, double initial)
        : Error("trainer", "diverged at step " + std::to_string(step) + " (loss " + std::to_string(loss) +
                               " > 1e6 x initial " + std::to_string(initial) + ")"),
          step_(step) {}

    Index step() const noexcept { return step_; }

private:
    Index step_;
};

/// |a.b| / (|a| |b|); zero when either vector vanishes.
inline double alignment(const Vector& a, const Vector& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::abs(a.dot(b)) / (na * nb);
}

inline const char* to_string(Depth depth) { return depth == Depth::deep ? "deep" : "shallow"; }

} // namespace ocs
