#pragma once

#include <stdexcept>
#include <string>

namespace emodyn {

// Shape disagreement between tensor operands.
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Violated API precondition (index out of range, empty input, ...).
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Malformed corpus input; carries the offending line number.
struct ParseError : std::runtime_error {
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
    std::size_t line;
};

// Unknown or out-of-range class label.
struct LabelError : std::runtime_error {
    explicit LabelError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint or config could not be loaded.
struct LoadError : std::runtime_error {
    explicit LoadError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure during optimization (non-finite gradients, ...).
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace emodyn
