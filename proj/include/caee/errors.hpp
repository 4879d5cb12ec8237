#pragma once

#include <stdexcept>
#include <string>

namespace caee {

/// Invalid or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed, missing, or too-short input data (CLI exit code 3).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss (CLI exit code 4).
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::size_t model, std::size_t epoch)
        : std::runtime_error(what), model_(model), epoch_(epoch) {}

    std::size_t model() const noexcept { return model_; }
    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t model_;
    std::size_t epoch_;
};

/// Tensor shapes that do not fit an operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace caee
