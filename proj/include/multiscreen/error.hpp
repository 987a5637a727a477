#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace multiscreen {

// Invalid arguments, malformed files, bad configuration. CLI exit code 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A computation could not be carried out on otherwise valid input. CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The self-normalizing variance of a (feature, response) pair fell below the
// degeneracy floor, typically because one of the columns is constant.
class DegenerateColumnError : public NumericalError {
public:
    DegenerateColumnError(Eigen::Index feature, const std::string& what)
        : NumericalError(what), feature_(feature) {}

    /// Feature index, or -1 when the caller did not attach one.
    Eigen::Index feature() const noexcept { return feature_; }

private:
    Eigen::Index feature_;
};

class SingularDesignError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class BudgetExceededError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class SelectionError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace multiscreen
