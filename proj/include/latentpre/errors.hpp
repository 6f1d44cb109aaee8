#pragma once

#include <stdexcept>
#include <string>

namespace latentpre {

// Data/validation problems: bad input files, incompatible schemas, infeasible
// configurations. The CLI maps these to exit code 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised by the pooled G-test when every conditioning stratum is too sparse.
// Callers running the identification loop must treat this as "dependence kept".
struct InsufficientDataError : ValidationError {
    using ValidationError::ValidationError;
};

}  // namespace latentpre
