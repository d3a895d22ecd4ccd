#pragma once

#include <stdexcept>
#include <string>

namespace crowdagg {

// Base for all input/contract violations. CLI maps these to exit code 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Base for numerical failures. CLI maps these to exit code 3.
struct NumericError : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct DuplicateLabel : Error {
    using Error::Error;
};

struct InvalidLabel : Error {
    using Error::Error;
};

struct EmptyDataset : Error {
    using Error::Error;
};

struct InvalidConfig : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct BinaryOnly : Error {
    using Error::Error;
};

struct NoGoldOverlap : Error {
    using Error::Error;
};

struct DegeneratePrior : NumericError {
    using NumericError::NumericError;
};

struct NonFiniteGradient : NumericError {
    using NumericError::NumericError;
};

}  // namespace crowdagg
