#pragma once

#include <stdexcept>
#include <string>

namespace coco {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A vector with norm below the degenerate-feature threshold (1e-30).
struct ZeroNormError : Error { using Error::Error; };

// Operands of mismatched dimension.
struct DimMismatchError : Error { using Error::Error; };

// Class count below 2.
struct InvalidKError : Error { using Error::Error; };

// A sample's class has no usable centroid (batch count zero).
struct UnusableCentroidError : Error { using Error::Error; };

// A function evaluation produced NaN/Inf.
struct NonFiniteError : Error { using Error::Error; };

// IDX file header magic does not match the expected tensor kind.
struct BadMagicError : Error { using Error::Error; };

// IDX file payload shorter than the header promises.
struct TruncatedFileError : Error { using Error::Error; };

// Image and label files disagree on sample count.
struct CountMismatchError : Error { using Error::Error; };

// Training loss became non-finite.
struct DivergedError : Error { using Error::Error; };

// Not enough samples/classes/pairs to compute a metric.
struct InsufficientDataError : Error { using Error::Error; };

// A probe identity has no gallery mate.
struct MissingMateError : Error { using Error::Error; };

// Logistic fit given a single-class label set.
struct DegenerateLabelsError : Error { using Error::Error; };

// Collinear or rank-deficient point configuration.
struct DegenerateGeometryError : Error { using Error::Error; };

// Every region score is missing for some probe/reference pair.
struct AllRegionsMissingError : Error { using Error::Error; };

// File could not be opened, read or written.
struct IoError : Error { using Error::Error; };

// Invalid command line or config file input.
struct ConfigError : Error { using Error::Error; };

} // namespace coco
