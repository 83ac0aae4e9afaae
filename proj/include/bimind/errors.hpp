#pragma once

#include <stdexcept>
#include <string>

namespace bimind {

// Every error contract in the library surfaces as one of these. The CLI maps
// any of them to a nonzero exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class DegenerateInputError : public Error { using Error::Error; };
class NonFiniteError : public Error { using Error::Error; };
class VocabularyError : public Error { using Error::Error; };
class ProbabilityError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class LabelError : public Error { using Error::Error; };
class MetricError : public Error { using Error::Error; };
class SplitError : public Error { using Error::Error; };
class CompatibilityError : public Error { using Error::Error; };
class DatasetError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };

} // namespace bimind
