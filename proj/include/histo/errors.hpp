#ifndef HISTO_ERRORS_HPP
#define HISTO_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace histo {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// data_manifest
struct IngestionError : Error { using Error::Error; };
struct LabelError : Error { using Error::Error; };
struct IntegrityError : Error { using Error::Error; };
struct SplitError : Error { using Error::Error; };
struct TaskDerivationError : Error { using Error::Error; };

// pipeline
struct PreprocessError : Error { using Error::Error; };
struct StreamError : Error { using Error::Error; };

// model_zoo
struct RegistryError : Error { using Error::Error; };
struct WeightLoadError : Error { using Error::Error; };
struct CheckpointError : Error { using Error::Error; };

// trainer
struct ConfigurationError : Error { using Error::Error; };
struct PredictionError : Error { using Error::Error; };

// metrics
struct InputError : Error { using Error::Error; };
struct RocUndefinedError : Error { using Error::Error; };
struct AggregationError : Error { using Error::Error; };

} // namespace histo

#endif
