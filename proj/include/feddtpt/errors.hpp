#pragma once

#include <stdexcept>
#include <string>

namespace feddtpt {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// prompt-core
struct EmptyPromptError : Error { using Error::Error; };
struct PositionError : Error { using Error::Error; };
struct StaleModificationError : Error { using Error::Error; };
struct TemplateError : Error { using Error::Error; };

// data-layer
struct FormatError : Error { using Error::Error; };
struct LabelError : Error { using Error::Error; };
struct InsufficientDataError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// backends
struct BackendUnavailableError : Error { using Error::Error; };
struct BackendRejectedError : Error {
    BackendRejectedError(int status, const std::string& msg)
        : Error(msg), status(status) {}
    int status;
};
struct ProtocolError : Error { using Error::Error; };
struct UnknownTokenError : Error { using Error::Error; };
struct NoCandidatesError : Error { using Error::Error; };

// client-opt / aggregation
struct ShapeError : Error { using Error::Error; };
struct DegenerateVectorError : Error { using Error::Error; };
struct SingleClientError : Error { using Error::Error; };
struct InsufficientPointsError : Error { using Error::Error; };
struct EmptyAggregateError : Error { using Error::Error; };

// orchestrator / cli
struct RoundAbortedError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace feddtpt
