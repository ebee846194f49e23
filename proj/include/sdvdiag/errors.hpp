#pragma once

#include <stdexcept>
#include <string>

namespace sdvdiag {

/// Base class for all domain errors raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SDVDIAG_ERROR(NAME)                                                    \
    class NAME : public Error {                                               \
    public:                                                                    \
        using Error::Error;                                                    \
    }

// telemetry
SDVDIAG_ERROR(MalformedRecord);
SDVDIAG_ERROR(InvalidValueError);
SDVDIAG_ERROR(InvalidWindow);
SDVDIAG_ERROR(StorageFull);

// anomaly detection
SDVDIAG_ERROR(EmptySeries);
SDVDIAG_ERROR(UnknownDetector);
SDVDIAG_ERROR(InsufficientHistory);
SDVDIAG_ERROR(EmptyCorpus);

// causal discovery
SDVDIAG_ERROR(ZeroVariance);
SDVDIAG_ERROR(TooShort);
SDVDIAG_ERROR(InsufficientData);

// graph fusion / incident analysis
SDVDIAG_ERROR(NotYetBuilt);
SDVDIAG_ERROR(StartNotInGraph);

// simulator
SDVDIAG_ERROR(InvalidTopology);
SDVDIAG_ERROR(UnknownTarget);

// configuration / io
SDVDIAG_ERROR(ConfigError);
SDVDIAG_ERROR(FileNotFound);

#undef SDVDIAG_ERROR

} // namespace sdvdiag
