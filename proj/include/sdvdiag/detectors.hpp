#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sdvdiag/telemetry.hpp"

namespace sdvdiag {

/// Per-series summary features driving detector selection.
struct SeriesFeatures {
    double mean = 0.0;
    double variance = 0.0;
    double spikiness = 0.0;            // max |x - median| / IQR, 0 if IQR = 0
    double seasonality_strength = 0.0; // [0, 1]
    double trend_strength = 0.0;       // [0, 1]
    std::size_t length = 0;
};

SeriesFeatures extract_features(const TimeSeries& series);

enum class DetectorId {
    RollingZscore,
    Iqr,
    EwmaResidual,
    SeasonalResidual,
};

/// Fixed evaluation order of the detector pool (also the tie-break order).
inline constexpr std::array<DetectorId, 4> kDetectorPool = {
    DetectorId::RollingZscore,
    DetectorId::Iqr,
    DetectorId::EwmaResidual,
    DetectorId::SeasonalResidual,
};

std::string detector_name(DetectorId id);
DetectorId detector_from_name(const std::string& name); // UnknownDetector

struct DetectorParams {
    double k = 3.0;     // deviation threshold in normalized units
    int window = 60;    // rolling window (rolling_zscore)
    double alpha = 0.3; // smoothing factor (ewma_residual)
    int period = 0;     // seasonal period in samples; 0 = auto-detect

    bool operator==(const DetectorParams&) const = default;
};

struct Anomaly {
    SeriesKey series_key;
    std::int64_t timestamp = 0;
    double score = 0.0;
    DetectorId detector = DetectorId::RollingZscore;
};

/// Minimum series length before the detector produces scores.
std::size_t detector_warmup(DetectorId id, const DetectorParams& params = {});

/// Runs one pool detector over a series. Deterministic; anomalies are
/// time-ordered with finite scores. Throws InsufficientHistory when the
/// series is shorter than the detector warm-up.
std::vector<Anomaly> detect(const TimeSeries& series, DetectorId id,
                            const DetectorParams& params = {});

} // namespace sdvdiag
