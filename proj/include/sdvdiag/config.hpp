#pragma once

#include <cstdint>
#include <string>

#include "sdvdiag/causal.hpp"
#include "sdvdiag/detectors.hpp"
#include "sdvdiag/incident.hpp"
#include "sdvdiag/selector.hpp"
#include "sdvdiag/simulator.hpp"

namespace sdvdiag {

/// Engine-wide tunables. Loaded from a JSON config file; unknown keys are
/// rejected, values are range-checked.
struct EngineConfig {
    std::int64_t retention_ms = TelemetryStore::kDefaultRetentionMs;
    std::size_t max_records = 0; // 0 = unbounded

    DetectorParams detector_defaults;
    BucketThresholds buckets;
    CausalParams causal;
    WalkConfig walk;

    std::int64_t snapshot_timeframe_ms = 15 * 60 * 1000;
    double auto_trigger_score = 5.0;

    Topology topology;
    SimParams sim;

    std::string out_dir = "./sdvdiag-out";

    void validate() const; // ConfigError
};

/// Loads and validates a config file. Throws FileNotFound / ConfigError.
EngineConfig load_config(const std::string& path);

/// Parses config from a JSON string (used by load_config and tests).
EngineConfig parse_config(const std::string& json_text);

std::string config_to_json(const EngineConfig& config);

} // namespace sdvdiag
