#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sdvdiag/dependency_graph.hpp"
#include "sdvdiag/telemetry.hpp"

namespace sdvdiag {

/// Smart-charging fleet layout: vehicle services on their own nodes call
/// charging-station instances spread across worker nodes behind a load
/// balancer.
struct Topology {
    int workers = 3;
    int stations_per_worker = 2;
    int vehicles = 3;

    int stations() const { return workers * stations_per_worker; }

    std::string station_name(int index) const; // 0-based -> "B1"...
    std::string worker_name(int index) const;  // 0-based -> "worker1"...
    std::string vehicle_name(int index) const; // 0-based -> "V1"...
    std::string vehicle_node(int index) const; // 0-based -> "ugv1"...

    /// Worker index hosting a station, or -1 for unknown instances.
    int worker_of_station(const std::string& instance) const;

    /// Ground-truth call graph: every vehicle calls every station.
    std::vector<std::pair<InstanceId, InstanceId>> declared_edges() const;

    void validate() const; // InvalidTopology
};

struct FaultSpec {
    enum class Kind { CpuSaturation } kind = Kind::CpuSaturation;
    std::string target_instance; // a station instance, e.g. "B1"
    std::int64_t onset_ms = 0;
    double magnitude = 30.0;      // cpu percentage points
    std::int64_t duration_ms = 0; // 0 = until the end of the horizon
};

struct SimParams {
    std::int64_t horizon_ms = 30LL * 60 * 1000;
    int request_rate = 8; // per vehicle per second (per-vehicle pattern varies around it)
    std::uint64_t seed = 1;
};

/// Expected post-onset anomaly groups of a cpu-saturation fault.
struct EffectGroups {
    std::vector<SeriesKey> target;
    std::vector<SeriesKey> colocated;
    std::vector<SeriesKey> other_worker;
    std::vector<SeriesKey> vehicle;
};

struct GroundTruth {
    std::optional<FaultSpec> fault;
    EffectGroups expected_anomalous;
    std::vector<std::pair<InstanceId, InstanceId>> dependency_edges;
};

struct SimulationResult {
    std::vector<Span> spans;          // time-ordered
    std::vector<MetricSample> metrics; // time-ordered
    GroundTruth truth;
};

/// Deterministic generation: identical (topology, params, fault) produce
/// byte-identical streams.
SimulationResult simulate(const Topology& topology, const SimParams& params);

/// Re-runs the simulation with a cpu-saturation fault injected at the
/// target. Pre-onset output is identical to the unfaulted run.
SimulationResult inject_fault(const Topology& topology, const SimParams& params,
                              const FaultSpec& fault);

std::string ground_truth_to_json(const GroundTruth& truth);

} // namespace sdvdiag
