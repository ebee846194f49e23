#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdvdiag/detectors.hpp"
#include "sdvdiag/fusion.hpp"

namespace sdvdiag {

/// Detected anomalies indexed for window queries; re-adding the same
/// (series, timestamp, detector) replaces the previous entry.
class AnomalyStore {
public:
    void add(const Anomaly& anomaly);
    void add(const std::vector<Anomaly>& anomalies);
    void clear();

    /// Anomalies with timestamp in [from, to], time-ordered.
    std::vector<Anomaly> window(std::int64_t from, std::int64_t to) const;

    std::size_t size() const { return anomalies_.size(); }

    /// Highest score in the window, if any anomaly exists there.
    std::optional<double> max_score(std::int64_t from, std::int64_t to) const;

private:
    using Key = std::tuple<std::int64_t, std::string, DetectorId>;
    std::map<Key, Anomaly> anomalies_;
};

enum class Trigger { Manual, Automatic };

std::string trigger_name(Trigger t);

struct IncidentSnapshot {
    std::string id;
    Trigger trigger = Trigger::Manual;
    std::int64_t t_incident = 0;
    std::int64_t timeframe_ms = 0;
    ExtendedCausalGraph graph;
    std::vector<Anomaly> anomalies;  // mappable to metric nodes
    std::vector<Anomaly> unmappable; // listed separately, excluded from starts
};

/// Freezes the current extended graph plus the anomalies within
/// [t_incident - timeframe, t_incident]. Throws NotYetBuilt.
IncidentSnapshot take_snapshot(const GraphFusion& fusion, const AnomalyStore& store,
                               Trigger trigger, std::int64_t t_incident,
                               std::int64_t timeframe_ms, std::string incident_id);

/// Removes instances without anomalies in the window, along with their
/// metric nodes and incident edges. Synthetic node-instances survive iff an
/// anomaly exists on their metrics or on a co-located instance.
IncidentSnapshot prune_anomaly_free(const IncidentSnapshot& snapshot);

struct WalkConfig {
    int walks = 1000;
    int steps = 10;
    enum class Order { First, Second } order = Order::First;
    std::uint64_t seed = 0;
    double backtrack_penalty = 0.3; // rho; 1.0 reduces second order to first
};

struct WalkResult {
    std::map<SeriesKey, std::uint64_t> visits;
    std::uint64_t backtracks = 0;
    std::uint64_t dead_end_restarts = 0;
};

/// Random walk from each start, walking effect -> cause along reversed
/// causal edges; candidates are weighted by causal strength. Dead ends
/// restart the walk at its start node without counting a visit; step-0
/// occupancy is never counted. Deterministic given the seed, independent of
/// start-list order duplication and parallelism.
WalkResult random_walk_first_order(const IncidentSnapshot& pruned,
                                   const std::vector<SeriesKey>& starts,
                                   const WalkConfig& config);

/// As first order, except the immediately preceding node's weight is
/// multiplied by the backtrack penalty before renormalization.
WalkResult random_walk_second_order(const IncidentSnapshot& pruned,
                                    const std::vector<SeriesKey>& starts,
                                    const WalkConfig& config);

struct RankedCause {
    SeriesKey node;
    InstanceId instance;
    std::uint64_t count = 0;
    double score = 0.0; // normalized over the listed entries
};

struct RootCauseRanking {
    std::vector<RankedCause> entries; // descending count, ties lexicographic
    WalkConfig config;
    std::vector<SeriesKey> starts; // per-anomaly start nodes
};

RootCauseRanking rank_root_causes(const std::map<SeriesKey, std::uint64_t>& counts,
                                  const ExtendedCausalGraph& graph,
                                  std::optional<std::size_t> top_k = {});

enum class AnalysisMode { AllAnomalies, SingleAnomaly };

struct AnalyzeOptions {
    Trigger trigger = Trigger::Manual;
    std::int64_t t_incident = 0;
    std::int64_t timeframe_ms = 15 * 60 * 1000;
    AnalysisMode mode = AnalysisMode::AllAnomalies;
    /// Single-anomaly mode: walk from this series; defaults to the
    /// highest-scoring anomaly in the window.
    std::optional<SeriesKey> single_target;
    WalkConfig walk;
    std::optional<std::size_t> top_k;
    std::string incident_id;
    /// Automatic trigger fires only when some anomaly's score in the window
    /// reaches this threshold.
    double auto_trigger_score = 5.0;
};

struct IncidentResult {
    IncidentSnapshot snapshot;
    IncidentSnapshot pruned;
    RootCauseRanking ranking;
    std::string note; // diagnostic note, e.g. why the ranking is empty
    bool triggered = true;
};

/// Snapshot -> prune -> walk -> rank. An automatic trigger below threshold,
/// or a window without anomalies, yields an empty ranking with a note.
IncidentResult analyze_incident(const GraphFusion& fusion, const AnomalyStore& store,
                                const AnalyzeOptions& options);

/// Writes snapshot.json, pruned.dot, ranking.json and summary.json under
/// dir/<incident_id>/ with stable field ordering. Returns the incident dir.
std::string write_incident_artifacts(const IncidentResult& result,
                                     const std::string& dir);

std::string ranking_to_json(const RootCauseRanking& ranking);
std::string snapshot_to_json(const IncidentSnapshot& snapshot);

} // namespace sdvdiag
