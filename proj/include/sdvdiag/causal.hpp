#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdvdiag/dependency_graph.hpp"
#include "sdvdiag/telemetry.hpp"

namespace sdvdiag {

/// Directed causal edge between two metric series.
struct CausalEdge {
    SeriesKey from;
    SeriesKey to;
    double weight = 0.0; // (0, 1]
    int lag = 0;         // sampling steps

    auto operator<=>(const CausalEdge&) const = default;
};

struct CausalParams {
    int max_lag = 5;
    double weight_threshold = 0.4;
    int max_fill_gap = 5; // forward-fill limit, in grid steps

    bool operator==(const CausalParams&) const = default;
};

struct PairwiseWeight {
    double weight = 0.0;
    int lag = 0;
    bool forward = true; // true: x -> y, false: y -> x
};

/// Strongest lagged cross-correlation between two series over lags
/// [1, max_lag], both directions. Series are aligned to a shared grid at the
/// median sampling interval with bounded forward-fill. Throws ZeroVariance
/// when either aligned series is constant and TooShort when fewer than
/// 3 * max_lag aligned points exist.
PairwiseWeight pairwise_causal_weight(const TimeSeries& x, const TimeSeries& y,
                                      int max_lag);

struct CausalModel {
    std::string method = "lagged_correlation";
    CausalParams params;
    std::uint64_t version = 0;
    std::uint64_t fitted_on_version = 0; // dependency graph version
    std::vector<CausalEdge> edges;       // sorted by (from, to)
};

/// Evaluates all ordered pairs and keeps edges at or above the weight
/// threshold, at most one direction per unordered pair (the stronger; exact
/// ties keep both). Constant or too-short pairs are skipped. Throws
/// InsufficientData on fewer than two series.
CausalModel discover(const std::vector<TimeSeries>& series_set,
                     const CausalParams& params = {},
                     std::uint64_t graph_version = 0);

/// Rediscovers only the edges touching instances named in the change set;
/// everything else is retained. An empty change set returns the model
/// unchanged.
CausalModel refit_on_change(const CausalModel& model, const GraphChange& change,
                            const std::vector<TimeSeries>& series_set);

/// Deterministic "(from, to, weight, lag)" edge-list dump.
std::string to_edge_list(const CausalModel& model);

} // namespace sdvdiag
