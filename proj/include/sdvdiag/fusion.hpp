#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sdvdiag/causal.hpp"
#include "sdvdiag/dependency_graph.hpp"

namespace sdvdiag {

struct MetricNode {
    SeriesKey key;
    InstanceId owner;
    bool synthetic_owner = false; // owner is a node-instance ("node:worker")

    bool operator==(const MetricNode&) const = default;
};

/// Dependency graph combined with metric nodes and the causal edges that
/// survive dependency pruning.
struct ExtendedCausalGraph {
    DependencyGraph dependency;
    std::map<SeriesKey, MetricNode> metrics;
    /// synthetic node-instance -> co-located service instances
    std::map<InstanceId, std::set<InstanceId>> colocated;
    std::vector<CausalEdge> causal_edges;
    std::vector<SeriesKey> skipped_metrics; // unknown owners, reported
    std::size_t pruned_edge_count = 0;
    std::int64_t built_at = 0;
    std::uint64_t graph_version = 0;
    std::uint64_t model_version = 0;

    bool has_metric(const SeriesKey& key) const { return metrics.count(key) > 0; }

    /// Owners related: identical, dependency-adjacent, or co-located via a
    /// synthetic node-instance.
    bool owners_related(const InstanceId& a, const InstanceId& b) const;

    std::optional<InstanceId> owner_of(const SeriesKey& key) const;
};

/// Service name reserved for compute-node level metrics; such metrics attach
/// to a synthetic "node:<instance>" owner adjacent to everything scheduled on
/// that node.
inline constexpr const char* kNodeService = "node";

/// Attaches metric nodes to their owning instances. Keys naming unknown
/// instances are skipped and reported in the result. Causal edges are left
/// empty (see prune_causal_edges).
ExtendedCausalGraph attach_metrics(const DependencyGraph& graph,
                                   const std::vector<SeriesKey>& metric_keys);

/// Keeps a causal edge iff both endpoints are attached and their owners are
/// related; drops and counts the rest. Records the model version.
ExtendedCausalGraph prune_causal_edges(ExtendedCausalGraph partial,
                                       const CausalModel& model);

/// Single-writer builder holding the latest immutable extended graph.
class GraphFusion {
public:
    const ExtendedCausalGraph& build(const DependencyGraph& graph,
                                     const std::vector<SeriesKey>& metric_keys,
                                     const CausalModel& model,
                                     std::int64_t built_at);

    /// Latest build. Throws NotYetBuilt before the first build completes.
    const ExtendedCausalGraph& current_graph() const;

    bool has_graph() const { return current_.has_value(); }

private:
    std::optional<ExtendedCausalGraph> current_;
};

/// Deterministic DOT export: instance nodes, synthetic node-instances and
/// metric nodes as distinct classes; dependency edges solid, causal edges
/// dashed with weight labels.
std::string to_dot(const ExtendedCausalGraph& graph);

} // namespace sdvdiag
