#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sdvdiag/telemetry.hpp"

namespace sdvdiag {

struct InstanceId {
    std::string service;
    std::string instance;

    auto operator<=>(const InstanceId&) const = default;

    /// "service/instance"; the reserved "node" service renders as
    /// "node:instance" (synthetic node-instances).
    std::string str() const;
};

struct DependencyNode {
    InstanceId id;
    std::string node; // compute-node id; empty when only peer-evidence exists
    std::int64_t first_seen = 0;
    std::int64_t last_seen = 0;

    bool operator==(const DependencyNode&) const = default;
};

struct DependencyEdge {
    InstanceId from;
    InstanceId to;
    std::int64_t last_communication = 0;
    std::uint64_t call_count = 0;

    bool operator==(const DependencyEdge&) const = default;
};

using EdgeKey = std::pair<InstanceId, InstanceId>;

struct DependencyGraph {
    std::map<InstanceId, DependencyNode> nodes;
    std::map<EdgeKey, DependencyEdge> edges;
    std::uint64_t version = 0;

    bool has_node(const InstanceId& id) const { return nodes.count(id) > 0; }
    bool has_edge(const InstanceId& a, const InstanceId& b) const {
        return edges.count({a, b}) > 0;
    }
    /// Direct adjacency ignoring edge direction.
    bool adjacent(const InstanceId& a, const InstanceId& b) const {
        return has_edge(a, b) || has_edge(b, a);
    }
    /// Node and edge sets match, ignoring timestamps and counters.
    bool structurally_equal(const DependencyGraph& other) const;
    /// Nodes, edges and their attributes match; versions are ignored.
    bool equivalent(const DependencyGraph& other) const;
};

struct GraphChange {
    std::vector<InstanceId> added_nodes;
    std::vector<InstanceId> removed_nodes;
    std::vector<EdgeKey> added_edges;
    std::vector<EdgeKey> removed_edges;
    std::uint64_t old_version = 0;
    std::uint64_t new_version = 0;

    bool changed() const {
        return !added_nodes.empty() || !removed_nodes.empty() ||
               !added_edges.empty() || !removed_edges.empty();
    }
};

/// Structural diff between two graphs, ignoring timestamps and counters.
GraphChange topology_changed(const DependencyGraph& old_graph,
                             const DependencyGraph& new_graph);

/// Accumulates spans and derives the service/instance dependency graph.
/// Updating with already-seen spans is a no-op; the result is always
/// equivalent to a one-shot build over every span seen so far.
class DependencyGraphBuilder {
public:
    /// Merges spans and rebuilds. Returns the resulting snapshot.
    const DependencyGraph& update(const std::vector<Span>& spans);

    const DependencyGraph& graph() const { return graph_; }

private:
    void rebuild();

    std::unordered_map<std::string, Span> spans_; // by span_id, keep-last
    DependencyGraph graph_;
};

/// One-shot build from a span list.
DependencyGraph build_dependency_graph(const std::vector<Span>& spans);

/// Deterministic DOT export; nodes labeled "service/instance@node", edges
/// labeled with last_communication.
std::string to_dot(const DependencyGraph& graph);

} // namespace sdvdiag
