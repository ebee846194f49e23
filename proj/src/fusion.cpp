#include "sdvdiag/fusion.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace sdvdiag {

bool ExtendedCausalGraph::owners_related(const InstanceId& a,
                                         const InstanceId& b) const {
    if (a == b) {
        return true;
    }
    if (dependency.adjacent(a, b)) {
        return true;
    }
    auto colocated_with = [this](const InstanceId& synthetic,
                                 const InstanceId& instance) {
        auto it = colocated.find(synthetic);
        return it != colocated.end() && it->second.count(instance) > 0;
    };
    if (a.service == kNodeService && colocated_with(a, b)) {
        return true;
    }
    if (b.service == kNodeService && colocated_with(b, a)) {
        return true;
    }
    return false;
}

std::optional<InstanceId> ExtendedCausalGraph::owner_of(const SeriesKey& key) const {
    auto it = metrics.find(key);
    if (it == metrics.end()) {
        return std::nullopt;
    }
    return it->second.owner;
}

ExtendedCausalGraph attach_metrics(const DependencyGraph& graph,
                                   const std::vector<SeriesKey>& metric_keys) {
    ExtendedCausalGraph out;
    out.dependency = graph;
    out.graph_version = graph.version;

    // synthetic node-instances are adjacent to every instance scheduled on
    // that compute node
    auto ensure_synthetic = [&out, &graph](const std::string& node) {
        InstanceId synthetic{kNodeService, node};
        auto [it, inserted] = out.colocated.try_emplace(synthetic);
        if (inserted) {
            for (const auto& [id, n] : graph.nodes) {
                if (n.node == node) {
                    it->second.insert(id);
                }
            }
        }
        return synthetic;
    };

    for (const SeriesKey& key : metric_keys) {
        if (out.metrics.count(key)) {
            continue;
        }
        if (key.service == kNodeService) {
            InstanceId owner = ensure_synthetic(key.instance);
            out.metrics.emplace(key, MetricNode{key, owner, true});
            continue;
        }
        InstanceId owner{key.service, key.instance};
        if (!graph.has_node(owner)) {
            out.skipped_metrics.push_back(key);
            continue;
        }
        out.metrics.emplace(key, MetricNode{key, owner, false});
    }
    std::sort(out.skipped_metrics.begin(), out.skipped_metrics.end());
    return out;
}

ExtendedCausalGraph prune_causal_edges(ExtendedCausalGraph partial,
                                       const CausalModel& model) {
    partial.causal_edges.clear();
    partial.pruned_edge_count = 0;
    partial.model_version = model.version;
    for (const CausalEdge& e : model.edges) {
        auto from_owner = partial.owner_of(e.from);
        auto to_owner = partial.owner_of(e.to);
        if (!from_owner || !to_owner) {
            ++partial.pruned_edge_count; // dangling endpoints never survive
            continue;
        }
        if (partial.owners_related(*from_owner, *to_owner)) {
            partial.causal_edges.push_back(e);
        } else {
            ++partial.pruned_edge_count;
        }
    }
    std::sort(partial.causal_edges.begin(), partial.causal_edges.end());
    return partial;
}

const ExtendedCausalGraph& GraphFusion::build(
    const DependencyGraph& graph, const std::vector<SeriesKey>& metric_keys,
    const CausalModel& model, std::int64_t built_at) {
    ExtendedCausalGraph built =
        prune_causal_edges(attach_metrics(graph, metric_keys), model);
    built.built_at = built_at;
    current_ = std::move(built);
    return *current_;
}

const ExtendedCausalGraph& GraphFusion::current_graph() const {
    if (!current_) {
        throw NotYetBuilt("no extended causal graph has been built yet");
    }
    return *current_;
}

std::string to_dot(const ExtendedCausalGraph& g) {
    std::ostringstream out;
    out << "digraph extended_causal {\n";
    out << "  rankdir=LR;\n";
    out << "  // service instances\n";
    for (const auto& [id, node] : g.dependency.nodes) {
        out << "  \"" << id.str() << "\" [shape=box, label=\"" << id.str();
        if (!node.node.empty()) {
            out << "@" << node.node;
        }
        out << "\"];\n";
    }
    out << "  // synthetic node-instances\n";
    for (const auto& [synthetic, members] : g.colocated) {
        out << "  \"" << synthetic.str()
            << "\" [shape=box, style=dashed, label=\"" << synthetic.str()
            << "\"];\n";
    }
    out << "  // metric nodes\n";
    for (const auto& [key, metric] : g.metrics) {
        out << "  \"" << key.str() << "\" [shape=ellipse, label=\"" << key.metric
            << "\"];\n";
        out << "  \"" << key.str() << "\" -> \"" << metric.owner.str()
            << "\" [style=dotted, arrowhead=none];\n";
    }
    out << "  // dependency edges\n";
    for (const auto& [key, edge] : g.dependency.edges) {
        out << "  \"" << edge.from.str() << "\" -> \"" << edge.to.str()
            << "\" [label=\"" << edge.last_communication << "\"];\n";
    }
    out << "  // co-location\n";
    for (const auto& [synthetic, members] : g.colocated) {
        for (const InstanceId& member : members) {
            out << "  \"" << synthetic.str() << "\" -> \"" << member.str()
                << "\" [style=dotted, arrowhead=none];\n";
        }
    }
    out << "  // causal edges\n";
    for (const CausalEdge& e : g.causal_edges) {
        char weight[32];
        std::snprintf(weight, sizeof(weight), "%.3f", e.weight);
        out << "  \"" << e.from.str() << "\" -> \"" << e.to.str()
            << "\" [style=dashed, label=\"" << weight << "\"];\n";
    }
    out << "}\n";
    return out.str();
}

} // namespace sdvdiag
