#include "sdvdiag/dependency_graph.hpp"

#include <algorithm>
#include <sstream>

namespace sdvdiag {

std::string InstanceId::str() const {
    if (service == "node") {
        return "node:" + instance;
    }
    return service + "/" + instance;
}

bool DependencyGraph::structurally_equal(const DependencyGraph& other) const {
    if (nodes.size() != other.nodes.size() || edges.size() != other.edges.size()) {
        return false;
    }
    for (const auto& [id, node] : nodes) {
        if (!other.has_node(id)) {
            return false;
        }
    }
    for (const auto& [key, edge] : edges) {
        if (!other.edges.count(key)) {
            return false;
        }
    }
    return true;
}

bool DependencyGraph::equivalent(const DependencyGraph& other) const {
    return nodes == other.nodes && edges == other.edges;
}

GraphChange topology_changed(const DependencyGraph& old_graph,
                             const DependencyGraph& new_graph) {
    GraphChange change;
    change.old_version = old_graph.version;
    change.new_version = new_graph.version;
    for (const auto& [id, node] : new_graph.nodes) {
        if (!old_graph.has_node(id)) {
            change.added_nodes.push_back(id);
        }
    }
    for (const auto& [id, node] : old_graph.nodes) {
        if (!new_graph.has_node(id)) {
            change.removed_nodes.push_back(id);
        }
    }
    for (const auto& [key, edge] : new_graph.edges) {
        if (!old_graph.edges.count(key)) {
            change.added_edges.push_back(key);
        }
    }
    for (const auto& [key, edge] : old_graph.edges) {
        if (!new_graph.edges.count(key)) {
            change.removed_edges.push_back(key);
        }
    }
    return change;
}

namespace {

struct Interaction {
    InstanceId caller;
    InstanceId callee;
    std::int64_t time = 0;
};

void touch_node(DependencyGraph& g, const InstanceId& id, const std::string& node,
                std::int64_t ts) {
    auto it = g.nodes.find(id);
    if (it == g.nodes.end()) {
        g.nodes.emplace(id, DependencyNode{id, node, ts, ts});
        return;
    }
    DependencyNode& n = it->second;
    n.first_seen = std::min(n.first_seen, ts);
    n.last_seen = std::max(n.last_seen, ts);
    if (n.node.empty() && !node.empty()) {
        n.node = node;
    }
}

DependencyGraph derive(const std::unordered_map<std::string, Span>& spans) {
    DependencyGraph g;
    // Interactions are keyed so that a client span and the server span it
    // parents describe one call, not two: the client span id identifies the
    // call whenever the parent's peer fields match the child's identity.
    std::map<std::string, Interaction> interactions;

    for (const auto& [id, s] : spans) {
        touch_node(g, {s.service, s.instance}, s.node, s.start);

        if (s.peer_service && s.peer_instance) {
            InstanceId callee{*s.peer_service, *s.peer_instance};
            InstanceId caller{s.service, s.instance};
            if (callee != caller) {
                touch_node(g, callee, "", s.start);
                auto [it, inserted] = interactions.try_emplace(
                    s.span_id, Interaction{caller, callee, s.start});
                if (!inserted) {
                    it->second.time = std::max(it->second.time, s.start);
                }
            }
        }

        if (s.parent_span_id) {
            auto pit = spans.find(*s.parent_span_id);
            if (pit == spans.end()) {
                continue; // unknown parent: root node, no edge
            }
            const Span& p = pit->second;
            InstanceId caller{p.service, p.instance};
            InstanceId callee{s.service, s.instance};
            if (caller == callee) {
                continue; // intra-instance child span
            }
            bool parent_is_client_span = p.peer_service && p.peer_instance &&
                                         *p.peer_service == s.service &&
                                         *p.peer_instance == s.instance;
            const std::string& key = parent_is_client_span ? p.span_id : s.span_id;
            auto [it, inserted] = interactions.try_emplace(
                key, Interaction{caller, callee, s.start});
            if (!inserted) {
                it->second.time = std::max(it->second.time, s.start);
            }
        }
    }

    for (const auto& [id, inter] : interactions) {
        EdgeKey key{inter.caller, inter.callee};
        auto it = g.edges.find(key);
        if (it == g.edges.end()) {
            g.edges.emplace(key, DependencyEdge{inter.caller, inter.callee,
                                                inter.time, 1});
        } else {
            it->second.last_communication =
                std::max(it->second.last_communication, inter.time);
            ++it->second.call_count;
        }
    }
    return g;
}

} // namespace

const DependencyGraph& DependencyGraphBuilder::update(const std::vector<Span>& spans) {
    for (const Span& s : spans) {
        spans_[s.span_id] = s;
    }
    rebuild();
    return graph_;
}

void DependencyGraphBuilder::rebuild() {
    DependencyGraph next = derive(spans_);
    next.version = graph_.version;
    if (!next.structurally_equal(graph_)) {
        ++next.version;
    }
    graph_ = std::move(next);
}

DependencyGraph build_dependency_graph(const std::vector<Span>& spans) {
    DependencyGraphBuilder builder;
    return builder.update(spans);
}

std::string to_dot(const DependencyGraph& graph) {
    std::ostringstream out;
    out << "digraph dependencies {\n";
    out << "  rankdir=LR;\n";
    for (const auto& [id, node] : graph.nodes) {
        out << "  \"" << id.str() << "\" [label=\"" << id.str();
        if (!node.node.empty()) {
            out << "@" << node.node;
        }
        out << "\"];\n";
    }
    for (const auto& [key, edge] : graph.edges) {
        out << "  \"" << edge.from.str() << "\" -> \"" << edge.to.str()
            << "\" [label=\"" << edge.last_communication << "\"];\n";
    }
    out << "}\n";
    return out.str();
}

} // namespace sdvdiag
