#include "sdvdiag/incident.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "sdvdiag/rng.hpp"

namespace sdvdiag {

using nlohmann::ordered_json;

void AnomalyStore::add(const Anomaly& anomaly) {
    anomalies_[{anomaly.timestamp, anomaly.series_key.str(), anomaly.detector}] =
        anomaly;
}

void AnomalyStore::add(const std::vector<Anomaly>& anomalies) {
    for (const Anomaly& a : anomalies) {
        add(a);
    }
}

void AnomalyStore::clear() {
    anomalies_.clear();
}

std::vector<Anomaly> AnomalyStore::window(std::int64_t from, std::int64_t to) const {
    std::vector<Anomaly> out;
    auto lo = anomalies_.lower_bound({from, "", DetectorId::RollingZscore});
    for (auto it = lo; it != anomalies_.end() && std::get<0>(it->first) <= to; ++it) {
        out.push_back(it->second);
    }
    return out;
}

std::optional<double> AnomalyStore::max_score(std::int64_t from,
                                              std::int64_t to) const {
    std::optional<double> best;
    for (const Anomaly& a : window(from, to)) {
        if (!best || a.score > *best) {
            best = a.score;
        }
    }
    return best;
}

std::string trigger_name(Trigger t) {
    return t == Trigger::Manual ? "manual" : "automatic";
}

IncidentSnapshot take_snapshot(const GraphFusion& fusion, const AnomalyStore& store,
                               Trigger trigger, std::int64_t t_incident,
                               std::int64_t timeframe_ms, std::string incident_id) {
    IncidentSnapshot snap;
    snap.id = std::move(incident_id);
    snap.trigger = trigger;
    snap.t_incident = t_incident;
    snap.timeframe_ms = timeframe_ms;
    snap.graph = fusion.current_graph();
    for (const Anomaly& a : store.window(t_incident - timeframe_ms, t_incident)) {
        if (snap.graph.has_metric(a.series_key)) {
            snap.anomalies.push_back(a);
        } else {
            snap.unmappable.push_back(a);
        }
    }
    return snap;
}

IncidentSnapshot prune_anomaly_free(const IncidentSnapshot& snapshot) {
    const ExtendedCausalGraph& g = snapshot.graph;

    std::set<InstanceId> anomalous_instances;
    std::set<InstanceId> anomalous_synthetics;
    for (const Anomaly& a : snapshot.anomalies) {
        auto owner = g.owner_of(a.series_key);
        if (!owner) {
            continue;
        }
        if (owner->service == kNodeService) {
            anomalous_synthetics.insert(*owner);
        } else {
            anomalous_instances.insert(*owner);
        }
    }

    IncidentSnapshot pruned = snapshot;
    ExtendedCausalGraph& pg = pruned.graph;

    pg.dependency.nodes.clear();
    for (const auto& [id, node] : g.dependency.nodes) {
        if (anomalous_instances.count(id)) {
            pg.dependency.nodes.emplace(id, node);
        }
    }
    pg.dependency.edges.clear();
    for (const auto& [key, edge] : g.dependency.edges) {
        if (pg.dependency.has_node(edge.from) && pg.dependency.has_node(edge.to)) {
            pg.dependency.edges.emplace(key, edge);
        }
    }

    pg.colocated.clear();
    for (const auto& [synthetic, members] : g.colocated) {
        bool any_member_anomalous = std::any_of(
            members.begin(), members.end(), [&](const InstanceId& m) {
                return anomalous_instances.count(m) > 0;
            });
        if (anomalous_synthetics.count(synthetic) || any_member_anomalous) {
            std::set<InstanceId> kept_members;
            for (const InstanceId& m : members) {
                if (anomalous_instances.count(m)) {
                    kept_members.insert(m);
                }
            }
            pg.colocated.emplace(synthetic, std::move(kept_members));
        }
    }

    auto owner_kept = [&pg](const InstanceId& owner) {
        if (owner.service == kNodeService) {
            return pg.colocated.count(owner) > 0;
        }
        return pg.dependency.has_node(owner);
    };

    pg.metrics.clear();
    for (const auto& [key, metric] : g.metrics) {
        if (owner_kept(metric.owner)) {
            pg.metrics.emplace(key, metric);
        }
    }

    pg.causal_edges.clear();
    for (const CausalEdge& e : g.causal_edges) {
        if (pg.has_metric(e.from) && pg.has_metric(e.to)) {
            pg.causal_edges.push_back(e);
        }
    }
    return pruned;
}

namespace {

struct WalkGraph {
    std::vector<SeriesKey> nodes; // sorted
    // per node: incoming causal edges (cause index, weight), sorted by cause
    std::vector<std::vector<std::pair<std::size_t, double>>> preds;

    std::optional<std::size_t> index_of(const SeriesKey& key) const {
        auto it = std::lower_bound(nodes.begin(), nodes.end(), key);
        if (it == nodes.end() || *it != key) {
            return std::nullopt;
        }
        return static_cast<std::size_t>(it - nodes.begin());
    }
};

WalkGraph make_walk_graph(const ExtendedCausalGraph& g) {
    WalkGraph wg;
    wg.nodes.reserve(g.metrics.size());
    for (const auto& [key, metric] : g.metrics) {
        wg.nodes.push_back(key);
    }
    std::sort(wg.nodes.begin(), wg.nodes.end());
    wg.preds.resize(wg.nodes.size());
    for (const CausalEdge& e : g.causal_edges) {
        auto from = wg.index_of(e.from);
        auto to = wg.index_of(e.to);
        if (from && to) {
            wg.preds[*to].push_back({*from, e.weight});
        }
    }
    for (auto& p : wg.preds) {
        std::sort(p.begin(), p.end());
    }
    return wg;
}

constexpr std::size_t kNoPrev = static_cast<std::size_t>(-1);

WalkResult run_walks(const IncidentSnapshot& pruned,
                     const std::vector<SeriesKey>& starts,
                     const WalkConfig& config, bool second_order) {
    if (starts.empty()) {
        throw StartNotInGraph("walk requires at least one start node");
    }
    if (config.walks < 1 || config.steps < 1) {
        throw ConfigError("walk config requires walks >= 1 and steps >= 1");
    }

    WalkGraph wg = make_walk_graph(pruned.graph);
    std::vector<std::size_t> start_indices;
    start_indices.reserve(starts.size());
    for (const SeriesKey& key : starts) {
        auto idx = wg.index_of(key);
        if (!idx) {
            throw StartNotInGraph("start node not in pruned graph: " + key.str());
        }
        start_indices.push_back(*idx);
    }

    WalkResult result;
    std::vector<std::uint64_t> visits(wg.nodes.size(), 0);

    for (std::size_t si = 0; si < start_indices.size(); ++si) {
        const std::size_t start = start_indices[si];
        for (int walk = 0; walk < config.walks; ++walk) {
            // per-walk stream keyed by (seed, start slot, walk): results do
            // not depend on execution order
            Rng rng(splitmix64(config.seed) ^
                    splitmix64((si + 1) * 0x9e3779b97f4a7c15ULL +
                               static_cast<std::uint64_t>(walk)));
            std::size_t pos = start;
            std::size_t prev = kNoPrev;
            for (int step = 0; step < config.steps; ++step) {
                const auto& cands = wg.preds[pos];
                double total = 0.0;
                for (const auto& [u, w] : cands) {
                    total += (second_order && u == prev)
                                 ? w * config.backtrack_penalty
                                 : w;
                }
                if (cands.empty() || total <= 0.0) {
                    // dead end: restart at the walk's start, uncounted
                    pos = start;
                    prev = kNoPrev;
                    ++result.dead_end_restarts;
                    continue;
                }
                double u01 = rng.uniform() * total;
                double cum = 0.0;
                std::size_t next = cands.back().first;
                for (const auto& [u, w] : cands) {
                    cum += (second_order && u == prev)
                               ? w * config.backtrack_penalty
                               : w;
                    if (u01 < cum) {
                        next = u;
                        break;
                    }
                }
                if (next == prev) {
                    ++result.backtracks;
                }
                prev = pos;
                pos = next;
                ++visits[pos];
            }
        }
    }

    for (std::size_t i = 0; i < visits.size(); ++i) {
        if (visits[i] > 0) {
            result.visits[wg.nodes[i]] = visits[i];
        }
    }
    return result;
}

} // namespace

WalkResult random_walk_first_order(const IncidentSnapshot& pruned,
                                   const std::vector<SeriesKey>& starts,
                                   const WalkConfig& config) {
    return run_walks(pruned, starts, config, false);
}

WalkResult random_walk_second_order(const IncidentSnapshot& pruned,
                                    const std::vector<SeriesKey>& starts,
                                    const WalkConfig& config) {
    return run_walks(pruned, starts, config, true);
}

RootCauseRanking rank_root_causes(const std::map<SeriesKey, std::uint64_t>& counts,
                                  const ExtendedCausalGraph& graph,
                                  std::optional<std::size_t> top_k) {
    RootCauseRanking ranking;
    for (const auto& [key, count] : counts) {
        RankedCause cause;
        cause.node = key;
        if (auto owner = graph.owner_of(key)) {
            cause.instance = *owner;
        }
        cause.count = count;
        ranking.entries.push_back(std::move(cause));
    }
    std::sort(ranking.entries.begin(), ranking.entries.end(),
              [](const RankedCause& a, const RankedCause& b) {
                  if (a.count != b.count) {
                      return a.count > b.count;
                  }
                  return a.node.str() < b.node.str();
              });
    if (top_k && ranking.entries.size() > *top_k) {
        ranking.entries.resize(*top_k);
    }
    std::uint64_t total = 0;
    for (const RankedCause& c : ranking.entries) {
        total += c.count;
    }
    if (total > 0) {
        for (RankedCause& c : ranking.entries) {
            c.score = static_cast<double>(c.count) / static_cast<double>(total);
        }
    }
    return ranking;
}

IncidentResult analyze_incident(const GraphFusion& fusion, const AnomalyStore& store,
                                const AnalyzeOptions& options) {
    IncidentResult result;

    if (options.trigger == Trigger::Automatic) {
        auto score = store.max_score(options.t_incident - options.timeframe_ms,
                                     options.t_incident);
        if (!score || *score < options.auto_trigger_score) {
            result.triggered = false;
            result.note = "automatic trigger threshold not reached";
            result.snapshot = take_snapshot(fusion, store, options.trigger,
                                            options.t_incident, options.timeframe_ms,
                                            options.incident_id);
            result.pruned = prune_anomaly_free(result.snapshot);
            result.ranking.config = options.walk;
            return result;
        }
    }

    result.snapshot =
        take_snapshot(fusion, store, options.trigger, options.t_incident,
                      options.timeframe_ms, options.incident_id);
    result.pruned = prune_anomaly_free(result.snapshot);
    result.ranking.config = options.walk;

    if (result.snapshot.anomalies.empty()) {
        result.note = result.snapshot.unmappable.empty()
                          ? "no anomalies in the snapshot window"
                          : "all anomalies in the window are unmappable";
        return result;
    }

    std::vector<SeriesKey> starts;
    if (options.mode == AnalysisMode::SingleAnomaly) {
        SeriesKey target;
        if (options.single_target) {
            target = *options.single_target;
        } else {
            // highest score; ties resolved by earliest timestamp, then key
            const Anomaly* best = nullptr;
            for (const Anomaly& a : result.snapshot.anomalies) {
                if (best == nullptr || a.score > best->score ||
                    (a.score == best->score &&
                     std::tie(a.timestamp, a.series_key) <
                         std::tie(best->timestamp, best->series_key))) {
                    best = &a;
                }
            }
            target = best->series_key;
        }
        starts.push_back(target);
    } else {
        for (const Anomaly& a : result.snapshot.anomalies) {
            starts.push_back(a.series_key);
        }
    }

    WalkResult walk =
        options.walk.order == WalkConfig::Order::Second
            ? random_walk_second_order(result.pruned, starts, options.walk)
            : random_walk_first_order(result.pruned, starts, options.walk);

    result.ranking = rank_root_causes(walk.visits, result.pruned.graph,
                                      options.top_k);
    result.ranking.config = options.walk;
    result.ranking.starts = std::move(starts);
    if (result.ranking.entries.empty()) {
        result.note = "walks reached no candidate causes";
    }
    return result;
}

namespace {

ordered_json anomaly_to_json(const Anomaly& a) {
    ordered_json j;
    j["series"] = a.series_key.str();
    j["metric"] = a.series_key.metric;
    j["service"] = a.series_key.service;
    j["instance"] = a.series_key.instance;
    j["timestamp"] = a.timestamp;
    j["score"] = a.score;
    j["detector"] = detector_name(a.detector);
    return j;
}

} // namespace

std::string snapshot_to_json(const IncidentSnapshot& snap) {
    ordered_json j;
    j["incident_id"] = snap.id;
    j["trigger"] = trigger_name(snap.trigger);
    j["t_incident"] = snap.t_incident;
    j["timeframe_ms"] = snap.timeframe_ms;

    ordered_json graph;
    graph["graph_version"] = snap.graph.graph_version;
    graph["model_version"] = snap.graph.model_version;
    graph["built_at"] = snap.graph.built_at;
    ordered_json instances = ordered_json::array();
    for (const auto& [id, node] : snap.graph.dependency.nodes) {
        ordered_json n;
        n["id"] = id.str();
        n["node"] = node.node;
        n["first_seen"] = node.first_seen;
        n["last_seen"] = node.last_seen;
        instances.push_back(n);
    }
    graph["instances"] = instances;
    ordered_json dep_edges = ordered_json::array();
    for (const auto& [key, edge] : snap.graph.dependency.edges) {
        ordered_json e;
        e["from"] = edge.from.str();
        e["to"] = edge.to.str();
        e["last_communication"] = edge.last_communication;
        e["call_count"] = edge.call_count;
        dep_edges.push_back(e);
    }
    graph["dependency_edges"] = dep_edges;
    ordered_json metrics = ordered_json::array();
    for (const auto& [key, metric] : snap.graph.metrics) {
        ordered_json m;
        m["node"] = key.str();
        m["owner"] = metric.owner.str();
        metrics.push_back(m);
    }
    graph["metric_nodes"] = metrics;
    ordered_json causal = ordered_json::array();
    for (const CausalEdge& e : snap.graph.causal_edges) {
        ordered_json c;
        c["from"] = e.from.str();
        c["to"] = e.to.str();
        c["weight"] = e.weight;
        c["lag"] = e.lag;
        causal.push_back(c);
    }
    graph["causal_edges"] = causal;
    j["graph"] = graph;

    ordered_json anomalies = ordered_json::array();
    for (const Anomaly& a : snap.anomalies) {
        anomalies.push_back(anomaly_to_json(a));
    }
    j["anomalies"] = anomalies;
    ordered_json unmappable = ordered_json::array();
    for (const Anomaly& a : snap.unmappable) {
        unmappable.push_back(anomaly_to_json(a));
    }
    j["unmappable"] = unmappable;
    return j.dump(2) + "\n";
}

std::string ranking_to_json(const RootCauseRanking& ranking) {
    ordered_json arr = ordered_json::array();
    for (const RankedCause& c : ranking.entries) {
        ordered_json e;
        e["node"] = c.node.str();
        e["instance"] = c.instance.str();
        e["count"] = c.count;
        e["score"] = c.score;
        arr.push_back(e);
    }
    return arr.dump(2) + "\n";
}

std::string write_incident_artifacts(const IncidentResult& result,
                                     const std::string& dir) {
    namespace fs = std::filesystem;
    fs::path incident_dir = fs::path(dir) / result.snapshot.id;
    fs::create_directories(incident_dir);

    {
        std::ofstream out(incident_dir / "snapshot.json", std::ios::binary);
        out << snapshot_to_json(result.snapshot);
    }
    {
        std::ofstream out(incident_dir / "pruned.dot", std::ios::binary);
        out << to_dot(result.pruned.graph);
    }
    {
        std::ofstream out(incident_dir / "ranking.json", std::ios::binary);
        out << ranking_to_json(result.ranking);
    }
    {
        ordered_json j;
        j["incident_id"] = result.snapshot.id;
        j["trigger"] = trigger_name(result.snapshot.trigger);
        j["triggered"] = result.triggered;
        j["t_incident"] = result.snapshot.t_incident;
        j["timeframe_ms"] = result.snapshot.timeframe_ms;
        ordered_json walk;
        walk["walks"] = result.ranking.config.walks;
        walk["steps"] = result.ranking.config.steps;
        walk["order"] =
            result.ranking.config.order == WalkConfig::Order::Second ? "second"
                                                                     : "first";
        walk["seed"] = result.ranking.config.seed;
        walk["backtrack_penalty"] = result.ranking.config.backtrack_penalty;
        j["walk"] = walk;
        ordered_json starts = ordered_json::array();
        for (const SeriesKey& key : result.ranking.starts) {
            starts.push_back(key.str());
        }
        j["starts"] = starts;
        j["anomaly_count"] = result.snapshot.anomalies.size();
        j["unmappable_count"] = result.snapshot.unmappable.size();
        j["note"] = result.note;
        std::ofstream out(incident_dir / "summary.json", std::ios::binary);
        out << j.dump(2) << "\n";
    }
    return incident_dir.string();
}

} // namespace sdvdiag
