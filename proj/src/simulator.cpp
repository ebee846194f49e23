#include "sdvdiag/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "sdvdiag/rng.hpp"

namespace sdvdiag {

using nlohmann::ordered_json;

std::string Topology::station_name(int index) const {
    return "B" + std::to_string(index + 1);
}

std::string Topology::worker_name(int index) const {
    return "worker" + std::to_string(index + 1);
}

std::string Topology::vehicle_name(int index) const {
    return "V" + std::to_string(index + 1);
}

std::string Topology::vehicle_node(int index) const {
    return "ugv" + std::to_string(index + 1);
}

int Topology::worker_of_station(const std::string& instance) const {
    for (int j = 0; j < stations(); ++j) {
        if (station_name(j) == instance) {
            return j / stations_per_worker;
        }
    }
    return -1;
}

std::vector<std::pair<InstanceId, InstanceId>> Topology::declared_edges() const {
    std::vector<std::pair<InstanceId, InstanceId>> edges;
    for (int v = 0; v < vehicles; ++v) {
        for (int j = 0; j < stations(); ++j) {
            edges.push_back({{"vehicle", vehicle_name(v)},
                             {"station", station_name(j)}});
        }
    }
    return edges;
}

void Topology::validate() const {
    if (workers < 1 || stations_per_worker < 1 || vehicles < 1) {
        throw InvalidTopology("topology requires at least one worker, one "
                              "station per worker and one vehicle");
    }
}

namespace {

// Load model constants. Effect magnitudes are tuned so the three fault
// propagation effects land in the 2-5 sigma band of their baselines.
struct Model {
    double base_station_cpu = 10.0;
    double cpu_per_request = 4.0;
    double base_vehicle_cpu = 15.0;
    double vehicle_cpu_per_request = 0.5;
    double fallback_cpu_per_request = 3.0;
    double vehicle_overload_coupling = 0.15;
    double contention_coupling = 0.2;
    double reroute_coupling = 0.1;
    double station_noise = 3.0;
    double vehicle_noise = 2.0;
    double tx_noise = 300.0;
    double base_tx = 2000.0;
    int reroute_delay_s = 2;       // load balancer reacts after this many seconds
    double colocated_weight = 0.4; // LB weight of starved co-located stations
};

// Smooth weighted round robin: deterministic, near-proportional allocation.
class SmoothWrr {
public:
    explicit SmoothWrr(std::size_t n) : current_(n, 0.0) {}

    // Returns the picked index, or -1 when all weights are zero.
    int pick(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) {
            total += w;
        }
        if (total <= 0.0) {
            return -1;
        }
        int best = -1;
        for (std::size_t j = 0; j < weights.size(); ++j) {
            if (weights[j] <= 0.0) {
                continue;
            }
            current_[j] += weights[j];
            if (best < 0 || current_[j] > current_[static_cast<std::size_t>(best)]) {
                best = static_cast<int>(j);
            }
        }
        if (best >= 0) {
            current_[static_cast<std::size_t>(best)] -= total;
        }
        return best;
    }

private:
    std::vector<double> current_;
};

struct FaultWindow {
    bool active(std::int64_t t_s) const {
        return enabled && t_s >= onset_s && t_s < end_s;
    }
    bool rerouted(std::int64_t t_s) const {
        return enabled && t_s >= onset_s + reroute_delay_s && t_s < end_s;
    }
    bool enabled = false;
    std::int64_t onset_s = 0;
    std::int64_t end_s = 0;
    int reroute_delay_s = 0;
    int target = -1; // station index
    double magnitude = 0.0;
};

SimulationResult run(const Topology& topo, const SimParams& params,
                     const std::optional<FaultSpec>& fault) {
    topo.validate();
    if (params.horizon_ms <= 0) {
        throw InvalidTopology("simulation horizon must be positive");
    }
    if (params.request_rate < 0) {
        throw InvalidTopology("request rate must be non-negative");
    }

    const Model model;
    const int n_stations = topo.stations();
    const int n_vehicles = topo.vehicles;
    const std::int64_t horizon_s = params.horizon_ms / 1000;

    FaultWindow fw;
    if (fault) {
        if (fault->kind != FaultSpec::Kind::CpuSaturation) {
            throw UnknownTarget("unsupported fault kind");
        }
        int target = -1;
        for (int j = 0; j < n_stations; ++j) {
            if (topo.station_name(j) == fault->target_instance) {
                target = j;
                break;
            }
        }
        if (target < 0) {
            throw UnknownTarget("fault target is not a station instance: " +
                                fault->target_instance);
        }
        if (fault->onset_ms < 0 || fault->onset_ms >= params.horizon_ms) {
            throw ConfigError("fault onset lies outside the simulation horizon");
        }
        fw.enabled = true;
        fw.target = target;
        fw.onset_s = fault->onset_ms / 1000;
        fw.end_s = fault->duration_ms > 0
                       ? std::min(horizon_s,
                                  (fault->onset_ms + fault->duration_ms) / 1000)
                       : horizon_s;
        fw.reroute_delay_s = model.reroute_delay_s;
        fw.magnitude = fault->magnitude;
    }

    SimulationResult result;

    // per-series noise streams keyed by name: independent of emit order
    std::vector<Rng> station_noise;
    std::vector<Rng> vehicle_noise;
    std::vector<Rng> tx_noise;
    for (int j = 0; j < n_stations; ++j) {
        station_noise.push_back(
            Rng::stream(params.seed, "noise:station:" + topo.station_name(j)));
    }
    for (int v = 0; v < n_vehicles; ++v) {
        vehicle_noise.push_back(
            Rng::stream(params.seed, "noise:vehicle:" + topo.vehicle_name(v)));
    }
    for (int w = 0; w < topo.workers; ++w) {
        tx_noise.push_back(
            Rng::stream(params.seed, "noise:tx:" + topo.worker_name(w)));
    }
    Rng req_rng = Rng::stream(params.seed, "requests");

    std::vector<SmoothWrr> balancers(static_cast<std::size_t>(n_vehicles),
                                     SmoothWrr(static_cast<std::size_t>(n_stations)));
    {
        // rotate each vehicle's starting phase
        std::vector<double> uniform(static_cast<std::size_t>(n_stations), 1.0);
        for (int v = 0; v < n_vehicles; ++v) {
            for (int skip = 0; skip < v % n_stations; ++skip) {
                balancers[static_cast<std::size_t>(v)].pick(uniform);
            }
        }
    }

    const double total_rate =
        static_cast<double>(n_vehicles) * params.request_rate;
    const double expected_served = total_rate / n_stations;

    // one-step histories; start at steady state
    std::vector<double> prev_served(static_cast<std::size_t>(n_stations),
                                    expected_served);
    // overload trace ov(t) and fallback demand per vehicle, indexed by second
    std::vector<double> ov(static_cast<std::size_t>(horizon_s), 0.0);
    std::vector<std::vector<double>> fallback(
        static_cast<std::size_t>(n_vehicles),
        std::vector<double>(static_cast<std::size_t>(horizon_s), 0.0));

    std::uint64_t next_trace = 1;
    static const int rate_jitter[3] = {-2, 0, 2};

    for (std::int64_t t = 0; t < horizon_s; ++t) {
        const bool active = fw.active(t);
        const bool rerouted = fw.rerouted(t);

        std::vector<double> weights(static_cast<std::size_t>(n_stations), 1.0);
        if (rerouted) {
            for (int j = 0; j < n_stations; ++j) {
                if (j == fw.target) {
                    weights[static_cast<std::size_t>(j)] = 0.0;
                } else if (j / topo.stations_per_worker ==
                           fw.target / topo.stations_per_worker) {
                    weights[static_cast<std::size_t>(j)] = model.colocated_weight;
                }
            }
        }

        std::vector<double> served(static_cast<std::size_t>(n_stations), 0.0);
        std::vector<double> attempted_bytes(
            static_cast<std::size_t>(topo.workers), 0.0);

        for (int v = 0; v < n_vehicles; ++v) {
            int n_req = params.request_rate == 0
                            ? 0
                            : std::max(0, params.request_rate +
                                              rate_jitter[(t + v) % 3]);
            for (int r = 0; r < n_req; ++r) {
                int station = balancers[static_cast<std::size_t>(v)].pick(weights);
                if (station < 0) {
                    continue;
                }
                bool fails = active && station == fw.target;

                double jitter_ms = req_rng.uniform() * 900.0;
                double size_u = req_rng.uniform();
                double bytes = 300.0 + 50.0 * size_u + (size_u > 0.99 ? 2000.0 : 0.0);
                std::int64_t client_start =
                    t * 1000 + static_cast<std::int64_t>(jitter_ms);
                std::int64_t client_end =
                    client_start + 20 + static_cast<std::int64_t>(req_rng.uniform() * 40.0);

                std::uint64_t seq = next_trace++;
                int worker = station / topo.stations_per_worker;

                Span client;
                client.trace_id = "T" + std::to_string(seq);
                client.span_id = "S" + std::to_string(seq) + "c";
                client.service = "vehicle";
                client.instance = topo.vehicle_name(v);
                client.node = topo.vehicle_node(v);
                client.start = client_start;
                client.end = client_end;
                client.peer_service = "station";
                client.peer_instance = topo.station_name(station);
                result.spans.push_back(std::move(client));

                attempted_bytes[static_cast<std::size_t>(worker)] += bytes;

                if (fails) {
                    fallback[static_cast<std::size_t>(v)]
                            [static_cast<std::size_t>(t)] += 1.0;
                    continue;
                }

                served[static_cast<std::size_t>(station)] += 1.0;
                Span server;
                server.trace_id = "T" + std::to_string(seq);
                server.span_id = "S" + std::to_string(seq) + "s";
                server.parent_span_id = "S" + std::to_string(seq) + "c";
                server.service = "station";
                server.instance = topo.station_name(station);
                server.node = topo.worker_name(worker);
                server.start = client_start + 2;
                server.end = std::max<std::int64_t>(server.start, client_end - 2);
                result.spans.push_back(std::move(server));
            }
            if (rerouted && params.request_rate > 0) {
                // the data the target used to provide is computed locally
                fallback[static_cast<std::size_t>(v)][static_cast<std::size_t>(t)] =
                    static_cast<double>(params.request_rate +
                                        rate_jitter[(t + v) % 3]) /
                    n_stations;
            }
        }

        auto ov_at = [&](std::int64_t s) {
            return s >= 0 ? ov[static_cast<std::size_t>(s)] : 0.0;
        };
        auto fallback_at = [&](int v, std::int64_t s) {
            return s >= 0 ? fallback[static_cast<std::size_t>(v)]
                                    [static_cast<std::size_t>(s)]
                          : 0.0;
        };

        const std::int64_t ts = t * 1000;
        for (int j = 0; j < n_stations; ++j) {
            double noise = model.station_noise *
                           station_noise[static_cast<std::size_t>(j)].normal();
            double cpu = model.base_station_cpu +
                         model.cpu_per_request * prev_served[static_cast<std::size_t>(j)] +
                         noise;
            if (fw.enabled) {
                if (j == fw.target) {
                    // the overload trace is the target's realized excess cpu,
                    // noise included; downstream effects echo it at their lags
                    if (active) {
                        ov[static_cast<std::size_t>(t)] = fw.magnitude + noise;
                        cpu += fw.magnitude;
                    }
                } else if (j / topo.stations_per_worker ==
                           fw.target / topo.stations_per_worker) {
                    cpu -= model.contention_coupling * ov_at(t - 3);
                } else {
                    cpu += model.reroute_coupling * ov_at(t - 3);
                }
            }
            result.metrics.push_back({"cpu_usage", "station", topo.station_name(j),
                                      topo.worker_name(j / topo.stations_per_worker),
                                      ts, cpu});
        }
        for (int v = 0; v < n_vehicles; ++v) {
            int n_req = params.request_rate == 0
                            ? 0
                            : std::max(0, params.request_rate +
                                              rate_jitter[(t + v) % 3]);
            double cpu = model.base_vehicle_cpu +
                         model.vehicle_cpu_per_request * n_req +
                         model.fallback_cpu_per_request * fallback_at(v, t - 2) +
                         model.vehicle_overload_coupling * ov_at(t - 2);
            cpu += model.vehicle_noise *
                   vehicle_noise[static_cast<std::size_t>(v)].normal();
            result.metrics.push_back({"cpu_usage", "vehicle", topo.vehicle_name(v),
                                      topo.vehicle_node(v), ts, cpu});
        }
        for (int w = 0; w < topo.workers; ++w) {
            double tx = model.base_tx + attempted_bytes[static_cast<std::size_t>(w)] +
                        model.tx_noise * tx_noise[static_cast<std::size_t>(w)].normal();
            result.metrics.push_back(
                {"tx_bytes", "node", topo.worker_name(w), topo.worker_name(w), ts, tx});
        }

        prev_served = served;
    }

    std::stable_sort(result.spans.begin(), result.spans.end(),
                     [](const Span& a, const Span& b) {
                         return std::tie(a.start, a.span_id) <
                                std::tie(b.start, b.span_id);
                     });

    result.truth.dependency_edges = topo.declared_edges();
    if (fault) {
        result.truth.fault = *fault;
        EffectGroups& groups = result.truth.expected_anomalous;
        int target_worker = fw.target / topo.stations_per_worker;
        for (int j = 0; j < n_stations; ++j) {
            SeriesKey key{"cpu_usage", "station", topo.station_name(j)};
            if (j == fw.target) {
                groups.target.push_back(key);
            } else if (j / topo.stations_per_worker == target_worker) {
                groups.colocated.push_back(key);
            } else {
                groups.other_worker.push_back(key);
            }
        }
        for (int v = 0; v < n_vehicles; ++v) {
            groups.vehicle.push_back({"cpu_usage", "vehicle", topo.vehicle_name(v)});
        }
    }
    return result;
}

} // namespace

SimulationResult simulate(const Topology& topology, const SimParams& params) {
    return run(topology, params, std::nullopt);
}

SimulationResult inject_fault(const Topology& topology, const SimParams& params,
                              const FaultSpec& fault) {
    return run(topology, params, fault);
}

std::string ground_truth_to_json(const GroundTruth& truth) {
    ordered_json j;
    if (truth.fault) {
        ordered_json f;
        f["kind"] = "cpu_saturation";
        f["target_service"] = "station";
        f["target_instance"] = truth.fault->target_instance;
        f["onset_ms"] = truth.fault->onset_ms;
        f["magnitude"] = truth.fault->magnitude;
        f["duration_ms"] = truth.fault->duration_ms;
        j["fault"] = f;
        ordered_json groups;
        auto keys = [](const std::vector<SeriesKey>& v) {
            ordered_json arr = ordered_json::array();
            for (const SeriesKey& k : v) {
                arr.push_back(k.str());
            }
            return arr;
        };
        groups["target"] = keys(truth.expected_anomalous.target);
        groups["colocated"] = keys(truth.expected_anomalous.colocated);
        groups["other_worker"] = keys(truth.expected_anomalous.other_worker);
        groups["vehicle"] = keys(truth.expected_anomalous.vehicle);
        j["expected_anomalous"] = groups;
    } else {
        j["fault"] = nullptr;
    }
    ordered_json edges = ordered_json::array();
    for (const auto& [from, to] : truth.dependency_edges) {
        ordered_json e;
        e["from"] = from.str();
        e["to"] = to.str();
        edges.push_back(e);
    }
    j["dependency_edges"] = edges;
    return j.dump(2) + "\n";
}

} // namespace sdvdiag
