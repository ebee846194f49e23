#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "sdvdiag/errors.hpp"

namespace sdvdiag {

/// One recorded service-to-service interaction. A span carrying peer fields
/// is a client span naming its callee; a span carrying a parent id is linked
/// into the caller's trace.
struct Span {
    std::string trace_id;
    std::string span_id;
    std::optional<std::string> parent_span_id;
    std::string service;
    std::string instance;
    std::string node;
    std::int64_t start = 0; // ms since epoch
    std::int64_t end = 0;   // ms since epoch
    std::optional<std::string> peer_service;
    std::optional<std::string> peer_instance;

    bool operator==(const Span&) const = default;
};

struct MetricSample {
    std::string metric;
    std::string service;
    std::string instance;
    std::string node;
    std::int64_t timestamp = 0; // ms since epoch
    double value = 0.0;

    bool operator==(const MetricSample&) const = default;
};

struct SeriesKey {
    std::string metric;
    std::string service;
    std::string instance;

    auto operator<=>(const SeriesKey&) const = default;

    /// Canonical form "metric@service/instance"; instances of the reserved
    /// "node" service render as "metric@node:instance".
    std::string str() const;
};

/// A named metric of one service instance, time-ordered with strictly
/// increasing timestamps (duplicates resolved keep-last).
struct TimeSeries {
    SeriesKey key;
    std::vector<std::pair<std::int64_t, double>> samples;

    bool operator==(const TimeSeries&) const = default;
};

using Record = std::variant<Span, MetricSample>;

/// Parses one wire-format line into a typed record. Unknown fields are
/// ignored. Throws MalformedRecord on structural problems and
/// InvalidValueError on non-finite numbers or end < start.
Record parse_record(std::string_view line);

std::string serialize(const Span& span);
std::string serialize(const MetricSample& sample);
std::string serialize(const Record& record);

struct StoreStats {
    std::size_t spans = 0;
    std::size_t metric_samples = 0;
    std::size_t series = 0;
    std::size_t dropped_late = 0;
    std::size_t evicted = 0;
};

/// Append-only telemetry store with a bounded retention window. Ingestion is
/// safe under concurrent appenders; queries return point-in-time copies.
class TelemetryStore {
public:
    static constexpr std::int64_t kDefaultRetentionMs = 24LL * 3600 * 1000;

    explicit TelemetryStore(std::int64_t retention_ms = kDefaultRetentionMs,
                            std::size_t max_records = 0);

    /// Appends a record. Returns false when the record is older than the
    /// retention window and was dropped. Throws StorageFull when the record
    /// cap is exceeded after eviction.
    bool ingest(const Record& record);
    bool ingest(const Span& span);
    bool ingest(const MetricSample& sample);

    /// Spans with start in [from, to), time-ordered.
    std::vector<Span> query_spans(
        std::int64_t from, std::int64_t to,
        const std::function<bool(const Span&)>& filter = {}) const;

    /// Metric samples with timestamp in [from, to), time-ordered.
    std::vector<MetricSample> query_metrics(
        std::int64_t from, std::int64_t to,
        const std::function<bool(const SeriesKey&)>& filter = {}) const;

    std::vector<Span> all_spans() const;
    std::vector<TimeSeries> all_series() const;
    std::optional<TimeSeries> series(const SeriesKey& key) const;

    StoreStats stats() const;

    /// Content hash over the canonical serialization of everything retained.
    std::uint64_t state_hash() const;

private:
    void evict_locked();
    bool too_late_locked(std::int64_t ts) const;
    void check_capacity_locked();

    mutable std::shared_mutex mutex_;
    std::int64_t retention_ms_;
    std::size_t max_records_; // 0 = unbounded
    std::int64_t max_seen_ts_ = INT64_MIN;

    std::unordered_map<std::string, Span> spans_by_id_;
    std::multimap<std::int64_t, std::string> span_index_; // start -> span_id
    std::map<SeriesKey, std::map<std::int64_t, double>> series_;
    std::size_t dropped_late_ = 0;
    std::size_t evicted_ = 0;
};

} // namespace sdvdiag
