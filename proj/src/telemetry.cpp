#include "sdvdiag/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "sdvdiag/rng.hpp"

namespace sdvdiag {

using nlohmann::ordered_json;

std::string SeriesKey::str() const {
    if (service == "node") {
        return metric + "@node:" + instance;
    }
    return metric + "@" + service + "/" + instance;
}

namespace {

ordered_json parse_json_line(std::string_view line) {
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw MalformedRecord("record is not a JSON object");
    }
    return j;
}

std::string require_string(const ordered_json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end() || !it->is_string()) {
        throw MalformedRecord(std::string("missing or non-string field: ") + field);
    }
    return it->get<std::string>();
}

std::int64_t require_timestamp(const ordered_json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end() || !it->is_number_integer()) {
        throw MalformedRecord(std::string("missing or non-integer field: ") + field);
    }
    return it->get<std::int64_t>();
}

std::optional<std::string> optional_string(const ordered_json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end() || it->is_null()) {
        return std::nullopt;
    }
    if (!it->is_string()) {
        throw MalformedRecord(std::string("non-string field: ") + field);
    }
    return it->get<std::string>();
}

Span parse_span(const ordered_json& j) {
    Span s;
    s.trace_id = require_string(j, "trace_id");
    s.span_id = require_string(j, "span_id");
    s.parent_span_id = optional_string(j, "parent_span_id");
    s.service = require_string(j, "service");
    s.instance = require_string(j, "instance");
    s.node = require_string(j, "node");
    s.start = require_timestamp(j, "start");
    s.end = require_timestamp(j, "end");
    s.peer_service = optional_string(j, "peer_service");
    s.peer_instance = optional_string(j, "peer_instance");

    if (s.span_id.empty()) {
        throw MalformedRecord("span_id must be non-empty");
    }
    if (s.service.empty() || s.instance.empty()) {
        throw MalformedRecord("service and instance must be non-empty");
    }
    if (s.end < s.start) {
        throw InvalidValueError("span end precedes start");
    }
    if (s.parent_span_id && *s.parent_span_id == s.span_id) {
        throw InvalidValueError("span is its own parent");
    }
    return s;
}

MetricSample parse_metric(const ordered_json& j) {
    MetricSample m;
    m.metric = require_string(j, "metric");
    m.service = require_string(j, "service");
    m.instance = require_string(j, "instance");
    m.node = require_string(j, "node");
    m.timestamp = require_timestamp(j, "timestamp");

    auto it = j.find("value");
    if (it == j.end()) {
        throw MalformedRecord("missing field: value");
    }
    if (!it->is_number()) {
        // null / "NaN" / "inf" style payloads are value-level problems
        throw InvalidValueError("metric value is not a finite number");
    }
    m.value = it->get<double>();
    if (!std::isfinite(m.value)) {
        throw InvalidValueError("metric value is not finite");
    }
    if (m.metric.empty() || m.service.empty() || m.instance.empty()) {
        throw MalformedRecord("metric key fields must be non-empty");
    }
    return m;
}

} // namespace

Record parse_record(std::string_view line) {
    ordered_json j = parse_json_line(line);
    std::string kind = require_string(j, "kind");
    if (kind == "span") {
        return parse_span(j);
    }
    if (kind == "metric") {
        return parse_metric(j);
    }
    throw MalformedRecord("unknown record kind: " + kind);
}

std::string serialize(const Span& span) {
    ordered_json j;
    j["kind"] = "span";
    j["trace_id"] = span.trace_id;
    j["span_id"] = span.span_id;
    if (span.parent_span_id) {
        j["parent_span_id"] = *span.parent_span_id;
    }
    j["service"] = span.service;
    j["instance"] = span.instance;
    j["node"] = span.node;
    j["start"] = span.start;
    j["end"] = span.end;
    if (span.peer_service) {
        j["peer_service"] = *span.peer_service;
    }
    if (span.peer_instance) {
        j["peer_instance"] = *span.peer_instance;
    }
    return j.dump();
}

std::string serialize(const MetricSample& sample) {
    ordered_json j;
    j["kind"] = "metric";
    j["metric"] = sample.metric;
    j["service"] = sample.service;
    j["instance"] = sample.instance;
    j["node"] = sample.node;
    j["timestamp"] = sample.timestamp;
    j["value"] = sample.value;
    return j.dump();
}

std::string serialize(const Record& record) {
    return std::visit([](const auto& r) { return serialize(r); }, record);
}

TelemetryStore::TelemetryStore(std::int64_t retention_ms, std::size_t max_records)
    : retention_ms_(retention_ms), max_records_(max_records) {}

bool TelemetryStore::too_late_locked(std::int64_t ts) const {
    return max_seen_ts_ != INT64_MIN && ts < max_seen_ts_ - retention_ms_;
}

void TelemetryStore::evict_locked() {
    const std::int64_t cutoff = max_seen_ts_ - retention_ms_;
    for (auto it = span_index_.begin();
         it != span_index_.end() && it->first < cutoff;) {
        spans_by_id_.erase(it->second);
        it = span_index_.erase(it);
        ++evicted_;
    }
    for (auto sit = series_.begin(); sit != series_.end();) {
        auto& samples = sit->second;
        auto cut = samples.lower_bound(cutoff);
        evicted_ += static_cast<std::size_t>(std::distance(samples.begin(), cut));
        samples.erase(samples.begin(), cut);
        if (samples.empty()) {
            sit = series_.erase(sit);
        } else {
            ++sit;
        }
    }
}

void TelemetryStore::check_capacity_locked() {
    if (max_records_ == 0) {
        return;
    }
    std::size_t total = spans_by_id_.size();
    for (const auto& [key, samples] : series_) {
        total += samples.size();
    }
    if (total > max_records_) {
        throw StorageFull("record cap exceeded after retention eviction");
    }
}

bool TelemetryStore::ingest(const Span& span) {
    std::unique_lock lock(mutex_);
    if (too_late_locked(span.start)) {
        ++dropped_late_;
        return false;
    }
    max_seen_ts_ = std::max(max_seen_ts_, span.start);
    auto existing = spans_by_id_.find(span.span_id);
    if (existing != spans_by_id_.end()) {
        // keep-last on re-ingest: drop the stale index entry
        auto [lo, hi] = span_index_.equal_range(existing->second.start);
        for (auto it = lo; it != hi; ++it) {
            if (it->second == span.span_id) {
                span_index_.erase(it);
                break;
            }
        }
        existing->second = span;
    } else {
        spans_by_id_.emplace(span.span_id, span);
    }
    span_index_.emplace(span.start, span.span_id);
    evict_locked();
    check_capacity_locked();
    return true;
}

bool TelemetryStore::ingest(const MetricSample& sample) {
    std::unique_lock lock(mutex_);
    if (too_late_locked(sample.timestamp)) {
        ++dropped_late_;
        return false;
    }
    max_seen_ts_ = std::max(max_seen_ts_, sample.timestamp);
    SeriesKey key{sample.metric, sample.service, sample.instance};
    series_[key][sample.timestamp] = sample.value; // keep-last
    evict_locked();
    check_capacity_locked();
    return true;
}

bool TelemetryStore::ingest(const Record& record) {
    return std::visit([this](const auto& r) { return ingest(r); }, record);
}

std::vector<Span> TelemetryStore::query_spans(
    std::int64_t from, std::int64_t to,
    const std::function<bool(const Span&)>& filter) const {
    if (from > to) {
        throw InvalidWindow("query window from > to");
    }
    std::shared_lock lock(mutex_);
    std::vector<Span> result;
    for (auto it = span_index_.lower_bound(from);
         it != span_index_.end() && it->first < to; ++it) {
        const Span& s = spans_by_id_.at(it->second);
        if (!filter || filter(s)) {
            result.push_back(s);
        }
    }
    std::stable_sort(result.begin(), result.end(),
                     [](const Span& a, const Span& b) {
                         return std::tie(a.start, a.span_id) <
                                std::tie(b.start, b.span_id);
                     });
    return result;
}

std::vector<MetricSample> TelemetryStore::query_metrics(
    std::int64_t from, std::int64_t to,
    const std::function<bool(const SeriesKey&)>& filter) const {
    if (from > to) {
        throw InvalidWindow("query window from > to");
    }
    std::shared_lock lock(mutex_);
    std::vector<MetricSample> result;
    for (const auto& [key, samples] : series_) {
        if (filter && !filter(key)) {
            continue;
        }
        for (auto it = samples.lower_bound(from);
             it != samples.end() && it->first < to; ++it) {
            MetricSample m;
            m.metric = key.metric;
            m.service = key.service;
            m.instance = key.instance;
            m.timestamp = it->first;
            m.value = it->second;
            result.push_back(std::move(m));
        }
    }
    std::sort(result.begin(), result.end(),
              [](const MetricSample& a, const MetricSample& b) {
                  return std::tie(a.timestamp, a.metric, a.service, a.instance) <
                         std::tie(b.timestamp, b.metric, b.service, b.instance);
              });
    return result;
}

std::vector<Span> TelemetryStore::all_spans() const {
    std::shared_lock lock(mutex_);
    std::vector<Span> result;
    result.reserve(spans_by_id_.size());
    for (const auto& [start, id] : span_index_) {
        result.push_back(spans_by_id_.at(id));
    }
    std::stable_sort(result.begin(), result.end(),
                     [](const Span& a, const Span& b) {
                         return std::tie(a.start, a.span_id) <
                                std::tie(b.start, b.span_id);
                     });
    return result;
}

std::vector<TimeSeries> TelemetryStore::all_series() const {
    std::shared_lock lock(mutex_);
    std::vector<TimeSeries> result;
    result.reserve(series_.size());
    for (const auto& [key, samples] : series_) {
        TimeSeries ts;
        ts.key = key;
        ts.samples.assign(samples.begin(), samples.end());
        result.push_back(std::move(ts));
    }
    return result;
}

std::optional<TimeSeries> TelemetryStore::series(const SeriesKey& key) const {
    std::shared_lock lock(mutex_);
    auto it = series_.find(key);
    if (it == series_.end()) {
        return std::nullopt;
    }
    TimeSeries ts;
    ts.key = key;
    ts.samples.assign(it->second.begin(), it->second.end());
    return ts;
}

StoreStats TelemetryStore::stats() const {
    std::shared_lock lock(mutex_);
    StoreStats st;
    st.spans = spans_by_id_.size();
    st.series = series_.size();
    for (const auto& [key, samples] : series_) {
        st.metric_samples += samples.size();
    }
    st.dropped_late = dropped_late_;
    st.evicted = evicted_;
    return st;
}

std::uint64_t TelemetryStore::state_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const std::string& s) {
        h ^= fnv1a64(s);
        h *= 0x100000001b3ULL;
    };
    for (const Span& s : all_spans()) {
        mix(serialize(s));
    }
    for (const TimeSeries& ts : all_series()) {
        mix(ts.key.str());
        for (const auto& [t, v] : ts.samples) {
            h ^= splitmix64(static_cast<std::uint64_t>(t));
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(v));
            std::memcpy(&bits, &v, sizeof(bits));
            h ^= splitmix64(bits);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

} // namespace sdvdiag
