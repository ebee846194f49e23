#include "sdvdiag/selector.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sdvdiag/rng.hpp"

namespace sdvdiag {

using nlohmann::ordered_json;

std::vector<LabelInterval> normalize_labels(std::vector<LabelInterval> labels) {
    std::sort(labels.begin(), labels.end());
    std::vector<LabelInterval> out;
    for (const LabelInterval& l : labels) {
        if (l.to <= l.from) {
            continue;
        }
        if (!out.empty() && l.from <= out.back().to) {
            out.back().to = std::max(out.back().to, l.to);
        } else {
            out.push_back(l);
        }
    }
    return out;
}

namespace {

const char* level_of(double x, double lo, double hi) {
    if (x < lo) {
        return "lo";
    }
    return x < hi ? "mid" : "hi";
}

} // namespace

std::string feature_bucket(const SeriesFeatures& f, const BucketThresholds& t) {
    std::ostringstream out;
    out << "s:" << level_of(f.seasonality_strength, t.seasonality_lo, t.seasonality_hi)
        << "|t:" << level_of(f.trend_strength, t.trend_lo, t.trend_hi)
        << "|k:" << level_of(f.spikiness, t.spikiness_lo, t.spikiness_hi)
        << "|v:" << level_of(f.variance, t.variance_lo, t.variance_hi);
    return out.str();
}

SelectorChoice select_detector(const SeriesFeatures& features,
                               const SelectorPolicy& policy) {
    if (features.variance == 0.0) {
        // degenerate series: the iqr detector is a guaranteed no-op
        return {DetectorId::Iqr, DetectorParams{}, 0.0};
    }
    auto it = policy.buckets.find(feature_bucket(features, policy.thresholds));
    if (it != policy.buckets.end()) {
        return it->second;
    }
    return {DetectorId::RollingZscore, DetectorParams{}, 0.0};
}

double point_adjusted_f1(const TimeSeries& series,
                         const std::vector<Anomaly>& predicted,
                         const std::vector<LabelInterval>& labels) {
    const auto& samples = series.samples;
    std::set<std::int64_t> pred;
    for (const Anomaly& a : predicted) {
        pred.insert(a.timestamp);
    }

    // adjusted prediction mask over sample points
    std::vector<bool> truth(samples.size(), false);
    std::vector<bool> adjusted(samples.size(), false);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        adjusted[i] = pred.count(samples[i].first) > 0;
    }
    for (const LabelInterval& l : labels) {
        bool hit = false;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (samples[i].first >= l.from && samples[i].first < l.to) {
                truth[i] = true;
                hit = hit || adjusted[i];
            }
        }
        if (hit) {
            for (std::size_t i = 0; i < samples.size(); ++i) {
                if (samples[i].first >= l.from && samples[i].first < l.to) {
                    adjusted[i] = true;
                }
            }
        }
    }

    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (adjusted[i] && truth[i]) {
            ++tp;
        } else if (adjusted[i]) {
            ++fp;
        } else if (truth[i]) {
            ++fn;
        }
    }
    if (tp == 0 && fp == 0 && fn == 0) {
        return 1.0; // nothing labeled, nothing predicted
    }
    if (tp == 0) {
        return 0.0;
    }
    double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return 2.0 * precision * recall / (precision + recall);
}

namespace {

double series_f1(const LabeledSeries& item, DetectorId id,
                 const DetectorParams& params) {
    std::vector<Anomaly> predicted;
    try {
        predicted = detect(item.series, id, params);
    } catch (const InsufficientHistory&) {
        predicted.clear();
    }
    return point_adjusted_f1(item.series, predicted, item.labels);
}

const std::vector<double>& threshold_grid() {
    static const std::vector<double> grid = {2.5, 3.0, 3.5};
    return grid;
}

} // namespace

SelectorPolicy train_selector(const LabeledDataset& corpus,
                              const BucketThresholds& thresholds) {
    if (corpus.items.empty()) {
        throw EmptyCorpus("selector training requires a non-empty corpus");
    }

    SelectorPolicy policy;
    policy.thresholds = thresholds;
    {
        std::uint64_t h = 0;
        for (const LabeledSeries& item : corpus.items) {
            h = h * 1099511628211ULL + fnv1a64(item.series.key.str());
            h ^= item.series.samples.size();
        }
        std::ostringstream id;
        id << "corpus-" << std::hex << h;
        policy.corpus_id = id.str();
    }

    std::map<std::string, std::vector<const LabeledSeries*>> by_bucket;
    for (const LabeledSeries& item : corpus.items) {
        SeriesFeatures f = extract_features(item.series);
        by_bucket[feature_bucket(f, thresholds)].push_back(&item);
    }

    for (const auto& [bucket, members] : by_bucket) {
        SelectorChoice best;
        best.f1 = -1.0;
        for (DetectorId id : kDetectorPool) {
            for (double k : threshold_grid()) {
                DetectorParams params;
                params.k = k;
                double total = 0.0;
                for (const LabeledSeries* item : members) {
                    total += series_f1(*item, id, params);
                }
                double mean = total / static_cast<double>(members.size());
                if (mean > best.f1) {
                    best = {id, params, mean};
                }
            }
        }
        policy.buckets[bucket] = best;
    }
    return policy;
}

std::vector<LabelInterval> suggest_labels(const TimeSeries& series) {
    std::size_t max_warmup = 0;
    for (DetectorId id : kDetectorPool) {
        max_warmup = std::max(max_warmup, detector_warmup(id));
    }
    if (series.samples.size() < max_warmup) {
        throw InsufficientHistory("series shorter than pool warm-up");
    }

    std::map<std::int64_t, int> votes;
    for (DetectorId id : kDetectorPool) {
        for (const Anomaly& a : detect(series, id)) {
            ++votes[a.timestamp];
        }
    }

    // merge consecutive agreeing samples into [from, to) intervals
    std::vector<LabelInterval> out;
    const auto& samples = series.samples;
    std::int64_t step = 1;
    if (samples.size() >= 2) {
        std::vector<std::int64_t> deltas;
        for (std::size_t i = 1; i < samples.size(); ++i) {
            deltas.push_back(samples[i].first - samples[i - 1].first);
        }
        std::nth_element(deltas.begin(), deltas.begin() + deltas.size() / 2,
                         deltas.end());
        step = std::max<std::int64_t>(1, deltas[deltas.size() / 2]);
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto it = votes.find(samples[i].first);
        if (it == votes.end() || it->second < 2) {
            continue;
        }
        std::int64_t from = samples[i].first;
        std::int64_t to = from + step;
        if (!out.empty() && from <= out.back().to) {
            out.back().to = std::max(out.back().to, to);
        } else {
            out.push_back({from, to});
        }
    }
    return out;
}

double evaluate_policy(const SelectorPolicy& policy, const LabeledDataset& corpus) {
    if (corpus.items.empty()) {
        throw EmptyCorpus("evaluation requires a non-empty corpus");
    }
    double total = 0.0;
    for (const LabeledSeries& item : corpus.items) {
        SelectorChoice choice = select_detector(extract_features(item.series), policy);
        total += series_f1(item, choice.detector, choice.params);
    }
    return total / static_cast<double>(corpus.items.size());
}

double evaluate_detector(DetectorId id, const DetectorParams& params,
                         const LabeledDataset& corpus) {
    if (corpus.items.empty()) {
        throw EmptyCorpus("evaluation requires a non-empty corpus");
    }
    double total = 0.0;
    for (const LabeledSeries& item : corpus.items) {
        total += series_f1(item, id, params);
    }
    return total / static_cast<double>(corpus.items.size());
}

void save_labeled_dataset(const LabeledDataset& corpus,
                          const std::string& series_path,
                          const std::string& labels_path) {
    std::ofstream series_out(series_path, std::ios::binary);
    for (const LabeledSeries& item : corpus.items) {
        for (const auto& [t, v] : item.series.samples) {
            MetricSample m{item.series.key.metric, item.series.key.service,
                           item.series.key.instance, "", t, v};
            series_out << serialize(m) << "\n";
        }
    }

    ordered_json labels = ordered_json::array();
    for (const LabeledSeries& item : corpus.items) {
        ordered_json entry;
        entry["metric"] = item.series.key.metric;
        entry["service"] = item.series.key.service;
        entry["instance"] = item.series.key.instance;
        entry["source"] =
            item.source == LabelSource::Confirmed ? "confirmed" : "suggested";
        ordered_json intervals = ordered_json::array();
        for (const LabelInterval& l : item.labels) {
            intervals.push_back({l.from, l.to});
        }
        entry["intervals"] = intervals;
        labels.push_back(entry);
    }
    std::ofstream labels_out(labels_path, std::ios::binary);
    labels_out << labels.dump(2) << "\n";
}

LabeledDataset load_labeled_dataset(const std::string& series_path,
                                    const std::string& labels_path) {
    std::ifstream series_in(series_path, std::ios::binary);
    if (!series_in) {
        throw FileNotFound("cannot open " + series_path);
    }
    std::map<SeriesKey, std::map<std::int64_t, double>> by_key;
    std::string line;
    while (std::getline(series_in, line)) {
        if (line.empty()) {
            continue;
        }
        Record r = parse_record(line);
        const auto* m = std::get_if<MetricSample>(&r);
        if (m == nullptr) {
            throw MalformedRecord("labeled dataset series file contains spans");
        }
        by_key[{m->metric, m->service, m->instance}][m->timestamp] = m->value;
    }

    std::ifstream labels_in(labels_path, std::ios::binary);
    if (!labels_in) {
        throw FileNotFound("cannot open " + labels_path);
    }
    ordered_json labels = ordered_json::parse(labels_in, nullptr, false);
    if (labels.is_discarded() || !labels.is_array()) {
        throw MalformedRecord("label file is not a JSON array");
    }

    LabeledDataset corpus;
    for (const auto& entry : labels) {
        LabeledSeries item;
        SeriesKey key{entry.at("metric").get<std::string>(),
                      entry.at("service").get<std::string>(),
                      entry.at("instance").get<std::string>()};
        auto it = by_key.find(key);
        if (it == by_key.end()) {
            throw MalformedRecord("label entry without series: " + key.str());
        }
        item.series.key = key;
        item.series.samples.assign(it->second.begin(), it->second.end());
        item.source = entry.at("source").get<std::string>() == "confirmed"
                          ? LabelSource::Confirmed
                          : LabelSource::Suggested;
        std::vector<LabelInterval> intervals;
        for (const auto& iv : entry.at("intervals")) {
            intervals.push_back({iv.at(0).get<std::int64_t>(),
                                 iv.at(1).get<std::int64_t>()});
        }
        item.labels = normalize_labels(std::move(intervals));
        corpus.items.push_back(std::move(item));
    }
    return corpus;
}

void save_policy(const SelectorPolicy& policy, const std::string& path) {
    ordered_json j;
    j["corpus_id"] = policy.corpus_id;
    ordered_json th;
    th["seasonality_lo"] = policy.thresholds.seasonality_lo;
    th["seasonality_hi"] = policy.thresholds.seasonality_hi;
    th["trend_lo"] = policy.thresholds.trend_lo;
    th["trend_hi"] = policy.thresholds.trend_hi;
    th["spikiness_lo"] = policy.thresholds.spikiness_lo;
    th["spikiness_hi"] = policy.thresholds.spikiness_hi;
    th["variance_lo"] = policy.thresholds.variance_lo;
    th["variance_hi"] = policy.thresholds.variance_hi;
    j["thresholds"] = th;
    ordered_json buckets;
    for (const auto& [bucket, choice] : policy.buckets) {
        ordered_json c;
        c["detector"] = detector_name(choice.detector);
        c["k"] = choice.params.k;
        c["window"] = choice.params.window;
        c["alpha"] = choice.params.alpha;
        c["period"] = choice.params.period;
        c["f1"] = choice.f1;
        buckets[bucket] = c;
    }
    j["buckets"] = buckets;
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << "\n";
}

SelectorPolicy load_policy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FileNotFound("cannot open " + path);
    }
    ordered_json j = ordered_json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw MalformedRecord("policy file is not a JSON object");
    }
    SelectorPolicy policy;
    policy.corpus_id = j.value("corpus_id", "");
    if (j.contains("thresholds")) {
        const auto& th = j.at("thresholds");
        policy.thresholds.seasonality_lo = th.value("seasonality_lo", 0.3);
        policy.thresholds.seasonality_hi = th.value("seasonality_hi", 0.6);
        policy.thresholds.trend_lo = th.value("trend_lo", 0.3);
        policy.thresholds.trend_hi = th.value("trend_hi", 0.6);
        policy.thresholds.spikiness_lo = th.value("spikiness_lo", 3.0);
        policy.thresholds.spikiness_hi = th.value("spikiness_hi", 6.0);
        policy.thresholds.variance_lo = th.value("variance_lo", 1e-9);
        policy.thresholds.variance_hi = th.value("variance_hi", 1.0);
    }
    for (const auto& [bucket, c] : j.value("buckets", ordered_json::object()).items()) {
        SelectorChoice choice;
        choice.detector = detector_from_name(c.at("detector").get<std::string>());
        choice.params.k = c.value("k", 3.0);
        choice.params.window = c.value("window", 60);
        choice.params.alpha = c.value("alpha", 0.3);
        choice.params.period = c.value("period", 0);
        choice.f1 = c.value("f1", 0.0);
        policy.buckets[bucket] = choice;
    }
    return policy;
}

} // namespace sdvdiag
