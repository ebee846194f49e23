#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdvdiag/detectors.hpp"
#include "sdvdiag/telemetry.hpp"

namespace sdvdiag {

/// Half-open anomalous interval [from, to) in ms.
struct LabelInterval {
    std::int64_t from = 0;
    std::int64_t to = 0;

    auto operator<=>(const LabelInterval&) const = default;
};

enum class LabelSource { Suggested, Confirmed };

struct LabeledSeries {
    TimeSeries series;
    std::vector<LabelInterval> labels; // normalized: sorted, non-overlapping
    LabelSource source = LabelSource::Confirmed;
};

struct LabeledDataset {
    std::vector<LabeledSeries> items;
};

/// Sorts and merges overlapping/adjacent intervals.
std::vector<LabelInterval> normalize_labels(std::vector<LabelInterval> labels);

/// Quantization thresholds mapping each feature into {low, mid, high}.
struct BucketThresholds {
    double seasonality_lo = 0.3;
    double seasonality_hi = 0.6;
    double trend_lo = 0.3;
    double trend_hi = 0.6;
    double spikiness_lo = 3.0;
    double spikiness_hi = 6.0;
    double variance_lo = 1e-9;
    double variance_hi = 1.0;

    bool operator==(const BucketThresholds&) const = default;
};

/// Deterministic bucket key, e.g. "s:hi|t:lo|k:mid|v:hi".
std::string feature_bucket(const SeriesFeatures& features,
                           const BucketThresholds& thresholds);

struct SelectorChoice {
    DetectorId detector = DetectorId::RollingZscore;
    DetectorParams params;
    double f1 = 0.0; // mean point-adjusted F1 on the training bucket
};

/// Mapping from feature bucket to the best pool detector, with the
/// calibrated parameters and training metadata.
struct SelectorPolicy {
    std::map<std::string, SelectorChoice> buckets;
    BucketThresholds thresholds;
    std::string corpus_id;
};

/// Bucket lookup. Zero-variance series route to the iqr degenerate guard;
/// unknown buckets fall back to rolling_zscore defaults.
SelectorChoice select_detector(const SeriesFeatures& features,
                               const SelectorPolicy& policy);

/// Per bucket, evaluates every pool detector over a small threshold grid and
/// assigns the argmax of the mean per-series point-adjusted F1 (ties broken
/// by pool order, then grid order). Throws EmptyCorpus.
SelectorPolicy train_selector(const LabeledDataset& corpus,
                              const BucketThresholds& thresholds = {});

/// Intervals where at least two pool detectors agree, for engineer
/// confirmation. Throws InsufficientHistory when the series is shorter than
/// the warm-up of every pool detector.
std::vector<LabelInterval> suggest_labels(const TimeSeries& series);

/// Point-adjusted F1: a predicted point inside a labeled interval marks the
/// whole interval detected; the score is then point-wise over the series
/// samples. No labels and no predictions scores 1.
double point_adjusted_f1(const TimeSeries& series,
                         const std::vector<Anomaly>& predicted,
                         const std::vector<LabelInterval>& labels);

/// Mean point-adjusted F1 of a policy across a corpus.
double evaluate_policy(const SelectorPolicy& policy, const LabeledDataset& corpus);

/// Mean point-adjusted F1 of one fixed detector across a corpus.
double evaluate_detector(DetectorId id, const DetectorParams& params,
                         const LabeledDataset& corpus);

// -- persistence ------------------------------------------------------------

/// Series as .sdvt metric lines plus a sidecar label file.
void save_labeled_dataset(const LabeledDataset& corpus,
                          const std::string& series_path,
                          const std::string& labels_path);
LabeledDataset load_labeled_dataset(const std::string& series_path,
                                    const std::string& labels_path);

void save_policy(const SelectorPolicy& policy, const std::string& path);
SelectorPolicy load_policy(const std::string& path);

} // namespace sdvdiag
