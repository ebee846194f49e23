#include "sdvdiag/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sdvdiag {

namespace {

constexpr double kDegenerateStd = 1e-12;
constexpr double kDegenerateScore = 1e9;

std::vector<double> values_of(const TimeSeries& series) {
    std::vector<double> v;
    v.reserve(series.samples.size());
    for (const auto& [t, x] : series.samples) {
        v.push_back(x);
    }
    return v;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) {
        return 0.0;
    }
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance_of(const std::vector<double>& v, double mean) {
    if (v.empty()) {
        return 0.0;
    }
    double acc = 0.0;
    for (double x : v) {
        acc += (x - mean) * (x - mean);
    }
    return acc / static_cast<double>(v.size());
}

double median_sorted(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    if (n == 0) {
        return 0.0;
    }
    if (n % 2 == 1) {
        return v[n / 2];
    }
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Quartiles {
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr() const { return q3 - q1; }
};

// Linear-interpolation quantiles over the sorted values.
Quartiles quartiles_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    auto quantile = [&v](double q) {
        if (v.empty()) {
            return 0.0;
        }
        double pos = q * static_cast<double>(v.size() - 1);
        std::size_t lo = static_cast<std::size_t>(pos);
        std::size_t hi = std::min(lo + 1, v.size() - 1);
        double frac = pos - static_cast<double>(lo);
        return v[lo] + frac * (v[hi] - v[lo]);
    };
    return {quantile(0.25), quantile(0.75)};
}

// Pearson correlation of x against itself shifted by `lag` samples.
double lag_correlation(const std::vector<double>& x, std::size_t lag) {
    std::size_t n = x.size();
    if (lag >= n || n - lag < 3) {
        return 0.0;
    }
    std::size_t m = n - lag;
    double ma = 0.0;
    double mb = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        ma += x[i];
        mb += x[i + lag];
    }
    ma /= static_cast<double>(m);
    mb /= static_cast<double>(m);
    double num = 0.0;
    double va = 0.0;
    double vb = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double a = x[i] - ma;
        double b = x[i + lag] - mb;
        num += a * b;
        va += a * a;
        vb += b * b;
    }
    if (va < kDegenerateStd || vb < kDegenerateStd) {
        return 0.0;
    }
    return num / std::sqrt(va * vb);
}

std::vector<double> detrended(const std::vector<double>& x) {
    std::size_t n = x.size();
    std::vector<double> out(n, 0.0);
    if (n < 2) {
        return out;
    }
    // least-squares line
    double tm = (static_cast<double>(n) - 1.0) / 2.0;
    double xm = mean_of(x);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dt = static_cast<double>(i) - tm;
        num += dt * (x[i] - xm);
        den += dt * dt;
    }
    double slope = den > 0.0 ? num / den : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = x[i] - (xm + slope * (static_cast<double>(i) - tm));
    }
    return out;
}

// Strongest lag-correlation peak of the detrended series over candidate
// periods [2, n/3]. Returns {strength, period}.
std::pair<double, std::size_t> seasonal_peak(const std::vector<double>& x) {
    std::size_t n = x.size();
    if (n < 6) {
        return {0.0, 0};
    }
    std::vector<double> d = detrended(x);
    if (variance_of(d, mean_of(d)) < kDegenerateStd) {
        return {0.0, 0};
    }
    double best = 0.0;
    std::size_t best_lag = 0;
    for (std::size_t lag = 2; lag <= n / 3; ++lag) {
        double c = lag_correlation(d, lag);
        if (c > best) {
            best = c;
            best_lag = lag;
        }
    }
    return {std::clamp(best, 0.0, 1.0), best_lag};
}

// Score convention shared by the z-style detectors: deviations over an
// all-but-flat baseline get a large finite score instead of dividing by zero.
double normalized_score(double deviation, double stddev, double scale) {
    double dev_eps = 1e-9 * std::max(1.0, std::abs(scale));
    if (stddev < dev_eps) {
        return std::abs(deviation) <= dev_eps ? 0.0 : kDegenerateScore;
    }
    return std::abs(deviation) / stddev;
}

std::vector<Anomaly> detect_rolling_zscore(const TimeSeries& series,
                                           const DetectorParams& p) {
    const auto& s = series.samples;
    std::size_t w = static_cast<std::size_t>(std::max(2, p.window));
    std::vector<Anomaly> out;
    double sum = 0.0;
    double sumsq = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i >= w) {
            double m = sum / static_cast<double>(w);
            double var = std::max(0.0, sumsq / static_cast<double>(w) - m * m);
            double score = normalized_score(s[i].second - m, std::sqrt(var), m);
            if (score > p.k) {
                out.push_back({series.key, s[i].first, score,
                               DetectorId::RollingZscore});
            }
            sum -= s[i - w].second;
            sumsq -= s[i - w].second * s[i - w].second;
        }
        sum += s[i].second;
        sumsq += s[i].second * s[i].second;
    }
    return out;
}

std::vector<Anomaly> detect_iqr(const TimeSeries& series, const DetectorParams& p) {
    std::vector<double> v = values_of(series);
    Quartiles q = quartiles_of(v);
    double iqr = q.iqr();
    std::vector<Anomaly> out;
    if (iqr < kDegenerateStd) {
        return out; // degenerate distribution: nothing stands out
    }
    double lo = q.q1 - p.k * iqr;
    double hi = q.q3 + p.k * iqr;
    double med = median_sorted(v);
    for (const auto& [t, x] : series.samples) {
        if (x < lo || x > hi) {
            out.push_back({series.key, t, std::abs(x - med) / iqr, DetectorId::Iqr});
        }
    }
    return out;
}

std::vector<Anomaly> detect_ewma_residual(const TimeSeries& series,
                                          const DetectorParams& p) {
    const auto& s = series.samples;
    std::size_t warm = detector_warmup(DetectorId::EwmaResidual, p);
    std::vector<Anomaly> out;
    double level = s[0].second;
    double resid_var = 0.0;
    // seed the residual variance from the warm-up region
    {
        double lvl = s[0].second;
        double acc = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 1; i < std::min(warm, s.size()); ++i) {
            double r = s[i].second - lvl;
            acc += r * r;
            ++n;
            lvl = p.alpha * s[i].second + (1.0 - p.alpha) * lvl;
        }
        resid_var = n > 0 ? acc / static_cast<double>(n) : 0.0;
    }
    constexpr double kVarBeta = 0.05;
    for (std::size_t i = 1; i < s.size(); ++i) {
        double r = s[i].second - level;
        if (i >= warm) {
            double score = normalized_score(r, std::sqrt(resid_var), level);
            if (score > p.k) {
                out.push_back({series.key, s[i].first, score,
                               DetectorId::EwmaResidual});
            }
        }
        resid_var = kVarBeta * r * r + (1.0 - kVarBeta) * resid_var;
        level = p.alpha * s[i].second + (1.0 - p.alpha) * level;
    }
    return out;
}

std::vector<Anomaly> detect_seasonal_residual(const TimeSeries& series,
                                              const DetectorParams& p) {
    std::vector<double> v = values_of(series);
    std::size_t period = static_cast<std::size_t>(std::max(0, p.period));
    if (period < 2) {
        auto [strength, lag] = seasonal_peak(v);
        period = strength >= 0.3 ? lag : 0;
    }

    std::vector<double> residuals(v.size(), 0.0);
    if (period >= 2 && v.size() >= 2 * period) {
        // per-phase means
        std::vector<double> phase_sum(period, 0.0);
        std::vector<std::size_t> phase_n(period, 0);
        for (std::size_t i = 0; i < v.size(); ++i) {
            phase_sum[i % period] += v[i];
            ++phase_n[i % period];
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            double pm = phase_sum[i % period] / static_cast<double>(phase_n[i % period]);
            residuals[i] = v[i] - pm;
        }
    } else {
        // no usable seasonality: residual against the global mean
        double m = mean_of(v);
        for (std::size_t i = 0; i < v.size(); ++i) {
            residuals[i] = v[i] - m;
        }
    }

    double rm = mean_of(residuals);
    double rsd = std::sqrt(variance_of(residuals, rm));
    double scale = mean_of(v);
    std::vector<Anomaly> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        double score = normalized_score(residuals[i] - rm, rsd, scale);
        if (score > p.k) {
            out.push_back({series.key, series.samples[i].first, score,
                           DetectorId::SeasonalResidual});
        }
    }
    return out;
}

} // namespace

SeriesFeatures extract_features(const TimeSeries& series) {
    if (series.samples.empty()) {
        throw EmptySeries("cannot extract features from an empty series");
    }
    std::vector<double> v = values_of(series);
    SeriesFeatures f;
    f.length = v.size();
    f.mean = mean_of(v);
    f.variance = variance_of(v, f.mean);

    Quartiles q = quartiles_of(v);
    double iqr = q.iqr();
    if (iqr > kDegenerateStd) {
        double med = median_sorted(v);
        double worst = 0.0;
        for (double x : v) {
            worst = std::max(worst, std::abs(x - med));
        }
        f.spikiness = worst / iqr;
    }

    f.seasonality_strength = seasonal_peak(v).first;

    if (f.variance > kDegenerateStd) {
        std::vector<double> d = detrended(v);
        double dv = variance_of(d, mean_of(d));
        f.trend_strength = std::clamp(1.0 - dv / f.variance, 0.0, 1.0);
    }
    return f;
}

std::string detector_name(DetectorId id) {
    switch (id) {
    case DetectorId::RollingZscore:
        return "rolling_zscore";
    case DetectorId::Iqr:
        return "iqr";
    case DetectorId::EwmaResidual:
        return "ewma_residual";
    case DetectorId::SeasonalResidual:
        return "seasonal_residual";
    }
    return "unknown";
}

DetectorId detector_from_name(const std::string& name) {
    for (DetectorId id : kDetectorPool) {
        if (detector_name(id) == name) {
            return id;
        }
    }
    throw UnknownDetector("unknown detector: " + name);
}

std::size_t detector_warmup(DetectorId id, const DetectorParams& params) {
    switch (id) {
    case DetectorId::RollingZscore:
        return static_cast<std::size_t>(std::max(2, params.window)) + 1;
    case DetectorId::Iqr:
        return 8;
    case DetectorId::EwmaResidual:
        return 10;
    case DetectorId::SeasonalResidual:
        return params.period >= 2 ? 2 * static_cast<std::size_t>(params.period) : 24;
    }
    return 1;
}

std::vector<Anomaly> detect(const TimeSeries& series, DetectorId id,
                            const DetectorParams& params) {
    if (series.samples.size() < detector_warmup(id, params)) {
        throw InsufficientHistory("series shorter than warm-up for " +
                                  detector_name(id));
    }
    switch (id) {
    case DetectorId::RollingZscore:
        return detect_rolling_zscore(series, params);
    case DetectorId::Iqr:
        return detect_iqr(series, params);
    case DetectorId::EwmaResidual:
        return detect_ewma_residual(series, params);
    case DetectorId::SeasonalResidual:
        return detect_seasonal_residual(series, params);
    }
    throw UnknownDetector("unknown detector id");
}

} // namespace sdvdiag
