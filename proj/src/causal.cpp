#include "sdvdiag/causal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace sdvdiag {

namespace {

constexpr double kVarEps = 1e-12;

struct AlignedPair {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<bool> valid; // both sides present at this grid point
};

std::int64_t median_interval(const TimeSeries& a, const TimeSeries& b,
                             std::int64_t lo, std::int64_t hi) {
    std::vector<std::int64_t> deltas;
    auto collect = [&](const TimeSeries& s) {
        for (std::size_t i = 1; i < s.samples.size(); ++i) {
            std::int64_t t0 = s.samples[i - 1].first;
            std::int64_t t1 = s.samples[i].first;
            if (t1 >= lo && t0 <= hi) {
                deltas.push_back(t1 - t0);
            }
        }
    };
    collect(a);
    collect(b);
    if (deltas.empty()) {
        return 0;
    }
    std::nth_element(deltas.begin(), deltas.begin() + deltas.size() / 2,
                     deltas.end());
    return std::max<std::int64_t>(1, deltas[deltas.size() / 2]);
}

// Forward-fill one series onto the grid; points whose latest sample is older
// than max_gap steps are marked missing.
void fill_onto_grid(const TimeSeries& s, std::int64_t t0, std::int64_t step,
                    std::size_t n, int max_gap, std::vector<double>& out,
                    std::vector<bool>& present) {
    out.assign(n, 0.0);
    present.assign(n, false);
    std::size_t idx = 0;
    for (std::size_t g = 0; g < n; ++g) {
        std::int64_t t = t0 + static_cast<std::int64_t>(g) * step;
        while (idx + 1 < s.samples.size() && s.samples[idx + 1].first <= t) {
            ++idx;
        }
        if (s.samples.empty() || s.samples[idx].first > t) {
            continue; // before the first sample
        }
        if (t - s.samples[idx].first <= static_cast<std::int64_t>(max_gap) * step) {
            out[g] = s.samples[idx].second;
            present[g] = true;
        }
    }
}

AlignedPair align(const TimeSeries& x, const TimeSeries& y, int max_lag,
                  int max_gap) {
    if (x.samples.empty() || y.samples.empty()) {
        throw TooShort("empty series");
    }
    std::int64_t lo = std::max(x.samples.front().first, y.samples.front().first);
    std::int64_t hi = std::min(x.samples.back().first, y.samples.back().first);
    if (hi <= lo) {
        throw TooShort("series share no common time window");
    }
    std::int64_t step = median_interval(x, y, lo, hi);
    if (step <= 0) {
        throw TooShort("cannot determine a sampling grid");
    }
    std::size_t n = static_cast<std::size_t>((hi - lo) / step) + 1;
    if (n < static_cast<std::size_t>(3 * max_lag)) {
        throw TooShort("fewer aligned points than 3 * max_lag");
    }

    AlignedPair pair;
    std::vector<bool> px;
    std::vector<bool> py;
    fill_onto_grid(x, lo, step, n, max_gap, pair.x, px);
    fill_onto_grid(y, lo, step, n, max_gap, pair.y, py);
    pair.valid.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        pair.valid[i] = px[i] && py[i];
    }
    return pair;
}

void check_variance(const AlignedPair& p) {
    double sx = 0.0;
    double sy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < p.x.size(); ++i) {
        if (!p.valid[i]) {
            continue;
        }
        sx += p.x[i];
        sy += p.y[i];
        sxx += p.x[i] * p.x[i];
        syy += p.y[i] * p.y[i];
        ++m;
    }
    if (m < 3) {
        throw TooShort("not enough overlapping points");
    }
    double md = static_cast<double>(m);
    if (sxx / md - (sx / md) * (sx / md) < kVarEps ||
        syy / md - (sy / md) * (sy / md) < kVarEps) {
        throw ZeroVariance("constant series carries no causal signal");
    }
}

// Pearson correlation of a[t - lag] against b[t] over jointly valid points.
double lagged_corr(const std::vector<double>& a, const std::vector<double>& b,
                   const std::vector<bool>& valid, int lag) {
    std::size_t n = a.size();
    double sa = 0.0;
    double sb = 0.0;
    std::size_t m = 0;
    for (std::size_t t = static_cast<std::size_t>(lag); t < n; ++t) {
        if (!valid[t] || !valid[t - lag]) {
            continue;
        }
        sa += a[t - lag];
        sb += b[t];
        ++m;
    }
    if (m < 3) {
        return 0.0;
    }
    double ma = sa / static_cast<double>(m);
    double mb = sb / static_cast<double>(m);
    double num = 0.0;
    double va = 0.0;
    double vb = 0.0;
    for (std::size_t t = static_cast<std::size_t>(lag); t < n; ++t) {
        if (!valid[t] || !valid[t - lag]) {
            continue;
        }
        double da = a[t - lag] - ma;
        double db = b[t] - mb;
        num += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va < kVarEps || vb < kVarEps) {
        return 0.0;
    }
    return num / std::sqrt(va * vb);
}

struct DirectedBest {
    double weight = 0.0;
    int lag = 0;
};

// Best |correlation| over lags [1, max_lag] for a -> b.
DirectedBest best_directed(const AlignedPair& p, bool forward, int max_lag) {
    const auto& a = forward ? p.x : p.y;
    const auto& b = forward ? p.y : p.x;
    DirectedBest best;
    for (int lag = 1; lag <= max_lag; ++lag) {
        double w = std::min(1.0, std::abs(lagged_corr(a, b, p.valid, lag)));
        if (w > best.weight) {
            best = {w, lag};
        }
    }
    return best;
}

} // namespace

PairwiseWeight pairwise_causal_weight(const TimeSeries& x, const TimeSeries& y,
                                      int max_lag) {
    CausalParams defaults;
    AlignedPair p = align(x, y, max_lag, defaults.max_fill_gap);
    check_variance(p);
    DirectedBest fwd = best_directed(p, true, max_lag);
    DirectedBest bwd = best_directed(p, false, max_lag);
    if (fwd.weight >= bwd.weight) {
        return {fwd.weight, fwd.lag, true};
    }
    return {bwd.weight, bwd.lag, false};
}

CausalModel discover(const std::vector<TimeSeries>& series_set,
                     const CausalParams& params, std::uint64_t graph_version) {
    if (series_set.size() < 2) {
        throw InsufficientData("causal discovery requires at least two series");
    }

    // deterministic pair order regardless of input order
    std::vector<const TimeSeries*> sorted;
    sorted.reserve(series_set.size());
    for (const TimeSeries& s : series_set) {
        sorted.push_back(&s);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const TimeSeries* a, const TimeSeries* b) {
                  return a->key < b->key;
              });

    CausalModel model;
    model.params = params;
    model.version = 1;
    model.fitted_on_version = graph_version;

    for (std::size_t i = 0; i < sorted.size(); ++i) {
        for (std::size_t j = i + 1; j < sorted.size(); ++j) {
            const TimeSeries& a = *sorted[i];
            const TimeSeries& b = *sorted[j];
            AlignedPair pair;
            try {
                pair = align(a, b, params.max_lag, params.max_fill_gap);
                check_variance(pair);
            } catch (const ZeroVariance&) {
                continue;
            } catch (const TooShort&) {
                continue;
            }
            DirectedBest fwd = best_directed(pair, true, params.max_lag);
            DirectedBest bwd = best_directed(pair, false, params.max_lag);
            bool keep_fwd = fwd.weight >= params.weight_threshold &&
                            fwd.weight >= bwd.weight;
            bool keep_bwd = bwd.weight >= params.weight_threshold &&
                            bwd.weight >= fwd.weight;
            if (keep_fwd) {
                model.edges.push_back({a.key, b.key, fwd.weight, fwd.lag});
            }
            if (keep_bwd) {
                model.edges.push_back({b.key, a.key, bwd.weight, bwd.lag});
            }
        }
    }
    std::sort(model.edges.begin(), model.edges.end());
    return model;
}

CausalModel refit_on_change(const CausalModel& model, const GraphChange& change,
                            const std::vector<TimeSeries>& series_set) {
    if (!change.changed()) {
        return model;
    }

    std::set<InstanceId> touched;
    for (const InstanceId& id : change.added_nodes) {
        touched.insert(id);
    }
    for (const InstanceId& id : change.removed_nodes) {
        touched.insert(id);
    }
    for (const EdgeKey& e : change.added_edges) {
        touched.insert(e.first);
        touched.insert(e.second);
    }
    for (const EdgeKey& e : change.removed_edges) {
        touched.insert(e.first);
        touched.insert(e.second);
    }

    auto owner_touched = [&touched](const SeriesKey& key) {
        return touched.count({key.service, key.instance}) > 0;
    };

    CausalModel next;
    next.method = model.method;
    next.params = model.params;
    next.version = model.version + 1;
    next.fitted_on_version = change.new_version;
    for (const CausalEdge& e : model.edges) {
        if (!owner_touched(e.from) && !owner_touched(e.to)) {
            next.edges.push_back(e);
        }
    }

    // rediscover only pairs with at least one touched endpoint
    if (series_set.size() >= 2) {
        CausalModel full = discover(series_set, model.params, change.new_version);
        for (const CausalEdge& e : full.edges) {
            if (owner_touched(e.from) || owner_touched(e.to)) {
                next.edges.push_back(e);
            }
        }
    }
    std::sort(next.edges.begin(), next.edges.end());
    return next;
}

std::string to_edge_list(const CausalModel& model) {
    std::ostringstream out;
    for (const CausalEdge& e : model.edges) {
        char weight[32];
        std::snprintf(weight, sizeof(weight), "%.6f", e.weight);
        out << e.from.str() << "\t" << e.to.str() << "\t" << weight << "\t"
            << e.lag << "\n";
    }
    return out.str();
}

} // namespace sdvdiag
