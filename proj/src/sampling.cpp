#include "ckd/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ckd/errors.hpp"
#include "ckd/rng.hpp"

namespace ckd {

namespace {

const char* kStrategyNames[] = {"SM1", "SM2", "SM3", "SM4", "SM5", "SM6", "SM7", "SM8"};

double sq_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        d += diff * diff;
    }
    return d;
}

// indices of the k nearest rows to `query` among `pool` (excluding
// `exclude`), ties broken by index
std::vector<std::size_t> k_nearest(const std::vector<std::vector<double>>& rows,
                                   const std::vector<std::size_t>& pool, std::size_t query,
                                   std::size_t k, bool exclude_query) {
    std::vector<std::pair<double, std::size_t>> dists;
    dists.reserve(pool.size());
    for (const auto j : pool) {
        if (exclude_query && j == query) continue;
        dists.emplace_back(sq_distance(rows[query], rows[j]), j);
    }
    const std::size_t take = std::min(k, dists.size());
    std::partial_sort(dists.begin(), dists.begin() + take, dists.end());
    std::vector<std::size_t> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(dists[i].second);
    return out;
}

}  // namespace

const char* strategy_name(Strategy s) { return kStrategyNames[static_cast<int>(s)]; }

std::optional<Strategy> parse_strategy(const std::string& name) {
    for (int i = 0; i < 8; ++i)
        if (name == kStrategyNames[i]) return static_cast<Strategy>(i);
    return std::nullopt;
}

std::vector<std::vector<double>> smote(const std::vector<std::vector<double>>& minority_rows,
                                       int k, std::size_t n_new, std::uint64_t seed) {
    if (k < 1) throw DataError("smote: k must be >= 1");
    if (minority_rows.size() <= static_cast<std::size_t>(k))
        throw DataError("smote: minority count must exceed k");

    const std::size_t m = minority_rows.size();
    std::vector<std::size_t> all(m);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::vector<std::size_t>> neighbors(m);
    for (std::size_t i = 0; i < m; ++i)
        neighbors[i] = k_nearest(minority_rows, all, i, static_cast<std::size_t>(k), true);

    std::vector<std::vector<double>> synthetic;
    synthetic.reserve(n_new);
    for (std::size_t j = 0; j < n_new; ++j) {
        Rng rng = Rng::stream(seed, 0x5307e, j);
        const std::size_t base = rng.uniform_index(m);
        const std::size_t nn = neighbors[base][rng.uniform_index(neighbors[base].size())];
        const double lambda = rng.uniform();
        std::vector<double> row(minority_rows[base].size());
        for (std::size_t f = 0; f < row.size(); ++f)
            row[f] = minority_rows[base][f] +
                     lambda * (minority_rows[nn][f] - minority_rows[base][f]);
        synthetic.push_back(std::move(row));
    }
    return synthetic;
}

AdasynResult adasyn(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels,
                    int k, std::uint64_t seed) {
    if (k < 1) throw DataError("adasyn: k must be >= 1");
    std::vector<std::size_t> minority, majority;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? minority : majority).push_back(i);
    if (minority.size() > majority.size()) std::swap(minority, majority);
    if (minority.empty() || majority.empty()) throw DataError("adasyn: both classes required");
    if (minority.size() <= static_cast<std::size_t>(k))
        throw DataError("adasyn: minority count must exceed k");

    AdasynResult result;
    result.per_point.assign(minority.size(), 0);
    const std::size_t g_total = majority.size() - minority.size();
    if (g_total == 0) return result;

    std::vector<std::size_t> all(rows.size());
    std::iota(all.begin(), all.end(), std::size_t{0});

    // hardness ratio r_i = majority share of each minority point's k-NN
    std::vector<double> ratio(minority.size());
    double ratio_sum = 0.0;
    for (std::size_t i = 0; i < minority.size(); ++i) {
        const auto nn = k_nearest(rows, all, minority[i], static_cast<std::size_t>(k), true);
        std::size_t majority_count = 0;
        for (const auto j : nn) majority_count += labels[j] == labels[minority[i]] ? 0 : 1;
        ratio[i] = static_cast<double>(majority_count) / static_cast<double>(nn.size());
        ratio_sum += ratio[i];
    }
    if (ratio_sum <= 0.0) {
        // perfectly separated minority: fall back to uniform allocation
        result.uniform_fallback = true;
        std::fill(ratio.begin(), ratio.end(), 1.0);
        ratio_sum = static_cast<double>(minority.size());
    }

    // minority-only neighbor lists for the generation step
    std::vector<std::vector<double>> minority_rows;
    minority_rows.reserve(minority.size());
    for (const auto i : minority) minority_rows.push_back(rows[i]);
    std::vector<std::size_t> min_ids(minority.size());
    std::iota(min_ids.begin(), min_ids.end(), std::size_t{0});

    std::size_t counter = 0;
    for (std::size_t i = 0; i < minority.size(); ++i) {
        const std::size_t g_i = static_cast<std::size_t>(
            std::llround(ratio[i] / ratio_sum * static_cast<double>(g_total)));
        result.per_point[i] = g_i;
        if (g_i == 0) continue;
        const auto nn =
            k_nearest(minority_rows, min_ids, i, static_cast<std::size_t>(k), true);
        for (std::size_t s = 0; s < g_i; ++s) {
            Rng rng = Rng::stream(seed, 0xada5, counter++);
            const std::size_t pick = nn[rng.uniform_index(nn.size())];
            const double lambda = rng.uniform();
            std::vector<double> row(minority_rows[i].size());
            for (std::size_t f = 0; f < row.size(); ++f)
                row[f] = minority_rows[i][f] +
                         lambda * (minority_rows[pick][f] - minority_rows[i][f]);
            result.synthetic.push_back(std::move(row));
        }
    }
    return result;
}

std::vector<std::size_t> enn(const std::vector<std::vector<double>>& rows,
                             const std::vector<int>& labels, int k, bool majority_only) {
    if (k < 1) throw DataError("enn: k must be >= 1");
    if (rows.size() < static_cast<std::size_t>(k) + 1)
        throw DataError("enn: need more than k rows");
    std::size_t n_pos = 0;
    for (const int y : labels) n_pos += y ? 1 : 0;
    const int majority_label = n_pos * 2 >= rows.size() ? 1 : 0;

    std::vector<std::size_t> all(rows.size());
    std::iota(all.begin(), all.end(), std::size_t{0});

    std::vector<std::size_t> retained;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (majority_only && labels[i] != majority_label) {
            retained.push_back(i);
            continue;
        }
        const auto nn = k_nearest(rows, all, i, static_cast<std::size_t>(k), true);
        std::size_t agree = 0;
        for (const auto j : nn) agree += labels[j] == labels[i] ? 1 : 0;
        // removed only when the neighborhood vote strictly disagrees
        if (2 * agree >= nn.size()) retained.push_back(i);
    }
    return retained;
}

std::vector<std::size_t> oss(const std::vector<std::vector<double>>& rows,
                             const std::vector<int>& labels, std::uint64_t seed) {
    std::vector<std::size_t> minority, majority;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? minority : majority).push_back(i);
    if (minority.size() > majority.size()) std::swap(minority, majority);
    if (minority.empty() || majority.empty()) throw DataError("oss: both classes required");

    // phase 1: condensation with a 1-NN rule grown from one majority seed row
    Rng rng = Rng::stream(seed, 0x0551);
    std::vector<std::size_t> kept = minority;
    kept.push_back(majority[rng.uniform_index(majority.size())]);
    std::sort(kept.begin(), kept.end());
    std::vector<bool> in_kept(rows.size(), false);
    for (const auto i : kept) in_kept[i] = true;

    for (const auto i : majority) {
        if (in_kept[i]) continue;
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = 0;
        for (const auto j : kept) {
            const double d = sq_distance(rows[i], rows[j]);
            if (d < best) {
                best = d;
                best_j = j;
            }
        }
        if (labels[best_j] != labels[i]) {  // misclassified by 1-NN, keep it
            kept.push_back(i);
            std::sort(kept.begin(), kept.end());
            in_kept[i] = true;
        }
    }

    // phase 2: drop majority members of Tomek links within the kept set
    auto nearest_in_kept = [&](std::size_t query) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = query;
        for (const auto j : kept) {
            if (j == query) continue;
            const double d = sq_distance(rows[query], rows[j]);
            if (d < best) {
                best = d;
                best_j = j;
            }
        }
        return best_j;
    };

    std::vector<std::size_t> result;
    for (const auto i : kept) {
        if (labels[i] != labels[minority[0]]) {  // a majority row
            const std::size_t nn = nearest_in_kept(i);
            if (labels[nn] != labels[i] && nearest_in_kept(nn) == i) continue;  // Tomek link
        }
        result.push_back(i);
    }
    return result;
}

std::string ResampleReport::to_json() const {
    nlohmann::json j{{"strategy", strategy},
                     {"seed", seed},
                     {"before", {{"positive", before_positive}, {"negative", before_negative}}},
                     {"after", {{"positive", after_positive}, {"negative", after_negative}}},
                     {"synthetic_created", synthetic_created},
                     {"rows_removed", rows_removed}};
    return j.dump(2);
}

ResampleResult apply_strategy(Strategy strategy, const std::vector<std::vector<double>>& rows,
                              const std::vector<int>& labels, std::uint64_t seed,
                              const SamplingParams& params) {
    if (rows.size() != labels.size()) throw DataError("apply_strategy: size mismatch");
    std::size_t n_pos = 0;
    for (const int y : labels) n_pos += y ? 1 : 0;
    const std::size_t n_neg = rows.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw DataError("apply_strategy: training split has a single class");

    const int minority_label = n_pos <= n_neg ? 1 : 0;
    ResampleResult result;
    result.report.strategy = strategy_name(strategy);
    result.report.seed = seed;
    result.report.before_positive = n_pos;
    result.report.before_negative = n_neg;

    auto oversample = [&](bool use_adasyn, std::vector<std::vector<double>>& out_rows,
                          std::vector<int>& out_labels) {
        const std::size_t gap = (n_pos <= n_neg ? n_neg - n_pos : n_pos - n_neg);
        std::vector<std::vector<double>> synthetic;
        if (use_adasyn) {
            auto r = adasyn(rows, labels, params.smote_k, seed);
            synthetic = std::move(r.synthetic);
        } else if (gap > 0) {
            std::vector<std::vector<double>> minority_rows;
            for (std::size_t i = 0; i < rows.size(); ++i)
                if (labels[i] == minority_label) minority_rows.push_back(rows[i]);
            synthetic = smote(minority_rows, params.smote_k, gap, seed);
        }
        out_rows = rows;
        out_labels = labels;
        for (auto& s : synthetic) {
            out_rows.push_back(std::move(s));
            out_labels.push_back(minority_label);
        }
        result.report.synthetic_created = out_rows.size() - rows.size();
    };

    auto undersample = [&](bool use_oss, const std::vector<std::vector<double>>& in_rows,
                           const std::vector<int>& in_labels) {
        const auto retained = use_oss
                                  ? oss(in_rows, in_labels, seed)
                                  : enn(in_rows, in_labels, params.enn_k,
                                        params.enn_majority_only);
        result.report.rows_removed = in_rows.size() - retained.size();
        for (const auto i : retained) {
            result.rows.push_back(in_rows[i]);
            result.labels.push_back(in_labels[i]);
        }
    };

    switch (strategy) {
        case Strategy::SM1:
        case Strategy::SM2: oversample(strategy == Strategy::SM2, result.rows, result.labels); break;
        case Strategy::SM3: undersample(false, rows, labels); break;
        case Strategy::SM4: undersample(true, rows, labels); break;
        case Strategy::SM5:
        case Strategy::SM6:
        case Strategy::SM7:
        case Strategy::SM8: {
            std::vector<std::vector<double>> mid_rows;
            std::vector<int> mid_labels;
            const bool use_adasyn = strategy == Strategy::SM7 || strategy == Strategy::SM8;
            const bool use_oss = strategy == Strategy::SM6 || strategy == Strategy::SM8;
            oversample(use_adasyn, mid_rows, mid_labels);
            undersample(use_oss, mid_rows, mid_labels);
            break;
        }
    }

    for (const int y : result.labels) (y ? result.report.after_positive
                                         : result.report.after_negative) += 1;
    return result;
}

}  // namespace ckd
