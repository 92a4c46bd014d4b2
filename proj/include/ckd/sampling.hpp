#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ckd {

// SM1 SMOTE, SM2 ADASYN, SM3 ENN, SM4 OSS, SM5 SMOTE+ENN, SM6 SMOTE+OSS,
// SM7 ADASYN+ENN, SM8 ADASYN+OSS. Compositions oversample to parity first.
enum class Strategy { SM1, SM2, SM3, SM4, SM5, SM6, SM7, SM8 };

const char* strategy_name(Strategy s);
std::optional<Strategy> parse_strategy(const std::string& name);

struct SamplingParams {
    int smote_k = 5;  // neighbors for SMOTE/ADASYN
    int enn_k = 3;
    bool enn_majority_only = true;
};

// RNG contract, mirrored by the test oracle: synthetic row j consumes, in
// order, one uniform_index(minority-count) base pick, one uniform_index(k)
// neighbor pick, one uniform() interpolation weight from the stream
// Rng::stream(seed, 0x5307e, j).
std::vector<std::vector<double>> smote(const std::vector<std::vector<double>>& minority_rows,
                                       int k, std::size_t n_new, std::uint64_t seed);

struct AdasynResult {
    std::vector<std::vector<double>> synthetic;
    std::vector<std::size_t> per_point;  // g_i allocation per minority row
    bool uniform_fallback = false;       // every r_i was zero with G > 0
};

AdasynResult adasyn(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels,
                    int k, std::uint64_t seed);

// Returns retained row indices, ascending. Deterministic; no randomness.
std::vector<std::size_t> enn(const std::vector<std::vector<double>>& rows,
                             const std::vector<int>& labels, int k, bool majority_only = true);

// One-sided selection: 1-NN condensation from one seed-chosen majority row,
// then removal of majority members of Tomek links.
std::vector<std::size_t> oss(const std::vector<std::vector<double>>& rows,
                             const std::vector<int>& labels, std::uint64_t seed);

struct ResampleReport {
    std::string strategy;
    std::uint64_t seed = 0;
    std::size_t before_positive = 0, before_negative = 0;
    std::size_t after_positive = 0, after_negative = 0;
    std::size_t synthetic_created = 0;
    std::size_t rows_removed = 0;

    std::string to_json() const;
};

struct ResampleResult {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    ResampleReport report;
};

// Applies one of the eight strategies to a training split. Rows should be in
// standardized space; the minority class is the rarer label.
ResampleResult apply_strategy(Strategy strategy, const std::vector<std::vector<double>>& rows,
                              const std::vector<int>& labels, std::uint64_t seed,
                              const SamplingParams& params = {});

}  // namespace ckd
