#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ckd/models/gbt.hpp"
#include "ckd/models/linear.hpp"
#include "ckd/models/tree.hpp"

namespace ckd {

struct ShapExplanation {
    double base_value = 0.0;
    std::vector<double> contributions;
    double model_output = 0.0;  // base + sum(contributions), up to tolerance
    std::vector<double> display_values;  // unstandardized values for labels
    std::vector<std::string> feature_names;
    std::string space;  // "probability" (RF), "margin" (GBT), or the scorer's own
};

// Exact Shapley values for a single tree under the cover-weighted
// conditional expectation, the polynomial path-weight algorithm.
void tree_shap_single(const Tree& tree, const std::vector<double>& x, std::vector<double>& phi,
                      double& base_value, double scale);

// RF explanations live in probability space (mean of leaf frequencies);
// GBT explanations in margin space so additivity is exact.
ShapExplanation tree_shap(const Model& model, const std::vector<double>& instance);

using ScoreFunction = std::function<double(const std::vector<double>&)>;

struct KernelShapConfig {
    std::size_t background_limit = 100;  // sampled with a fixed seed when larger
    std::size_t n_samples = 2048;        // coalition budget when M > exhaustive_max
    int exhaustive_max = 12;
};

ShapExplanation kernel_shap(const ScoreFunction& score, const std::vector<double>& instance,
                            const std::vector<std::vector<double>>& background,
                            const KernelShapConfig& config, std::uint64_t seed);

struct ImportanceRanking {
    std::vector<std::pair<std::string, double>> entries;  // non-increasing, sums to 1
    std::string method;  // "impurity", "gain", "|coefficient|", "mean|SHAP|"
};

// RF: Gini decrease; GBT: split gain; LR: |coefficient| on standardized
// inputs. Sequence kinds are rejected; use mean_abs_shap instead.
ImportanceRanking feature_importance(const Model& model,
                                     const std::vector<std::string>& names);

ImportanceRanking mean_abs_shap(const std::vector<ShapExplanation>& explanations);

std::string importance_csv(const ImportanceRanking& ranking);

struct ForcePlot {
    std::string svg;
    std::string json;
};

ForcePlot render_force_plot(const ShapExplanation& explanation);

}  // namespace ckd
