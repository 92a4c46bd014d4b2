#pragma once

#include <cstdint>

#include "ckd/models/model.hpp"

namespace ckd {

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // x[feature] <= threshold goes left
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf payload: class frequency (RF) or margin weight (GBT)
    double cover = 0.0;  // training rows reaching the node
};

struct Tree {
    std::vector<TreeNode> nodes;

    double predict(const std::vector<double>& x) const;
    int leaf_index(const std::vector<double>& x) const;
};

nlohmann::json tree_to_json(const Tree& tree);
Tree tree_from_json(const nlohmann::json& j);

// Recomputes node covers from a dataset; used to pin the conditional
// expectation semantics of , e.g., a single-row background in tests.
void reweight_cover(Tree& tree, const std::vector<std::vector<double>>& rows);

struct ForestParams {
    int n_trees = 200;
    int max_depth = 12;
    int min_leaf = 5;
    int features_per_split = 0;  // 0 selects round(sqrt(F))
    bool bootstrap = true;
    std::uint64_t seed = 1;
    unsigned jobs = 0;
};

class ForestModel : public Model {
public:
    ModelKind kind() const override { return ModelKind::RF; }
    double predict_row(const std::vector<double>& row) const override;
    nlohmann::json to_json() const override;
    static std::unique_ptr<ForestModel> from_json(const nlohmann::json& j);

    std::vector<Tree> trees;
    std::vector<double> impurity_importance;  // summed Gini decrease per feature
    int n_features = 0;
};

// Bootstrap CART ensemble with Gini splits over a random feature subset per
// node; deterministic given the seed, independent of the job count.
std::unique_ptr<ForestModel> train_random_forest(const std::vector<std::vector<double>>& rows,
                                                 const std::vector<int>& labels,
                                                 const ForestParams& params = {});

}  // namespace ckd
