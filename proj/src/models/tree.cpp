#include "ckd/models/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ckd/errors.hpp"
#include "ckd/parallel.hpp"
#include "ckd/rng.hpp"

namespace ckd {

double Tree::predict(const std::vector<double>& x) const {
    return nodes[leaf_index(x)].value;
}

int Tree::leaf_index(const std::vector<double>& x) const {
    int node = 0;
    while (nodes[node].feature >= 0) {
        const auto& n = nodes[node];
        if (static_cast<std::size_t>(n.feature) >= x.size())
            throw DataError("tree feature index exceeds input arity");
        node = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return node;
}

nlohmann::json tree_to_json(const Tree& tree) {
    nlohmann::json j;
    auto& feature = j["feature"] = nlohmann::json::array();
    auto& threshold = j["threshold"] = nlohmann::json::array();
    auto& left = j["left"] = nlohmann::json::array();
    auto& right = j["right"] = nlohmann::json::array();
    auto& value = j["value"] = nlohmann::json::array();
    auto& cover = j["cover"] = nlohmann::json::array();
    for (const auto& n : tree.nodes) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        value.push_back(n.value);
        cover.push_back(n.cover);
    }
    return j;
}

Tree tree_from_json(const nlohmann::json& j) {
    Tree tree;
    const auto& feature = j.at("feature");
    tree.nodes.resize(feature.size());
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        auto& n = tree.nodes[i];
        n.feature = feature[i].get<int>();
        n.threshold = j.at("threshold")[i].get<double>();
        n.left = j.at("left")[i].get<int>();
        n.right = j.at("right")[i].get<int>();
        n.value = j.at("value")[i].get<double>();
        n.cover = j.at("cover")[i].get<double>();
    }
    return tree;
}

void reweight_cover(Tree& tree, const std::vector<std::vector<double>>& rows) {
    for (auto& n : tree.nodes) n.cover = 0.0;
    for (const auto& row : rows) {
        int node = 0;
        for (;;) {
            tree.nodes[node].cover += 1.0;
            if (tree.nodes[node].feature < 0) break;
            node = row[tree.nodes[node].feature] <= tree.nodes[node].threshold
                       ? tree.nodes[node].left
                       : tree.nodes[node].right;
        }
    }
}

namespace {

struct CartContext {
    const std::vector<std::vector<double>>& rows;
    const std::vector<int>& labels;
    int max_depth;
    int min_leaf;
    int features_per_split;
    std::vector<double>* importance;  // optional Gini-decrease accumulator
};

double gini(double n_pos, double n_total) {
    if (n_total <= 0.0) return 0.0;
    const double p = n_pos / n_total;
    return 2.0 * p * (1.0 - p);
}

// grows the subtree over samples[begin, end); returns the node index
int grow(Tree& tree, CartContext& ctx, std::vector<std::size_t>& samples, std::size_t begin,
         std::size_t end, int depth, Rng& rng) {
    const std::size_t count = end - begin;
    double n_pos = 0.0;
    for (std::size_t i = begin; i < end; ++i) n_pos += ctx.labels[samples[i]];

    const int node_index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[node_index].cover = static_cast<double>(count);
    tree.nodes[node_index].value = n_pos / static_cast<double>(count);

    const double node_gini = gini(n_pos, static_cast<double>(count));
    if (depth >= ctx.max_depth || node_gini == 0.0 ||
        count < 2 * static_cast<std::size_t>(ctx.min_leaf))
        return node_index;

    const std::size_t n_features = ctx.rows[0].size();
    std::vector<int> candidates(n_features);
    std::iota(candidates.begin(), candidates.end(), 0);
    rng.shuffle(candidates);
    const std::size_t take = std::min<std::size_t>(
        ctx.features_per_split > 0 ? ctx.features_per_split : n_features, n_features);

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_score = node_gini;  // weighted child impurity must improve on this
    constexpr double kMinGain = 1e-12;

    std::vector<std::pair<double, int>> column(count);
    for (std::size_t f = 0; f < take; ++f) {
        const int feature = candidates[f];
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t s = samples[begin + i];
            column[i] = {ctx.rows[s][feature], ctx.labels[s]};
        }
        std::sort(column.begin(), column.end());
        double left_pos = 0.0;
        for (std::size_t i = 0; i + 1 < count; ++i) {
            left_pos += column[i].second;
            if (column[i].first == column[i + 1].first) continue;  // no split between ties
            const double n_left = static_cast<double>(i + 1);
            const double n_right = static_cast<double>(count) - n_left;
            if (n_left < ctx.min_leaf || n_right < ctx.min_leaf) continue;
            const double score = (n_left * gini(left_pos, n_left) +
                                  n_right * gini(n_pos - left_pos, n_right)) /
                                 static_cast<double>(count);
            if (score < best_score - kMinGain) {
                best_score = score;
                best_feature = feature;
                // midpoint keeps the split strictly between observed values
                best_threshold = column[i].first + 0.5 * (column[i + 1].first - column[i].first);
                if (!(best_threshold > column[i].first)) best_threshold = column[i].first;
            }
        }
    }

    if (best_feature < 0) return node_index;

    const auto mid = std::partition(samples.begin() + begin, samples.begin() + end,
                                    [&](std::size_t s) {
                                        return ctx.rows[s][best_feature] <= best_threshold;
                                    });
    const std::size_t split = static_cast<std::size_t>(mid - samples.begin());
    if (split == begin || split == end) return node_index;  // numeric edge case

    if (ctx.importance)
        (*ctx.importance)[best_feature] += static_cast<double>(count) * (node_gini - best_score);

    tree.nodes[node_index].feature = best_feature;
    tree.nodes[node_index].threshold = best_threshold;
    const int left = grow(tree, ctx, samples, begin, split, depth + 1, rng);
    tree.nodes[node_index].left = left;
    const int right = grow(tree, ctx, samples, split, end, depth + 1, rng);
    tree.nodes[node_index].right = right;
    return node_index;
}

}  // namespace

double ForestModel::predict_row(const std::vector<double>& row) const {
    if (static_cast<int>(row.size()) != n_features) throw DataError("forest arity mismatch");
    double sum = 0.0;
    for (const auto& tree : trees) sum += tree.predict(row);
    return sum / static_cast<double>(trees.size());
}

nlohmann::json ForestModel::to_json() const {
    nlohmann::json j{{"format_version", kModelFormatVersion},
                     {"kind", model_kind_name(kind())},
                     {"n_features", n_features},
                     {"impurity_importance", impurity_importance}};
    auto& arr = j["trees"] = nlohmann::json::array();
    for (const auto& tree : trees) arr.push_back(tree_to_json(tree));
    return j;
}

std::unique_ptr<ForestModel> ForestModel::from_json(const nlohmann::json& j) {
    auto m = std::make_unique<ForestModel>();
    j.at("n_features").get_to(m->n_features);
    j.at("impurity_importance").get_to(m->impurity_importance);
    for (const auto& t : j.at("trees")) m->trees.push_back(tree_from_json(t));
    return m;
}

std::unique_ptr<ForestModel> train_random_forest(const std::vector<std::vector<double>>& rows,
                                                 const std::vector<int>& labels,
                                                 const ForestParams& params) {
    if (rows.empty() || rows.size() != labels.size())
        throw DataError("train_random_forest: empty data or size mismatch");
    if (params.max_depth < 1) throw DataError("train_random_forest: max_depth must be >= 1");
    bool any_pos = false, any_neg = false;
    for (const int y : labels) (y ? any_pos : any_neg) = true;
    if (!any_pos || !any_neg) throw DataError("train_random_forest needs both classes");

    const std::size_t n = rows.size();
    const std::size_t n_features = rows[0].size();
    const int per_split =
        params.features_per_split > 0
            ? params.features_per_split
            : std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_features)))));

    auto model = std::make_unique<ForestModel>();
    model->n_features = static_cast<int>(n_features);
    model->trees.resize(params.n_trees);
    std::vector<std::vector<double>> importances(params.n_trees,
                                                 std::vector<double>(n_features, 0.0));

    parallel_for(static_cast<std::size_t>(params.n_trees), params.jobs, [&](std::size_t t) {
        Rng rng = Rng::stream(params.seed, 0xf04e57ull, t);
        std::vector<std::size_t> samples(n);
        if (params.bootstrap)
            for (auto& s : samples) s = rng.uniform_index(n);
        else
            std::iota(samples.begin(), samples.end(), std::size_t{0});

        CartContext ctx{rows, labels, params.max_depth, params.min_leaf, per_split,
                        &importances[t]};
        grow(model->trees[t], ctx, samples, 0, samples.size(), 0, rng);
    });

    model->impurity_importance.assign(n_features, 0.0);
    for (const auto& imp : importances)
        for (std::size_t f = 0; f < n_features; ++f) model->impurity_importance[f] += imp[f];
    return model;
}

}  // namespace ckd
