#include "ckd/models/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ckd/errors.hpp"

namespace ckd {

double GbtModel::margin(const std::vector<double>& row) const {
    if (static_cast<int>(row.size()) != n_features) throw DataError("gbt arity mismatch");
    double z = base_score;
    for (const auto& tree : trees) z += tree.predict(row);
    return z;
}

double GbtModel::predict_row(const std::vector<double>& row) const { return sigmoid(margin(row)); }

nlohmann::json GbtModel::to_json() const {
    nlohmann::json j{{"format_version", kModelFormatVersion},
                     {"kind", model_kind_name(kind())},
                     {"n_features", n_features},
                     {"base_score", base_score},
                     {"gain_importance", gain_importance}};
    auto& arr = j["trees"] = nlohmann::json::array();
    for (const auto& tree : trees) arr.push_back(tree_to_json(tree));
    return j;
}

std::unique_ptr<GbtModel> GbtModel::from_json(const nlohmann::json& j) {
    auto m = std::make_unique<GbtModel>();
    j.at("n_features").get_to(m->n_features);
    j.at("base_score").get_to(m->base_score);
    j.at("gain_importance").get_to(m->gain_importance);
    for (const auto& t : j.at("trees")) m->trees.push_back(tree_from_json(t));
    return m;
}

namespace {

struct BoostContext {
    const std::vector<std::vector<double>>& rows;
    const std::vector<double>& grad;
    const std::vector<double>& hess;
    const GbtParams& params;
    std::vector<double>* importance;
};

double leaf_weight(double g, double h, double l2) { return -g / (h + l2); }

int grow(Tree& tree, BoostContext& ctx, std::vector<std::size_t>& samples, std::size_t begin,
         std::size_t end, int depth) {
    double g_sum = 0.0, h_sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
        g_sum += ctx.grad[samples[i]];
        h_sum += ctx.hess[samples[i]];
    }

    const int node_index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[node_index].cover = static_cast<double>(end - begin);
    tree.nodes[node_index].value =
        ctx.params.learning_rate * leaf_weight(g_sum, h_sum, ctx.params.l2);

    if (depth >= ctx.params.depth) return node_index;

    const double parent_term = g_sum * g_sum / (h_sum + ctx.params.l2);
    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = 1e-12;

    const std::size_t count = end - begin;
    std::vector<std::pair<double, std::size_t>> column(count);
    for (std::size_t feature = 0; feature < ctx.rows[0].size(); ++feature) {
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t s = samples[begin + i];
            column[i] = {ctx.rows[s][feature], s};
        }
        std::sort(column.begin(), column.end());
        double gl = 0.0, hl = 0.0;
        for (std::size_t i = 0; i + 1 < count; ++i) {
            gl += ctx.grad[column[i].second];
            hl += ctx.hess[column[i].second];
            if (column[i].first == column[i + 1].first) continue;
            const double gr = g_sum - gl;
            const double hr = h_sum - hl;
            if (hl < ctx.params.min_child_weight || hr < ctx.params.min_child_weight) continue;
            const double gain = 0.5 * (gl * gl / (hl + ctx.params.l2) +
                                       gr * gr / (hr + ctx.params.l2) - parent_term);
            if (gain > best_gain) {
                best_gain = gain;
                best_feature = static_cast<int>(feature);
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
    if (split == begin || split == end) return node_index;

    if (ctx.importance) (*ctx.importance)[best_feature] += best_gain;

    tree.nodes[node_index].feature = best_feature;
    tree.nodes[node_index].threshold = best_threshold;
    const int left = grow(tree, ctx, samples, begin, split, depth + 1);
    tree.nodes[node_index].left = left;
    const int right = grow(tree, ctx, samples, split, end, depth + 1);
    tree.nodes[node_index].right = right;
    return node_index;
}

double log_loss(const std::vector<double>& margins, const std::vector<int>& labels) {
    double loss = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
        const double m = labels[i] ? margins[i] : -margins[i];
        loss += m > 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
    }
    return loss / static_cast<double>(margins.size());
}

}  // namespace

std::unique_ptr<GbtModel> train_gbt(const std::vector<std::vector<double>>& rows,
                                    const std::vector<int>& labels, const GbtParams& params,
                                    std::vector<double>* loss_curve) {
    if (rows.empty() || rows.size() != labels.size())
        throw DataError("train_gbt: empty data or size mismatch");
    if (params.l2 < 0.0) throw DataError("train_gbt: negative l2");
    if (params.rounds < 0 || params.depth < 1) throw DataError("train_gbt: bad rounds/depth");
    bool any_pos = false, any_neg = false;
    for (const int y : labels) (y ? any_pos : any_neg) = true;
    if (!any_pos || !any_neg) throw DataError("train_gbt needs both classes");

    const std::size_t n = rows.size();
    const std::size_t n_features = rows[0].size();
    double positive = 0.0;
    for (const int y : labels) positive += y;
    const double rate = positive / static_cast<double>(n);

    auto model = std::make_unique<GbtModel>();
    model->n_features = static_cast<int>(n_features);
    model->base_score = std::log(rate / (1.0 - rate));
    model->gain_importance.assign(n_features, 0.0);

    std::vector<double> margins(n, model->base_score);
    std::vector<double> grad(n), hess(n);
    if (loss_curve) {
        loss_curve->clear();
        loss_curve->push_back(log_loss(margins, labels));
    }

    std::vector<std::size_t> samples(n);
    for (int round = 0; round < params.rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(margins[i]);
            grad[i] = p - static_cast<double>(labels[i]);
            hess[i] = std::max(p * (1.0 - p), 1e-16);
        }
        std::iota(samples.begin(), samples.end(), std::size_t{0});
        BoostContext ctx{rows, grad, hess, params, &model->gain_importance};
        Tree tree;
        grow(tree, ctx, samples, 0, n, 0);
        for (std::size_t i = 0; i < n; ++i) margins[i] += tree.predict(rows[i]);
        model->trees.push_back(std::move(tree));
        if (loss_curve) loss_curve->push_back(log_loss(margins, labels));
    }
    return model;
}

}  // namespace ckd
