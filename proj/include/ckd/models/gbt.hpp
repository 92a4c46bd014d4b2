#pragma once

#include "ckd/models/tree.hpp"

namespace ckd {

struct GbtParams {
    int rounds = 200;
    int depth = 4;
    double learning_rate = 0.1;
    double l2 = 1.0;               // lambda in the leaf-weight denominator
    double min_child_weight = 1.0;  // minimum hessian sum per child
};

class GbtModel : public Model {
public:
    ModelKind kind() const override { return ModelKind::GBT; }
    double predict_row(const std::vector<double>& row) const override;
    double margin(const std::vector<double>& row) const;
    nlohmann::json to_json() const override;
    static std::unique_ptr<GbtModel> from_json(const nlohmann::json& j);

    std::vector<Tree> trees;  // leaf values carry the learning rate
    std::vector<double> gain_importance;
    double base_score = 0.0;  // prior margin (log-odds of the positive rate)
    int n_features = 0;
};

// Second-order logistic boosting: leaf weight -G/(H+lambda), split gain
// 0.5*[GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)]; training log-loss is
// non-increasing round over round (curve exposed through loss_curve).
std::unique_ptr<GbtModel> train_gbt(const std::vector<std::vector<double>>& rows,
                                    const std::vector<int>& labels, const GbtParams& params = {},
                                    std::vector<double>* loss_curve = nullptr);

}  // namespace ckd
