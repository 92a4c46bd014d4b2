#pragma once

#include "ckd/models/model.hpp"

namespace ckd {

struct LogisticParams {
    double l2 = 1.0;  // ridge strength on the coefficients, not the intercept
    double learning_rate = 1.0;
    int max_iters = 2000;
    double tol = 1e-8;  // gradient sup-norm
};

class LogisticModel : public Model {
public:
    ModelKind kind() const override { return ModelKind::LR; }
    double predict_row(const std::vector<double>& row) const override;
    nlohmann::json to_json() const override;
    static std::unique_ptr<LogisticModel> from_json(const nlohmann::json& j);

    std::vector<double> weights;
    double intercept = 0.0;
};

// L2-regularized logistic regression by gradient descent with backtracking.
// Expects standardized rows; deterministic.
std::unique_ptr<LogisticModel> train_logistic(const std::vector<std::vector<double>>& rows,
                                              const std::vector<int>& labels,
                                              const LogisticParams& params = {});

}  // namespace ckd
