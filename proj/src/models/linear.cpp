#include "ckd/models/linear.hpp"

#include <cmath>

#include "ckd/errors.hpp"

namespace ckd {

double LogisticModel::predict_row(const std::vector<double>& row) const {
    if (row.size() != weights.size()) throw DataError("logistic model arity mismatch");
    double z = intercept;
    for (std::size_t i = 0; i < row.size(); ++i) z += weights[i] * row[i];
    return sigmoid(z);
}

nlohmann::json LogisticModel::to_json() const {
    return {{"format_version", kModelFormatVersion},
            {"kind", model_kind_name(kind())},
            {"weights", weights},
            {"intercept", intercept}};
}

std::unique_ptr<LogisticModel> LogisticModel::from_json(const nlohmann::json& j) {
    auto m = std::make_unique<LogisticModel>();
    j.at("weights").get_to(m->weights);
    j.at("intercept").get_to(m->intercept);
    return m;
}

namespace {

// mean NLL plus l2/(2n)*||w||^2; the intercept is unpenalized
double objective(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels,
                 const std::vector<double>& w, double b, double l2) {
    const double n = static_cast<double>(rows.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double z = b;
        for (std::size_t f = 0; f < w.size(); ++f) z += w[f] * rows[i][f];
        // log(1 + exp(-m)) with m = z for y=1, -z for y=0, stably
        const double m = labels[i] ? z : -z;
        loss += m > 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
    }
    loss /= n;
    double reg = 0.0;
    for (const double v : w) reg += v * v;
    return loss + 0.5 * l2 * reg / n;
}

}  // namespace

std::unique_ptr<LogisticModel> train_logistic(const std::vector<std::vector<double>>& rows,
                                              const std::vector<int>& labels,
                                              const LogisticParams& params) {
    if (rows.empty() || rows.size() != labels.size())
        throw DataError("train_logistic: empty data or size mismatch");
    const std::size_t n = rows.size();
    const std::size_t n_features = rows[0].size();
    bool any_pos = false, any_neg = false;
    for (const int y : labels) (y ? any_pos : any_neg) = true;
    if (!any_pos || !any_neg) throw DataError("train_logistic needs both classes");
    for (const auto& row : rows) {
        if (row.size() != n_features) throw DataError("train_logistic: ragged rows");
        for (const double v : row)
            if (!std::isfinite(v)) throw DataError("train_logistic: non-finite feature value");
    }

    auto m = std::make_unique<LogisticModel>();
    m->weights.assign(n_features, 0.0);
    m->intercept = 0.0;

    std::vector<double> grad(n_features, 0.0);
    double step = params.learning_rate;
    double current = objective(rows, labels, m->weights, m->intercept, params.l2);

    for (int iter = 0; iter < params.max_iters; ++iter) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_b = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double z = m->intercept;
            for (std::size_t f = 0; f < n_features; ++f) z += m->weights[f] * rows[i][f];
            const double err = sigmoid(z) - static_cast<double>(labels[i]);
            for (std::size_t f = 0; f < n_features; ++f) grad[f] += err * rows[i][f];
            grad_b += err;
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        grad_b *= inv_n;
        double sup = std::fabs(grad_b);
        for (std::size_t f = 0; f < n_features; ++f) {
            grad[f] *= inv_n;
            // stop on the full objective gradient, ridge term included
            sup = std::max(sup, std::fabs(grad[f] + params.l2 * inv_n * m->weights[f]));
        }
        if (sup < params.tol) break;

        // proximal step: the data gradient backtracks, the ridge shrinkage is
        // exact, so extreme l2 cannot stall the unpenalized intercept
        std::vector<double> w_next(n_features);
        double b_next;
        for (;;) {
            const double shrink = 1.0 / (1.0 + step * params.l2 * inv_n);
            for (std::size_t f = 0; f < n_features; ++f)
                w_next[f] = (m->weights[f] - step * grad[f]) * shrink;
            b_next = m->intercept - step * grad_b;
            const double next = objective(rows, labels, w_next, b_next, params.l2);
            if (next <= current - 1e-12 || step < 1e-14) {
                m->weights = w_next;
                m->intercept = b_next;
                current = next;
                step = std::min(step * 1.25, 1e3);
                break;
            }
            step *= 0.5;
        }
    }
    return m;
}

}  // namespace ckd
