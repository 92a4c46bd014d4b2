#include "ckd/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "ckd/errors.hpp"

namespace ckd {

namespace {

// Modified Lentz continued-fraction evaluation of the incomplete beta.
double beta_cf(double x, double a, double b) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-15;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

// Series for P(a, x), x < a + 1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction for Q(a, x), x >= a + 1.
double gamma_q_cf(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
    if (!(x >= 0.0 && x <= 1.0 && a > 0.0 && b > 0.0)) return NAN;
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double front =
        std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                 b * std::log(1.0 - x));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(x, a, b) / a;
    return 1.0 - front * beta_cf(1.0 - x, b, a) / b;
}

double regularized_lower_gamma(double a, double x) {
    if (!(a > 0.0) || x < 0.0) return NAN;
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) return NAN;
    const double x = df / (t * t + df);
    const double half_tail = 0.5 * regularized_incomplete_beta(x, df / 2.0, 0.5);
    return t >= 0.0 ? 1.0 - half_tail : half_tail;
}

double chi_squared_sf(double x, double df) {
    if (x <= 0.0) return 1.0;
    return 1.0 - regularized_lower_gamma(df / 2.0, x / 2.0);
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw DataError("auroc: size mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (const int y : labels) n_pos += y ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("auroc needs both classes");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // twice the positive rank sum stays integral under average tie ranks
    unsigned long long rank2_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const unsigned long long rank2 = static_cast<unsigned long long>(i + 1 + j);  // lo+hi
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank2_pos += rank2;
        i = j;
    }
    const unsigned long long u2 =
        rank2_pos - static_cast<unsigned long long>(n_pos) * (n_pos + 1);
    return static_cast<double>(u2) /
           (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

Confusion confusion_at(const std::vector<double>& scores, const std::vector<int>& labels,
                       double threshold) {
    if (scores.size() != labels.size()) throw DataError("confusion: size mismatch");
    Confusion c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (pred && labels[i])
            ++c.tp;
        else if (pred && !labels[i])
            ++c.fp;
        else if (!pred && labels[i])
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

double precision_of(const Confusion& c) {
    return c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

double recall_of(const Confusion& c) {
    return c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double f1_score(const std::vector<double>& scores, const std::vector<int>& labels,
                double threshold) {
    const Confusion c = confusion_at(scores, labels, threshold);
    const double p = precision_of(c);
    const double r = recall_of(c);
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

namespace {

void mean_and_var(const std::vector<double>& xs, double& mean, double& var) {
    double sum = 0.0;
    for (const double x : xs) sum += x;
    mean = sum / static_cast<double>(xs.size());
    double sq = 0.0;
    for (const double x : xs) sq += (x - mean) * (x - mean);
    var = sq / static_cast<double>(xs.size() - 1);  // sample variance
}

}  // namespace

StatTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw DataError("welch_t_test needs n >= 2 per sample");
    double ma, va, mb, vb;
    mean_and_var(a, ma, va);
    mean_and_var(b, mb, vb);
    if (va <= 0.0 && vb <= 0.0) throw DataError("welch_t_test: both samples have zero variance");

    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double se2 = va / na + vb / nb;
    StatTestResult r;
    r.kind = TestKind::WelchT;
    r.statistic = (ma - mb) / std::sqrt(se2);
    r.df = se2 * se2 /
           (va * va / (na * na * (na - 1.0)) + vb * vb / (nb * nb * (nb - 1.0)));
    r.p_value = 2.0 * (1.0 - student_t_cdf(std::fabs(r.statistic), r.df));
    r.p_value = std::clamp(r.p_value, 0.0, 1.0);
    return r;
}

StatTestResult chi_squared_independence(double n11, double n12, double n21, double n22) {
    const double row1 = n11 + n12;
    const double row2 = n21 + n22;
    const double col1 = n11 + n21;
    const double col2 = n12 + n22;
    const double total = row1 + row2;
    StatTestResult r;
    r.kind = TestKind::ChiSquared;
    r.df = 1.0;
    const double cells[4][2] = {{n11, row1 * col1}, {n12, row1 * col2},
                                {n21, row2 * col1}, {n22, row2 * col2}};
    double chi2 = 0.0;
    for (const auto& [obs, prod] : cells) {
        const double expected = prod / total;
        if (!(expected > 0.0)) throw DataError("chi_squared: zero expected count");
        chi2 += (obs - expected) * (obs - expected) / expected;
    }
    r.statistic = chi2;
    r.p_value = chi_squared_sf(chi2, 1.0);
    return r;
}

std::string format_p_value(double p) {
    if (p < 0.0005) return "0.000";
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.3f", p);
    return buf;
}

DescriptiveTables descriptive_tables(const std::vector<FeatureVector>& rows) {
    if (rows.empty()) throw DataError("descriptive_tables: empty feature matrix");
    DescriptiveTables tables;
    const auto& codes = feature_codes();
    const auto& numeric = feature_is_numeric();

    for (int j = 0; j < kFeatureCount; ++j) {
        std::vector<double> pos, neg;
        for (const auto& row : rows) (row.label ? pos : neg).push_back(row.values[j]);

        if (numeric[j]) {
            NumericFeatureRow out;
            out.feature = codes[j];
            out.n_overall = rows.size();
            out.n_pos = pos.size();
            out.n_neg = neg.size();
            auto meansd = [](const std::vector<double>& xs, double& mean, double& sd,
                             bool& defined) {
                if (xs.empty()) {
                    defined = false;
                    mean = sd = 0.0;
                    return;
                }
                double m = 0.0;
                for (const double x : xs) m += x;
                m /= static_cast<double>(xs.size());
                mean = m;
                if (xs.size() < 2) {
                    defined = false;  // SD undefined for a single row
                    sd = 0.0;
                    return;
                }
                double sq = 0.0;
                for (const double x : xs) sq += (x - m) * (x - m);
                sd = std::sqrt(sq / static_cast<double>(xs.size() - 1));
                defined = true;
            };
            bool def_all = false, def_pos = false, def_neg = false;
            {
                std::vector<double> all;
                all.reserve(rows.size());
                for (const auto& row : rows) all.push_back(row.values[j]);
                meansd(all, out.mean_overall, out.sd_overall, def_all);
            }
            meansd(pos, out.mean_pos, out.sd_pos, def_pos);
            meansd(neg, out.mean_neg, out.sd_neg, def_neg);
            if (!def_pos || !def_neg) {
                out.skip_reason = "a stratum has fewer than two rows";
            } else if (out.sd_pos <= 0.0 && out.sd_neg <= 0.0) {
                out.skip_reason = "zero variance in both strata";
            } else {
                out.test = welch_t_test(pos, neg);
                out.tested = true;
                out.significant = out.test.p_value < 0.05;
            }
            tables.numeric.push_back(std::move(out));
        } else {
            CategoricalFeatureRow out;
            out.feature = codes[j];
            const double pos_set = std::accumulate(pos.begin(), pos.end(), 0.0);
            const double neg_set = std::accumulate(neg.begin(), neg.end(), 0.0);
            out.prop_pos = pos.empty() ? 0.0 : pos_set / static_cast<double>(pos.size());
            out.prop_neg = neg.empty() ? 0.0 : neg_set / static_cast<double>(neg.size());
            const double n11 = pos_set, n12 = static_cast<double>(pos.size()) - pos_set;
            const double n21 = neg_set, n22 = static_cast<double>(neg.size()) - neg_set;
            if (pos.empty() || neg.empty()) {
                out.skip_reason = "a stratum is empty";
            } else if (n11 + n21 == 0.0 || n12 + n22 == 0.0) {
                out.skip_reason = "zero expected count";
            } else {
                out.test = chi_squared_independence(n11, n12, n21, n22);
                out.tested = true;
                out.significant = out.test.p_value < 0.05;
            }
            tables.categorical.push_back(std::move(out));
        }
    }
    return tables;
}

std::string descriptive_tables_csv(const DescriptiveTables& tables) {
    std::ostringstream out;
    out << "table,feature,mean_overall,sd_overall,mean_esrd,sd_esrd,mean_non_esrd,sd_non_esrd,"
           "prop_esrd,prop_non_esrd,statistic,df,p_value,significant,skip_reason\n";
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6g", v);
        return std::string(buf);
    };
    auto emit = [&](std::vector<std::string> fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << fields[i];
        out << '\n';
    };
    auto test_fields = [&](bool tested, const StatTestResult& t, bool significant,
                           const std::string& reason) {
        if (tested)
            return std::vector<std::string>{num(t.statistic), num(t.df),
                                            format_p_value(t.p_value), significant ? "1" : "0",
                                            ""};
        return std::vector<std::string>{"", "", "", "", reason};
    };
    for (const auto& r : tables.numeric) {
        std::vector<std::string> fields = {"numeric",          r.feature,
                                           num(r.mean_overall), num(r.sd_overall),
                                           num(r.mean_pos),     num(r.sd_pos),
                                           num(r.mean_neg),     num(r.sd_neg),
                                           "",                 ""};
        for (auto& f : test_fields(r.tested, r.test, r.significant, r.skip_reason))
            fields.push_back(std::move(f));
        emit(std::move(fields));
    }
    for (const auto& r : tables.categorical) {
        std::vector<std::string> fields = {"categorical", r.feature, "", "", "", "", "", "",
                                           num(r.prop_pos), num(r.prop_neg)};
        for (auto& f : test_fields(r.tested, r.test, r.significant, r.skip_reason))
            fields.push_back(std::move(f));
        emit(std::move(fields));
    }
    return out.str();
}

}  // namespace ckd
