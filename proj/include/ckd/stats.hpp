#pragma once

#include <string>
#include <vector>

#include "ckd/features.hpp"

namespace ckd {

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double x, double a, double b);
// Regularized lower incomplete gamma P(a, x).
double regularized_lower_gamma(double a, double x);

double student_t_cdf(double t, double df);
double chi_squared_sf(double x, double df);

// Mann-Whitney concordance with ties counted one half, by rank summation.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

Confusion confusion_at(const std::vector<double>& scores, const std::vector<int>& labels,
                       double threshold);
double precision_of(const Confusion& c);
double recall_of(const Confusion& c);
double f1_score(const std::vector<double>& scores, const std::vector<int>& labels,
                double threshold);

enum class TestKind { WelchT, ChiSquared };

struct StatTestResult {
    TestKind kind = TestKind::WelchT;
    double statistic = 0.0;
    double df = 0.0;
    double p_value = 1.0;
};

// Unequal-variance t with Welch-Satterthwaite degrees of freedom, two-sided p.
StatTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Pearson chi-squared on a 2x2 table without continuity correction, df = 1.
StatTestResult chi_squared_independence(double n11, double n12, double n21, double n22);

// p-value rendering used in the descriptive tables: 3 decimals, "0.000" below 0.0005.
std::string format_p_value(double p);

struct NumericFeatureRow {
    std::string feature;
    std::size_t n_overall = 0, n_pos = 0, n_neg = 0;
    double mean_overall = 0, sd_overall = 0;
    double mean_pos = 0, sd_pos = 0;
    double mean_neg = 0, sd_neg = 0;
    bool tested = false;
    std::string skip_reason;
    StatTestResult test;
    bool significant = false;  // p < 0.05
};

struct CategoricalFeatureRow {
    std::string feature;
    double prop_pos = 0, prop_neg = 0;  // share with flag set, per stratum
    bool tested = false;
    std::string skip_reason;
    StatTestResult test;
    bool significant = false;
};

struct DescriptiveTables {
    std::vector<NumericFeatureRow> numeric;
    std::vector<CategoricalFeatureRow> categorical;
};

DescriptiveTables descriptive_tables(const std::vector<FeatureVector>& rows);

std::string descriptive_tables_csv(const DescriptiveTables& tables);

}  // namespace ckd
