#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ckd/claims.hpp"
#include "ckd/models/gbt.hpp"
#include "ckd/models/linear.hpp"
#include "ckd/models/seq.hpp"
#include "ckd/models/tree.hpp"
#include "ckd/sampling.hpp"
#include "ckd/stats.hpp"
#include "ckd/synth.hpp"

namespace ckd {

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Stratified by label; train takes floor(ratio * n) per class. Deterministic.
SplitIndices stratified_split(const std::vector<int>& labels, double ratio, std::uint64_t seed);

struct EvalReport {
    int window_months = 0;
    std::string model;
    std::string strategy;
    std::uint64_t seed = 0;
    double auroc = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    Confusion confusion;
    double threshold = 0.5;
    std::string error;  // non-empty marks a failed cell

    bool ok() const { return error.empty(); }
};

struct Hyper {
    LogisticParams lr;
    ForestParams rf;
    GbtParams gbt;
    SequenceParams seq;
};

struct SweepConfig {
    std::string claims_csv;        // either a CSV pair...
    std::string demographics_csv;
    std::string code_map;                       // optional with the CSV pair
    std::optional<SynthConfig> synth;  // ...or an in-memory synthetic cohort
    std::vector<int> windows = {6, 12, 18, 24, 30};
    std::vector<std::string> models = {"LR", "RF", "GBT", "CNN", "RNN", "LSTM", "GRU", "TCN"};
    std::vector<std::string> strategies = {"SM3"};
    double split_ratio = 0.8;
    double threshold = 0.5;
    std::uint64_t master_seed = 7;
    SamplingParams sampling;
    Hyper hyper;

    static SweepConfig from_json(const std::string& text);
    std::string to_json() const;
};

struct SweepReport {
    std::vector<EvalReport> cells;  // canonical order: window, model, strategy
    std::size_t best_cell = 0;      // highest AUROC among ok() cells

    std::string to_csv() const;
    std::string to_json() const;
};

SweepReport run_sweep(const SweepConfig& config, const std::vector<PatientTimeline>& timelines,
                      unsigned jobs = 0);

// score-vs-window comparison polylines, one series per (model, strategy)
std::string comparison_plot_svg(const SweepReport& report, const std::string& metric);

// single model evaluation on a test split
EvalReport evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels,
                           double threshold);

}  // namespace ckd
