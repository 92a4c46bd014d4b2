#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "ckd/claims.hpp"

namespace ckd {

// Per-stratum generator targets. Count/cost targets are in-window values at
// the calibration window; claim-type order is pharmacy, inpatient,
// outpatient, professional (the CM1..CM8 order).
struct StratumTargets {
    std::array<double, 4> count_mean{};
    std::array<double, 4> count_sd{};
    std::array<double, 4> net_cost_mean{};
    double vision_count_mean = 2.0;
    double vision_cost_per_claim = 180.0;
    double age_mean = 72.0;
    double age_sd = 11.0;
    double stage3_days_mean = 660.0;  // reporting target for the planted mixture
    double stage3_days_sd = 179.0;
    double ed_visits_mean = 2.0;
    double male_fraction = 0.5;
    double stage4_in_window = 0.1;
    double stage5_in_window = 0.01;
    double stage4_days_mean = 290.0;  // onset given in-window progression
    double stage4_days_sd = 135.0;
    double stage4_after_window = 0.2;  // progression beyond the window
    std::array<double, 11> comorbidity{};  // CL7..CL17 carrier fractions
    // Linear within-window intensity slope of claim arrivals; the planted
    // temporal signature that only the sequence representation can see.
    double claim_time_ramp = 0.0;
};

struct SynthConfig {
    std::int64_t n_patients = 7129;
    double stage3_fraction = 5518.0 / 7129.0;
    double esrd_fraction_of_stage3 = 1100.0 / 5518.0;
    int horizon_years = 7;
    std::uint64_t rng_seed = 7;
    int calibration_window_months = 24;
    int pre_history_days = 365;
    double post_window_rate = 0.25;  // claim intensity after the window, as a share
    // outcome timing (days after the calibration window end)
    double esrd_gap_min_days = 30.0;
    double esrd_gap_gamma_shape = 2.0;
    double esrd_gap_gamma_scale = 150.0;
    double non_esrd_followup_mean = 1300.0;
    double non_esrd_followup_sd = 300.0;
    StratumTargets esrd;
    StratumTargets non_esrd;

    static SynthConfig defaults();
    std::string to_json() const;
    static SynthConfig from_json(const std::string& text);
};

struct SynthSummary {
    std::int64_t patients = 0;
    std::int64_t stage3_patients = 0;
    std::int64_t esrd_patients = 0;
    std::int64_t claims = 0;
};

ClaimsDataset generate_synthetic(const SynthConfig& config, unsigned jobs = 0);
SynthSummary summarize(const ClaimsDataset& data);

}  // namespace ckd
