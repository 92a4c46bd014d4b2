#pragma once

#include <array>
#include <string>
#include <vector>

#include "ckd/cohort.hpp"

namespace ckd {

inline constexpr int kFeatureCount = 27;  // CM1..CM10 then CL1..CL17

// Short codes CM1..CL17 in canonical column order.
const std::array<std::string, kFeatureCount>& feature_codes();
// Human-readable names for plot labels.
const std::array<std::string, kFeatureCount>& feature_display_names();
// True for the z-scored columns (CM1..CM10, CL1..CL3); the rest are 0/1 flags.
const std::array<bool, kFeatureCount>& feature_is_numeric();

struct FeatureVector {
    std::string patient_id;
    std::array<double, kFeatureCount> values{};
    int label = 0;
};

FeatureVector extract_static(const PatientTimeline& timeline, const ObservationWindow& window);

struct SequenceTensor {
    std::string patient_id;
    int steps = 0;     // T = window months / 3
    int channels = 0;  // fixed across patients
    std::vector<double> data;  // row-major, steps x channels
    int label = 0;

    double at(int t, int c) const { return data[static_cast<std::size_t>(t) * channels + c]; }
};

const std::vector<std::string>& sequence_channel_names();

// Carry-forward marks a comorbidity channel from its first occurrence onward
// (pre-window history included); raw mode flags only in-bucket occurrences.
enum class ComorbidityChannels { CarryForward, RawOccurrence };

SequenceTensor extract_sequence(const PatientTimeline& timeline, const ObservationWindow& window,
                                ComorbidityChannels mode = ComorbidityChannels::CarryForward);

struct Scaler {
    std::vector<double> mean;
    std::vector<double> sd;  // population SD; 0 marks a constant column
    std::vector<bool> numeric;

    std::vector<double> transform(const std::vector<double>& row) const;
};

// Fits on training rows only. `numeric` flags which columns to z-score;
// when empty, every column is treated as numeric.
Scaler fit_scaler(const std::vector<std::vector<double>>& rows,
                  const std::vector<bool>& numeric = {});
std::vector<std::vector<double>> apply_scaler(const Scaler& scaler,
                                              const std::vector<std::vector<double>>& rows);

void write_feature_matrix_csv(const std::string& path, const std::vector<FeatureVector>& rows);
std::string sequence_to_json(const SequenceTensor& tensor);

}  // namespace ckd
