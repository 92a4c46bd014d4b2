#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ckd/claims.hpp"
#include "ckd/date.hpp"

namespace ckd {

// Per-patient ordered event view. first_* dates are minima over the claims
// that carry the code; first_esrd covers DIALYSIS and TRANSPLANT.
struct PatientTimeline {
    std::string patient_id;
    Gender gender = Gender::Female;
    Date birth_date;
    std::vector<ClaimRecord> claims;  // sorted by (service_date, claim_id)
    std::optional<Date> first_ckd3;
    std::optional<Date> first_ckd4;
    std::optional<Date> first_ckd5;
    std::optional<Date> first_esrd;
    Date last_record;
};

struct ObservationWindow {
    Date anchor;  // first CKD3 date
    int months = 0;
    Date end;  // anchor + months calendar months

    static ObservationWindow from_anchor(Date anchor, int months);
    std::int64_t length_days() const { return end - anchor; }
};

struct CohortEntry {
    std::size_t timeline_index = 0;
    bool label = false;  // ESRD strictly after the window
};

struct CohortResult {
    std::vector<CohortEntry> included;
    std::array<std::size_t, 4> funnel_counts{};  // survivors after each step
    std::vector<std::pair<std::string, std::string>> exclusions;  // patient_id -> reason
    int window_months = 0;
};

// Requires cleaned claims; every claim's patient must appear in demographics.
std::vector<PatientTimeline> build_timelines(std::vector<ClaimRecord> claims,
                                             const std::vector<PatientDemographics>& demographics);

// Fig.-1 style funnel: (1) has stage-3 anchor, (2) records extend beyond the
// window, (3) no ESRD event inside the window, (4) label the remainder.
CohortResult identify_cohort(const std::vector<PatientTimeline>& timelines, int window_months);

void write_cohort_csv(const std::string& path, const std::vector<PatientTimeline>& timelines,
                      const CohortResult& cohort);
std::string funnel_json(const CohortResult& cohort);

}  // namespace ckd
