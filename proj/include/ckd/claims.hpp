#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ckd/date.hpp"

namespace ckd {

enum class ClaimType : std::uint8_t { Inpatient, Outpatient, Professional, Pharmacy, Vision };
inline constexpr int kClaimTypeCount = 5;

const char* claim_type_name(ClaimType t);
std::optional<ClaimType> parse_claim_type(const std::string& name);

// Canonical event vocabulary. DIALYSIS and TRANSPLANT jointly define the
// ESRD outcome. Sets of codes are stored as bitmasks over this enum.
enum class EventCode : std::uint8_t {
    CKD3,
    CKD4,
    CKD5,
    DIALYSIS,
    TRANSPLANT,
    DIABETES,
    ANEMIA,
    METABOLIC_ACIDOSIS,
    PROTEINURIA,
    SEC_HYPERPARATHYROIDISM,
    PHOSPHATEMIA,
    ATHEROSCLEROSIS,
    HEART_FAILURE,
    STROKE,
    CONDUCTION_DYSRHYTHMIA,
    HYPERTENSION,
    ED_VISIT,
};
inline constexpr int kEventCodeCount = 17;

const char* event_code_name(EventCode c);
std::optional<EventCode> parse_event_code(const std::string& name);

using EventMask = std::uint32_t;
constexpr EventMask event_bit(EventCode c) { return EventMask{1} << static_cast<int>(c); }
constexpr bool has_event(EventMask m, EventCode c) { return (m & event_bit(c)) != 0; }

// The eleven comorbidity codes behind CL7..CL17, in feature order.
const std::array<EventCode, 11>& comorbidity_codes();

struct ClaimRecord {
    std::string patient_id;
    std::string claim_id;
    ClaimType claim_type = ClaimType::Outpatient;
    Date service_date;
    double cost = 0.0;   // may be negative before cleaning
    EventMask event_codes = 0;
    bool ed_visit = false;
};

enum class Gender : std::uint8_t { Female = 0, Male = 1 };

struct PatientDemographics {
    std::string patient_id;
    Gender gender = Gender::Female;
    Date birth_date;
};

struct ClaimsDataset {
    std::vector<ClaimRecord> claims;
    std::vector<PatientDemographics> demographics;
};

struct RejectedRow {
    std::size_t line_number = 0;  // 1-based, header is line 1
    std::string reason;
};

struct IngestResult {
    ClaimsDataset data;
    std::vector<RejectedRow> rejections;
    std::size_t unmapped_codes = 0;  // external codes dropped silently
};

using CodeMap = std::map<std::string, EventCode>;

CodeMap load_code_map(const std::string& path);
CodeMap identity_code_map();  // canonical name -> code, for round-trips

// Claims CSV schema: patient_id,claim_id,claim_type,service_date,cost,event_codes,ed_visit
// Demographics CSV schema: patient_id,gender,birth_date
IngestResult ingest_csv(const std::string& claims_path, const std::string& demographics_path,
                        const CodeMap& code_map);

void write_claims_csv(const std::string& path, const std::vector<ClaimRecord>& claims);
void write_demographics_csv(const std::string& path,
                            const std::vector<PatientDemographics>& demographics);
void write_rejection_report(const std::string& path, const std::vector<RejectedRow>& rejections);

struct DedupResult {
    std::vector<ClaimRecord> claims;
    std::size_t removed = 0;
};

// Key: (patient_id, claim_type, service_date, cost, event_codes); first
// occurrence in input order wins.
DedupResult deduplicate(std::vector<ClaimRecord> claims);

struct CleanResult {
    std::vector<ClaimRecord> claims;
    std::size_t negative_cost_removed = 0;
    std::size_t no_ckd_patient_claims_removed = 0;
};

// Drops claims with negative costs, then every claim of patients who carry
// no CKD3/CKD4/CKD5 code anywhere in their history.
CleanResult clean(std::vector<ClaimRecord> claims);

}  // namespace ckd
