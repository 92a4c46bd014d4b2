#include "ckd/claims.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ckd/csv.hpp"
#include "ckd/errors.hpp"

namespace ckd {

namespace {

const char* kClaimTypeNames[kClaimTypeCount] = {"Inpatient", "Outpatient", "Professional",
                                                "Pharmacy", "Vision"};

const char* kEventCodeNames[kEventCodeCount] = {
    "CKD3",          "CKD4",        "CKD5",
    "DIALYSIS",      "TRANSPLANT",  "DIABETES",
    "ANEMIA",        "METABOLIC_ACIDOSIS", "PROTEINURIA",
    "SEC_HYPERPARATHYROIDISM", "PHOSPHATEMIA", "ATHEROSCLEROSIS",
    "HEART_FAILURE", "STROKE",      "CONDUCTION_DYSRHYTHMIA",
    "HYPERTENSION",  "ED_VISIT",
};

}  // namespace

const char* claim_type_name(ClaimType t) { return kClaimTypeNames[static_cast<int>(t)]; }

std::optional<ClaimType> parse_claim_type(const std::string& name) {
    for (int i = 0; i < kClaimTypeCount; ++i)
        if (name == kClaimTypeNames[i]) return static_cast<ClaimType>(i);
    return std::nullopt;
}

const char* event_code_name(EventCode c) { return kEventCodeNames[static_cast<int>(c)]; }

std::optional<EventCode> parse_event_code(const std::string& name) {
    for (int i = 0; i < kEventCodeCount; ++i)
        if (name == kEventCodeNames[i]) return static_cast<EventCode>(i);
    return std::nullopt;
}

const std::array<EventCode, 11>& comorbidity_codes() {
    static const std::array<EventCode, 11> codes = {
        EventCode::DIABETES,           EventCode::ANEMIA,
        EventCode::METABOLIC_ACIDOSIS, EventCode::PROTEINURIA,
        EventCode::SEC_HYPERPARATHYROIDISM, EventCode::PHOSPHATEMIA,
        EventCode::ATHEROSCLEROSIS,    EventCode::HEART_FAILURE,
        EventCode::STROKE,             EventCode::CONDUCTION_DYSRHYTHMIA,
        EventCode::HYPERTENSION,
    };
    return codes;
}

CodeMap load_code_map(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("code map is not valid JSON: " + std::string(e.what()));
    }
    if (!j.is_object()) throw DataError("code map must be a JSON object");
    CodeMap map;
    for (auto& [external, canonical] : j.items()) {
        const auto code = parse_event_code(canonical.get<std::string>());
        if (!code)
            throw DataError("code map entry '" + external + "' names unknown event code '" +
                            canonical.get<std::string>() + "'");
        map[external] = *code;
    }
    return map;
}

CodeMap identity_code_map() {
    CodeMap map;
    for (int i = 0; i < kEventCodeCount; ++i)
        map[kEventCodeNames[i]] = static_cast<EventCode>(i);
    return map;
}

namespace {

const std::vector<std::string> kClaimsHeader = {"patient_id", "claim_id",    "claim_type",
                                                "service_date", "cost",      "event_codes",
                                                "ed_visit"};
const std::vector<std::string> kDemoHeader = {"patient_id", "gender", "birth_date"};

void check_header(const std::string& line, const std::vector<std::string>& expected,
                  const std::string& what) {
    const auto fields = split_csv_line(line);
    if (fields != expected)
        throw DataError(what + " header does not match the documented schema, got: " + line);
}

std::vector<std::string> split_codes(const std::string& field) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= field.size(); ++i) {
        if (i == field.size() || field[i] == ';') {
            if (i > start) out.push_back(field.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

}  // namespace

IngestResult ingest_csv(const std::string& claims_path, const std::string& demographics_path,
                        const CodeMap& code_map) {
    IngestResult result;

    std::ifstream claims_in(claims_path);
    if (!claims_in) throw DataError("missing claims file: " + claims_path);
    std::string line;
    if (!std::getline(claims_in, line)) throw DataError("claims file is empty: " + claims_path);
    check_header(line, kClaimsHeader, "claims");

    std::size_t line_number = 1;
    while (std::getline(claims_in, line)) {
        ++line_number;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != kClaimsHeader.size()) {
            result.rejections.push_back({line_number, "wrong field count"});
            continue;
        }
        ClaimRecord rec;
        rec.patient_id = fields[0];
        rec.claim_id = fields[1];
        if (rec.patient_id.empty() || rec.claim_id.empty()) {
            result.rejections.push_back({line_number, "empty identifier"});
            continue;
        }
        const auto type = parse_claim_type(fields[2]);
        if (!type) {
            result.rejections.push_back({line_number, "unknown claim_type '" + fields[2] + "'"});
            continue;
        }
        rec.claim_type = *type;
        if (fields[3].empty()) {
            result.rejections.push_back({line_number, "missing service_date"});
            continue;
        }
        try {
            rec.service_date = Date::parse_iso(fields[3]);
        } catch (const std::exception&) {
            result.rejections.push_back({line_number, "bad service_date '" + fields[3] + "'"});
            continue;
        }
        try {
            std::size_t used = 0;
            rec.cost = std::stod(fields[4], &used);
            if (used != fields[4].size()) throw std::invalid_argument("trailing chars");
        } catch (const std::exception&) {
            result.rejections.push_back({line_number, "bad cost '" + fields[4] + "'"});
            continue;
        }
        for (const auto& ext : split_codes(fields[5])) {
            const auto it = code_map.find(ext);
            if (it == code_map.end())
                ++result.unmapped_codes;
            else
                rec.event_codes |= event_bit(it->second);
        }
        if (fields[6] == "1")
            rec.ed_visit = true;
        else if (fields[6] == "0")
            rec.ed_visit = false;
        else {
            result.rejections.push_back({line_number, "bad ed_visit '" + fields[6] + "'"});
            continue;
        }
        result.data.claims.push_back(std::move(rec));
    }

    std::ifstream demo_in(demographics_path);
    if (!demo_in) throw DataError("missing demographics file: " + demographics_path);
    if (!std::getline(demo_in, line))
        throw DataError("demographics file is empty: " + demographics_path);
    check_header(line, kDemoHeader, "demographics");

    std::unordered_map<std::string, std::size_t> seen;
    while (std::getline(demo_in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != kDemoHeader.size())
            throw DataError("malformed demographics row: " + line);
        PatientDemographics demo;
        demo.patient_id = fields[0];
        if (fields[1] == "M")
            demo.gender = Gender::Male;
        else if (fields[1] == "F")
            demo.gender = Gender::Female;
        else
            throw DataError("bad gender '" + fields[1] + "' for patient " + demo.patient_id);
        demo.birth_date = Date::parse_iso(fields[2]);

        const auto it = seen.find(demo.patient_id);
        if (it != seen.end()) {
            const auto& prev = result.data.demographics[it->second];
            if (prev.gender != demo.gender || prev.birth_date != demo.birth_date)
                throw DataError("conflicting demographics for patient " + demo.patient_id);
            continue;  // exact duplicate row is harmless
        }
        seen[demo.patient_id] = result.data.demographics.size();
        result.data.demographics.push_back(std::move(demo));
    }

    return result;
}

namespace {

std::string codes_to_field(EventMask mask) {
    std::string out;
    for (int i = 0; i < kEventCodeCount; ++i) {
        if (has_event(mask, static_cast<EventCode>(i))) {
            if (!out.empty()) out += ';';
            out += kEventCodeNames[i];
        }
    }
    return out;
}

}  // namespace

void write_claims_csv(const std::string& path, const std::vector<ClaimRecord>& claims) {
    std::ostringstream out;
    out << join_csv(kClaimsHeader) << '\n';
    for (const auto& c : claims) {
        out << c.patient_id << ',' << c.claim_id << ',' << claim_type_name(c.claim_type) << ','
            << c.service_date.to_iso() << ',' << format_double(c.cost) << ','
            << codes_to_field(c.event_codes) << ',' << (c.ed_visit ? '1' : '0') << '\n';
    }
    write_text_file(path, out.str());
}

void write_demographics_csv(const std::string& path,
                            const std::vector<PatientDemographics>& demographics) {
    std::ostringstream out;
    out << join_csv(kDemoHeader) << '\n';
    for (const auto& d : demographics)
        out << d.patient_id << ',' << (d.gender == Gender::Male ? 'M' : 'F') << ','
            << d.birth_date.to_iso() << '\n';
    write_text_file(path, out.str());
}

void write_rejection_report(const std::string& path, const std::vector<RejectedRow>& rejections) {
    std::ostringstream out;
    out << "line_number,reason\n";
    for (const auto& r : rejections) out << r.line_number << ',' << r.reason << '\n';
    write_text_file(path, out.str());
}

DedupResult deduplicate(std::vector<ClaimRecord> claims) {
    struct KeyHash {
        std::size_t operator()(const std::string& k) const { return std::hash<std::string>{}(k); }
    };
    std::unordered_set<std::string, KeyHash> seen;
    seen.reserve(claims.size() * 2);
    DedupResult result;
    result.claims.reserve(claims.size());
    for (auto& c : claims) {
        std::string key = c.patient_id;
        key += '\x1f';
        key += static_cast<char>('0' + static_cast<int>(c.claim_type));
        key += '\x1f';
        key += std::to_string(c.service_date.serial());
        key += '\x1f';
        key += format_double(c.cost);
        key += '\x1f';
        key += std::to_string(c.event_codes);
        if (seen.insert(std::move(key)).second)
            result.claims.push_back(std::move(c));
        else
            ++result.removed;
    }
    return result;
}

CleanResult clean(std::vector<ClaimRecord> claims) {
    CleanResult result;
    constexpr EventMask ckd_mask =
        event_bit(EventCode::CKD3) | event_bit(EventCode::CKD4) | event_bit(EventCode::CKD5);

    std::unordered_set<std::string> ckd_patients;
    for (const auto& c : claims)
        if (c.cost >= 0.0 && (c.event_codes & ckd_mask) != 0) ckd_patients.insert(c.patient_id);

    result.claims.reserve(claims.size());
    for (auto& c : claims) {
        if (c.cost < 0.0) {
            ++result.negative_cost_removed;
            continue;
        }
        if (ckd_patients.find(c.patient_id) == ckd_patients.end()) {
            ++result.no_ckd_patient_claims_removed;
            continue;
        }
        result.claims.push_back(std::move(c));
    }
    return result;
}

}  // namespace ckd
