#include "ckd/features.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ckd/csv.hpp"
#include "ckd/errors.hpp"

namespace ckd {

namespace {

constexpr double kDaysPerYear = 365.2425;

// Kahan-compensated accumulator; makes reductions insensitive to chunking.
struct Kahan {
    double sum = 0.0;
    double carry = 0.0;
    void add(double v) {
        const double y = v - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

}  // namespace

const std::array<std::string, kFeatureCount>& feature_codes() {
    static const std::array<std::string, kFeatureCount> codes = {
        "CM1",  "CM2",  "CM3",  "CM4",  "CM5",  "CM6",  "CM7",  "CM8",  "CM9",
        "CM10", "CL1",  "CL2",  "CL3",  "CL4",  "CL5",  "CL6",  "CL7",  "CL8",
        "CL9",  "CL10", "CL11", "CL12", "CL13", "CL14", "CL15", "CL16", "CL17"};
    return codes;
}

const std::array<std::string, kFeatureCount>& feature_display_names() {
    static const std::array<std::string, kFeatureCount> names = {
        "Count of pharmacy claims (CM1)",
        "Count of inpatient claims (CM2)",
        "Count of outpatient claims (CM3)",
        "Count of professional claims (CM4)",
        "Net cost of pharmacy claims (CM5)",
        "Net cost of inpatient claims (CM6)",
        "Net cost of outpatient claims (CM7)",
        "Net cost of professional claims (CM8)",
        "Range of claims costs (CM9)",
        "Standard deviation of claims costs (CM10)",
        "Age at CKD stage 3 first diagnosis (CL1)",
        "CKD stage 3 duration time (days) (CL2)",
        "Number of emergency department visits (CL3)",
        "Gender (CL4)",
        "Occurrence of CKD stage 4 (CL5)",
        "Occurrence of CKD stage 5 (CL6)",
        "Diabetes (CL7)",
        "Anemia (CL8)",
        "Metabolic acidosis (CL9)",
        "Proteinuria (CL10)",
        "Secondary hyperparathyroidism (CL11)",
        "Phosphatemia (CL12)",
        "Atherosclerosis (CL13)",
        "Heart failure (CL14)",
        "Stroke (CL15)",
        "Conduction & dysrhythmias (CL16)",
        "Hypertension (CL17)"};
    return names;
}

const std::array<bool, kFeatureCount>& feature_is_numeric() {
    static const std::array<bool, kFeatureCount> numeric = [] {
        std::array<bool, kFeatureCount> m{};
        for (int i = 0; i < 13; ++i) m[i] = true;  // CM1..CM10, CL1..CL3
        return m;
    }();
    return numeric;
}

FeatureVector extract_static(const PatientTimeline& timeline, const ObservationWindow& window) {
    if (window.end < window.anchor) throw DataError("window end precedes anchor");
    FeatureVector fv;
    fv.patient_id = timeline.patient_id;
    auto& v = fv.values;

    // counts/costs per type; Table-1 features exist for four of the five types
    const int count_slot[kClaimTypeCount] = {1, 2, 3, 0, -1};  // CM2, CM3, CM4, CM1, none
    Kahan cost_sums[kClaimTypeCount];
    double min_cost = 0.0, max_cost = 0.0;
    Kahan all_cost, all_cost_sq;
    std::size_t in_window = 0;

    for (const auto& c : timeline.claims) {
        if (c.service_date < window.anchor || c.service_date > window.end) continue;
        const int type = static_cast<int>(c.claim_type);
        if (count_slot[type] >= 0) v[count_slot[type]] += 1.0;
        cost_sums[type].add(c.cost);
        if (in_window == 0 || c.cost < min_cost) min_cost = c.cost;
        if (in_window == 0 || c.cost > max_cost) max_cost = c.cost;
        all_cost.add(c.cost);
        all_cost_sq.add(c.cost * c.cost);
        ++in_window;
        if (c.ed_visit) v[12] += 1.0;  // CL3
    }
    v[4] = cost_sums[static_cast<int>(ClaimType::Pharmacy)].sum;      // CM5
    v[5] = cost_sums[static_cast<int>(ClaimType::Inpatient)].sum;     // CM6
    v[6] = cost_sums[static_cast<int>(ClaimType::Outpatient)].sum;    // CM7
    v[7] = cost_sums[static_cast<int>(ClaimType::Professional)].sum;  // CM8
    if (in_window >= 2) {
        v[8] = max_cost - min_cost;  // CM9
        const double mean = all_cost.sum / static_cast<double>(in_window);
        const double var =
            std::max(0.0, all_cost_sq.sum / static_cast<double>(in_window) - mean * mean);
        v[9] = std::sqrt(var);  // CM10, population SD
    }

    v[10] = std::floor(static_cast<double>(window.anchor - timeline.birth_date) / kDaysPerYear);

    // CL2: stage-3 days until progression or window end, floored at zero
    Date stage3_end = window.end;
    if (timeline.first_ckd4 && *timeline.first_ckd4 < stage3_end) stage3_end = *timeline.first_ckd4;
    if (timeline.first_ckd5 && *timeline.first_ckd5 < stage3_end) stage3_end = *timeline.first_ckd5;
    v[11] = static_cast<double>(std::max<std::int64_t>(0, stage3_end - window.anchor));

    v[13] = timeline.gender == Gender::Male ? 1.0 : 0.0;
    v[14] = timeline.first_ckd4 && *timeline.first_ckd4 <= window.end ? 1.0 : 0.0;
    v[15] = timeline.first_ckd5 && *timeline.first_ckd5 <= window.end ? 1.0 : 0.0;

    EventMask ever = 0;
    for (const auto& c : timeline.claims) {
        if (c.service_date > window.end) break;  // claims are date-sorted
        ever |= c.event_codes;
    }
    const auto& comorbidities = comorbidity_codes();
    for (std::size_t i = 0; i < comorbidities.size(); ++i)
        v[16 + i] = has_event(ever, comorbidities[i]) ? 1.0 : 0.0;

    return fv;
}

const std::vector<std::string>& sequence_channel_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (int t = 0; t < kClaimTypeCount; ++t)
            n.push_back(std::string("count_") + claim_type_name(static_cast<ClaimType>(t)));
        for (int t = 0; t < kClaimTypeCount; ++t)
            n.push_back(std::string("cost_") + claim_type_name(static_cast<ClaimType>(t)));
        n.push_back("ed_visit_count");
        n.push_back("age_years");
        n.push_back("ed_visit_flag");
        n.push_back("stage4_flag");
        n.push_back("stage5_flag");
        for (const auto code : comorbidity_codes())
            n.push_back(std::string("comorbidity_") + event_code_name(code));
        return n;
    }();
    return names;
}

SequenceTensor extract_sequence(const PatientTimeline& timeline, const ObservationWindow& window,
                                ComorbidityChannels mode) {
    if (window.months % 3 != 0)
        throw DataError("window months must be divisible by 3 for sequence extraction");
    const int steps = window.months / 3;
    if (steps < 2) throw DataError("sequence extraction needs at least two buckets");

    SequenceTensor tensor;
    tensor.patient_id = timeline.patient_id;
    tensor.steps = steps;
    tensor.channels = static_cast<int>(sequence_channel_names().size());
    tensor.data.assign(static_cast<std::size_t>(steps) * tensor.channels, 0.0);
    auto cell = [&](int t, int c) -> double& {
        return tensor.data[static_cast<std::size_t>(t) * tensor.channels + c];
    };

    std::vector<Date> bucket_starts(steps);
    std::vector<Date> bucket_ends(steps);  // exclusive except the final bucket
    for (int b = 0; b < steps; ++b) {
        bucket_starts[b] = window.anchor.add_months(3 * b);
        bucket_ends[b] = window.anchor.add_months(3 * (b + 1));
    }

    // the final bucket is closed at the window end so bucket sums add up to
    // the static [anchor, end] aggregates
    auto bucket_of = [&](Date d) -> int {
        if (d < window.anchor || d > window.end) return -1;
        for (int b = 0; b < steps; ++b)
            if (d < bucket_ends[b] || b == steps - 1) return b;
        return -1;
    };

    const int kEdCount = 2 * kClaimTypeCount;
    const int kAge = kEdCount + 1;
    const int kEdFlag = kAge + 1;
    const int kStage4 = kEdFlag + 1;
    const int kStage5 = kStage4 + 1;
    const int kComorbBase = kStage5 + 1;
    const auto& comorbidities = comorbidity_codes();

    for (const auto& c : timeline.claims) {
        const int b = bucket_of(c.service_date);
        if (b >= 0) {
            const int type = static_cast<int>(c.claim_type);
            cell(b, type) += 1.0;
            cell(b, kClaimTypeCount + type) += c.cost;
            if (c.ed_visit) {
                cell(b, kEdCount) += 1.0;
                cell(b, kEdFlag) = 1.0;
            }
            if (has_event(c.event_codes, EventCode::CKD4)) cell(b, kStage4) = 1.0;
            if (has_event(c.event_codes, EventCode::CKD5)) cell(b, kStage5) = 1.0;
        }
        if (mode == ComorbidityChannels::RawOccurrence && b >= 0) {
            for (std::size_t i = 0; i < comorbidities.size(); ++i)
                if (has_event(c.event_codes, comorbidities[i])) cell(b, kComorbBase + i) = 1.0;
        }
    }

    for (int b = 0; b < steps; ++b) {
        const Date mid = bucket_starts[b].add_days((bucket_ends[b] - bucket_starts[b]) / 2);
        cell(b, kAge) = static_cast<double>(mid - timeline.birth_date) / kDaysPerYear;
    }

    if (mode == ComorbidityChannels::CarryForward) {
        for (std::size_t i = 0; i < comorbidities.size(); ++i) {
            // first occurrence anywhere, including pre-window history
            std::optional<Date> first;
            for (const auto& c : timeline.claims) {
                if (has_event(c.event_codes, comorbidities[i])) {
                    first = c.service_date;
                    break;
                }
            }
            if (!first) continue;
            for (int b = 0; b < steps; ++b) {
                const Date end = b == steps - 1 ? window.end : bucket_ends[b].add_days(-1);
                if (*first <= end) cell(b, kComorbBase + i) = 1.0;
            }
        }
    }

    return tensor;
}

std::vector<double> Scaler::transform(const std::vector<double>& row) const {
    if (row.size() != mean.size()) throw DataError("scaler arity mismatch");
    std::vector<double> out(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (!numeric[i])
            out[i] = row[i];
        else if (sd[i] > 0.0)
            out[i] = (row[i] - mean[i]) / sd[i];
        else
            out[i] = 0.0;
    }
    return out;
}

Scaler fit_scaler(const std::vector<std::vector<double>>& rows, const std::vector<bool>& numeric) {
    if (rows.size() < 2) throw DataError("scaler needs at least two training rows");
    const std::size_t width = rows[0].size();
    Scaler s;
    s.mean.assign(width, 0.0);
    s.sd.assign(width, 0.0);
    s.numeric = numeric.empty() ? std::vector<bool>(width, true) : numeric;
    if (s.numeric.size() != width) throw DataError("scaler numeric mask arity mismatch");

    for (std::size_t j = 0; j < width; ++j) {
        if (!s.numeric[j]) continue;
        Kahan sum;
        for (const auto& row : rows) sum.add(row[j]);
        const double mean = sum.sum / static_cast<double>(rows.size());
        Kahan sq;
        for (const auto& row : rows) sq.add((row[j] - mean) * (row[j] - mean));
        s.mean[j] = mean;
        s.sd[j] = std::sqrt(std::max(0.0, sq.sum / static_cast<double>(rows.size())));
    }
    return s;
}

std::vector<std::vector<double>> apply_scaler(const Scaler& scaler,
                                              const std::vector<std::vector<double>>& rows) {
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(scaler.transform(row));
    return out;
}

void write_feature_matrix_csv(const std::string& path, const std::vector<FeatureVector>& rows) {
    std::ostringstream out;
    out << "patient_id";
    for (const auto& code : feature_codes()) out << ',' << code;
    out << ",label\n";
    for (const auto& row : rows) {
        out << row.patient_id;
        for (const auto v : row.values) out << ',' << format_double(v);
        out << ',' << row.label << '\n';
    }
    write_text_file(path, out.str());
}

std::string sequence_to_json(const SequenceTensor& tensor) {
    nlohmann::json j;
    j["patient_id"] = tensor.patient_id;
    j["shape"] = {tensor.steps, tensor.channels};
    j["channels"] = sequence_channel_names();
    j["data"] = tensor.data;
    j["label"] = tensor.label;
    return j.dump();
}

}  // namespace ckd
