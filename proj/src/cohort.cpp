#include "ckd/cohort.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "ckd/csv.hpp"
#include "ckd/errors.hpp"

namespace ckd {

ObservationWindow ObservationWindow::from_anchor(Date anchor, int months) {
    if (months <= 0) throw DataError("observation window must be positive");
    ObservationWindow w;
    w.anchor = anchor;
    w.months = months;
    w.end = anchor.add_months(months);
    return w;
}

std::vector<PatientTimeline> build_timelines(
    std::vector<ClaimRecord> claims, const std::vector<PatientDemographics>& demographics) {
    std::unordered_map<std::string, std::size_t> demo_index;
    demo_index.reserve(demographics.size() * 2);
    for (std::size_t i = 0; i < demographics.size(); ++i)
        demo_index[demographics[i].patient_id] = i;

    std::unordered_map<std::string, std::size_t> slot;
    std::vector<PatientTimeline> timelines;
    for (auto& c : claims) {
        auto it = slot.find(c.patient_id);
        if (it == slot.end()) {
            const auto demo_it = demo_index.find(c.patient_id);
            if (demo_it == demo_index.end())
                throw DataError("claim references patient absent from demographics: " +
                                c.patient_id);
            const auto& demo = demographics[demo_it->second];
            PatientTimeline t;
            t.patient_id = c.patient_id;
            t.gender = demo.gender;
            t.birth_date = demo.birth_date;
            it = slot.emplace(c.patient_id, timelines.size()).first;
            timelines.push_back(std::move(t));
        }
        timelines[it->second].claims.push_back(std::move(c));
    }

    for (auto& t : timelines) {
        std::sort(t.claims.begin(), t.claims.end(), [](const ClaimRecord& a, const ClaimRecord& b) {
            if (a.service_date != b.service_date) return a.service_date < b.service_date;
            return a.claim_id < b.claim_id;
        });
        auto note = [](std::optional<Date>& slot, Date d) {
            if (!slot || d < *slot) slot = d;
        };
        for (const auto& c : t.claims) {
            if (has_event(c.event_codes, EventCode::CKD3)) note(t.first_ckd3, c.service_date);
            if (has_event(c.event_codes, EventCode::CKD4)) note(t.first_ckd4, c.service_date);
            if (has_event(c.event_codes, EventCode::CKD5)) note(t.first_ckd5, c.service_date);
            if (has_event(c.event_codes, EventCode::DIALYSIS) ||
                has_event(c.event_codes, EventCode::TRANSPLANT))
                note(t.first_esrd, c.service_date);
        }
        t.last_record = t.claims.back().service_date;
    }

    // canonical order so parallel callers see one result
    std::sort(timelines.begin(), timelines.end(),
              [](const PatientTimeline& a, const PatientTimeline& b) {
                  return a.patient_id < b.patient_id;
              });
    return timelines;
}

CohortResult identify_cohort(const std::vector<PatientTimeline>& timelines, int window_months) {
    if (window_months <= 0) throw DataError("observation window must be positive");
    CohortResult result;
    result.window_months = window_months;

    std::vector<std::size_t> survivors;
    survivors.reserve(timelines.size());
    for (std::size_t i = 0; i < timelines.size(); ++i) {
        if (timelines[i].first_ckd3)
            survivors.push_back(i);
        else
            result.exclusions.emplace_back(timelines[i].patient_id, "no CKD stage-3 record");
    }
    result.funnel_counts[0] = survivors.size();

    std::vector<std::size_t> step2;
    for (const auto i : survivors) {
        const auto& t = timelines[i];
        const auto window = ObservationWindow::from_anchor(*t.first_ckd3, window_months);
        if (t.last_record > window.end)
            step2.push_back(i);
        else
            result.exclusions.emplace_back(t.patient_id, "records end within the window");
    }
    result.funnel_counts[1] = step2.size();

    std::vector<std::size_t> step3;
    for (const auto i : step2) {
        const auto& t = timelines[i];
        const auto window = ObservationWindow::from_anchor(*t.first_ckd3, window_months);
        if (t.first_esrd && *t.first_esrd <= window.end)
            result.exclusions.emplace_back(t.patient_id, "ESRD within the window");
        else
            step3.push_back(i);
    }
    result.funnel_counts[2] = step3.size();

    for (const auto i : step3)
        result.included.push_back({i, timelines[i].first_esrd.has_value()});
    result.funnel_counts[3] = result.included.size();
    return result;
}

void write_cohort_csv(const std::string& path, const std::vector<PatientTimeline>& timelines,
                      const CohortResult& cohort) {
    std::unordered_map<std::string, const char*> reasons;
    for (const auto& [pid, reason] : cohort.exclusions) reasons[pid] = reason.c_str();
    std::unordered_map<std::string, const CohortEntry*> included;
    for (const auto& e : cohort.included) included[timelines[e.timeline_index].patient_id] = &e;

    std::ostringstream out;
    out << "patient_id,label,anchor,window_end,exclusion_reason\n";
    for (const auto& t : timelines) {
        out << t.patient_id << ',';
        const auto inc = included.find(t.patient_id);
        if (inc != included.end())
            out << (inc->second->label ? '1' : '0');
        out << ',';
        if (t.first_ckd3) {
            const auto window = ObservationWindow::from_anchor(*t.first_ckd3, cohort.window_months);
            out << window.anchor.to_iso() << ',' << window.end.to_iso() << ',';
        } else {
            out << ",,";
        }
        const auto rej = reasons.find(t.patient_id);
        if (rej != reasons.end()) out << rej->second;
        out << '\n';
    }
    write_text_file(path, out.str());
}

std::string funnel_json(const CohortResult& cohort) {
    nlohmann::json j;
    j["window_months"] = cohort.window_months;
    j["steps"] = {
        {{"step", "stage3_anchor_present"}, {"survivors", cohort.funnel_counts[0]}},
        {{"step", "records_beyond_window"}, {"survivors", cohort.funnel_counts[1]}},
        {{"step", "no_esrd_within_window"}, {"survivors", cohort.funnel_counts[2]}},
        {{"step", "labeled"}, {"survivors", cohort.funnel_counts[3]}},
    };
    std::size_t positives = 0;
    for (const auto& e : cohort.included) positives += e.label ? 1 : 0;
    j["labels"] = {{"positive", positives}, {"negative", cohort.included.size() - positives}};
    return j.dump(2);
}

}  // namespace ckd
