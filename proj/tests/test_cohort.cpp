#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "ckd/cohort.hpp"
#include "ckd/errors.hpp"
#include "ckd/rng.hpp"

using namespace ckd;

namespace {

ClaimRecord claim(const std::string& pid, const std::string& cid, const char* date,
                  EventMask codes = 0) {
    ClaimRecord c;
    c.patient_id = pid;
    c.claim_id = cid;
    c.claim_type = ClaimType::Outpatient;
    c.service_date = Date::parse_iso(date);
    c.cost = 1.0;
    c.event_codes = codes;
    return c;
}

PatientDemographics demo(const std::string& pid) {
    return {pid, Gender::Male, Date::parse_iso("1950-01-01")};
}

}  // namespace

TEST_CASE("build_timelines: first_* dates are minima") {
    std::vector<ClaimRecord> claims{
        claim("P1", "C2", "2010-02-10", event_bit(EventCode::CKD3)),
        claim("P1", "C1", "2010-01-10", event_bit(EventCode::CKD3)),
        claim("P1", "C3", "2010-10-27", event_bit(EventCode::TRANSPLANT)),
        claim("P1", "C4", "2010-07-19", event_bit(EventCode::DIALYSIS)),
    };
    const auto timelines = build_timelines(claims, {demo("P1")});
    REQUIRE(timelines.size() == 1);
    CHECK(timelines[0].first_ckd3->to_iso() == "2010-01-10");
    CHECK(timelines[0].first_esrd->to_iso() == "2010-07-19");  // min of the two label events
    CHECK(!timelines[0].first_ckd4);
    CHECK(timelines[0].last_record.to_iso() == "2010-10-27");
    // claims sorted stably by (service_date, claim_id)
    CHECK(timelines[0].claims.front().claim_id == "C1");
}

TEST_CASE("build_timelines: unknown patient is a hard error") {
    std::vector<ClaimRecord> claims{claim("P9", "C1", "2010-01-01")};
    CHECK_THROWS_AS(build_timelines(claims, {demo("P1")}), DataError);
}

TEST_CASE("build_timelines: 4-patient fixture matches a hand-walked oracle") {
    std::vector<ClaimRecord> claims{
        claim("A", "A1", "2010-01-01", event_bit(EventCode::CKD3)),
        claim("A", "A2", "2010-06-01", event_bit(EventCode::CKD4)),
        claim("A", "A3", "2011-06-01"),
        claim("B", "B1", "2010-03-01", event_bit(EventCode::CKD4)),
        claim("B", "B2", "2010-04-01", event_bit(EventCode::CKD5)),
        claim("C", "C1", "2010-01-15", event_bit(EventCode::CKD3)),
        claim("C", "C2", "2012-09-09", event_bit(EventCode::DIALYSIS)),
        claim("D", "D1", "2010-05-05"),
    };
    const auto timelines =
        build_timelines(claims, {demo("A"), demo("B"), demo("C"), demo("D")});
    REQUIRE(timelines.size() == 4);
    // canonical patient order
    CHECK(timelines[0].patient_id == "A");
    CHECK(timelines[0].first_ckd3->to_iso() == "2010-01-01");
    CHECK(timelines[0].first_ckd4->to_iso() == "2010-06-01");
    CHECK(!timelines[0].first_esrd);
    CHECK(timelines[1].patient_id == "B");
    CHECK(!timelines[1].first_ckd3);
    CHECK(timelines[1].first_ckd5->to_iso() == "2010-04-01");
    CHECK(timelines[2].first_esrd->to_iso() == "2012-09-09");
    CHECK(!timelines[3].first_ckd3);
    CHECK(timelines[3].last_record.to_iso() == "2010-05-05");
}

namespace {

// builds a timeline directly; claims list gets one anchor claim plus a
// last-record marker, with optional progression/outcome claims
PatientTimeline synth_timeline(const std::string& pid, const char* anchor, int esrd_day,
                               int last_day) {
    std::vector<ClaimRecord> claims;
    claims.push_back(claim(pid, pid + "-a", anchor, event_bit(EventCode::CKD3)));
    const Date a = Date::parse_iso(anchor);
    if (esrd_day >= 0) {
        ClaimRecord c = claims.front();
        c.claim_id = pid + "-e";
        c.service_date = a.add_days(esrd_day);
        c.event_codes = event_bit(EventCode::DIALYSIS);
        claims.push_back(c);
    }
    ClaimRecord lastc = claims.front();
    lastc.claim_id = pid + "-z";
    lastc.service_date = a.add_days(last_day);
    lastc.event_codes = 0;
    claims.push_back(lastc);
    const auto timelines = build_timelines(claims, {demo(pid)});
    return timelines.front();
}

}  // namespace

TEST_CASE("identify_cohort: step mechanics and labels") {
    std::vector<PatientTimeline> timelines;
    // ESRD 100 days after anchor, inside any window >= 4 months: excluded step 3
    timelines.push_back(synth_timeline("P1", "2010-01-01", 100, 1500));
    // follow-up ends at day 200 < 12-month window end: excluded step 2
    timelines.push_back(synth_timeline("P2", "2010-01-01", -1, 200));
    // clean negative: survives, label 0
    timelines.push_back(synth_timeline("P3", "2010-01-01", -1, 1500));
    // ESRD well after a 24-month window: survives, label 1
    timelines.push_back(synth_timeline("P4", "2010-01-01", 900, 1500));
    // no stage-3 anchor: excluded step 1
    {
        std::vector<ClaimRecord> claims{claim("P5", "C1", "2010-01-01",
                                              event_bit(EventCode::CKD4))};
        timelines.push_back(build_timelines(claims, {demo("P5")}).front());
    }

    const auto result = identify_cohort(timelines, 24);
    CHECK(result.funnel_counts[0] == 4);
    CHECK(result.funnel_counts[1] == 3);
    CHECK(result.funnel_counts[2] == 2);
    CHECK(result.funnel_counts[3] == 2);

    std::map<std::string, bool> labels;
    for (const auto& e : result.included)
        labels[timelines[e.timeline_index].patient_id] = e.label;
    REQUIRE(labels.size() == 2);
    CHECK(labels["P3"] == false);
    CHECK(labels["P4"] == true);

    CHECK_THROWS_AS(identify_cohort(timelines, 0), DataError);
}

TEST_CASE("identify_cohort: boundary at the window end is exclusive for follow-up") {
    // last record exactly at the window end fails "extends beyond"
    auto t = synth_timeline("P1", "2010-01-15", -1, 0);
    const auto window = ObservationWindow::from_anchor(*t.first_ckd3, 12);
    t.last_record = window.end;
    const auto result = identify_cohort({t}, 12);
    CHECK(result.funnel_counts[1] == 0);

    // one day beyond passes
    t.last_record = window.end.add_days(1);
    const auto result2 = identify_cohort({t}, 12);
    CHECK(result2.funnel_counts[1] == 1);
}

TEST_CASE("identify_cohort: ESRD exactly at the window end is excluded") {
    auto t = synth_timeline("P1", "2010-03-10", 0, 2000);
    const auto window = ObservationWindow::from_anchor(*t.first_ckd3, 6);
    t.first_esrd = window.end;
    const auto result = identify_cohort({t}, 6);
    CHECK(result.funnel_counts[2] == 0);
}

TEST_CASE("cohort properties over random panels") {
    Rng rng(20240811);
    for (int rep = 0; rep < 30; ++rep) {
        std::vector<PatientTimeline> timelines;
        const int n = 40;
        for (int i = 0; i < n; ++i) {
            const bool esrd = rng.bernoulli(0.3);
            const int esrd_day = esrd ? static_cast<int>(rng.uniform_index(1200)) : -1;
            const int last_day =
                esrd ? esrd_day + static_cast<int>(rng.uniform_index(300))
                     : static_cast<int>(rng.uniform_index(1400));
            timelines.push_back(synth_timeline("P" + std::to_string(i), "2010-01-01",
                                               esrd_day, std::max(1, last_day)));
        }
        const auto short_w = identify_cohort(timelines, 12);
        const auto long_w = identify_cohort(timelines, 24);

        // monotone funnel within a window
        for (int s = 1; s < 4; ++s)
            CHECK(short_w.funnel_counts[s] <= short_w.funnel_counts[s - 1]);

        // label soundness
        for (const auto& e : long_w.included) {
            const auto& t = timelines[e.timeline_index];
            const auto window = ObservationWindow::from_anchor(*t.first_ckd3, 24);
            if (e.label) {
                REQUIRE(t.first_esrd);
                CHECK(*t.first_esrd > window.end);
            } else {
                CHECK(!t.first_esrd);
            }
        }

        // longer-window step-2 survivors are a subset of shorter-window ones
        auto survivors_step2 = [&](int months) {
            std::set<std::string> out;
            for (const auto& t : timelines) {
                if (!t.first_ckd3) continue;
                const auto window = ObservationWindow::from_anchor(*t.first_ckd3, months);
                if (t.last_record > window.end) out.insert(t.patient_id);
            }
            return out;
        };
        const auto s12 = survivors_step2(12);
        for (const auto& pid : survivors_step2(24)) CHECK(s12.count(pid) == 1);
    }
}

TEST_CASE("funnel json shape") {
    std::vector<PatientTimeline> timelines{synth_timeline("P1", "2010-01-01", -1, 1500)};
    const auto result = identify_cohort(timelines, 12);
    const auto j = funnel_json(result);
    CHECK(j.find("\"window_months\": 12") != std::string::npos);
    CHECK(j.find("records_beyond_window") != std::string::npos);
}
