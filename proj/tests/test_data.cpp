#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include "ckd/claims.hpp"
#include "ckd/csv.hpp"
#include "ckd/date.hpp"
#include "ckd/errors.hpp"

using namespace ckd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("ckd_test_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

const char* kClaimsHeader =
    "patient_id,claim_id,claim_type,service_date,cost,event_codes,ed_visit\n";
const char* kDemoHeader = "patient_id,gender,birth_date\n";

}  // namespace

TEST_CASE("date ISO round-trip and arithmetic") {
    const Date d = Date::parse_iso("2012-03-31");
    CHECK(d.to_iso() == "2012-03-31");
    CHECK(d.year() == 2012);
    CHECK(d.add_days(1).to_iso() == "2012-04-01");
    CHECK(Date(2012, 2, 29).to_iso() == "2012-02-29");  // leap day
    CHECK_THROWS_AS(Date(2013, 2, 29), std::invalid_argument);
    CHECK_THROWS_AS(Date::parse_iso("not-a-date"), std::invalid_argument);

    // day-of-month preserved, clamped to month length
    CHECK(Date(2012, 1, 31).add_months(1).to_iso() == "2012-02-29");
    CHECK(Date(2013, 1, 31).add_months(1).to_iso() == "2013-02-28");
    CHECK(Date(2012, 11, 30).add_months(24).to_iso() == "2014-11-30");
    CHECK(Date(2012, 5, 15).add_months(-3).to_iso() == "2012-02-15");
    CHECK(Date(2012, 1, 1).add_months(12) - Date(2012, 1, 1) == 366);
}

TEST_CASE("csv split and double formatting") {
    const auto fields = split_csv_line("a,b,,d");
    REQUIRE(fields.size() == 4);
    CHECK(fields[2].empty());
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(-12.5) == "-12.5");
    // shortest representation must parse back to the same double
    const double v = 1.0 / 3.0;
    CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("ingest: empty file with valid header") {
    TempDir dir;
    write(dir.file("claims.csv"), kClaimsHeader);
    write(dir.file("demo.csv"), kDemoHeader);
    const auto result = ingest_csv(dir.file("claims.csv"), dir.file("demo.csv"),
                                   identity_code_map());
    CHECK(result.data.claims.empty());
    CHECK(result.rejections.empty());
    CHECK(result.unmapped_codes == 0);
}

TEST_CASE("ingest: row missing service_date is rejected with its line number") {
    TempDir dir;
    write(dir.file("claims.csv"),
          std::string(kClaimsHeader) +
              "P1,C1,Outpatient,2011-02-03,10.5,CKD3,0\n"
              "P1,C2,Pharmacy,2011-02-04,3.25,,0\n"
              "P1,C3,Inpatient,,100,CKD3,0\n");
    write(dir.file("demo.csv"), std::string(kDemoHeader) + "P1,M,1950-01-01\n");
    const auto result = ingest_csv(dir.file("claims.csv"), dir.file("demo.csv"),
                                   identity_code_map());
    CHECK(result.data.claims.size() == 2);
    REQUIRE(result.rejections.size() == 1);
    CHECK(result.rejections[0].line_number == 4);
}

TEST_CASE("ingest: negative cost passes through, cleaning is separate") {
    TempDir dir;
    write(dir.file("claims.csv"),
          std::string(kClaimsHeader) + "P1,C1,Vision,2011-02-03,-12.50,,1\n");
    write(dir.file("demo.csv"), std::string(kDemoHeader) + "P1,F,1950-01-01\n");
    const auto result = ingest_csv(dir.file("claims.csv"), dir.file("demo.csv"),
                                   identity_code_map());
    REQUIRE(result.data.claims.size() == 1);
    CHECK(result.data.claims[0].cost == -12.50);
    CHECK(result.data.claims[0].ed_visit);
    CHECK(result.data.claims[0].claim_type == ClaimType::Vision);
}

TEST_CASE("ingest: unmapped codes are dropped and counted") {
    TempDir dir;
    write(dir.file("claims.csv"),
          std::string(kClaimsHeader) + "P1,C1,Outpatient,2011-02-03,1,N18.3;Z99.9,0\n");
    write(dir.file("demo.csv"), std::string(kDemoHeader) + "P1,M,1950-01-01\n");
    CodeMap map{{"N18.3", EventCode::CKD3}};
    const auto result = ingest_csv(dir.file("claims.csv"), dir.file("demo.csv"), map);
    REQUIRE(result.data.claims.size() == 1);
    CHECK(has_event(result.data.claims[0].event_codes, EventCode::CKD3));
    CHECK(result.unmapped_codes == 1);
}

TEST_CASE("ingest: conflicting demographics is a hard error naming the patient") {
    TempDir dir;
    write(dir.file("claims.csv"), kClaimsHeader);
    write(dir.file("demo.csv"),
          std::string(kDemoHeader) + "P7,M,1950-01-01\nP7,F,1950-01-01\n");
    try {
        ingest_csv(dir.file("claims.csv"), dir.file("demo.csv"), identity_code_map());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("P7") != std::string::npos);
    }
}

TEST_CASE("ingest: missing file and bad header") {
    TempDir dir;
    write(dir.file("demo.csv"), kDemoHeader);
    CHECK_THROWS_AS(ingest_csv(dir.file("absent.csv"), dir.file("demo.csv"),
                               identity_code_map()),
                    DataError);
    write(dir.file("claims.csv"), "patient,claim\n");
    CHECK_THROWS_AS(ingest_csv(dir.file("claims.csv"), dir.file("demo.csv"),
                               identity_code_map()),
                    DataError);
}

namespace {

ClaimRecord make_claim(const std::string& pid, const std::string& cid, ClaimType type,
                       const char* date, double cost, EventMask codes = 0) {
    ClaimRecord c;
    c.patient_id = pid;
    c.claim_id = cid;
    c.claim_type = type;
    c.service_date = Date::parse_iso(date);
    c.cost = cost;
    c.event_codes = codes;
    return c;
}

// brute-force dedup oracle: group rows by the full content key, keep the
// first of each group in input order
std::vector<std::size_t> dedup_oracle(const std::vector<ClaimRecord>& claims) {
    std::set<std::tuple<std::string, int, std::int64_t, double, EventMask>> seen;
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < claims.size(); ++i) {
        const auto& c = claims[i];
        if (seen.insert({c.patient_id, static_cast<int>(c.claim_type),
                         c.service_date.serial(), c.cost, c.event_codes})
                .second)
            kept.push_back(i);
    }
    return kept;
}

}  // namespace

TEST_CASE("deduplicate: identity when keys are distinct") {
    std::vector<ClaimRecord> claims{
        make_claim("P1", "C1", ClaimType::Outpatient, "2011-01-01", 5.0),
        make_claim("P1", "C2", ClaimType::Outpatient, "2011-01-02", 5.0),
    };
    const auto result = deduplicate(claims);
    CHECK(result.claims.size() == 2);
    CHECK(result.removed == 0);
}

TEST_CASE("deduplicate: byte-identical rows collapse") {
    std::vector<ClaimRecord> claims{
        make_claim("P1", "C1", ClaimType::Pharmacy, "2011-01-01", 5.0),
        make_claim("P1", "C1", ClaimType::Pharmacy, "2011-01-01", 5.0),
    };
    const auto result = deduplicate(claims);
    CHECK(result.claims.size() == 1);
    CHECK(result.removed == 1);
}

TEST_CASE("deduplicate: 5-row fixture matches the key-grouping oracle") {
    std::vector<ClaimRecord> claims{
        make_claim("P1", "C1", ClaimType::Outpatient, "2011-01-01", 5.0),
        make_claim("P1", "C2", ClaimType::Outpatient, "2011-01-01", 5.0),  // dup key of C1
        make_claim("P2", "C3", ClaimType::Outpatient, "2011-01-01", 5.0),
        make_claim("P1", "C4", ClaimType::Inpatient, "2011-01-01", 5.0),
        make_claim("P2", "C5", ClaimType::Outpatient, "2011-01-01", 5.0),  // dup key of C3
    };
    const auto oracle = dedup_oracle(claims);
    const auto result = deduplicate(claims);
    REQUIRE(result.claims.size() == oracle.size());
    CHECK(result.removed == claims.size() - oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i)
        CHECK(result.claims[i].claim_id == claims[oracle[i]].claim_id);
}

TEST_CASE("clean: negative cost and no-CKD patients removed; idempotent") {
    std::vector<ClaimRecord> claims{
        make_claim("P1", "C1", ClaimType::Outpatient, "2011-01-01", -50.0,
                   event_bit(EventCode::CKD3)),
        make_claim("P1", "C2", ClaimType::Outpatient, "2011-01-02", 10.0,
                   event_bit(EventCode::CKD3)),
        make_claim("P2", "C3", ClaimType::Pharmacy, "2011-01-01", 10.0,
                   event_bit(EventCode::DIABETES)),
        make_claim("P2", "C4", ClaimType::Pharmacy, "2011-01-02", 12.0),
    };
    const auto result = clean(claims);
    CHECK(result.negative_cost_removed == 1);
    CHECK(result.no_ckd_patient_claims_removed == 2);
    REQUIRE(result.claims.size() == 1);
    CHECK(result.claims[0].claim_id == "C2");

    const auto again = clean(result.claims);
    CHECK(again.claims.size() == result.claims.size());
    CHECK(again.negative_cost_removed == 0);
    CHECK(again.no_ckd_patient_claims_removed == 0);
}

TEST_CASE("clean: mixed fixture matches a two-pass filter oracle") {
    std::vector<ClaimRecord> claims;
    // P1 has CKD4; P2's only CKD code sits on a negative-cost claim; P3 none
    claims.push_back(make_claim("P1", "A1", ClaimType::Outpatient, "2011-01-01", 1.0,
                                event_bit(EventCode::CKD4)));
    claims.push_back(make_claim("P1", "A2", ClaimType::Vision, "2011-01-02", 2.0));
    claims.push_back(make_claim("P1", "A3", ClaimType::Pharmacy, "2011-01-03", -1.0));
    claims.push_back(make_claim("P2", "B1", ClaimType::Outpatient, "2011-01-01", -5.0,
                                event_bit(EventCode::CKD3)));
    claims.push_back(make_claim("P2", "B2", ClaimType::Outpatient, "2011-01-02", 5.0));
    claims.push_back(make_claim("P3", "D1", ClaimType::Professional, "2011-01-01", 9.0,
                                event_bit(EventCode::HYPERTENSION)));
    for (int i = 0; i < 4; ++i)
        claims.push_back(make_claim("P1", "E" + std::to_string(i), ClaimType::Professional,
                                    "2011-02-01", static_cast<double>(i)));

    // oracle: pass 1 drops negatives, pass 2 drops patients without CKD codes
    std::vector<ClaimRecord> pass1;
    for (const auto& c : claims)
        if (c.cost >= 0.0) pass1.push_back(c);
    std::set<std::string> ckd;
    constexpr EventMask mask =
        event_bit(EventCode::CKD3) | event_bit(EventCode::CKD4) | event_bit(EventCode::CKD5);
    for (const auto& c : pass1)
        if (c.event_codes & mask) ckd.insert(c.patient_id);
    std::vector<std::string> expected;
    for (const auto& c : pass1)
        if (ckd.count(c.patient_id)) expected.push_back(c.claim_id);

    const auto result = clean(claims);
    REQUIRE(result.claims.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK(result.claims[i].claim_id == expected[i]);
}

TEST_CASE("export/ingest round-trip is lossless for well-formed rows") {
    TempDir dir;
    std::vector<ClaimRecord> claims{
        make_claim("P1", "C1", ClaimType::Outpatient, "2011-01-01", 10.25,
                   event_bit(EventCode::CKD3) | event_bit(EventCode::DIABETES)),
        make_claim("P2", "C2", ClaimType::Vision, "2013-06-30", 0.07),
    };
    claims[1].ed_visit = true;
    std::vector<PatientDemographics> demo{
        {"P1", Gender::Male, Date::parse_iso("1950-02-03")},
        {"P2", Gender::Female, Date::parse_iso("1940-12-31")},
    };
    write_claims_csv(dir.file("claims.csv"), claims);
    write_demographics_csv(dir.file("demo.csv"), demo);
    const auto result = ingest_csv(dir.file("claims.csv"), dir.file("demo.csv"),
                                   identity_code_map());
    REQUIRE(result.rejections.empty());
    REQUIRE(result.data.claims.size() == claims.size());
    for (std::size_t i = 0; i < claims.size(); ++i) {
        CHECK(result.data.claims[i].patient_id == claims[i].patient_id);
        CHECK(result.data.claims[i].claim_id == claims[i].claim_id);
        CHECK(result.data.claims[i].claim_type == claims[i].claim_type);
        CHECK(result.data.claims[i].service_date == claims[i].service_date);
        CHECK(result.data.claims[i].cost == claims[i].cost);
        CHECK(result.data.claims[i].event_codes == claims[i].event_codes);
        CHECK(result.data.claims[i].ed_visit == claims[i].ed_visit);
    }
    REQUIRE(result.data.demographics.size() == 2);
    CHECK(result.data.demographics[0].birth_date == demo[0].birth_date);
}

TEST_CASE("rejection report format") {
    TempDir dir;
    write_rejection_report(dir.file("rej.csv"), {{3, "missing service_date"}, {9, "bad cost"}});
    std::ifstream in(dir.file("rej.csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line == "line_number,reason");
    std::getline(in, line);
    CHECK(line == "3,missing service_date");
}
