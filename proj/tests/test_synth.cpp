#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "ckd/cohort.hpp"
#include "ckd/csv.hpp"
#include "ckd/errors.hpp"
#include "ckd/features.hpp"
#include "ckd/synth.hpp"

using namespace ckd;

namespace {

// scaled-down cohort keeps the 20-seed convergence check fast
SynthConfig small_config(std::uint64_t seed) {
    SynthConfig c = SynthConfig::defaults();
    c.n_patients = 1600;
    c.rng_seed = seed;
    return c;
}

struct StratumStats {
    std::map<int, double> mean;  // feature index -> sample mean
    std::size_t n = 0;
};

std::pair<StratumStats, StratumStats> window_feature_means(const ClaimsDataset& data,
                                                           int window_months) {
    auto timelines = build_timelines(data.claims, data.demographics);
    StratumStats esrd, non_esrd;
    for (const auto& t : timelines) {
        if (!t.first_ckd3) continue;
        const auto fv =
            extract_static(t, ObservationWindow::from_anchor(*t.first_ckd3, window_months));
        StratumStats& s = t.first_esrd ? esrd : non_esrd;
        s.n += 1;
        for (int f = 0; f < kFeatureCount; ++f) s.mean[f] += fv.values[f];
    }
    for (auto* s : {&esrd, &non_esrd})
        for (auto& [f, v] : s->mean) v /= static_cast<double>(s->n);
    return {esrd, non_esrd};
}

}  // namespace

TEST_CASE("generate_synthetic: default config hits the exact population counts") {
    const SynthConfig config = SynthConfig::defaults();
    CHECK(config.n_patients == 7129);
    const auto n_stage3 = std::llround(config.stage3_fraction * config.n_patients);
    CHECK(n_stage3 == 5518);
    CHECK(std::llround(config.esrd_fraction_of_stage3 * n_stage3) == 1100);
}

TEST_CASE("generate_synthetic: determinism, byte-identical output for one seed") {
    namespace fs = std::filesystem;
    SynthConfig config = small_config(123);
    config.n_patients = 400;
    const auto a = generate_synthetic(config, 1);
    const auto b = generate_synthetic(config, 2);  // job count must not matter
    REQUIRE(a.claims.size() == b.claims.size());
    const auto dir = fs::temp_directory_path() / "ckd_synth_det";
    fs::create_directories(dir);
    write_claims_csv((dir / "a.csv").string(), a.claims);
    write_claims_csv((dir / "b.csv").string(), b.claims);
    CHECK(read_text_file((dir / "a.csv").string()) == read_text_file((dir / "b.csv").string()));
    const auto c = generate_synthetic(small_config(124), 1);  // another seed differs
    CHECK(read_text_file((dir / "a.csv").string()) !=
          [&] {
              write_claims_csv((dir / "c.csv").string(), c.claims);
              return read_text_file((dir / "c.csv").string());
          }());
    fs::remove_all(dir);
}

TEST_CASE("generate_synthetic: infeasible config rejected") {
    SynthConfig config = SynthConfig::defaults();
    config.esrd_fraction_of_stage3 = 1.4;
    CHECK_THROWS_AS(generate_synthetic(config, 1), DataError);
    config = SynthConfig::defaults();
    config.n_patients = 0;
    CHECK_THROWS_AS(generate_synthetic(config, 1), DataError);
}

TEST_CASE("generate_synthetic: no ESRD event precedes the first stage-3 event") {
    const auto data = generate_synthetic(small_config(7), 0);
    const auto timelines = build_timelines(data.claims, data.demographics);
    for (const auto& t : timelines) {
        if (!t.first_esrd) continue;
        REQUIRE(t.first_ckd3.has_value());
        CHECK(*t.first_esrd > *t.first_ckd3);
    }
}

TEST_CASE("generate_synthetic: stage-3 duration stratum means stay within 2 SE") {
    SynthConfig config = SynthConfig::defaults();
    config.n_patients = 5518;
    config.stage3_fraction = 1.0;
    config.esrd_fraction_of_stage3 = 1100.0 / 5518.0;
    config.rng_seed = 11;
    const auto data = generate_synthetic(config, 0);
    const auto [esrd, non_esrd] = window_feature_means(data, config.calibration_window_months);
    REQUIRE(esrd.n == 1100);
    REQUIRE(non_esrd.n == 4418);
    constexpr int kCL2 = 11;
    const double se_esrd = config.esrd.stage3_days_sd / std::sqrt(1100.0);
    const double se_non = config.non_esrd.stage3_days_sd / std::sqrt(4418.0);
    CHECK(std::fabs(esrd.mean.at(kCL2) - config.esrd.stage3_days_mean) <= 2.0 * se_esrd);
    CHECK(std::fabs(non_esrd.mean.at(kCL2) - config.non_esrd.stage3_days_mean) <= 2.0 * se_non);
}

TEST_CASE("generate_synthetic: planted means converge over 20 seeds") {
    // per planted numeric feature, |sample mean - target| <= 3 SD/sqrt(n)
    // must hold in at least 19 of 20 seeded runs
    struct Target {
        int feature;
        double esrd_mean, esrd_sd, non_mean, non_sd;
    };
    const SynthConfig base = small_config(0);
    const std::vector<Target> targets = {
        {0, base.esrd.count_mean[0], base.esrd.count_sd[0], base.non_esrd.count_mean[0],
         base.non_esrd.count_sd[0]},
        {1, base.esrd.count_mean[1], base.esrd.count_sd[1], base.non_esrd.count_mean[1],
         base.non_esrd.count_sd[1]},
        {2, base.esrd.count_mean[2], base.esrd.count_sd[2], base.non_esrd.count_mean[2],
         base.non_esrd.count_sd[2]},
        {3, base.esrd.count_mean[3], base.esrd.count_sd[3], base.non_esrd.count_mean[3],
         base.non_esrd.count_sd[3]},
        {4, base.esrd.net_cost_mean[0], 17596, base.non_esrd.net_cost_mean[0], 20662},
        {7, base.esrd.net_cost_mean[3], 18657, base.non_esrd.net_cost_mean[3], 12748},
        {10, base.esrd.age_mean, base.esrd.age_sd, base.non_esrd.age_mean,
         base.non_esrd.age_sd},
        {11, base.esrd.stage3_days_mean, base.esrd.stage3_days_sd,
         base.non_esrd.stage3_days_mean, base.non_esrd.stage3_days_sd},
        {12, base.esrd.ed_visits_mean, 2.63, base.non_esrd.ed_visits_mean, 2.99},
    };

    std::map<int, int> esrd_hits, non_hits;
    std::size_t n_esrd = 0, n_non = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto data = generate_synthetic(small_config(seed), 0);
        const auto [esrd, non_esrd] = window_feature_means(data, 24);
        n_esrd = esrd.n;
        n_non = non_esrd.n;
        for (const auto& t : targets) {
            if (std::fabs(esrd.mean.at(t.feature) - t.esrd_mean) <=
                3.0 * t.esrd_sd / std::sqrt(static_cast<double>(esrd.n)))
                esrd_hits[t.feature] += 1;
            if (std::fabs(non_esrd.mean.at(t.feature) - t.non_mean) <=
                3.0 * t.non_sd / std::sqrt(static_cast<double>(non_esrd.n)))
                non_hits[t.feature] += 1;
        }
    }
    CHECK(n_esrd > 200);
    CHECK(n_non > 900);
    for (const auto& t : targets) {
        INFO("feature index " << t.feature);
        CHECK(esrd_hits[t.feature] >= 19);
        CHECK(non_hits[t.feature] >= 19);
    }
}

TEST_CASE("generate_synthetic: categorical proportions land near their targets") {
    const auto data = generate_synthetic(small_config(5), 0);
    const auto timelines = build_timelines(data.claims, data.demographics);
    std::size_t esrd_n = 0, esrd_stage4 = 0, esrd_male = 0;
    std::size_t non_n = 0, non_stage4 = 0;
    for (const auto& t : timelines) {
        if (!t.first_ckd3) continue;
        const auto window = ObservationWindow::from_anchor(*t.first_ckd3, 24);
        const bool stage4 = t.first_ckd4 && *t.first_ckd4 <= window.end;
        if (t.first_esrd) {
            ++esrd_n;
            esrd_stage4 += stage4;
            esrd_male += t.gender == Gender::Male;
        } else {
            ++non_n;
            non_stage4 += stage4;
        }
    }
    const double p4_esrd = static_cast<double>(esrd_stage4) / esrd_n;
    const double p4_non = static_cast<double>(non_stage4) / non_n;
    CHECK(p4_esrd == doctest::Approx(0.43).epsilon(0.25));
    CHECK(p4_non == doctest::Approx(0.12).epsilon(0.3));
    CHECK(static_cast<double>(esrd_male) / esrd_n == doctest::Approx(0.60).epsilon(0.15));
}

TEST_CASE("synth config json round-trip") {
    SynthConfig config = SynthConfig::defaults();
    config.rng_seed = 99;
    config.esrd.claim_time_ramp = 2.5;
    const auto parsed = SynthConfig::from_json(config.to_json());
    CHECK(parsed.rng_seed == 99);
    CHECK(parsed.esrd.claim_time_ramp == 2.5);
    CHECK(parsed.non_esrd.count_mean == config.non_esrd.count_mean);
    CHECK_THROWS_AS(SynthConfig::from_json("{bad"), DataError);
}
