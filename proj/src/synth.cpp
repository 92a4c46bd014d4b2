#include "ckd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ckd/cohort.hpp"
#include "ckd/errors.hpp"
#include "ckd/parallel.hpp"
#include "ckd/rng.hpp"

namespace ckd {

SynthConfig SynthConfig::defaults() {
    SynthConfig c;
    // ESRD stratum, calibrated to the descriptive targets
    c.esrd.count_mean = {120.0, 3.75, 27.78, 105.37};
    c.esrd.count_sd = {94.0, 3.43, 28.75, 77.46};
    c.esrd.net_cost_mean = {12053.0, 33909.0, 9354.0, 15512.0};
    c.esrd.age_mean = 70.13;
    c.esrd.age_sd = 10.37;
    c.esrd.stage3_days_mean = 543.0;
    c.esrd.stage3_days_sd = 250.0;
    c.esrd.ed_visits_mean = 2.18;
    c.esrd.male_fraction = 0.60;
    c.esrd.stage4_in_window = 0.43;
    c.esrd.stage5_in_window = 0.05;
    c.esrd.stage4_days_mean = 295.0;
    c.esrd.stage4_days_sd = 140.0;
    c.esrd.stage4_after_window = 0.35;
    c.esrd.comorbidity = {0.73, 0.64, 0.25, 0.13, 0.33, 0.05, 0.06, 0.05, 0.01, 0.05, 0.99};
    c.esrd.claim_time_ramp = 3.0;

    c.non_esrd.count_mean = {109.0, 3.74, 23.09, 87.43};
    c.non_esrd.count_sd = {87.0, 3.87, 20.83, 68.01};
    c.non_esrd.net_cost_mean = {10440.0, 29440.0, 8554.0, 11640.0};
    c.non_esrd.age_mean = 73.04;
    c.non_esrd.age_sd = 11.0;
    c.non_esrd.stage3_days_mean = 677.0;
    c.non_esrd.stage3_days_sd = 160.0;
    c.non_esrd.ed_visits_mean = 2.01;
    c.non_esrd.male_fraction = 0.52;
    c.non_esrd.stage4_in_window = 0.12;
    c.non_esrd.stage5_in_window = 0.01;
    c.non_esrd.stage4_days_mean = 288.0;
    c.non_esrd.stage4_days_sd = 130.0;
    c.non_esrd.stage4_after_window = 0.10;
    c.non_esrd.comorbidity = {0.59, 0.62, 0.18, 0.17, 0.18, 0.03, 0.14, 0.11, 0.03, 0.16, 0.97};
    c.non_esrd.claim_time_ramp = 0.0;
    return c;
}

namespace {

nlohmann::json stratum_to_json(const StratumTargets& s) {
    return nlohmann::json{
        {"count_mean", s.count_mean},
        {"count_sd", s.count_sd},
        {"net_cost_mean", s.net_cost_mean},
        {"vision_count_mean", s.vision_count_mean},
        {"vision_cost_per_claim", s.vision_cost_per_claim},
        {"age_mean", s.age_mean},
        {"age_sd", s.age_sd},
        {"stage3_days_mean", s.stage3_days_mean},
        {"stage3_days_sd", s.stage3_days_sd},
        {"ed_visits_mean", s.ed_visits_mean},
        {"male_fraction", s.male_fraction},
        {"stage4_in_window", s.stage4_in_window},
        {"stage5_in_window", s.stage5_in_window},
        {"stage4_days_mean", s.stage4_days_mean},
        {"stage4_days_sd", s.stage4_days_sd},
        {"stage4_after_window", s.stage4_after_window},
        {"comorbidity", s.comorbidity},
        {"claim_time_ramp", s.claim_time_ramp},
    };
}

StratumTargets stratum_from_json(const nlohmann::json& j, StratumTargets base) {
    auto get = [&](const char* key, auto& slot) {
        if (j.contains(key)) j.at(key).get_to(slot);
    };
    get("count_mean", base.count_mean);
    get("count_sd", base.count_sd);
    get("net_cost_mean", base.net_cost_mean);
    get("vision_count_mean", base.vision_count_mean);
    get("vision_cost_per_claim", base.vision_cost_per_claim);
    get("age_mean", base.age_mean);
    get("age_sd", base.age_sd);
    get("stage3_days_mean", base.stage3_days_mean);
    get("stage3_days_sd", base.stage3_days_sd);
    get("ed_visits_mean", base.ed_visits_mean);
    get("male_fraction", base.male_fraction);
    get("stage4_in_window", base.stage4_in_window);
    get("stage5_in_window", base.stage5_in_window);
    get("stage4_days_mean", base.stage4_days_mean);
    get("stage4_days_sd", base.stage4_days_sd);
    get("stage4_after_window", base.stage4_after_window);
    get("comorbidity", base.comorbidity);
    get("claim_time_ramp", base.claim_time_ramp);
    return base;
}

}  // namespace

std::string SynthConfig::to_json() const {
    nlohmann::json j{
        {"n_patients", n_patients},
        {"stage3_fraction", stage3_fraction},
        {"esrd_fraction_of_stage3", esrd_fraction_of_stage3},
        {"horizon_years", horizon_years},
        {"rng_seed", rng_seed},
        {"calibration_window_months", calibration_window_months},
        {"pre_history_days", pre_history_days},
        {"post_window_rate", post_window_rate},
        {"esrd_gap_min_days", esrd_gap_min_days},
        {"esrd_gap_gamma_shape", esrd_gap_gamma_shape},
        {"esrd_gap_gamma_scale", esrd_gap_gamma_scale},
        {"non_esrd_followup_mean", non_esrd_followup_mean},
        {"non_esrd_followup_sd", non_esrd_followup_sd},
        {"esrd", stratum_to_json(esrd)},
        {"non_esrd", stratum_to_json(non_esrd)},
    };
    return j.dump(2);
}

SynthConfig SynthConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("synth config is not valid JSON: " + std::string(e.what()));
    }
    SynthConfig c = defaults();
    auto get = [&](const char* key, auto& slot) {
        if (j.contains(key)) j.at(key).get_to(slot);
    };
    get("n_patients", c.n_patients);
    get("stage3_fraction", c.stage3_fraction);
    get("esrd_fraction_of_stage3", c.esrd_fraction_of_stage3);
    get("horizon_years", c.horizon_years);
    get("rng_seed", c.rng_seed);
    get("calibration_window_months", c.calibration_window_months);
    get("pre_history_days", c.pre_history_days);
    get("post_window_rate", c.post_window_rate);
    get("esrd_gap_min_days", c.esrd_gap_min_days);
    get("esrd_gap_gamma_shape", c.esrd_gap_gamma_shape);
    get("esrd_gap_gamma_scale", c.esrd_gap_gamma_scale);
    get("non_esrd_followup_mean", c.non_esrd_followup_mean);
    get("non_esrd_followup_sd", c.non_esrd_followup_sd);
    if (j.contains("esrd")) c.esrd = stratum_from_json(j.at("esrd"), c.esrd);
    if (j.contains("non_esrd")) c.non_esrd = stratum_from_json(j.at("non_esrd"), c.non_esrd);
    return c;
}

namespace {

enum class PatientKind { Esrd, Stage3NonEsrd, NoStage3 };

constexpr double kDaysPerYear = 365.2425;
const Date kStudyStart(2009, 1, 1);

struct TimeSampler {
    // density proportional to 1 + ramp*t/W on [0, min(L, W)], then a constant
    // post_rate*(1 + ramp) plateau on (W, L]
    double window_days;
    double followup_days;
    double ramp;
    double post_rate;
    double ramp_mass;     // integral over [0, min(L, W)]
    double plateau_mass;  // integral over (W, L]

    TimeSampler(double window, double followup, double ramp_in, double post)
        : window_days(window), followup_days(followup), ramp(ramp_in), post_rate(post) {
        const double u = std::min(followup_days, window_days);
        ramp_mass = u + ramp * u * u / (2.0 * window_days);
        plateau_mass = followup_days > window_days
                           ? post_rate * (1.0 + ramp) * (followup_days - window_days)
                           : 0.0;
    }

    // expected total count given an in-window target mean
    double total_mean(double window_mean) const {
        const double window_mass = window_days * (1.0 + ramp / 2.0);
        return window_mean * (ramp_mass + plateau_mass) / window_mass;
    }

    double sample(Rng& rng) const {
        const double z = rng.uniform() * (ramp_mass + plateau_mass);
        if (z <= ramp_mass || plateau_mass <= 0.0) {
            const double zz = std::min(z, ramp_mass);
            if (ramp <= 0.0) return zz;
            return window_days * (std::sqrt(1.0 + 2.0 * ramp * zz / window_days) - 1.0) / ramp;
        }
        return window_days + (z - ramp_mass) / (post_rate * (1.0 + ramp));
    }
};

struct PatientPlan {
    PatientKind kind;
    const StratumTargets* targets;
};

double round_cents(double v) { return std::round(v * 100.0) / 100.0; }

void generate_patient(const SynthConfig& cfg, const PatientPlan& plan, std::size_t index,
                      PatientDemographics& demo, std::vector<ClaimRecord>& claims) {
    Rng rng = Rng::stream(cfg.rng_seed, index);
    const StratumTargets& t = *plan.targets;

    char idbuf[24];
    std::snprintf(idbuf, sizeof(idbuf), "P%06zu", index);
    const std::string patient_id = idbuf;

    const Date anchor = kStudyStart.add_days(static_cast<std::int64_t>(rng.uniform_index(365)));
    const Date window_end = anchor.add_months(cfg.calibration_window_months);
    const double window_days = static_cast<double>(window_end - anchor);

    const double age_years = std::clamp(rng.normal(t.age_mean + 0.5, t.age_sd), 30.0, 99.0);
    demo.patient_id = patient_id;
    demo.gender = rng.bernoulli(t.male_fraction) ? Gender::Male : Gender::Female;
    demo.birth_date = anchor.add_days(-static_cast<std::int64_t>(std::llround(age_years * kDaysPerYear)));

    // progression plan, in days relative to the anchor
    double stage4_day = -1.0;
    double stage5_day = -1.0;
    if (plan.kind != PatientKind::NoStage3) {
        if (rng.bernoulli(t.stage4_in_window)) {
            stage4_day = std::clamp(rng.normal(t.stage4_days_mean, t.stage4_days_sd), 5.0,
                                    window_days - 1.0);
            if (rng.bernoulli(t.stage5_in_window / t.stage4_in_window))
                stage5_day = std::min(window_days - 1.0,
                                      stage4_day + 15.0 + rng.uniform(0.0, 150.0));
        } else if (rng.bernoulli(t.stage4_after_window)) {
            stage4_day = window_days + rng.uniform(30.0, 500.0);
        }
    }

    double esrd_day = -1.0;
    double followup_days;
    const double horizon_days = cfg.horizon_years * 365.0;
    const double max_followup = horizon_days - 400.0;  // anchor sits in the first year
    if (plan.kind == PatientKind::Esrd) {
        esrd_day = window_days + cfg.esrd_gap_min_days +
                   rng.gamma(cfg.esrd_gap_gamma_shape, cfg.esrd_gap_gamma_scale);
        esrd_day = std::min(esrd_day, window_days + 1000.0);
        followup_days = std::min(esrd_day + rng.uniform(60.0, 250.0), max_followup);
    } else {
        followup_days =
            std::clamp(rng.normal(cfg.non_esrd_followup_mean, cfg.non_esrd_followup_sd), 240.0,
                       max_followup);
    }
    if (stage4_day > followup_days) stage4_day = -1.0;
    if (stage5_day > followup_days) stage5_day = -1.0;

    const double stage3_end = [&] {
        double end = followup_days;
        if (stage4_day >= 0.0) end = std::min(end, stage4_day);
        if (stage5_day >= 0.0) end = std::min(end, stage5_day);
        return end;
    }();

    claims.clear();
    std::size_t claim_ordinal = 0;
    auto add_claim = [&](double day, ClaimType type, double cost, EventMask codes, bool ed) {
        ClaimRecord rec;
        rec.patient_id = patient_id;
        char cid[32];
        std::snprintf(cid, sizeof(cid), "C%06zu-%05zu", index, claim_ordinal++);
        rec.claim_id = cid;
        rec.claim_type = type;
        rec.service_date = anchor.add_days(static_cast<std::int64_t>(std::llround(day)));
        rec.cost = cost;
        rec.event_codes = codes;
        rec.ed_visit = ed;
        claims.push_back(std::move(rec));
    };

    // cost scales per type: lognormal(mu, sigma) with the configured per-claim mean
    const double sigma = 1.0;
    std::array<double, 4> cost_mu;
    for (int k = 0; k < 4; ++k) {
        const double per_claim = t.net_cost_mean[k] / t.count_mean[k];
        cost_mu[k] = std::log(per_claim) - 0.5 * sigma * sigma;
    }
    // ED marks ride on background outpatient claims only, so the rate is
    // relative to the background share of the outpatient target
    const double outpatient_background =
        plan.kind == PatientKind::NoStage3
            ? t.count_mean[2]
            : t.count_mean[2] - 1.0 - t.stage4_in_window - t.stage5_in_window;
    const double ed_prob =
        std::clamp(t.ed_visits_mean / std::max(outpatient_background, 1e-9), 0.0, 1.0);

    static const ClaimType kTypeOrder[4] = {ClaimType::Pharmacy, ClaimType::Inpatient,
                                            ClaimType::Outpatient, ClaimType::Professional};

    const double ramp = plan.kind == PatientKind::Esrd ? t.claim_time_ramp : 0.0;
    const TimeSampler sampler(window_days, followup_days, ramp, cfg.post_window_rate);

    for (int k = 0; k < 4; ++k) {
        double window_mean = t.count_mean[k];
        if (k == 2 && plan.kind != PatientKind::NoStage3) {
            // dedicated anchor/progression claims below are outpatient
            window_mean -= 1.0 + t.stage4_in_window + t.stage5_in_window;
        }
        const double sd2 = t.count_sd[k] * t.count_sd[k];
        const double shape = sd2 > window_mean
                                 ? window_mean * window_mean / (sd2 - window_mean)
                                 : 0.0;
        const double rate_mult = shape > 0.0 ? rng.gamma(shape, 1.0 / shape) : 1.0;
        const std::int64_t n_total = rng.poisson(rate_mult * sampler.total_mean(window_mean));
        for (std::int64_t i = 0; i < n_total; ++i) {
            const double day = sampler.sample(rng);
            const bool ed = k == 2 && rng.bernoulli(ed_prob);
            add_claim(day, kTypeOrder[k], round_cents(rng.lognormal(cost_mu[k], sigma)),
                      ed ? event_bit(EventCode::ED_VISIT) : 0, ed);
        }
        // pre-anchor history at a reduced base rate
        const std::int64_t n_pre = rng.poisson(
            0.35 * window_mean * static_cast<double>(cfg.pre_history_days) / window_days);
        for (std::int64_t i = 0; i < n_pre; ++i) {
            const double day = -1.0 - static_cast<double>(rng.uniform_index(cfg.pre_history_days));
            add_claim(day, kTypeOrder[k], round_cents(rng.lognormal(cost_mu[k], sigma)), 0, false);
        }
    }

    // vision claims exercise the fifth type; no descriptive target is attached
    const std::int64_t n_vision = rng.poisson(t.vision_count_mean * sampler.total_mean(1.0));
    for (std::int64_t i = 0; i < n_vision; ++i)
        add_claim(sampler.sample(rng), ClaimType::Vision,
                  round_cents(t.vision_cost_per_claim * (0.5 + rng.uniform())), 0, false);

    // dedicated diagnosis and outcome claims
    if (plan.kind == PatientKind::NoStage3) {
        const EventMask code = rng.bernoulli(0.7) ? event_bit(EventCode::CKD4)
                                                  : event_bit(EventCode::CKD5);
        add_claim(0.0, ClaimType::Outpatient, round_cents(rng.lognormal(cost_mu[2], sigma)), code,
                  false);
    } else {
        add_claim(0.0, ClaimType::Outpatient, round_cents(rng.lognormal(cost_mu[2], sigma)),
                  event_bit(EventCode::CKD3), false);
        if (stage4_day >= 0.0)
            add_claim(stage4_day, ClaimType::Outpatient,
                      round_cents(rng.lognormal(cost_mu[2], sigma)), event_bit(EventCode::CKD4),
                      false);
        if (stage5_day >= 0.0)
            add_claim(stage5_day, ClaimType::Outpatient,
                      round_cents(rng.lognormal(cost_mu[2], sigma)), event_bit(EventCode::CKD5),
                      false);
    }
    if (plan.kind == PatientKind::Esrd) {
        const bool transplant = rng.bernoulli(0.15);
        const EventMask code =
            event_bit(transplant ? EventCode::TRANSPLANT : EventCode::DIALYSIS);
        add_claim(esrd_day, ClaimType::Inpatient, round_cents(rng.lognormal(cost_mu[1], sigma)),
                  code, false);
        const std::int64_t extra = 2 + static_cast<std::int64_t>(rng.uniform_index(4));
        for (std::int64_t i = 1; i <= extra; ++i) {
            const double day = esrd_day + 20.0 * static_cast<double>(i);
            if (day > followup_days) break;
            add_claim(day, ClaimType::Inpatient, round_cents(rng.lognormal(cost_mu[1], sigma)),
                      event_bit(EventCode::DIALYSIS), false);
        }
    }

    std::sort(claims.begin(), claims.end(), [](const ClaimRecord& a, const ClaimRecord& b) {
        if (a.service_date != b.service_date) return a.service_date < b.service_date;
        return a.claim_id < b.claim_id;
    });

    // recurring stage-3 tags while the patient remains in stage 3
    if (plan.kind != PatientKind::NoStage3) {
        for (auto& c : claims) {
            const double day = static_cast<double>(c.service_date - anchor);
            if (day > 0.0 && day < stage3_end && rng.bernoulli(0.15))
                c.event_codes |= event_bit(EventCode::CKD3);
        }
    }

    // comorbidity onsets ride on existing claims: first claim at or after the
    // drawn onset, else the last claim
    const auto& codes = comorbidity_codes();
    for (std::size_t ci = 0; ci < codes.size(); ++ci) {
        if (!rng.bernoulli(t.comorbidity[ci])) continue;
        const double onset = rng.uniform(-static_cast<double>(cfg.pre_history_days),
                                         0.8 * window_days);
        const Date onset_date = anchor.add_days(static_cast<std::int64_t>(std::llround(onset)));
        auto it = std::lower_bound(claims.begin(), claims.end(), onset_date,
                                   [](const ClaimRecord& c, Date d) { return c.service_date < d; });
        if (it == claims.end()) --it;
        it->event_codes |= event_bit(codes[ci]);
    }
}

}  // namespace

ClaimsDataset generate_synthetic(const SynthConfig& cfg, unsigned jobs) {
    if (cfg.n_patients <= 0) throw DataError("n_patients must be positive");
    if (cfg.stage3_fraction < 0.0 || cfg.stage3_fraction > 1.0 ||
        cfg.esrd_fraction_of_stage3 < 0.0 || cfg.esrd_fraction_of_stage3 > 1.0)
        throw DataError("fractions must lie in [0, 1]");
    if (cfg.calibration_window_months <= 0) throw DataError("calibration window must be positive");

    const auto n = static_cast<std::size_t>(cfg.n_patients);
    const auto n_stage3 = static_cast<std::size_t>(
        std::llround(cfg.stage3_fraction * static_cast<double>(cfg.n_patients)));
    const auto n_esrd = static_cast<std::size_t>(
        std::llround(cfg.esrd_fraction_of_stage3 * static_cast<double>(n_stage3)));

    // deterministic counts, shuffled so patient ids do not encode strata
    std::vector<PatientKind> kinds(n, PatientKind::NoStage3);
    for (std::size_t i = 0; i < n_stage3; ++i)
        kinds[i] = i < n_esrd ? PatientKind::Esrd : PatientKind::Stage3NonEsrd;
    Rng shuffle_rng = Rng::stream(cfg.rng_seed, 0x51754u);
    shuffle_rng.shuffle(kinds);

    std::vector<PatientDemographics> demographics(n);
    std::vector<std::vector<ClaimRecord>> per_patient(n);
    parallel_for(n, jobs, [&](std::size_t i) {
        PatientPlan plan;
        plan.kind = kinds[i];
        plan.targets = kinds[i] == PatientKind::Esrd ? &cfg.esrd : &cfg.non_esrd;
        generate_patient(cfg, plan, i, demographics[i], per_patient[i]);
    });

    ClaimsDataset data;
    data.demographics = std::move(demographics);
    std::size_t total = 0;
    for (const auto& v : per_patient) total += v.size();
    data.claims.reserve(total);
    for (auto& v : per_patient) {
        for (auto& c : v) data.claims.push_back(std::move(c));
        v.clear();
        v.shrink_to_fit();
    }
    return data;
}

SynthSummary summarize(const ClaimsDataset& data) {
    SynthSummary s;
    s.patients = static_cast<std::int64_t>(data.demographics.size());
    s.claims = static_cast<std::int64_t>(data.claims.size());
    std::unordered_set<std::string> stage3, esrd;
    for (const auto& c : data.claims) {
        if (has_event(c.event_codes, EventCode::CKD3)) stage3.insert(c.patient_id);
        if (has_event(c.event_codes, EventCode::DIALYSIS) ||
            has_event(c.event_codes, EventCode::TRANSPLANT))
            esrd.insert(c.patient_id);
    }
    s.stage3_patients = static_cast<std::int64_t>(stage3.size());
    s.esrd_patients = static_cast<std::int64_t>(esrd.size());
    return s;
}

}  // namespace ckd
