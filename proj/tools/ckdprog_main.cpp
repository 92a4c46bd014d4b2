// ckdprog: claims-to-prediction pipeline over synthetic or ingested
// administrative claims. Subcommands mirror the pipeline stages; every run
// writes a manifest next to its outputs.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ckd/cohort.hpp"
#include "ckd/csv.hpp"
#include "ckd/errors.hpp"
#include "ckd/evaluation.hpp"
#include "ckd/explain.hpp"
#include "ckd/features.hpp"
#include "ckd/manifest.hpp"
#include "ckd/models/model.hpp"
#include "ckd/parallel.hpp"
#include "ckd/sampling.hpp"
#include "ckd/stats.hpp"
#include "ckd/synth.hpp"

namespace fs = std::filesystem;
using namespace ckd;

namespace {

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
}

std::vector<PatientTimeline> load_timelines(const std::string& claims_path,
                                            const std::string& demographics_path,
                                            const std::string& code_map_path) {
    const CodeMap map =
        code_map_path.empty() ? identity_code_map() : load_code_map(code_map_path);
    IngestResult ingest = ingest_csv(claims_path, demographics_path, map);
    if (!ingest.rejections.empty())
        std::cerr << "warning: " << ingest.rejections.size() << " rejected rows ignored\n";
    return build_timelines(std::move(ingest.data.claims), ingest.data.demographics);
}

struct FeatureFile {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
};

FeatureFile read_feature_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("missing feature file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty feature file: " + path);
    const auto header = split_csv_line(line);
    if (header.size() != kFeatureCount + 2 || header.front() != "patient_id" ||
        header.back() != "label")
        throw DataError("feature file header does not match the documented schema");
    FeatureFile f;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) throw DataError("ragged feature row: " + line);
        f.ids.push_back(fields[0]);
        std::vector<double> row(kFeatureCount);
        for (int i = 0; i < kFeatureCount; ++i) row[i] = std::stod(fields[1 + i]);
        f.rows.push_back(std::move(row));
        f.labels.push_back(std::stoi(fields.back()));
    }
    return f;
}

std::vector<SequenceTensor> read_sequence_jsonl(const std::string& path,
                                                std::vector<int>* labels) {
    std::ifstream in(path);
    if (!in) throw DataError("missing sequence file: " + path);
    std::vector<SequenceTensor> tensors;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("bad sequence line: " + std::string(e.what()));
        }
        SequenceTensor t;
        t.patient_id = j.at("patient_id").get<std::string>();
        t.steps = j.at("shape")[0].get<int>();
        t.channels = j.at("shape")[1].get<int>();
        j.at("data").get_to(t.data);
        t.label = j.value("label", 0);
        if (labels) labels->push_back(t.label);
        tensors.push_back(std::move(t));
    }
    return tensors;
}

Scaler scaler_from_json_file(const std::string& path) {
    const auto j = nlohmann::json::parse(read_text_file(path));
    Scaler s;
    j.at("mean").get_to(s.mean);
    j.at("sd").get_to(s.sd);
    std::vector<int> numeric;
    j.at("numeric").get_to(numeric);
    s.numeric.assign(numeric.begin(), numeric.end());
    return s;
}

std::string scaler_to_json(const Scaler& s) {
    std::vector<int> numeric(s.numeric.begin(), s.numeric.end());
    return nlohmann::json{{"mean", s.mean}, {"sd", s.sd}, {"numeric", numeric}}.dump(2);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CKD-to-ESRD claims prediction laboratory"};
    app.require_subcommand(1);

    std::uint64_t seed = 7;
    unsigned jobs = 0;
    app.add_option("--seed", seed, "master seed; all randomness derives from it");
    app.add_option("--jobs", jobs, "worker threads (0 = all cores)");

    // ------------------------------------------------ generate
    auto* cmd_generate = app.add_subcommand("generate", "synthesize a claims cohort");
    std::string gen_config, gen_out;
    cmd_generate->add_option("--config", gen_config, "SynthConfig JSON file");
    cmd_generate->add_option("--out", gen_out, "output directory")->required();

    // ------------------------------------------------ ingest
    auto* cmd_ingest = app.add_subcommand("ingest", "ingest, deduplicate, and clean claims CSVs");
    std::string in_claims, in_demo, in_codemap, in_out;
    cmd_ingest->add_option("--claims", in_claims)->required();
    cmd_ingest->add_option("--demographics", in_demo)->required();
    cmd_ingest->add_option("--code-map", in_codemap, "external-code to event-code JSON map");
    cmd_ingest->add_option("--out", in_out)->required();

    // ------------------------------------------------ cohort
    auto* cmd_cohort = app.add_subcommand("cohort", "run the cohort identification funnel");
    std::string co_claims, co_demo, co_out;
    int co_window = 24;
    cmd_cohort->add_option("--claims", co_claims)->required();
    cmd_cohort->add_option("--demographics", co_demo)->required();
    cmd_cohort->add_option("--window", co_window, "observation window in months");
    cmd_cohort->add_option("--out", co_out)->required();

    // ------------------------------------------------ features
    auto* cmd_features = app.add_subcommand("features", "extract static or sequence features");
    std::string fe_claims, fe_demo, fe_out;
    int fe_window = 24;
    bool fe_static = false, fe_sequence = false, fe_raw_occurrence = false;
    cmd_features->add_option("--claims", fe_claims)->required();
    cmd_features->add_option("--demographics", fe_demo)->required();
    cmd_features->add_option("--window", fe_window);
    cmd_features->add_flag("--static", fe_static, "write the 27-column feature matrix");
    cmd_features->add_flag("--sequence", fe_sequence, "write per-patient 3-month bucket tensors");
    cmd_features->add_flag("--raw-occurrence", fe_raw_occurrence,
                           "per-bucket comorbidity flags instead of carry-forward");
    cmd_features->add_option("--out", fe_out)->required();

    // ------------------------------------------------ resample
    auto* cmd_resample = app.add_subcommand("resample", "rebalance a training feature matrix");
    std::string rs_features, rs_strategy = "SM3", rs_out;
    int rs_smote_k = 5, rs_enn_k = 3;
    cmd_resample->add_option("--features", rs_features)->required();
    cmd_resample->add_option("--strategy", rs_strategy, "SM1..SM8 or none");
    cmd_resample->add_option("--smote-k", rs_smote_k);
    cmd_resample->add_option("--enn-k", rs_enn_k);
    cmd_resample->add_option("--out", rs_out)->required();

    // ------------------------------------------------ train
    auto* cmd_train = app.add_subcommand("train", "train a model on a feature or sequence file");
    std::string tr_features, tr_sequences, tr_model = "RF", tr_hyper, tr_out;
    cmd_train->add_option("--features", tr_features, "feature matrix CSV (LR/RF/GBT)");
    cmd_train->add_option("--sequences", tr_sequences, "sequence JSONL (CNN/RNN/LSTM/GRU/TCN)");
    cmd_train->add_option("--model", tr_model)->required();
    cmd_train->add_option("--hyper-json", tr_hyper, "hyperparameter override JSON");
    cmd_train->add_option("--out", tr_out)->required();

    // ------------------------------------------------ evaluate
    auto* cmd_evaluate = app.add_subcommand("evaluate", "score a model on a held-out file");
    std::string ev_model, ev_scaler, ev_test, ev_out;
    double ev_threshold = 0.5;
    cmd_evaluate->add_option("--model-file", ev_model)->required();
    cmd_evaluate->add_option("--scaler", ev_scaler, "scaler JSON written by train");
    cmd_evaluate->add_option("--test-file", ev_test)->required();
    cmd_evaluate->add_option("--threshold", ev_threshold);
    cmd_evaluate->add_option("--out", ev_out)->required();

    // ------------------------------------------------ explain
    auto* cmd_explain = app.add_subcommand("explain", "per-patient SHAP force plot");
    std::string ex_model, ex_scaler, ex_features, ex_patient, ex_background, ex_out;
    bool ex_kernel = false;
    cmd_explain->add_option("--model-file", ex_model)->required();
    cmd_explain->add_option("--scaler", ex_scaler);
    cmd_explain->add_option("--features", ex_features)->required();
    cmd_explain->add_option("--patient-id", ex_patient)->required();
    cmd_explain->add_option("--background-file", ex_background,
                            "background rows for kernel SHAP");
    cmd_explain->add_flag("--kernel", ex_kernel, "kernel SHAP instead of exact tree SHAP");
    std::size_t ex_summary = 0;
    cmd_explain->add_option("--summary-limit", ex_summary,
                            "also write mean |SHAP| over the first N rows");
    cmd_explain->add_option("--out", ex_out)->required();

    // ------------------------------------------------ stats
    auto* cmd_stats = app.add_subcommand("stats", "descriptive tables with t/chi-squared tests");
    std::string st_features, st_out;
    cmd_stats->add_option("--features", st_features)->required();
    cmd_stats->add_option("--out", st_out)->required();

    // ------------------------------------------------ sweep
    auto* cmd_sweep = app.add_subcommand("sweep", "window x model x strategy experiment grid");
    std::string sw_config, sw_out;
    cmd_sweep->add_option("--config", sw_config)->required();
    cmd_sweep->add_option("--out", sw_out)->required();

    // --seed/--jobs may follow the subcommand name
    for (auto* sub : app.get_subcommands(nullptr)) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or the usage diagnostic
        return code == 0 ? 0 : 1;
    }

    Timer timer;
    try {
        if (*cmd_generate) {
            ensure_dir(gen_out);
            SynthConfig config = gen_config.empty()
                                     ? SynthConfig::defaults()
                                     : SynthConfig::from_json(read_text_file(gen_config));
            if (app.count("--seed")) config.rng_seed = seed;
            const ClaimsDataset data = generate_synthetic(config, jobs);
            write_claims_csv(gen_out + "/claims.csv", data.claims);
            write_demographics_csv(gen_out + "/demographics.csv", data.demographics);
            write_text_file(gen_out + "/synth_config.json", config.to_json());
            const SynthSummary s = summarize(data);
            write_text_file(gen_out + "/summary.json",
                            nlohmann::json{{"patients", s.patients},
                                           {"stage3_patients", s.stage3_patients},
                                           {"esrd_patients", s.esrd_patients},
                                           {"claims", s.claims}}
                                .dump(2));
            RunManifest manifest;
            manifest.subcommand = "generate";
            manifest.config_json = config.to_json();
            manifest.master_seed = config.rng_seed;
            if (!gen_config.empty()) manifest.add_input(gen_config);
            manifest.outputs = {"claims.csv", "demographics.csv", "synth_config.json",
                                "summary.json"};
            manifest.duration_seconds = timer.seconds();
            manifest.write(gen_out);
            std::cout << "generated " << s.patients << " patients (" << s.stage3_patients
                      << " stage-3, " << s.esrd_patients << " ESRD), " << s.claims
                      << " claims\n";
        } else if (*cmd_ingest) {
            ensure_dir(in_out);
            const CodeMap map =
                in_codemap.empty() ? identity_code_map() : load_code_map(in_codemap);
            IngestResult ingest = ingest_csv(in_claims, in_demo, map);
            const DedupResult dedup = deduplicate(std::move(ingest.data.claims));
            const CleanResult cleaned = clean(dedup.claims);
            write_claims_csv(in_out + "/claims.csv", cleaned.claims);
            write_demographics_csv(in_out + "/demographics.csv", ingest.data.demographics);
            write_rejection_report(in_out + "/rejections.csv", ingest.rejections);
            write_text_file(
                in_out + "/ingest_report.json",
                nlohmann::json{{"rows_ingested", cleaned.claims.size()},
                               {"rejected_rows", ingest.rejections.size()},
                               {"unmapped_codes", ingest.unmapped_codes},
                               {"duplicates_removed", dedup.removed},
                               {"negative_cost_removed", cleaned.negative_cost_removed},
                               {"no_ckd_patient_claims_removed",
                                cleaned.no_ckd_patient_claims_removed}}
                    .dump(2));
            RunManifest manifest;
            manifest.subcommand = "ingest";
            manifest.add_input(in_claims);
            manifest.add_input(in_demo);
            if (!in_codemap.empty()) manifest.add_input(in_codemap);
            manifest.outputs = {"claims.csv", "demographics.csv", "rejections.csv",
                                "ingest_report.json"};
            manifest.duration_seconds = timer.seconds();
            manifest.write(in_out);
        } else if (*cmd_cohort) {
            ensure_dir(co_out);
            const auto timelines = load_timelines(co_claims, co_demo, "");
            const CohortResult cohort = identify_cohort(timelines, co_window);
            write_cohort_csv(co_out + "/cohort.csv", timelines, cohort);
            write_text_file(co_out + "/funnel.json", funnel_json(cohort));
            RunManifest manifest;
            manifest.subcommand = "cohort";
            manifest.config_json = nlohmann::json{{"window_months", co_window}}.dump();
            manifest.add_input(co_claims);
            manifest.add_input(co_demo);
            manifest.outputs = {"cohort.csv", "funnel.json"};
            manifest.duration_seconds = timer.seconds();
            manifest.write(co_out);
            std::cout << read_text_file(co_out + "/funnel.json") << '\n';
        } else if (*cmd_features) {
            if (fe_static == fe_sequence)
                throw CLI::ValidationError("features", "pass exactly one of --static/--sequence");
            ensure_dir(fe_out);
            const auto timelines = load_timelines(fe_claims, fe_demo, "");
            const CohortResult cohort = identify_cohort(timelines, fe_window);
            std::vector<std::string> outputs;
            if (fe_static) {
                std::vector<FeatureVector> rows;
                for (const auto& entry : cohort.included) {
                    const auto& t = timelines[entry.timeline_index];
                    auto fv = extract_static(
                        t, ObservationWindow::from_anchor(*t.first_ckd3, fe_window));
                    fv.label = entry.label ? 1 : 0;
                    rows.push_back(std::move(fv));
                }
                write_feature_matrix_csv(fe_out + "/features.csv", rows);
                outputs.push_back("features.csv");
            } else {
                std::ostringstream lines;
                for (const auto& entry : cohort.included) {
                    const auto& t = timelines[entry.timeline_index];
                    auto tensor = extract_sequence(
                        t, ObservationWindow::from_anchor(*t.first_ckd3, fe_window),
                        fe_raw_occurrence ? ComorbidityChannels::RawOccurrence
                                          : ComorbidityChannels::CarryForward);
                    tensor.label = entry.label ? 1 : 0;
                    lines << sequence_to_json(tensor) << '\n';
                }
                write_text_file(fe_out + "/sequences.jsonl", lines.str());
                outputs.push_back("sequences.jsonl");
            }
            RunManifest manifest;
            manifest.subcommand = "features";
            manifest.config_json =
                nlohmann::json{{"window_months", fe_window},
                               {"mode", fe_static ? "static" : "sequence"},
                               {"comorbidity_channels",
                                fe_raw_occurrence ? "raw_occurrence" : "carry_forward"}}
                    .dump();
            manifest.add_input(fe_claims);
            manifest.add_input(fe_demo);
            manifest.outputs = outputs;
            manifest.duration_seconds = timer.seconds();
            manifest.write(fe_out);
        } else if (*cmd_resample) {
            ensure_dir(rs_out);
            const FeatureFile file = read_feature_csv(rs_features);
            if (rs_strategy == "none") {
                std::vector<FeatureVector> rows(file.rows.size());
                for (std::size_t i = 0; i < file.rows.size(); ++i) {
                    rows[i].patient_id = file.ids[i];
                    std::copy(file.rows[i].begin(), file.rows[i].end(), rows[i].values.begin());
                    rows[i].label = file.labels[i];
                }
                write_feature_matrix_csv(rs_out + "/resampled.csv", rows);
            } else {
                const auto strategy = parse_strategy(rs_strategy);
                if (!strategy)
                    throw CLI::ValidationError("resample", "unknown strategy " + rs_strategy);
                SamplingParams params;
                params.smote_k = rs_smote_k;
                params.enn_k = rs_enn_k;

                std::vector<bool> numeric(feature_is_numeric().begin(),
                                          feature_is_numeric().end());
                const Scaler scaler = fit_scaler(file.rows, numeric);
                const auto scaled = apply_scaler(scaler, file.rows);
                const ResampleResult res =
                    apply_strategy(*strategy, scaled, file.labels, seed, params);

                std::vector<FeatureVector> rows(res.rows.size());
                for (std::size_t i = 0; i < res.rows.size(); ++i) {
                    rows[i].patient_id = "R" + std::to_string(i);
                    rows[i].label = res.labels[i];
                    for (int f = 0; f < kFeatureCount; ++f) {
                        const double z = res.rows[i][f];
                        rows[i].values[f] =
                            scaler.numeric[f] && scaler.sd[f] > 0.0
                                ? z * scaler.sd[f] + scaler.mean[f]
                                : (scaler.numeric[f] ? scaler.mean[f] : z);
                    }
                }
                write_feature_matrix_csv(rs_out + "/resampled.csv", rows);
                write_text_file(rs_out + "/resample_report.json", res.report.to_json());
            }
            RunManifest manifest;
            manifest.subcommand = "resample";
            manifest.config_json = nlohmann::json{{"strategy", rs_strategy},
                                                  {"smote_k", rs_smote_k},
                                                  {"enn_k", rs_enn_k}}
                                       .dump();
            manifest.master_seed = seed;
            manifest.add_input(rs_features);
            manifest.outputs = {"resampled.csv"};
            manifest.duration_seconds = timer.seconds();
            manifest.write(rs_out);
        } else if (*cmd_train) {
            ensure_dir(tr_out);
            const auto kind = parse_model_kind(tr_model);
            if (!kind) throw CLI::ValidationError("train", "unknown model kind " + tr_model);
            Hyper hyper;
            if (!tr_hyper.empty()) {
                nlohmann::json hj = nlohmann::json::parse(read_text_file(tr_hyper));
                hyper = SweepConfig::from_json(nlohmann::json{{"hyper", hj}}.dump()).hyper;
            }
            RunManifest manifest;
            manifest.subcommand = "train";
            manifest.master_seed = seed;
            if (!is_sequence_kind(*kind)) {
                if (tr_features.empty())
                    throw CLI::ValidationError("train", "--features required for " + tr_model);
                const FeatureFile file = read_feature_csv(tr_features);
                std::vector<bool> numeric(feature_is_numeric().begin(),
                                          feature_is_numeric().end());
                const Scaler scaler = fit_scaler(file.rows, numeric);
                const auto scaled = apply_scaler(scaler, file.rows);
                std::unique_ptr<Model> model;
                if (*kind == ModelKind::LR) {
                    model = train_logistic(scaled, file.labels, hyper.lr);
                } else if (*kind == ModelKind::RF) {
                    ForestParams p = hyper.rf;
                    p.seed = seed;
                    p.jobs = jobs;
                    model = train_random_forest(scaled, file.labels, p);
                } else {
                    model = train_gbt(scaled, file.labels, hyper.gbt);
                }
                save_model(*model, tr_out + "/model.json");
                write_text_file(tr_out + "/scaler.json", scaler_to_json(scaler));
                manifest.outputs = {"model.json", "scaler.json"};
                manifest.add_input(tr_features);
            } else {
                if (tr_sequences.empty())
                    throw CLI::ValidationError("train", "--sequences required for " + tr_model);
                std::vector<int> labels;
                const auto tensors = read_sequence_jsonl(tr_sequences, &labels);
                SequenceParams p = hyper.seq;
                p.seed = seed;
                const auto model = train_sequence(*kind, tensors, labels, p);
                save_model(*model, tr_out + "/model.json");
                manifest.outputs = {"model.json"};
                manifest.add_input(tr_sequences);
            }
            manifest.duration_seconds = timer.seconds();
            manifest.write(tr_out);
        } else if (*cmd_evaluate) {
            ensure_dir(ev_out);
            const auto model = load_model(ev_model);
            std::vector<double> scores;
            std::vector<int> labels;
            if (!is_sequence_kind(model->kind())) {
                const FeatureFile file = read_feature_csv(ev_test);
                labels = file.labels;
                auto rows = file.rows;
                if (!ev_scaler.empty())
                    rows = apply_scaler(scaler_from_json_file(ev_scaler), rows);
                scores = predict_rows(*model, rows);
            } else {
                const auto tensors = read_sequence_jsonl(ev_test, &labels);
                scores = predict_tensors(*model, tensors);
            }
            // probe dump pins the scores for round-trip verification
            {
                std::ostringstream dump;
                dump << "index,score,label\n";
                for (std::size_t i = 0; i < scores.size(); ++i)
                    dump << i << ',' << format_double(scores[i]) << ',' << labels[i] << '\n';
                write_text_file(ev_out + "/predictions.csv", dump.str());
            }
            EvalReport report = evaluate_scores(scores, labels, ev_threshold);
            report.model = model_kind_name(model->kind());
            nlohmann::json j{{"model", report.model},
                             {"auroc", report.auroc},
                             {"f1", report.f1},
                             {"precision", report.precision},
                             {"recall", report.recall},
                             {"threshold", report.threshold},
                             {"confusion",
                              {{"tp", report.confusion.tp},
                               {"fp", report.confusion.fp},
                               {"tn", report.confusion.tn},
                               {"fn", report.confusion.fn}}}};
            write_text_file(ev_out + "/eval.json", j.dump(2));
            std::cout << j.dump(2) << '\n';
            RunManifest manifest;
            manifest.subcommand = "evaluate";
            manifest.add_input(ev_model);
            manifest.add_input(ev_test);
            if (!ev_scaler.empty()) manifest.add_input(ev_scaler);
            manifest.outputs = {"eval.json", "predictions.csv"};
            manifest.duration_seconds = timer.seconds();
            manifest.write(ev_out);
        } else if (*cmd_explain) {
            const auto model = load_model(ex_model);
            const FeatureFile file = read_feature_csv(ex_features);
            std::size_t row_index = file.ids.size();
            for (std::size_t i = 0; i < file.ids.size(); ++i)
                if (file.ids[i] == ex_patient) {
                    row_index = i;
                    break;
                }
            if (row_index == file.ids.size())
                throw DataError("patient id not present in feature file: " + ex_patient);

            std::optional<Scaler> scaler;
            if (!ex_scaler.empty()) scaler = scaler_from_json_file(ex_scaler);
            auto to_model_space = [&](const std::vector<double>& row) {
                return scaler ? scaler->transform(row) : row;
            };

            ShapExplanation explanation;
            const auto model_row = to_model_space(file.rows[row_index]);
            if (!ex_kernel &&
                (model->kind() == ModelKind::RF || model->kind() == ModelKind::GBT)) {
                explanation = tree_shap(*model, model_row);
            } else {
                std::vector<std::vector<double>> background;
                if (!ex_background.empty()) {
                    const FeatureFile bg = read_feature_csv(ex_background);
                    for (const auto& row : bg.rows) background.push_back(to_model_space(row));
                } else {
                    for (const auto& row : file.rows) background.push_back(to_model_space(row));
                }
                explanation =
                    kernel_shap([&](const std::vector<double>& r) { return model->predict_row(r); },
                                model_row, background, KernelShapConfig{}, seed);
            }
            explanation.display_values = file.rows[row_index];  // raw values for labels
            explanation.feature_names.assign(feature_codes().begin(), feature_codes().end());

            ensure_dir(ex_out);
            const ForcePlot plot = render_force_plot(explanation);
            write_text_file(ex_out + "/force_plot.svg", plot.svg);
            write_text_file(ex_out + "/explanation.json", plot.json);
            std::vector<std::string> outputs = {"force_plot.svg", "explanation.json"};
            if (ex_summary > 0 &&
                (model->kind() == ModelKind::RF || model->kind() == ModelKind::GBT)) {
                std::vector<ShapExplanation> explanations;
                const std::size_t limit = std::min(ex_summary, file.rows.size());
                for (std::size_t i = 0; i < limit; ++i) {
                    auto e = tree_shap(*model, to_model_space(file.rows[i]));
                    e.feature_names.assign(feature_codes().begin(), feature_codes().end());
                    explanations.push_back(std::move(e));
                }
                write_text_file(ex_out + "/shap_summary.csv",
                                importance_csv(mean_abs_shap(explanations)));
                outputs.push_back("shap_summary.csv");
            }
            RunManifest manifest;
            manifest.subcommand = "explain";
            manifest.config_json =
                nlohmann::json{{"patient_id", ex_patient},
                               {"explainer", ex_kernel ? "kernel" : "tree"}}
                    .dump();
            manifest.master_seed = seed;
            manifest.add_input(ex_model);
            manifest.add_input(ex_features);
            manifest.outputs = outputs;
            manifest.duration_seconds = timer.seconds();
            manifest.write(ex_out);
        } else if (*cmd_stats) {
            ensure_dir(st_out);
            const FeatureFile file = read_feature_csv(st_features);
            std::vector<FeatureVector> rows(file.rows.size());
            for (std::size_t i = 0; i < file.rows.size(); ++i) {
                rows[i].patient_id = file.ids[i];
                std::copy(file.rows[i].begin(), file.rows[i].end(), rows[i].values.begin());
                rows[i].label = file.labels[i];
            }
            const DescriptiveTables tables = descriptive_tables(rows);
            write_text_file(st_out + "/descriptive_tables.csv", descriptive_tables_csv(tables));
            RunManifest manifest;
            manifest.subcommand = "stats";
            manifest.add_input(st_features);
            manifest.outputs = {"descriptive_tables.csv"};
            manifest.duration_seconds = timer.seconds();
            manifest.write(st_out);
        } else if (*cmd_sweep) {
            ensure_dir(sw_out);
            SweepConfig config = SweepConfig::from_json(read_text_file(sw_config));
            if (app.count("--seed")) config.master_seed = seed;

            std::vector<PatientTimeline> timelines;
            if (config.synth) {
                ClaimsDataset data = generate_synthetic(*config.synth, jobs);
                timelines = build_timelines(std::move(data.claims), data.demographics);
            } else if (!config.claims_csv.empty()) {
                timelines =
                    load_timelines(config.claims_csv, config.demographics_csv, config.code_map);
            } else {
                throw DataError("sweep config needs either synth or claims_csv inputs");
            }

            const SweepReport report = run_sweep(config, timelines, jobs);
            write_text_file(sw_out + "/sweep.csv", report.to_csv());
            write_text_file(sw_out + "/sweep.json", report.to_json());
            write_text_file(sw_out + "/auroc_by_window.svg",
                            comparison_plot_svg(report, "auroc"));
            write_text_file(sw_out + "/f1_by_window.svg", comparison_plot_svg(report, "f1"));
            RunManifest manifest;
            manifest.subcommand = "sweep";
            manifest.config_json = config.to_json();
            manifest.master_seed = config.master_seed;
            manifest.add_input(sw_config);
            manifest.outputs = {"sweep.csv", "sweep.json", "auroc_by_window.svg",
                                "f1_by_window.svg"};
            manifest.duration_seconds = timer.seconds();
            manifest.write(sw_out);
            std::cout << report.to_csv();
        }
    } catch (const CLI::Error& e) {
        std::cerr << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
