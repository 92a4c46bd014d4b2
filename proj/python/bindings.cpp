#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "ckd/claims.hpp"
#include "ckd/cohort.hpp"
#include "ckd/csv.hpp"
#include "ckd/errors.hpp"
#include "ckd/evaluation.hpp"
#include "ckd/explain.hpp"
#include "ckd/features.hpp"
#include "ckd/manifest.hpp"
#include "ckd/models/model.hpp"
#include "ckd/sampling.hpp"
#include "ckd/stats.hpp"
#include "ckd/synth.hpp"

namespace py = pybind11;
using namespace ckd;

namespace {

std::vector<PatientTimeline> timelines_from_files(const std::string& claims_csv,
                                                  const std::string& demographics_csv) {
    IngestResult ingest = ingest_csv(claims_csv, demographics_csv, identity_code_map());
    return build_timelines(std::move(ingest.data.claims), ingest.data.demographics);
}

SequenceTensor tensor_from_nested(const std::vector<std::vector<double>>& steps) {
    SequenceTensor t;
    t.steps = static_cast<int>(steps.size());
    t.channels = steps.empty() ? 0 : static_cast<int>(steps[0].size());
    for (const auto& row : steps) {
        if (static_cast<int>(row.size()) != t.channels)
            throw DataError("ragged sequence tensor");
        t.data.insert(t.data.end(), row.begin(), row.end());
    }
    return t;
}

py::dict explanation_to_dict(const ShapExplanation& e) {
    py::dict d;
    d["base_value"] = e.base_value;
    d["contributions"] = e.contributions;
    d["model_output"] = e.model_output;
    d["space"] = e.space;
    return d;
}

}  // namespace

PYBIND11_MODULE(_ckdprog, m) {
    m.doc() = "CKD-to-ESRD claims prediction pipeline";
    m.attr("__version__") = kToolVersion;

    py::register_exception<DataError>(m, "DataError");

    m.def("default_synth_config", [] { return SynthConfig::defaults().to_json(); });

    m.def(
        "generate_synthetic",
        [](const std::string& config_json, const std::string& out_dir, unsigned jobs) {
            const SynthConfig config = SynthConfig::from_json(config_json);
            const ClaimsDataset data = generate_synthetic(config, jobs);
            write_claims_csv(out_dir + "/claims.csv", data.claims);
            write_demographics_csv(out_dir + "/demographics.csv", data.demographics);
            const SynthSummary s = summarize(data);
            py::dict d;
            d["patients"] = s.patients;
            d["stage3_patients"] = s.stage3_patients;
            d["esrd_patients"] = s.esrd_patients;
            d["claims"] = s.claims;
            return d;
        },
        py::arg("config_json"), py::arg("out_dir"), py::arg("jobs") = 0);

    m.def(
        "cohort_funnel",
        [](const std::string& claims_csv, const std::string& demographics_csv, int window) {
            const auto timelines = timelines_from_files(claims_csv, demographics_csv);
            const CohortResult cohort = identify_cohort(timelines, window);
            py::dict d;
            d["funnel"] = cohort.funnel_counts;
            std::size_t positives = 0;
            for (const auto& e : cohort.included) positives += e.label;
            d["positive"] = positives;
            d["negative"] = cohort.included.size() - positives;
            return d;
        },
        py::arg("claims_csv"), py::arg("demographics_csv"), py::arg("window_months"));

    m.def(
        "extract_features",
        [](const std::string& claims_csv, const std::string& demographics_csv, int window) {
            const auto timelines = timelines_from_files(claims_csv, demographics_csv);
            const CohortResult cohort = identify_cohort(timelines, window);
            std::vector<std::string> ids;
            std::vector<std::vector<double>> rows;
            std::vector<int> labels;
            for (const auto& entry : cohort.included) {
                const auto& t = timelines[entry.timeline_index];
                const auto fv =
                    extract_static(t, ObservationWindow::from_anchor(*t.first_ckd3, window));
                ids.push_back(fv.patient_id);
                rows.emplace_back(fv.values.begin(), fv.values.end());
                labels.push_back(entry.label ? 1 : 0);
            }
            py::dict d;
            d["ids"] = ids;
            d["rows"] = rows;
            d["labels"] = labels;
            d["names"] = std::vector<std::string>(feature_codes().begin(), feature_codes().end());
            return d;
        },
        py::arg("claims_csv"), py::arg("demographics_csv"), py::arg("window_months"));

    m.def(
        "extract_sequences",
        [](const std::string& claims_csv, const std::string& demographics_csv, int window) {
            const auto timelines = timelines_from_files(claims_csv, demographics_csv);
            const CohortResult cohort = identify_cohort(timelines, window);
            py::list tensors;
            std::vector<int> labels;
            for (const auto& entry : cohort.included) {
                const auto& t = timelines[entry.timeline_index];
                const auto tensor =
                    extract_sequence(t, ObservationWindow::from_anchor(*t.first_ckd3, window));
                std::vector<std::vector<double>> nested(tensor.steps);
                for (int s = 0; s < tensor.steps; ++s)
                    nested[s].assign(
                        tensor.data.begin() + static_cast<std::size_t>(s) * tensor.channels,
                        tensor.data.begin() + static_cast<std::size_t>(s + 1) * tensor.channels);
                tensors.append(nested);
                labels.push_back(entry.label ? 1 : 0);
            }
            py::dict d;
            d["tensors"] = tensors;
            d["labels"] = labels;
            d["channels"] = sequence_channel_names();
            return d;
        },
        py::arg("claims_csv"), py::arg("demographics_csv"), py::arg("window_months"));

    m.def("auroc", &auroc, py::arg("scores"), py::arg("labels"));
    m.def("f1_score", &f1_score, py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.5);

    m.def(
        "welch_t_test",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            const StatTestResult r = welch_t_test(a, b);
            py::dict d;
            d["statistic"] = r.statistic;
            d["df"] = r.df;
            d["p_value"] = r.p_value;
            return d;
        },
        py::arg("sample_a"), py::arg("sample_b"));

    m.def(
        "chi_squared_independence",
        [](double n11, double n12, double n21, double n22) {
            const StatTestResult r = chi_squared_independence(n11, n12, n21, n22);
            py::dict d;
            d["statistic"] = r.statistic;
            d["df"] = r.df;
            d["p_value"] = r.p_value;
            return d;
        },
        py::arg("n11"), py::arg("n12"), py::arg("n21"), py::arg("n22"));

    m.def("smote", &smote, py::arg("minority_rows"), py::arg("k"), py::arg("n_new"),
          py::arg("seed"));

    m.def(
        "apply_strategy",
        [](const std::string& strategy, const std::vector<std::vector<double>>& rows,
           const std::vector<int>& labels, std::uint64_t seed) {
            const auto s = parse_strategy(strategy);
            if (!s) throw DataError("unknown strategy " + strategy);
            const ResampleResult r = apply_strategy(*s, rows, labels, seed);
            py::dict d;
            d["rows"] = r.rows;
            d["labels"] = r.labels;
            d["report"] = r.report.to_json();
            return d;
        },
        py::arg("strategy"), py::arg("rows"), py::arg("labels"), py::arg("seed"));

    m.def(
        "train_model",
        [](const std::string& kind_name, const std::vector<std::vector<double>>& rows,
           const std::vector<int>& labels, std::uint64_t seed) {
            const auto kind = parse_model_kind(kind_name);
            if (!kind || is_sequence_kind(*kind))
                throw DataError("train_model handles LR/RF/GBT; use train_sequence");
            std::unique_ptr<Model> model;
            if (*kind == ModelKind::LR) {
                model = train_logistic(rows, labels);
            } else if (*kind == ModelKind::RF) {
                ForestParams p;
                p.seed = seed;
                model = train_random_forest(rows, labels, p);
            } else {
                model = train_gbt(rows, labels);
            }
            return model->to_json().dump();
        },
        py::arg("kind"), py::arg("rows"), py::arg("labels"), py::arg("seed") = 1);

    m.def(
        "train_sequence",
        [](const std::string& kind_name,
           const std::vector<std::vector<std::vector<double>>>& tensors,
           const std::vector<int>& labels, std::uint64_t seed, int epochs, int hidden) {
            const auto kind = parse_model_kind(kind_name);
            if (!kind || !is_sequence_kind(*kind))
                throw DataError("train_sequence handles CNN/RNN/LSTM/GRU/TCN");
            std::vector<SequenceTensor> ts;
            for (const auto& t : tensors) ts.push_back(tensor_from_nested(t));
            SequenceParams p;
            p.seed = seed;
            p.epochs = epochs;
            p.hidden = hidden;
            const auto model = train_sequence(*kind, ts, labels, p);
            return model->to_json().dump();
        },
        py::arg("kind"), py::arg("tensors"), py::arg("labels"), py::arg("seed") = 1,
        py::arg("epochs") = 100, py::arg("hidden") = 32);

    m.def(
        "predict",
        [](const std::string& model_json, const std::vector<std::vector<double>>& rows) {
            const auto model = model_from_json(nlohmann::json::parse(model_json));
            return predict_rows(*model, rows);
        },
        py::arg("model_json"), py::arg("rows"));

    m.def(
        "predict_sequences",
        [](const std::string& model_json,
           const std::vector<std::vector<std::vector<double>>>& tensors) {
            const auto model = model_from_json(nlohmann::json::parse(model_json));
            std::vector<SequenceTensor> ts;
            for (const auto& t : tensors) ts.push_back(tensor_from_nested(t));
            return predict_tensors(*model, ts);
        },
        py::arg("model_json"), py::arg("tensors"));

    m.def(
        "tree_shap",
        [](const std::string& model_json, const std::vector<double>& instance) {
            const auto model = model_from_json(nlohmann::json::parse(model_json));
            return explanation_to_dict(tree_shap(*model, instance));
        },
        py::arg("model_json"), py::arg("instance"));

    m.def(
        "kernel_shap",
        [](const std::string& model_json, const std::vector<double>& instance,
           const std::vector<std::vector<double>>& background, std::uint64_t seed) {
            const auto model = model_from_json(nlohmann::json::parse(model_json));
            const auto explanation = kernel_shap(
                [&](const std::vector<double>& row) { return model->predict_row(row); }, instance,
                background, KernelShapConfig{}, seed);
            return explanation_to_dict(explanation);
        },
        py::arg("model_json"), py::arg("instance"), py::arg("background"), py::arg("seed") = 1);

    m.def(
        "run_sweep",
        [](const std::string& config_json, unsigned jobs) {
            const SweepConfig config = SweepConfig::from_json(config_json);
            std::vector<PatientTimeline> timelines;
            if (config.synth) {
                ClaimsDataset data = generate_synthetic(*config.synth, jobs);
                timelines = build_timelines(std::move(data.claims), data.demographics);
            } else {
                IngestResult ingest = ingest_csv(
                    config.claims_csv, config.demographics_csv,
                    config.code_map.empty() ? identity_code_map()
                                            : load_code_map(config.code_map));
                timelines =
                    build_timelines(std::move(ingest.data.claims), ingest.data.demographics);
            }
            const SweepReport report = run_sweep(config, timelines, jobs);
            py::dict d;
            d["csv"] = report.to_csv();
            d["json"] = report.to_json();
            return d;
        },
        py::arg("config_json"), py::arg("jobs") = 0);
}
