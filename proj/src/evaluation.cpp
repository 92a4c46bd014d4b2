#include "ckd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ckd/cohort.hpp"
#include "ckd/csv.hpp"
#include "ckd/errors.hpp"
#include "ckd/features.hpp"
#include "ckd/parallel.hpp"
#include "ckd/rng.hpp"

namespace ckd {

SplitIndices stratified_split(const std::vector<int>& labels, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw DataError("split ratio must lie strictly in (0, 1)");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
    if (pos.size() < 2 || neg.size() < 2)
        throw DataError("split needs at least two rows per class");

    SplitIndices out;
    Rng rng = Rng::stream(seed, 0x5011f);
    auto assign = [&](std::vector<std::size_t>& idx) {
        rng.shuffle(idx);
        const std::size_t n_train =
            static_cast<std::size_t>(std::floor(ratio * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_train ? out.train : out.test).push_back(idx[i]);
    };
    assign(pos);
    assign(neg);
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

EvalReport evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels,
                           double threshold) {
    EvalReport r;
    r.threshold = threshold;
    r.auroc = auroc(scores, labels);
    r.confusion = confusion_at(scores, labels, threshold);
    r.precision = precision_of(r.confusion);
    r.recall = recall_of(r.confusion);
    r.f1 = r.precision + r.recall > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

namespace {

Hyper hyper_from_json(const nlohmann::json& j, Hyper base) {
    if (j.contains("lr")) {
        const auto& s = j.at("lr");
        if (s.contains("l2")) s.at("l2").get_to(base.lr.l2);
        if (s.contains("learning_rate")) s.at("learning_rate").get_to(base.lr.learning_rate);
        if (s.contains("max_iters")) s.at("max_iters").get_to(base.lr.max_iters);
        if (s.contains("tol")) s.at("tol").get_to(base.lr.tol);
    }
    if (j.contains("rf")) {
        const auto& s = j.at("rf");
        if (s.contains("n_trees")) s.at("n_trees").get_to(base.rf.n_trees);
        if (s.contains("max_depth")) s.at("max_depth").get_to(base.rf.max_depth);
        if (s.contains("min_leaf")) s.at("min_leaf").get_to(base.rf.min_leaf);
        if (s.contains("features_per_split"))
            s.at("features_per_split").get_to(base.rf.features_per_split);
    }
    if (j.contains("gbt")) {
        const auto& s = j.at("gbt");
        if (s.contains("rounds")) s.at("rounds").get_to(base.gbt.rounds);
        if (s.contains("depth")) s.at("depth").get_to(base.gbt.depth);
        if (s.contains("learning_rate")) s.at("learning_rate").get_to(base.gbt.learning_rate);
        if (s.contains("l2")) s.at("l2").get_to(base.gbt.l2);
        if (s.contains("min_child_weight"))
            s.at("min_child_weight").get_to(base.gbt.min_child_weight);
    }
    if (j.contains("seq")) {
        const auto& s = j.at("seq");
        if (s.contains("hidden")) s.at("hidden").get_to(base.seq.hidden);
        if (s.contains("layers")) s.at("layers").get_to(base.seq.layers);
        if (s.contains("epochs")) s.at("epochs").get_to(base.seq.epochs);
        if (s.contains("batch")) s.at("batch").get_to(base.seq.batch);
        if (s.contains("learning_rate")) s.at("learning_rate").get_to(base.seq.learning_rate);
        if (s.contains("clip_norm")) s.at("clip_norm").get_to(base.seq.clip_norm);
        if (s.contains("patience")) s.at("patience").get_to(base.seq.patience);
        if (s.contains("val_fraction")) s.at("val_fraction").get_to(base.seq.val_fraction);
    }
    return base;
}

nlohmann::json hyper_to_json(const Hyper& h) {
    return {{"lr",
             {{"l2", h.lr.l2},
              {"learning_rate", h.lr.learning_rate},
              {"max_iters", h.lr.max_iters},
              {"tol", h.lr.tol}}},
            {"rf",
             {{"n_trees", h.rf.n_trees},
              {"max_depth", h.rf.max_depth},
              {"min_leaf", h.rf.min_leaf},
              {"features_per_split", h.rf.features_per_split}}},
            {"gbt",
             {{"rounds", h.gbt.rounds},
              {"depth", h.gbt.depth},
              {"learning_rate", h.gbt.learning_rate},
              {"l2", h.gbt.l2},
              {"min_child_weight", h.gbt.min_child_weight}}},
            {"seq",
             {{"hidden", h.seq.hidden},
              {"layers", h.seq.layers},
              {"epochs", h.seq.epochs},
              {"batch", h.seq.batch},
              {"learning_rate", h.seq.learning_rate},
              {"clip_norm", h.seq.clip_norm},
              {"patience", h.seq.patience},
              {"val_fraction", h.seq.val_fraction}}}};
}

}  // namespace

SweepConfig SweepConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("sweep config is not valid JSON: " + std::string(e.what()));
    }
    SweepConfig c;
    if (j.contains("claims_csv")) j.at("claims_csv").get_to(c.claims_csv);
    if (j.contains("demographics_csv")) j.at("demographics_csv").get_to(c.demographics_csv);
    if (j.contains("code_map")) j.at("code_map").get_to(c.code_map);
    if (j.contains("synth")) c.synth = SynthConfig::from_json(j.at("synth").dump());
    if (j.contains("windows")) j.at("windows").get_to(c.windows);
    if (j.contains("models")) j.at("models").get_to(c.models);
    if (j.contains("strategies")) j.at("strategies").get_to(c.strategies);
    if (j.contains("split_ratio")) j.at("split_ratio").get_to(c.split_ratio);
    if (j.contains("threshold")) j.at("threshold").get_to(c.threshold);
    if (j.contains("master_seed")) j.at("master_seed").get_to(c.master_seed);
    if (j.contains("smote_k")) j.at("smote_k").get_to(c.sampling.smote_k);
    if (j.contains("enn_k")) j.at("enn_k").get_to(c.sampling.enn_k);
    if (j.contains("hyper")) c.hyper = hyper_from_json(j.at("hyper"), c.hyper);
    return c;
}

std::string SweepConfig::to_json() const {
    nlohmann::json j{{"windows", windows},
                     {"models", models},
                     {"strategies", strategies},
                     {"split_ratio", split_ratio},
                     {"threshold", threshold},
                     {"master_seed", master_seed},
                     {"smote_k", sampling.smote_k},
                     {"enn_k", sampling.enn_k},
                     {"hyper", hyper_to_json(hyper)}};
    if (!claims_csv.empty()) {
        j["claims_csv"] = claims_csv;
        j["demographics_csv"] = demographics_csv;
        if (!code_map.empty()) j["code_map"] = code_map;
    }
    if (synth) j["synth"] = nlohmann::json::parse(synth->to_json());
    return j.dump(2);
}

namespace {

struct WindowData {
    std::vector<std::vector<double>> rows;  // static features, unscaled
    std::vector<SequenceTensor> tensors;
    std::vector<int> labels;
    SplitIndices split;
    std::string error;
};

// strategy resampling for tensors works on flattened standardized values,
// mapped back to raw space afterwards
std::vector<SequenceTensor> resample_tensors(Strategy strategy,
                                             const std::vector<SequenceTensor>& tensors,
                                             const std::vector<int>& labels, std::uint64_t seed,
                                             const SamplingParams& params,
                                             std::vector<int>& out_labels) {
    const int steps = tensors[0].steps;
    const int channels = tensors[0].channels;
    const std::size_t width = tensors[0].data.size();

    std::vector<double> mean(width, 0.0), sd(width, 0.0);
    for (const auto& t : tensors)
        for (std::size_t i = 0; i < width; ++i) mean[i] += t.data[i];
    for (auto& m : mean) m /= static_cast<double>(tensors.size());
    for (const auto& t : tensors)
        for (std::size_t i = 0; i < width; ++i) {
            const double d = t.data[i] - mean[i];
            sd[i] += d * d;
        }
    for (auto& s : sd) s = std::sqrt(s / static_cast<double>(tensors.size()));

    std::vector<std::vector<double>> flat(tensors.size(), std::vector<double>(width));
    for (std::size_t r = 0; r < tensors.size(); ++r)
        for (std::size_t i = 0; i < width; ++i)
            flat[r][i] = sd[i] > 0.0 ? (tensors[r].data[i] - mean[i]) / sd[i] : 0.0;

    const ResampleResult res = apply_strategy(strategy, flat, labels, seed, params);
    std::vector<SequenceTensor> out;
    out.reserve(res.rows.size());
    out_labels = res.labels;
    for (std::size_t r = 0; r < res.rows.size(); ++r) {
        SequenceTensor t;
        t.steps = steps;
        t.channels = channels;
        t.label = res.labels[r];
        t.patient_id = "resampled-" + std::to_string(r);
        t.data.resize(width);
        for (std::size_t i = 0; i < width; ++i)
            t.data[i] = sd[i] > 0.0 ? res.rows[r][i] * sd[i] + mean[i] : mean[i];
        out.push_back(std::move(t));
    }
    return out;
}

EvalReport run_cell(const SweepConfig& cfg, const WindowData& data, int window, ModelKind kind,
                    Strategy strategy) {
    EvalReport report;
    report.window_months = window;
    report.model = model_kind_name(kind);
    report.strategy = strategy_name(strategy);
    report.threshold = cfg.threshold;
    report.seed = Rng::stream(cfg.master_seed, static_cast<std::uint64_t>(window),
                              static_cast<std::uint64_t>(kind) + 1,
                              static_cast<std::uint64_t>(strategy) + 1)
                      .next_u64();
    try {
        if (!data.error.empty()) throw DataError(data.error);
        const auto& split = data.split;
        std::vector<int> train_labels, test_labels;
        for (const auto i : split.train) train_labels.push_back(data.labels[i]);
        for (const auto i : split.test) test_labels.push_back(data.labels[i]);

        std::vector<double> scores;
        if (!is_sequence_kind(kind)) {
            std::vector<std::vector<double>> train_rows, test_rows;
            for (const auto i : split.train) train_rows.push_back(data.rows[i]);
            for (const auto i : split.test) test_rows.push_back(data.rows[i]);

            std::vector<bool> numeric(feature_is_numeric().begin(), feature_is_numeric().end());
            const Scaler scaler = fit_scaler(train_rows, numeric);
            train_rows = apply_scaler(scaler, train_rows);
            test_rows = apply_scaler(scaler, test_rows);

            ResampleResult res =
                apply_strategy(strategy, train_rows, train_labels, report.seed, cfg.sampling);

            std::unique_ptr<Model> model;
            if (kind == ModelKind::LR) {
                model = train_logistic(res.rows, res.labels, cfg.hyper.lr);
            } else if (kind == ModelKind::RF) {
                ForestParams p = cfg.hyper.rf;
                p.seed = report.seed;
                p.jobs = 1;  // trees stay serial inside a grid cell
                model = train_random_forest(res.rows, res.labels, p);
            } else {
                model = train_gbt(res.rows, res.labels, cfg.hyper.gbt);
            }
            scores = predict_rows(*model, test_rows);
        } else {
            std::vector<SequenceTensor> train_tensors;
            std::vector<SequenceTensor> test_tensors;
            for (const auto i : split.train) train_tensors.push_back(data.tensors[i]);
            for (const auto i : split.test) test_tensors.push_back(data.tensors[i]);

            std::vector<int> res_labels;
            std::vector<SequenceTensor> res_tensors = resample_tensors(
                strategy, train_tensors, train_labels, report.seed, cfg.sampling, res_labels);

            SequenceParams p = cfg.hyper.seq;
            p.seed = report.seed;
            auto model = train_sequence(kind, res_tensors, res_labels, p);
            scores = predict_tensors(*model, test_tensors);
        }

        const EvalReport metrics = evaluate_scores(scores, test_labels, cfg.threshold);
        report.auroc = metrics.auroc;
        report.f1 = metrics.f1;
        report.precision = metrics.precision;
        report.recall = metrics.recall;
        report.confusion = metrics.confusion;
    } catch (const std::exception& e) {
        report.error = e.what();
    }
    return report;
}

}  // namespace

SweepReport run_sweep(const SweepConfig& cfg, const std::vector<PatientTimeline>& timelines,
                      unsigned jobs) {
    // window-level artifacts are shared by every cell in that window
    std::vector<WindowData> window_data(cfg.windows.size());
    parallel_for(cfg.windows.size(), jobs, [&](std::size_t wi) {
        WindowData& data = window_data[wi];
        const int window = cfg.windows[wi];
        try {
            const CohortResult cohort = identify_cohort(timelines, window);
            bool need_static = false, need_seq = false;
            for (const auto& m : cfg.models) {
                const auto kind = parse_model_kind(m);
                if (!kind) throw DataError("unknown model kind '" + m + "'");
                (is_sequence_kind(*kind) ? need_seq : need_static) = true;
            }
            for (const auto& entry : cohort.included) {
                const auto& t = timelines[entry.timeline_index];
                const auto w = ObservationWindow::from_anchor(*t.first_ckd3, window);
                if (need_static) {
                    auto fv = extract_static(t, w);
                    data.rows.emplace_back(fv.values.begin(), fv.values.end());
                }
                if (need_seq) {
                    auto tensor = extract_sequence(t, w);
                    tensor.label = entry.label ? 1 : 0;
                    data.tensors.push_back(std::move(tensor));
                }
                data.labels.push_back(entry.label ? 1 : 0);
            }
            const std::uint64_t split_seed =
                Rng::stream(cfg.master_seed, 0x3711, static_cast<std::uint64_t>(window)).next_u64();
            data.split = stratified_split(data.labels, cfg.split_ratio, split_seed);
        } catch (const std::exception& e) {
            data.error = e.what();
        }
    });

    struct Cell {
        std::size_t window_index;
        ModelKind kind;
        Strategy strategy;
    };
    std::vector<Cell> cells;
    for (std::size_t wi = 0; wi < cfg.windows.size(); ++wi)
        for (const auto& m : cfg.models)
            for (const auto& s : cfg.strategies) {
                const auto kind = parse_model_kind(m);
                const auto strategy = parse_strategy(s);
                if (!kind) throw DataError("unknown model kind '" + m + "'");
                if (!strategy) throw DataError("unknown strategy '" + s + "'");
                cells.push_back({wi, *kind, *strategy});
            }

    SweepReport report;
    report.cells.resize(cells.size());
    parallel_for(cells.size(), jobs, [&](std::size_t i) {
        report.cells[i] = run_cell(cfg, window_data[cells[i].window_index],
                                   cfg.windows[cells[i].window_index], cells[i].kind,
                                   cells[i].strategy);
    });

    double best = -1.0;
    for (std::size_t i = 0; i < report.cells.size(); ++i) {
        if (report.cells[i].ok() && report.cells[i].auroc > best) {
            best = report.cells[i].auroc;
            report.best_cell = i;
        }
    }
    return report;
}

std::string SweepReport::to_csv() const {
    std::ostringstream out;
    out << "window_months,model,strategy,auroc,f1,precision,recall,tp,fp,tn,fn,threshold,error\n";
    for (const auto& c : cells) {
        out << c.window_months << ',' << c.model << ',' << c.strategy << ',';
        if (c.ok())
            out << format_double(c.auroc) << ',' << format_double(c.f1) << ','
                << format_double(c.precision) << ',' << format_double(c.recall) << ','
                << c.confusion.tp << ',' << c.confusion.fp << ',' << c.confusion.tn << ','
                << c.confusion.fn << ',' << format_double(c.threshold) << ',';
        else
            out << ",,,,,,,," << format_double(c.threshold) << ',' << c.error;
        out << '\n';
    }
    return out.str();
}

std::string SweepReport::to_json() const {
    nlohmann::json j;
    auto& arr = j["cells"] = nlohmann::json::array();
    for (const auto& c : cells) {
        nlohmann::json cell{{"window_months", c.window_months},
                            {"model", c.model},
                            {"strategy", c.strategy}};
        if (c.ok()) {
            cell["auroc"] = c.auroc;
            cell["f1"] = c.f1;
            cell["precision"] = c.precision;
            cell["recall"] = c.recall;
            cell["confusion"] = {{"tp", c.confusion.tp},
                                 {"fp", c.confusion.fp},
                                 {"tn", c.confusion.tn},
                                 {"fn", c.confusion.fn}};
            cell["threshold"] = c.threshold;
        } else {
            cell["error"] = c.error;
        }
        arr.push_back(std::move(cell));
    }
    if (!cells.empty() && cells[best_cell].ok()) {
        j["best"] = {{"window_months", cells[best_cell].window_months},
                     {"model", cells[best_cell].model},
                     {"strategy", cells[best_cell].strategy},
                     {"auroc", cells[best_cell].auroc}};
    }
    return j.dump(2);
}

std::string comparison_plot_svg(const SweepReport& report, const std::string& metric) {
    // series keyed by (model, strategy)
    std::map<std::pair<std::string, std::string>, std::map<int, double>> series;
    for (const auto& c : report.cells) {
        if (!c.ok()) continue;
        series[{c.model, c.strategy}][c.window_months] = metric == "f1" ? c.f1 : c.auroc;
    }
    const double width = 720, height = 420, ml = 60, mr = 160, mt = 30, mb = 50;
    std::vector<int> windows;
    for (const auto& [key, points] : series)
        for (const auto& [w, v] : points)
            if (std::find(windows.begin(), windows.end(), w) == windows.end())
                windows.push_back(w);
    std::sort(windows.begin(), windows.end());

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n<rect width=\"" << width << "\" height=\"" << height
        << "\" fill=\"white\"/>\n";
    if (windows.empty()) {
        svg << "<text x=\"20\" y=\"40\">no successful cells</text>\n</svg>\n";
        return svg.str();
    }
    auto x_of = [&](int w) {
        const auto it = std::find(windows.begin(), windows.end(), w);
        const double t = windows.size() == 1
                             ? 0.5
                             : static_cast<double>(it - windows.begin()) /
                                   static_cast<double>(windows.size() - 1);
        return ml + t * (width - ml - mr);
    };
    auto y_of = [&](double v) { return mt + (1.0 - v) * (height - mt - mb); };

    for (double grid = 0.0; grid <= 1.0001; grid += 0.25) {
        svg << "<line x1=\"" << ml << "\" y1=\"" << y_of(grid) << "\" x2=\"" << width - mr
            << "\" y2=\"" << y_of(grid) << "\" stroke=\"#eeeeee\"/>\n";
        svg << "<text x=\"" << ml - 8 << "\" y=\"" << y_of(grid) + 4
            << "\" font-size=\"11\" text-anchor=\"end\">" << grid << "</text>\n";
    }
    for (const int w : windows)
        svg << "<text x=\"" << x_of(w) << "\" y=\"" << height - mb + 20
            << "\" font-size=\"11\" text-anchor=\"middle\">" << w << " mo</text>\n";

    // classical models in blue shades, sequence models in green shades
    const char* blues[] = {"#1f77b4", "#3a86c8", "#6baed6"};
    const char* greens[] = {"#2ca02c", "#4daf4a", "#74c476", "#238b45", "#00441b"};
    int blue_i = 0, green_i = 0, label_row = 0;
    for (const auto& [key, points] : series) {
        const auto kind = parse_model_kind(key.first);
        const bool seq = kind && is_sequence_kind(*kind);
        const char* color = seq ? greens[green_i++ % 5] : blues[blue_i++ % 3];
        std::ostringstream path;
        bool first = true;
        for (const int w : windows) {
            const auto it = points.find(w);
            if (it == points.end()) continue;
            path << (first ? "M" : "L") << x_of(w) << ' ' << y_of(it->second) << ' ';
            first = false;
        }
        svg << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"2\"/>\n";
        for (const int w : windows) {
            const auto it = points.find(w);
            if (it == points.end()) continue;
            svg << "<circle cx=\"" << x_of(w) << "\" cy=\"" << y_of(it->second)
                << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
        svg << "<text x=\"" << width - mr + 12 << "\" y=\"" << mt + 16 * label_row++
            << "\" font-size=\"11\" fill=\"" << color << "\">" << key.first << " ("
            << key.second << ")</text>\n";
    }
    svg << "<text x=\"" << ml << "\" y=\"" << mt - 10 << "\" font-size=\"13\">" << metric
        << " by observation window</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace ckd
