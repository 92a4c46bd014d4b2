#include "ckd/explain.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ckd/csv.hpp"
#include "ckd/errors.hpp"
#include "ckd/rng.hpp"

namespace ckd {

namespace {

struct PathElement {
    int feature_index = -1;
    double zero_fraction = 0.0;
    double one_fraction = 0.0;
    double pweight = 0.0;
};

void extend_path(std::vector<PathElement>& path, int depth, double zero_fraction,
                 double one_fraction, int feature_index) {
    path[depth].feature_index = feature_index;
    path[depth].zero_fraction = zero_fraction;
    path[depth].one_fraction = one_fraction;
    path[depth].pweight = depth == 0 ? 1.0 : 0.0;
    for (int i = depth - 1; i >= 0; --i) {
        path[i + 1].pweight +=
            one_fraction * path[i].pweight * (i + 1) / static_cast<double>(depth + 1);
        path[i].pweight =
            zero_fraction * path[i].pweight * (depth - i) / static_cast<double>(depth + 1);
    }
}

void unwind_path(std::vector<PathElement>& path, int depth, int index) {
    const double one_fraction = path[index].one_fraction;
    const double zero_fraction = path[index].zero_fraction;
    double next_one_portion = path[depth].pweight;
    for (int i = depth - 1; i >= 0; --i) {
        if (one_fraction != 0.0) {
            const double tmp = path[i].pweight;
            path[i].pweight =
                next_one_portion * (depth + 1) / static_cast<double>((i + 1) * one_fraction);
            next_one_portion =
                tmp - path[i].pweight * zero_fraction * (depth - i) / static_cast<double>(depth + 1);
        } else {
            path[i].pweight = path[i].pweight * (depth + 1) /
                              (zero_fraction * static_cast<double>(depth - i));
        }
    }
    for (int i = index; i < depth; ++i) {
        path[i].feature_index = path[i + 1].feature_index;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

double unwound_path_sum(const std::vector<PathElement>& path, int depth, int index) {
    const double one_fraction = path[index].one_fraction;
    const double zero_fraction = path[index].zero_fraction;
    double next_one_portion = path[depth].pweight;
    double total = 0.0;
    for (int i = depth - 1; i >= 0; --i) {
        if (one_fraction != 0.0) {
            const double tmp =
                next_one_portion * (depth + 1) / static_cast<double>((i + 1) * one_fraction);
            total += tmp;
            next_one_portion =
                path[i].pweight - tmp * zero_fraction * (depth - i) / static_cast<double>(depth + 1);
        } else {
            total += path[i].pweight / (zero_fraction * (depth - i) / static_cast<double>(depth + 1));
        }
    }
    return total;
}

void shap_recurse(const Tree& tree, const std::vector<double>& x, std::vector<double>& phi,
                  double scale, int node, std::vector<PathElement> path, int depth,
                  double parent_zero_fraction, double parent_one_fraction,
                  int parent_feature_index) {
    path.resize(depth + 1);
    extend_path(path, depth, parent_zero_fraction, parent_one_fraction, parent_feature_index);
    const TreeNode& n = tree.nodes[node];

    if (n.feature < 0) {
        for (int i = 1; i <= depth; ++i) {
            // a (0, 0) element marks an empty subtree: no mass, no attribution
            if (path[i].one_fraction == 0.0 && path[i].zero_fraction == 0.0) continue;
            const double w = unwound_path_sum(path, depth, i);
            phi[path[i].feature_index] +=
                w * (path[i].one_fraction - path[i].zero_fraction) * n.value * scale;
        }
        return;
    }

    const int hot = x[n.feature] <= n.threshold ? n.left : n.right;
    const int cold = hot == n.left ? n.right : n.left;
    // a zero-cover node can only be reached along the instance path; its
    // children carry no conditional mass
    const double hot_zero_fraction = n.cover > 0.0 ? tree.nodes[hot].cover / n.cover : 0.0;
    const double cold_zero_fraction = n.cover > 0.0 ? tree.nodes[cold].cover / n.cover : 0.0;
    double incoming_zero_fraction = 1.0;
    double incoming_one_fraction = 1.0;

    // a repeated split on the same feature undoes its earlier path entry
    int previous = -1;
    for (int i = 1; i <= depth; ++i) {
        if (path[i].feature_index == n.feature) {
            previous = i;
            break;
        }
    }
    if (previous >= 0) {
        incoming_zero_fraction = path[previous].zero_fraction;
        incoming_one_fraction = path[previous].one_fraction;
        unwind_path(path, depth, previous);
        depth -= 1;
    }

    shap_recurse(tree, x, phi, scale, hot, path, depth + 1,
                 hot_zero_fraction * incoming_zero_fraction, incoming_one_fraction, n.feature);
    if (cold_zero_fraction * incoming_zero_fraction > 0.0)
        shap_recurse(tree, x, phi, scale, cold, path, depth + 1,
                     cold_zero_fraction * incoming_zero_fraction, 0.0, n.feature);
}

double cover_weighted_mean(const Tree& tree, int node) {
    const TreeNode& n = tree.nodes[node];
    if (n.feature < 0) return n.value;
    if (n.cover <= 0.0) return 0.0;
    double total = 0.0;
    if (tree.nodes[n.left].cover > 0.0)
        total += tree.nodes[n.left].cover * cover_weighted_mean(tree, n.left);
    if (tree.nodes[n.right].cover > 0.0)
        total += tree.nodes[n.right].cover * cover_weighted_mean(tree, n.right);
    return total / n.cover;
}

}  // namespace

void tree_shap_single(const Tree& tree, const std::vector<double>& x, std::vector<double>& phi,
                      double& base_value, double scale) {
    base_value += cover_weighted_mean(tree, 0) * scale;
    shap_recurse(tree, x, phi, scale, 0, {}, 0, 1.0, 1.0, -1);
}

ShapExplanation tree_shap(const Model& model, const std::vector<double>& instance) {
    ShapExplanation out;
    out.contributions.assign(instance.size(), 0.0);
    out.display_values = instance;

    if (model.kind() == ModelKind::RF) {
        const auto& forest = static_cast<const ForestModel&>(model);
        if (static_cast<int>(instance.size()) != forest.n_features)
            throw DataError("tree_shap: instance arity mismatch");
        const double scale = 1.0 / static_cast<double>(forest.trees.size());
        for (const auto& tree : forest.trees)
            tree_shap_single(tree, instance, out.contributions, out.base_value, scale);
        out.model_output = forest.predict_row(instance);
        out.space = "probability";
    } else if (model.kind() == ModelKind::GBT) {
        const auto& gbt = static_cast<const GbtModel&>(model);
        if (static_cast<int>(instance.size()) != gbt.n_features)
            throw DataError("tree_shap: instance arity mismatch");
        out.base_value = gbt.base_score;
        for (const auto& tree : gbt.trees) {
            double dummy = 0.0;
            tree_shap_single(tree, instance, out.contributions, dummy, 1.0);
            out.base_value += dummy;
        }
        out.model_output = gbt.margin(instance);
        out.space = "margin";
    } else {
        throw DataError("tree_shap requires a tree-ensemble model (RF or GBT)");
    }
    return out;
}

namespace {

// dense solve by Gaussian elimination with partial pivoting
std::vector<double> solve_linear(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        if (std::fabs(a[col][col]) < 1e-300) throw DataError("kernel_shap: singular system");
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
        x[i] = acc / a[i][i];
    }
    return x;
}

}  // namespace

ShapExplanation kernel_shap(const ScoreFunction& score, const std::vector<double>& instance,
                            const std::vector<std::vector<double>>& background,
                            const KernelShapConfig& config, std::uint64_t seed) {
    if (background.empty()) throw DataError("kernel_shap: empty background");
    const std::size_t m = instance.size();
    for (const auto& row : background)
        if (row.size() != m) throw DataError("kernel_shap: background arity mismatch");

    // background subsample with a fixed stream
    std::vector<std::size_t> bg_idx(background.size());
    std::iota(bg_idx.begin(), bg_idx.end(), std::size_t{0});
    if (background.size() > config.background_limit) {
        Rng rng = Rng::stream(seed, 0xb6);
        rng.shuffle(bg_idx);
        bg_idx.resize(config.background_limit);
        std::sort(bg_idx.begin(), bg_idx.end());
    }

    std::vector<double> masked(m);
    auto value_of = [&](const std::vector<bool>& coalition) {
        double total = 0.0;
        for (const auto bi : bg_idx) {
            for (std::size_t f = 0; f < m; ++f)
                masked[f] = coalition[f] ? instance[f] : background[bi][f];
            const double v = score(masked);
            if (!std::isfinite(v)) throw DataError("kernel_shap: scorer returned non-finite value");
            total += v;
        }
        return total / static_cast<double>(bg_idx.size());
    };

    const double v_empty = value_of(std::vector<bool>(m, false));
    const double v_full = value_of(std::vector<bool>(m, true));

    ShapExplanation out;
    out.base_value = v_empty;
    out.model_output = v_full;
    out.display_values = instance;
    out.space = "scorer";
    out.contributions.assign(m, 0.0);
    if (m == 0) return out;
    if (m == 1) {
        out.contributions[0] = v_full - v_empty;
        return out;
    }

    // collect weighted coalitions (interior sizes only)
    std::vector<std::pair<std::vector<bool>, double>> samples;  // mask, kernel weight
    if (static_cast<int>(m) <= config.exhaustive_max) {
        auto choose = [](std::size_t n, std::size_t k) {
            double r = 1.0;
            for (std::size_t i = 0; i < k; ++i)
                r = r * static_cast<double>(n - i) / static_cast<double>(i + 1);
            return r;
        };
        for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << m); ++mask) {
            std::vector<bool> z(m, false);
            std::size_t size = 0;
            for (std::size_t f = 0; f < m; ++f)
                if (mask & (std::uint64_t{1} << f)) {
                    z[f] = true;
                    ++size;
                }
            const double w = (m - 1.0) / (choose(m, size) * size * (m - size));
            samples.emplace_back(std::move(z), w);
        }
    } else {
        // paired sampling: a random interior size, a random subset, and its complement
        std::map<std::vector<bool>, double> counts;
        std::vector<double> size_weight(m, 0.0);
        double weight_sum = 0.0;
        for (std::size_t s = 1; s < m; ++s) {
            size_weight[s] = (m - 1.0) / (static_cast<double>(s) * (m - s));
            weight_sum += size_weight[s];
        }
        std::vector<std::size_t> order(m);
        for (std::size_t draw = 0; draw < config.n_samples / 2; ++draw) {
            Rng rng = Rng::stream(seed, 0xc0a1, draw);
            double pick = rng.uniform() * weight_sum;
            std::size_t size = 1;
            for (std::size_t s = 1; s < m; ++s) {
                pick -= size_weight[s];
                if (pick <= 0.0) {
                    size = s;
                    break;
                }
            }
            std::iota(order.begin(), order.end(), std::size_t{0});
            rng.shuffle(order);
            std::vector<bool> z(m, false);
            for (std::size_t i = 0; i < size; ++i) z[order[i]] = true;
            counts[z] += 1.0;
            std::vector<bool> complement(m);
            for (std::size_t f = 0; f < m; ++f) complement[f] = !z[f];
            counts[complement] += 1.0;
        }
        for (auto& [z, c] : counts) samples.emplace_back(z, c);
    }

    // eliminate the last feature through the additivity constraint, then
    // solve the weighted normal equations
    const std::size_t p = m - 1;
    std::vector<std::vector<double>> ata(p, std::vector<double>(p, 0.0));
    std::vector<double> atb(p, 0.0);
    const double delta = v_full - v_empty;
    std::vector<double> row(p);
    for (const auto& [z, w] : samples) {
        const double v = value_of(z);
        const double zm = z[m - 1] ? 1.0 : 0.0;
        for (std::size_t f = 0; f < p; ++f) row[f] = (z[f] ? 1.0 : 0.0) - zm;
        const double y = v - v_empty - zm * delta;
        for (std::size_t i = 0; i < p; ++i) {
            if (row[i] == 0.0) continue;
            atb[i] += w * row[i] * y;
            for (std::size_t j = 0; j < p; ++j) ata[i][j] += w * row[i] * row[j];
        }
    }
    const std::vector<double> phi = solve_linear(std::move(ata), std::move(atb));
    double sum = 0.0;
    for (std::size_t f = 0; f < p; ++f) {
        out.contributions[f] = phi[f];
        sum += phi[f];
    }
    out.contributions[m - 1] = delta - sum;
    return out;
}

ImportanceRanking feature_importance(const Model& model, const std::vector<std::string>& names) {
    ImportanceRanking ranking;
    std::vector<double> raw;
    if (model.kind() == ModelKind::RF) {
        raw = static_cast<const ForestModel&>(model).impurity_importance;
        ranking.method = "impurity";
    } else if (model.kind() == ModelKind::GBT) {
        raw = static_cast<const GbtModel&>(model).gain_importance;
        ranking.method = "gain";
    } else if (model.kind() == ModelKind::LR) {
        for (const double w : static_cast<const LogisticModel&>(model).weights)
            raw.push_back(std::fabs(w));
        ranking.method = "|coefficient|";
    } else {
        throw DataError("feature_importance requires LR, RF, or GBT; "
                        "use mean|SHAP| for sequence models");
    }
    if (names.size() != raw.size()) throw DataError("feature_importance: name arity mismatch");

    double total = std::accumulate(raw.begin(), raw.end(), 0.0);
    if (total <= 0.0) total = 1.0;
    for (std::size_t i = 0; i < raw.size(); ++i) ranking.entries.emplace_back(names[i], raw[i] / total);
    std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return ranking;
}

ImportanceRanking mean_abs_shap(const std::vector<ShapExplanation>& explanations) {
    if (explanations.empty()) throw DataError("mean_abs_shap: no explanations");
    ImportanceRanking ranking;
    ranking.method = "mean|SHAP|";
    const std::size_t m = explanations[0].contributions.size();
    std::vector<double> acc(m, 0.0);
    for (const auto& e : explanations)
        for (std::size_t f = 0; f < m; ++f) acc[f] += std::fabs(e.contributions[f]);
    double total = std::accumulate(acc.begin(), acc.end(), 0.0);
    if (total <= 0.0) total = 1.0;
    const auto& names = explanations[0].feature_names;
    for (std::size_t f = 0; f < m; ++f)
        ranking.entries.emplace_back(names.size() == m ? names[f] : "f" + std::to_string(f),
                                     acc[f] / total);
    std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return ranking;
}

std::string importance_csv(const ImportanceRanking& ranking) {
    std::ostringstream out;
    out << "feature,importance,method\n";
    for (const auto& [name, value] : ranking.entries)
        out << name << ',' << format_double(value) << ',' << ranking.method << '\n';
    return out.str();
}

ForcePlot render_force_plot(const ShapExplanation& explanation) {
    const std::size_t m = explanation.contributions.size();
    struct Segment {
        std::string label;
        double phi;
    };
    std::vector<Segment> positives, negatives;
    for (std::size_t f = 0; f < m; ++f) {
        const double phi = explanation.contributions[f];
        if (phi == 0.0) continue;
        std::string name = f < explanation.feature_names.size() ? explanation.feature_names[f]
                                                                : "f" + std::to_string(f);
        char value[48];
        std::snprintf(value, sizeof(value), "%.4g",
                      f < explanation.display_values.size() ? explanation.display_values[f] : 0.0);
        Segment seg{name + "=" + value, phi};
        (phi > 0.0 ? positives : negatives).push_back(std::move(seg));
    }
    auto by_magnitude = [](const Segment& a, const Segment& b) {
        return std::fabs(a.phi) > std::fabs(b.phi);
    };
    std::stable_sort(positives.begin(), positives.end(), by_magnitude);
    std::stable_sort(negatives.begin(), negatives.end(), by_magnitude);

    double pos_total = 0.0, neg_total = 0.0;
    for (const auto& s : positives) pos_total += s.phi;
    for (const auto& s : negatives) neg_total += s.phi;

    // value axis: base at the left edge of the red band, output where the
    // blue band ends
    const double lo = std::min({explanation.base_value, explanation.model_output,
                                explanation.base_value + pos_total});
    const double hi = std::max({explanation.base_value, explanation.model_output,
                                explanation.base_value + pos_total});
    const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
    const double width = 840.0, left = 60.0, right = 60.0;
    auto x_of = [&](double v) { return left + (v - lo) / span * (width - left - right); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"840\" height=\"180\" "
           "viewBox=\"0 0 840 180\">\n";
    svg << "<rect width=\"840\" height=\"180\" fill=\"white\"/>\n";
    svg << "<line x1=\"" << left << "\" y1=\"80\" x2=\"" << width - right
        << "\" y2=\"80\" stroke=\"#cccccc\"/>\n";

    double cursor = explanation.base_value;
    int label_slot = 0;
    auto draw = [&](const Segment& s, const char* color) {
        const double x0 = x_of(std::min(cursor, cursor + s.phi));
        const double x1 = x_of(std::max(cursor, cursor + s.phi));
        svg << "<rect x=\"" << x0 << "\" y=\"64\" width=\"" << std::max(0.5, x1 - x0)
            << "\" height=\"32\" fill=\"" << color << "\" stroke=\"white\" stroke-width=\"0.5\">"
            << "<title>" << s.label << " (phi=" << s.phi << ")</title></rect>\n";
        const double y = 120 + 16 * (label_slot++ % 3);
        svg << "<text x=\"" << (x0 + x1) / 2.0 << "\" y=\"" << y
            << "\" font-size=\"10\" text-anchor=\"middle\" fill=\"" << color << "\">" << s.label
            << "</text>\n";
        cursor += s.phi;
    };
    for (const auto& s : positives) draw(s, "#d62728");
    for (const auto& s : negatives) draw(s, "#1f77b4");

    svg << "<line x1=\"" << x_of(explanation.base_value) << "\" y1=\"50\" x2=\""
        << x_of(explanation.base_value) << "\" y2=\"110\" stroke=\"#555555\" "
           "stroke-dasharray=\"4 2\"/>\n";
    svg << "<text x=\"" << x_of(explanation.base_value)
        << "\" y=\"44\" font-size=\"11\" text-anchor=\"middle\">base " << explanation.base_value
        << "</text>\n";
    svg << "<line x1=\"" << x_of(explanation.model_output) << "\" y1=\"50\" x2=\""
        << x_of(explanation.model_output) << "\" y2=\"110\" stroke=\"#000000\"/>\n";
    svg << "<text x=\"" << x_of(explanation.model_output)
        << "\" y=\"30\" font-size=\"12\" font-weight=\"bold\" text-anchor=\"middle\">output "
        << explanation.model_output << " (" << explanation.space << ")</text>\n";
    svg << "</svg>\n";

    nlohmann::json payload;
    payload["base_value"] = explanation.base_value;
    payload["model_output"] = explanation.model_output;
    payload["space"] = explanation.space;
    auto& contribs = payload["contributions"] = nlohmann::json::array();
    for (std::size_t f = 0; f < m; ++f) {
        contribs.push_back(
            {{"feature",
              f < explanation.feature_names.size() ? explanation.feature_names[f]
                                                   : "f" + std::to_string(f)},
             {"phi", explanation.contributions[f]},
             {"display_value",
              f < explanation.display_values.size() ? explanation.display_values[f] : 0.0}});
    }

    ForcePlot plot;
    plot.svg = svg.str();
    plot.json = payload.dump(2);
    return plot;
}

}  // namespace ckd
