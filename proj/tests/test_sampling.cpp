#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "ckd/errors.hpp"
#include "ckd/rng.hpp"
#include "ckd/sampling.hpp"

using namespace ckd;

namespace {

using Rows = std::vector<std::vector<double>>;

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return d;
}

// all-pairs kNN with (distance, index) ordering, the O(n^2) reference
std::vector<std::size_t> knn_oracle(const Rows& rows, std::size_t query, std::size_t k,
                                    const std::vector<std::size_t>& pool) {
    std::vector<std::pair<double, std::size_t>> d;
    for (const auto j : pool)
        if (j != query) d.emplace_back(dist2(rows[query], rows[j]), j);
    std::sort(d.begin(), d.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < std::min(k, d.size()); ++i) out.push_back(d[i].second);
    return out;
}

}  // namespace

TEST_CASE("smote: degenerate identical points") {
    Rows minority{{2.0, -1.0}, {2.0, -1.0}};
    const auto synth = smote(minority, 1, 8, 42);
    REQUIRE(synth.size() == 8);
    for (const auto& row : synth) {
        CHECK(row[0] == doctest::Approx(2.0));
        CHECK(row[1] == doctest::Approx(-1.0));
    }
}

TEST_CASE("smote: synthetics lie on the segment between the two points") {
    Rows minority{{0.0, 0.0}, {1.0, 1.0}};
    const auto synth = smote(minority, 1, 50, 7);
    for (const auto& row : synth) {
        CHECK(row[0] == doctest::Approx(row[1]).epsilon(1e-12));
        CHECK(row[0] >= 0.0);
        CHECK(row[0] <= 1.0);
    }
}

TEST_CASE("smote: matches an independent oracle with the documented RNG contract") {
    Rows minority{{0.0, 0.0}, {1.0, 0.2}, {0.2, 1.1}, {4.0, 4.0}, {4.4, 3.9}};
    const int k = 2;
    const std::uint64_t seed = 99;
    const auto synth = smote(minority, k, 10, seed);
    REQUIRE(synth.size() == 10);

    std::vector<std::size_t> pool(minority.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t j = 0; j < 10; ++j) {
        Rng rng = Rng::stream(seed, 0x5307e, j);
        const std::size_t base = rng.uniform_index(minority.size());
        const auto nn = knn_oracle(minority, base, k, pool);
        const std::size_t pick = nn[rng.uniform_index(nn.size())];
        const double lambda = rng.uniform();
        for (std::size_t f = 0; f < 2; ++f) {
            const double expected =
                minority[base][f] + lambda * (minority[pick][f] - minority[base][f]);
            CHECK(synth[j][f] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(smote(Rows{{0.0}}, 1, 3, 1), DataError);
}

TEST_CASE("smote: convex combination property") {
    Rng rng(2024);
    Rows minority;
    for (int i = 0; i < 30; ++i) minority.push_back({rng.normal(), rng.normal(), rng.normal()});
    const auto synth = smote(minority, 5, 300, 17);
    for (const auto& s : synth) {
        // must be expressible as x_i + lambda (x_j - x_i) for some pair
        bool found = false;
        for (std::size_t i = 0; i < minority.size() && !found; ++i) {
            for (std::size_t j = 0; j < minority.size() && !found; ++j) {
                if (i == j) continue;
                const double dx = minority[j][0] - minority[i][0];
                if (std::fabs(dx) < 1e-12) continue;
                const double lambda = (s[0] - minority[i][0]) / dx;
                if (lambda < -1e-9 || lambda > 1.0 + 1e-9) continue;
                bool all = true;
                for (int f = 1; f < 3; ++f) {
                    const double expect =
                        minority[i][f] + lambda * (minority[j][f] - minority[i][f]);
                    if (std::fabs(expect - s[f]) > 1e-7) {
                        all = false;
                        break;
                    }
                }
                found = all;
            }
        }
        CHECK(found);
    }
}

TEST_CASE("adasyn: balanced input creates nothing") {
    Rows rows{{0.0}, {1.0}, {10.0}, {11.0}};
    std::vector<int> labels{1, 1, 0, 0};
    const auto result = adasyn(rows, labels, 1, 3);
    CHECK(result.synthetic.empty());
}

TEST_CASE("adasyn: per-point allocation matches a hand-computed ratio table") {
    // minority points: two deep in majority territory, two isolated
    Rows rows{
        {0.0, 0.0}, {0.5, 0.0}, {10.0, 10.0}, {10.5, 10.0},       // minority
        {0.2, 0.1}, {0.4, -0.1}, {0.1, -0.2}, {0.6, 0.2},          // majority near first pair
        {20.0, 20.0}, {21.0, 21.0}, {20.5, 20.2}, {22.0, 20.0},    // majority far away
    };
    std::vector<int> labels{1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0};
    const int k = 3;
    const auto result = adasyn(rows, labels, k, 11);

    // oracle: r_i = majority share among k nearest, g_i = round(rhat_i * G)
    std::vector<std::size_t> pool(rows.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<double> ratio;
    for (const std::size_t i : {0, 1, 2, 3}) {
        const auto nn = knn_oracle(rows, i, k, pool);
        double majority = 0.0;
        for (const auto j : nn) majority += labels[j] == 0 ? 1.0 : 0.0;
        ratio.push_back(majority / static_cast<double>(nn.size()));
    }
    const double total = std::accumulate(ratio.begin(), ratio.end(), 0.0);
    const double g_total = 8.0 - 4.0;
    std::size_t expected_total = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto expected = static_cast<std::size_t>(std::llround(ratio[i] / total * g_total));
        CHECK(result.per_point[i] == expected);
        expected_total += expected;
    }
    CHECK(result.synthetic.size() == expected_total);
    // rounding slack: total within minority-count of G
    CHECK(std::llabs(static_cast<long long>(result.synthetic.size()) - 4) <= 4);
}

TEST_CASE("adasyn: identical neighborhoods allocate evenly; fallback reported") {
    // perfectly separated: every r_i = 0 -> uniform fallback
    Rows rows{{0.0}, {0.1}, {0.2}, {0.3}, {100.0}, {100.1}, {100.2}, {100.3},
              {100.4}, {100.5}};
    std::vector<int> labels{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
    const auto result = adasyn(rows, labels, 3, 5);
    CHECK(result.uniform_fallback);
    std::size_t total = 0;
    for (const auto g : result.per_point) {
        total += g;
        CHECK(g == 1);  // each of 4 points gets round(G/4) = round(0.5) = 1
    }
    CHECK(total == result.synthetic.size());
}

TEST_CASE("enn: well-separated clusters keep everything") {
    Rows rows{{0.0}, {0.2}, {0.4}, {10.0}, {10.2}, {10.4}, {10.6}};
    std::vector<int> labels{1, 1, 1, 0, 0, 0, 0};
    const auto retained = enn(rows, labels, 3);
    CHECK(retained.size() == rows.size());
}

TEST_CASE("enn: lone majority point inside the minority cluster is removed") {
    Rows rows{{0.0}, {0.1}, {0.2}, {0.15}, {9.0}, {9.1}, {9.2}, {9.3}, {0.12}};
    std::vector<int> labels{1, 1, 1, 1, 0, 0, 0, 0, 0};
    // rows[8] is a majority point surrounded by minority
    const auto retained = enn(rows, labels, 3);
    CHECK(std::find(retained.begin(), retained.end(), 8) == retained.end());
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(std::find(retained.begin(), retained.end(), i) != retained.end());
}

TEST_CASE("enn: 12-point fixture equals the O(n^2) oracle") {
    Rng rng(5150);
    for (int rep = 0; rep < 20; ++rep) {
        Rows rows;
        std::vector<int> labels;
        for (int i = 0; i < 12; ++i) {
            const bool pos = i < 4;
            rows.push_back({rng.normal(pos ? 0.0 : 1.2, 0.8), rng.normal(0.0, 0.8)});
            labels.push_back(pos ? 1 : 0);
        }
        const int k = 3;
        const auto retained = enn(rows, labels, k);

        std::vector<std::size_t> pool(rows.size());
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        std::vector<std::size_t> expected;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (labels[i] == 1) {  // minority retained unconditionally
                expected.push_back(i);
                continue;
            }
            const auto nn = knn_oracle(rows, i, k, pool);
            std::size_t agree = 0;
            for (const auto j : nn) agree += labels[j] == labels[i];
            if (2 * agree >= nn.size()) expected.push_back(i);
        }
        CHECK(retained == expected);
    }
}

TEST_CASE("enn: guards") {
    Rows rows{{0.0}, {1.0}};
    std::vector<int> labels{1, 0};
    CHECK_THROWS_AS(enn(rows, labels, 3), DataError);
    CHECK_THROWS_AS(enn(rows, labels, 0), DataError);
}

TEST_CASE("oss: separable classes reduce the majority to the seed row") {
    Rows rows{{0.0}, {0.1}, {0.2}, {50.0}, {50.1}, {50.2}, {50.3}};
    std::vector<int> labels{1, 1, 1, 0, 0, 0, 0};
    const auto retained = oss(rows, labels, 9);
    std::size_t majority_kept = 0;
    for (const auto i : retained) majority_kept += labels[i] == 0;
    CHECK(majority_kept == 1);
    std::size_t minority_kept = 0;
    for (const auto i : retained) minority_kept += labels[i] == 1;
    CHECK(minority_kept == 3);
}

TEST_CASE("oss: the majority member of a Tomek link is dropped in phase 2") {
    // majority point 3 and minority point 2 are mutual nearest neighbors
    Rows rows{{0.0}, {0.4}, {1.0}, {1.2}, {5.0}, {5.2}, {5.4}};
    std::vector<int> labels{1, 1, 1, 0, 0, 0, 0};
    const auto retained = oss(rows, labels, 1);
    CHECK(std::find(retained.begin(), retained.end(), 3) == retained.end());
}

TEST_CASE("oss: 15-point fixture matches the exhaustive two-phase oracle") {
    Rng data_rng(31337);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rows rows;
        std::vector<int> labels;
        for (int i = 0; i < 15; ++i) {
            const bool pos = i < 5;
            rows.push_back({data_rng.normal(pos ? 0.0 : 1.5, 1.0),
                            data_rng.normal(pos ? 0.0 : 0.5, 1.0)});
            labels.push_back(pos ? 1 : 0);
        }

        // oracle phase 1
        std::vector<std::size_t> minority, majority;
        for (std::size_t i = 0; i < rows.size(); ++i)
            (labels[i] ? minority : majority).push_back(i);
        Rng pick = Rng::stream(seed, 0x0551);
        std::vector<std::size_t> kept = minority;
        kept.push_back(majority[pick.uniform_index(majority.size())]);
        std::sort(kept.begin(), kept.end());
        auto nearest = [&](std::size_t q, const std::vector<std::size_t>& pool) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t who = q;
            for (const auto j : pool) {
                if (j == q) continue;
                const double d = dist2(rows[q], rows[j]);
                if (d < best) {
                    best = d;
                    who = j;
                }
            }
            return who;
        };
        for (const auto i : majority) {
            if (std::find(kept.begin(), kept.end(), i) != kept.end()) continue;
            const auto nn = nearest(i, kept);
            if (labels[nn] != labels[i]) {
                kept.push_back(i);
                std::sort(kept.begin(), kept.end());
            }
        }
        // oracle phase 2: Tomek links inside the kept set
        std::vector<std::size_t> expected;
        for (const auto i : kept) {
            if (labels[i] == 0) {
                const auto nn = nearest(i, kept);
                if (labels[nn] == 1 && nearest(nn, kept) == i) continue;
            }
            expected.push_back(i);
        }

        CHECK(oss(rows, labels, seed) == expected);
    }
}

TEST_CASE("apply_strategy: oversamplers reach parity") {
    Rng rng(8);
    Rows rows;
    std::vector<int> labels;
    for (int i = 0; i < 200; ++i) {
        const bool pos = i < 50;
        rows.push_back({rng.normal(pos ? 1.0 : 0.0), rng.normal()});
        labels.push_back(pos ? 1 : 0);
    }
    const auto sm1 = apply_strategy(Strategy::SM1, rows, labels, 3);
    CHECK(sm1.report.after_positive == sm1.report.after_negative);
    CHECK(sm1.report.after_negative == 150);
    CHECK(sm1.report.synthetic_created == 100);

    const auto sm2 = apply_strategy(Strategy::SM2, rows, labels, 3);
    // ADASYN parity holds within rounding slack of the minority count
    const long long gap = static_cast<long long>(sm2.report.after_positive) -
                          static_cast<long long>(sm2.report.after_negative);
    CHECK(std::llabs(gap) <= 50);
}

TEST_CASE("apply_strategy: under-samplers only remove majority rows") {
    Rng rng(9);
    Rows rows;
    std::vector<int> labels;
    for (int i = 0; i < 120; ++i) {
        const bool pos = i < 30;
        rows.push_back({rng.normal(pos ? 0.6 : 0.0), rng.normal()});
        labels.push_back(pos ? 1 : 0);
    }
    for (const auto strategy : {Strategy::SM3, Strategy::SM4}) {
        const auto result = apply_strategy(strategy, rows, labels, 5);
        CHECK(result.report.after_positive == 30);  // minority untouched
        CHECK(result.report.after_negative <= 90);
        CHECK(result.report.synthetic_created == 0);
        CHECK(result.rows.size() <= rows.size());
    }
}

TEST_CASE("apply_strategy: SM5 equals the composition of the two oracles") {
    Rng rng(77);
    Rows rows;
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) {
        const bool pos = i < 7;
        rows.push_back({rng.normal(pos ? 0.8 : 0.0, 0.7), rng.normal(0.0, 0.7)});
        labels.push_back(pos ? 1 : 0);
    }
    const std::uint64_t seed = 4242;
    const auto sm5 = apply_strategy(Strategy::SM5, rows, labels, seed);

    // composition oracle: SMOTE to parity, then ENN on the augmented set
    Rows minority;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (labels[i] == 1) minority.push_back(rows[i]);
    const auto synth = smote(minority, 5, 13 - 7, seed);
    Rows augmented = rows;
    std::vector<int> aug_labels = labels;
    for (const auto& s : synth) {
        augmented.push_back(s);
        aug_labels.push_back(1);
    }
    const auto retained = enn(augmented, aug_labels, 3);
    REQUIRE(sm5.rows.size() == retained.size());
    for (std::size_t i = 0; i < retained.size(); ++i) {
        CHECK(sm5.rows[i] == augmented[retained[i]]);
        CHECK(sm5.labels[i] == aug_labels[retained[i]]);
    }
}

TEST_CASE("apply_strategy: determinism and single-class guard") {
    Rng rng(12);
    Rows rows;
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
        rows.push_back({rng.normal(), rng.normal()});
        labels.push_back(i < 20 ? 1 : 0);
    }
    for (const auto strategy : {Strategy::SM1, Strategy::SM2, Strategy::SM3, Strategy::SM4,
                                Strategy::SM5, Strategy::SM6, Strategy::SM7, Strategy::SM8}) {
        const auto a = apply_strategy(strategy, rows, labels, 31);
        const auto b = apply_strategy(strategy, rows, labels, 31);
        CHECK(a.rows == b.rows);
        CHECK(a.labels == b.labels);
    }
    std::vector<int> one_class(labels.size(), 1);
    CHECK_THROWS_AS(apply_strategy(Strategy::SM1, rows, one_class, 1), DataError);
}

TEST_CASE("strategy names parse back") {
    for (int i = 0; i < 8; ++i) {
        const auto s = static_cast<Strategy>(i);
        CHECK(parse_strategy(strategy_name(s)) == s);
    }
    CHECK(!parse_strategy("SM9"));
}
