#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ckd/errors.hpp"
#include "ckd/models/seq.hpp"
#include "ckd/rng.hpp"
#include "ckd/stats.hpp"

using namespace ckd;

namespace {

SequenceTensor random_tensor(Rng& rng, int steps, int channels) {
    SequenceTensor t;
    t.steps = steps;
    t.channels = channels;
    t.data.resize(static_cast<std::size_t>(steps) * channels);
    for (auto& v : t.data) v = rng.normal();
    return t;
}

// max relative error of analytic vs central-difference gradients over every
// parameter of every block
double max_grad_rel_error(ModelKind kind, int steps, int channels, int hidden, int layers,
                          std::uint64_t seed) {
    auto net = make_sequence_net(kind, channels, hidden, layers, seed);
    Rng rng = Rng::stream(seed, 0xf00d);
    std::vector<SequenceTensor> batch_data;
    std::vector<const SequenceTensor*> batch;
    std::vector<int> labels;
    for (int i = 0; i < 6; ++i) {
        batch_data.push_back(random_tensor(rng, steps, channels));
        labels.push_back(i % 2);
    }
    for (const auto& t : batch_data) batch.push_back(&t);

    net->zero_grad();
    net_batch_loss(*net, batch, labels, true);

    // copy analytic grads, then probe every coordinate
    std::vector<std::vector<double>> analytic;
    for (auto* block : net->params()) analytic.push_back(block->g);

    const double h = 1e-5;
    double worst = 0.0;
    auto blocks = net->params();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (std::size_t i = 0; i < blocks[b]->w.size(); ++i) {
            const double keep = blocks[b]->w[i];
            blocks[b]->w[i] = keep + h;
            const double up = net_batch_loss(*net, batch, labels, false);
            blocks[b]->w[i] = keep - h;
            const double down = net_batch_loss(*net, batch, labels, false);
            blocks[b]->w[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double denom = std::max({std::fabs(numeric), std::fabs(analytic[b][i]), 1e-8});
            worst = std::max(worst, std::fabs(numeric - analytic[b][i]) / denom);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("gradient check: every architecture on micro-networks") {
    CHECK(max_grad_rel_error(ModelKind::RNN, 3, 3, 4, 1, 11) < 1e-4);
    CHECK(max_grad_rel_error(ModelKind::LSTM, 3, 3, 4, 1, 12) < 1e-4);
    CHECK(max_grad_rel_error(ModelKind::GRU, 3, 3, 4, 1, 13) < 1e-4);
    CHECK(max_grad_rel_error(ModelKind::CNN, 4, 3, 4, 1, 14) < 1e-4);
    CHECK(max_grad_rel_error(ModelKind::TCN, 4, 3, 4, 2, 15) < 1e-4);
    // stacked variants propagate through the layer boundary
    CHECK(max_grad_rel_error(ModelKind::LSTM, 2, 3, 3, 2, 16) < 1e-4);
    CHECK(max_grad_rel_error(ModelKind::GRU, 2, 3, 3, 2, 17) < 1e-4);
    CHECK(max_grad_rel_error(ModelKind::RNN, 2, 3, 3, 2, 18) < 1e-4);
    CHECK(max_grad_rel_error(ModelKind::CNN, 4, 3, 3, 2, 19) < 1e-4);
    CHECK(max_grad_rel_error(ModelKind::TCN, 4, 3, 3, 3, 20) < 1e-4);
}

TEST_CASE("all-zero inputs produce a constant score across patients") {
    for (const auto kind :
         {ModelKind::CNN, ModelKind::RNN, ModelKind::LSTM, ModelKind::GRU, ModelKind::TCN}) {
        auto net = make_sequence_net(kind, 5, 8, 1, 77);
        std::vector<double> zeros(4 * 5, 0.0);
        const double a = net->forward(zeros.data(), 4);
        const double b = net->forward(zeros.data(), 4);
        CHECK(a == b);
    }
}

TEST_CASE("train_sequence: planted final-bucket flag is learnable (LSTM)") {
    Rng rng(31415);
    std::vector<SequenceTensor> tensors;
    std::vector<int> labels;
    const int steps = 4, channels = 6;
    for (int i = 0; i < 200; ++i) {
        auto t = random_tensor(rng, steps, channels);
        const int label = rng.bernoulli(0.5) ? 1 : 0;
        // channel 2 in the final bucket carries the signal
        t.data[static_cast<std::size_t>(steps - 1) * channels + 2] = label ? 2.5 : -2.5;
        t.label = label;
        tensors.push_back(std::move(t));
        labels.push_back(label);
    }
    SequenceParams params;
    params.hidden = 12;
    params.epochs = 50;
    params.batch = 32;
    params.seed = 5;
    const auto model = train_sequence(ModelKind::LSTM, tensors, labels, params);

    Rng eval_rng(141);
    std::vector<double> scores;
    std::vector<int> eval_labels;
    for (int i = 0; i < 150; ++i) {
        auto t = random_tensor(eval_rng, steps, channels);
        const int label = eval_rng.bernoulli(0.5) ? 1 : 0;
        t.data[static_cast<std::size_t>(steps - 1) * channels + 2] = label ? 2.5 : -2.5;
        scores.push_back(model->predict_tensor(t));
        eval_labels.push_back(label);
    }
    CHECK(auroc(scores, eval_labels) > 0.95);
}

TEST_CASE("train_sequence: determinism and shape guards") {
    Rng rng(999);
    std::vector<SequenceTensor> tensors;
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) {
        tensors.push_back(random_tensor(rng, 3, 4));
        labels.push_back(i % 2);
    }
    SequenceParams params;
    params.hidden = 6;
    params.epochs = 8;
    params.seed = 21;
    const auto a = train_sequence(ModelKind::GRU, tensors, labels, params);
    const auto b = train_sequence(ModelKind::GRU, tensors, labels, params);
    CHECK(a->to_json() == b->to_json());

    auto bad = tensors;
    bad[5].channels = 3;
    bad[5].data.resize(9);
    CHECK_THROWS_AS(train_sequence(ModelKind::GRU, bad, labels, params), DataError);

    std::vector<SequenceTensor> short_t{random_tensor(rng, 1, 4), random_tensor(rng, 1, 4)};
    CHECK_THROWS_AS(train_sequence(ModelKind::GRU, short_t, {0, 1}, params), DataError);
    CHECK_THROWS_AS(train_sequence(ModelKind::RF, tensors, labels, params), DataError);
}

TEST_CASE("sequence model: save/load round-trip predicts identically") {
    Rng rng(246);
    std::vector<SequenceTensor> tensors;
    std::vector<int> labels;
    for (int i = 0; i < 30; ++i) {
        tensors.push_back(random_tensor(rng, 4, 5));
        labels.push_back(i % 2);
    }
    SequenceParams params;
    params.hidden = 5;
    params.epochs = 4;
    params.seed = 3;
    for (const auto kind :
         {ModelKind::CNN, ModelKind::RNN, ModelKind::LSTM, ModelKind::GRU, ModelKind::TCN}) {
        const auto model = train_sequence(kind, tensors, labels, params);
        const auto restored = model_from_json(model->to_json());
        for (int i = 0; i < 10; ++i) {
            const auto probe = random_tensor(rng, 4, 5);
            CHECK(model->predict_tensor(probe) == restored->predict_tensor(probe));
        }
    }
}
