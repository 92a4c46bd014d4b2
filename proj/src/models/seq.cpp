#include "ckd/models/seq.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "ckd/errors.hpp"
#include "ckd/rng.hpp"
#include "ckd/stats.hpp"

namespace ckd {

namespace {

void matvec_add(const std::vector<double>& w, const double* x, double* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double* wr = w.data() + static_cast<std::size_t>(r) * cols;
        double acc = 0.0;
        for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] += acc;
    }
}

void matvec_t_add(const std::vector<double>& w, const double* dy, double* dx, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double* wr = w.data() + static_cast<std::size_t>(r) * cols;
        const double d = dy[r];
        for (int c = 0; c < cols; ++c) dx[c] += wr[c] * d;
    }
}

void outer_add(std::vector<double>& dw, const double* dy, const double* x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        double* dr = dw.data() + static_cast<std::size_t>(r) * cols;
        const double d = dy[r];
        for (int c = 0; c < cols; ++c) dr[c] += d * x[c];
    }
}

void glorot_init(ParamBlock& block, int fan_in, int fan_out, Rng& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : block.w) v = rng.uniform(-s, s);
}

ParamBlock make_block(const std::string& name, std::size_t size) {
    ParamBlock b;
    b.name = name;
    b.w.assign(size, 0.0);
    b.g.assign(size, 0.0);
    return b;
}

// ---------------------------------------------------------------- recurrent

// Vanilla tanh recurrence; margin reads the final hidden state.
class RnnNet : public SequenceNet {
public:
    RnnNet(int channels, int hidden, int layers, std::uint64_t seed)
        : channels_(channels), hidden_(hidden), layers_(layers) {
        Rng rng = Rng::stream(seed, 0x4242);
        for (int l = 0; l < layers; ++l) {
            const int in = l == 0 ? channels : hidden;
            w_.push_back(make_block("rnn_w" + std::to_string(l),
                                    static_cast<std::size_t>(hidden) * in));
            u_.push_back(make_block("rnn_u" + std::to_string(l),
                                    static_cast<std::size_t>(hidden) * hidden));
            b_.push_back(make_block("rnn_b" + std::to_string(l), hidden));
            glorot_init(w_.back(), in, hidden, rng);
            glorot_init(u_.back(), hidden, hidden, rng);
        }
        head_w_ = make_block("head_w", hidden);
        head_b_ = make_block("head_b", 1);
        glorot_init(head_w_, hidden, 1, rng);
    }

    ModelKind kind() const override { return ModelKind::RNN; }
    int channels() const override { return channels_; }

    double forward(const double* x, int steps) override {
        steps_ = steps;
        h_.assign(layers_, std::vector<double>(static_cast<std::size_t>(steps) * hidden_, 0.0));
        in_.assign(static_cast<std::size_t>(steps) * channels_, 0.0);
        std::memcpy(in_.data(), x, sizeof(double) * in_.size());

        const double* layer_in = in_.data();
        int in_width = channels_;
        for (int l = 0; l < layers_; ++l) {
            std::vector<double>& h = h_[l];
            for (int t = 0; t < steps; ++t) {
                double* ht = h.data() + static_cast<std::size_t>(t) * hidden_;
                for (int k = 0; k < hidden_; ++k) ht[k] = b_[l].w[k];
                matvec_add(w_[l].w, layer_in + static_cast<std::size_t>(t) * in_width, ht,
                           hidden_, in_width);
                if (t > 0)
                    matvec_add(u_[l].w, h.data() + static_cast<std::size_t>(t - 1) * hidden_, ht,
                               hidden_, hidden_);
                for (int k = 0; k < hidden_; ++k) ht[k] = std::tanh(ht[k]);
            }
            layer_in = h.data();
            in_width = hidden_;
        }

        double margin = head_b_.w[0];
        const double* last = h_[layers_ - 1].data() + static_cast<std::size_t>(steps - 1) * hidden_;
        for (int k = 0; k < hidden_; ++k) margin += head_w_.w[k] * last[k];
        return margin;
    }

    void backward(double dmargin) override {
        std::vector<std::vector<double>> dh(
            layers_, std::vector<double>(static_cast<std::size_t>(steps_) * hidden_, 0.0));
        const double* last =
            h_[layers_ - 1].data() + static_cast<std::size_t>(steps_ - 1) * hidden_;
        head_b_.g[0] += dmargin;
        for (int k = 0; k < hidden_; ++k) {
            head_w_.g[k] += dmargin * last[k];
            dh[layers_ - 1][static_cast<std::size_t>(steps_ - 1) * hidden_ + k] +=
                dmargin * head_w_.w[k];
        }

        std::vector<double> da(hidden_);
        for (int l = layers_ - 1; l >= 0; --l) {
            const int in_width = l == 0 ? channels_ : hidden_;
            const double* layer_in = l == 0 ? in_.data() : h_[l - 1].data();
            for (int t = steps_ - 1; t >= 0; --t) {
                const double* ht = h_[l].data() + static_cast<std::size_t>(t) * hidden_;
                double* dht = dh[l].data() + static_cast<std::size_t>(t) * hidden_;
                for (int k = 0; k < hidden_; ++k) da[k] = dht[k] * (1.0 - ht[k] * ht[k]);
                outer_add(w_[l].g, da.data(), layer_in + static_cast<std::size_t>(t) * in_width,
                          hidden_, in_width);
                for (int k = 0; k < hidden_; ++k) b_[l].g[k] += da[k];
                if (t > 0) {
                    outer_add(u_[l].g, da.data(),
                              h_[l].data() + static_cast<std::size_t>(t - 1) * hidden_, hidden_,
                              hidden_);
                    matvec_t_add(u_[l].w, da.data(),
                                 dh[l].data() + static_cast<std::size_t>(t - 1) * hidden_, hidden_,
                                 hidden_);
                }
                if (l > 0)
                    matvec_t_add(w_[l].w, da.data(),
                                 dh[l - 1].data() + static_cast<std::size_t>(t) * hidden_, hidden_,
                                 in_width);
            }
        }
    }

    std::vector<ParamBlock*> params() override {
        std::vector<ParamBlock*> out;
        for (int l = 0; l < layers_; ++l) {
            out.push_back(&w_[l]);
            out.push_back(&u_[l]);
            out.push_back(&b_[l]);
        }
        out.push_back(&head_w_);
        out.push_back(&head_b_);
        return out;
    }

private:
    int channels_, hidden_, layers_;
    std::vector<ParamBlock> w_, u_, b_;
    ParamBlock head_w_, head_b_;
    int steps_ = 0;
    std::vector<double> in_;
    std::vector<std::vector<double>> h_;
};

// Standard LSTM cell with forget/input/output gates.
class LstmNet : public SequenceNet {
public:
    LstmNet(int channels, int hidden, int layers, std::uint64_t seed)
        : channels_(channels), hidden_(hidden), layers_(layers) {
        Rng rng = Rng::stream(seed, 0x1357);
        for (int l = 0; l < layers; ++l) {
            const int in = l == 0 ? channels : hidden;
            w_.push_back(make_block("lstm_w" + std::to_string(l),
                                    4 * static_cast<std::size_t>(hidden) * in));
            u_.push_back(make_block("lstm_u" + std::to_string(l),
                                    4 * static_cast<std::size_t>(hidden) * hidden));
            b_.push_back(make_block("lstm_b" + std::to_string(l), 4 * hidden));
            glorot_init(w_.back(), in, hidden, rng);
            glorot_init(u_.back(), hidden, hidden, rng);
            // forget-gate bias starts at 1
            for (int k = hidden; k < 2 * hidden; ++k) b_.back().w[k] = 1.0;
        }
        head_w_ = make_block("head_w", hidden);
        head_b_ = make_block("head_b", 1);
        glorot_init(head_w_, hidden, 1, rng);
    }

    ModelKind kind() const override { return ModelKind::LSTM; }
    int channels() const override { return channels_; }

    double forward(const double* x, int steps) override {
        steps_ = steps;
        in_.assign(static_cast<std::size_t>(steps) * channels_, 0.0);
        std::memcpy(in_.data(), x, sizeof(double) * in_.size());
        gates_.assign(layers_,
                      std::vector<double>(4 * static_cast<std::size_t>(steps) * hidden_, 0.0));
        c_.assign(layers_, std::vector<double>(static_cast<std::size_t>(steps) * hidden_, 0.0));
        h_.assign(layers_, std::vector<double>(static_cast<std::size_t>(steps) * hidden_, 0.0));

        const double* layer_in = in_.data();
        int in_width = channels_;
        std::vector<double> pre(4 * hidden_);
        for (int l = 0; l < layers_; ++l) {
            for (int t = 0; t < steps; ++t) {
                for (int k = 0; k < 4 * hidden_; ++k) pre[k] = b_[l].w[k];
                matvec_add(w_[l].w, layer_in + static_cast<std::size_t>(t) * in_width, pre.data(),
                           4 * hidden_, in_width);
                if (t > 0)
                    matvec_add(u_[l].w, h_[l].data() + static_cast<std::size_t>(t - 1) * hidden_,
                               pre.data(), 4 * hidden_, hidden_);
                double* gate = gates_[l].data() + 4 * static_cast<std::size_t>(t) * hidden_;
                double* ct = c_[l].data() + static_cast<std::size_t>(t) * hidden_;
                double* ht = h_[l].data() + static_cast<std::size_t>(t) * hidden_;
                const double* cprev =
                    t > 0 ? c_[l].data() + static_cast<std::size_t>(t - 1) * hidden_ : nullptr;
                for (int k = 0; k < hidden_; ++k) {
                    const double ig = sigmoid(pre[k]);
                    const double fg = sigmoid(pre[hidden_ + k]);
                    const double og = sigmoid(pre[2 * hidden_ + k]);
                    const double gg = std::tanh(pre[3 * hidden_ + k]);
                    gate[k] = ig;
                    gate[hidden_ + k] = fg;
                    gate[2 * hidden_ + k] = og;
                    gate[3 * hidden_ + k] = gg;
                    ct[k] = ig * gg + (cprev ? fg * cprev[k] : 0.0);
                    ht[k] = og * std::tanh(ct[k]);
                }
            }
            layer_in = h_[l].data();
            in_width = hidden_;
        }

        double margin = head_b_.w[0];
        const double* last = h_[layers_ - 1].data() + static_cast<std::size_t>(steps - 1) * hidden_;
        for (int k = 0; k < hidden_; ++k) margin += head_w_.w[k] * last[k];
        return margin;
    }

    void backward(double dmargin) override {
        std::vector<std::vector<double>> dh(
            layers_, std::vector<double>(static_cast<std::size_t>(steps_) * hidden_, 0.0));
        const double* last =
            h_[layers_ - 1].data() + static_cast<std::size_t>(steps_ - 1) * hidden_;
        head_b_.g[0] += dmargin;
        for (int k = 0; k < hidden_; ++k) {
            head_w_.g[k] += dmargin * last[k];
            dh[layers_ - 1][static_cast<std::size_t>(steps_ - 1) * hidden_ + k] +=
                dmargin * head_w_.w[k];
        }

        std::vector<double> dc(hidden_), dpre(4 * hidden_);
        for (int l = layers_ - 1; l >= 0; --l) {
            const int in_width = l == 0 ? channels_ : hidden_;
            const double* layer_in = l == 0 ? in_.data() : h_[l - 1].data();
            std::fill(dc.begin(), dc.end(), 0.0);
            for (int t = steps_ - 1; t >= 0; --t) {
                const double* gate = gates_[l].data() + 4 * static_cast<std::size_t>(t) * hidden_;
                const double* ct = c_[l].data() + static_cast<std::size_t>(t) * hidden_;
                const double* cprev =
                    t > 0 ? c_[l].data() + static_cast<std::size_t>(t - 1) * hidden_ : nullptr;
                const double* dht = dh[l].data() + static_cast<std::size_t>(t) * hidden_;
                for (int k = 0; k < hidden_; ++k) {
                    const double ig = gate[k];
                    const double fg = gate[hidden_ + k];
                    const double og = gate[2 * hidden_ + k];
                    const double gg = gate[3 * hidden_ + k];
                    const double tc = std::tanh(ct[k]);
                    const double dout = dht[k];
                    const double dog = dout * tc;
                    dc[k] += dout * og * (1.0 - tc * tc);
                    const double dig = dc[k] * gg;
                    const double dgg = dc[k] * ig;
                    const double dfg = cprev ? dc[k] * cprev[k] : 0.0;
                    dpre[k] = dig * ig * (1.0 - ig);
                    dpre[hidden_ + k] = dfg * fg * (1.0 - fg);
                    dpre[2 * hidden_ + k] = dog * og * (1.0 - og);
                    dpre[3 * hidden_ + k] = dgg * (1.0 - gg * gg);
                    dc[k] *= fg;  // becomes dc_{t-1}
                }
                outer_add(w_[l].g, dpre.data(), layer_in + static_cast<std::size_t>(t) * in_width,
                          4 * hidden_, in_width);
                for (int k = 0; k < 4 * hidden_; ++k) b_[l].g[k] += dpre[k];
                if (t > 0) {
                    outer_add(u_[l].g, dpre.data(),
                              h_[l].data() + static_cast<std::size_t>(t - 1) * hidden_,
                              4 * hidden_, hidden_);
                    matvec_t_add(u_[l].w, dpre.data(),
                                 dh[l].data() + static_cast<std::size_t>(t - 1) * hidden_,
                                 4 * hidden_, hidden_);
                }
                if (l > 0)
                    matvec_t_add(w_[l].w, dpre.data(),
                                 dh[l - 1].data() + static_cast<std::size_t>(t) * hidden_,
                                 4 * hidden_, in_width);
            }
        }
    }

    std::vector<ParamBlock*> params() override {
        std::vector<ParamBlock*> out;
        for (int l = 0; l < layers_; ++l) {
            out.push_back(&w_[l]);
            out.push_back(&u_[l]);
            out.push_back(&b_[l]);
        }
        out.push_back(&head_w_);
        out.push_back(&head_b_);
        return out;
    }

private:
    int channels_, hidden_, layers_;
    std::vector<ParamBlock> w_, u_, b_;
    ParamBlock head_w_, head_b_;
    int steps_ = 0;
    std::vector<double> in_;
    std::vector<std::vector<double>> gates_, c_, h_;
};

// GRU with update/reset gates.
class GruNet : public SequenceNet {
public:
    GruNet(int channels, int hidden, int layers, std::uint64_t seed)
        : channels_(channels), hidden_(hidden), layers_(layers) {
        Rng rng = Rng::stream(seed, 0x2468);
        for (int l = 0; l < layers; ++l) {
            const int in = l == 0 ? channels : hidden;
            w_.push_back(make_block("gru_w" + std::to_string(l),
                                    3 * static_cast<std::size_t>(hidden) * in));
            u_.push_back(make_block("gru_u" + std::to_string(l),
                                    3 * static_cast<std::size_t>(hidden) * hidden));
            b_.push_back(make_block("gru_b" + std::to_string(l), 3 * hidden));
            glorot_init(w_.back(), in, hidden, rng);
            glorot_init(u_.back(), hidden, hidden, rng);
        }
        head_w_ = make_block("head_w", hidden);
        head_b_ = make_block("head_b", 1);
        glorot_init(head_w_, hidden, 1, rng);
    }

    ModelKind kind() const override { return ModelKind::GRU; }
    int channels() const override { return channels_; }

    double forward(const double* x, int steps) override {
        steps_ = steps;
        in_.assign(static_cast<std::size_t>(steps) * channels_, 0.0);
        std::memcpy(in_.data(), x, sizeof(double) * in_.size());
        // per step: z, r, n, and the pre-gate product Un*h_prev
        zrn_.assign(layers_,
                    std::vector<double>(3 * static_cast<std::size_t>(steps) * hidden_, 0.0));
        unh_.assign(layers_, std::vector<double>(static_cast<std::size_t>(steps) * hidden_, 0.0));
        h_.assign(layers_, std::vector<double>(static_cast<std::size_t>(steps) * hidden_, 0.0));

        const double* layer_in = in_.data();
        int in_width = channels_;
        std::vector<double> pre(2 * hidden_), npre(hidden_);
        for (int l = 0; l < layers_; ++l) {
            const std::size_t wn_off = 2 * static_cast<std::size_t>(hidden_) * in_width;
            const std::size_t un_off = 2 * static_cast<std::size_t>(hidden_) * hidden_;
            for (int t = 0; t < steps; ++t) {
                const double* xt = layer_in + static_cast<std::size_t>(t) * in_width;
                const double* hprev =
                    t > 0 ? h_[l].data() + static_cast<std::size_t>(t - 1) * hidden_ : nullptr;
                // z and r share the packed first 2H rows of W/U
                for (int k = 0; k < 2 * hidden_; ++k) pre[k] = b_[l].w[k];
                for (int r = 0; r < 2 * hidden_; ++r) {
                    const double* wr = w_[l].w.data() + static_cast<std::size_t>(r) * in_width;
                    double acc = 0.0;
                    for (int c = 0; c < in_width; ++c) acc += wr[c] * xt[c];
                    pre[r] += acc;
                }
                if (hprev)
                    for (int r = 0; r < 2 * hidden_; ++r) {
                        const double* ur = u_[l].w.data() + static_cast<std::size_t>(r) * hidden_;
                        double acc = 0.0;
                        for (int c = 0; c < hidden_; ++c) acc += ur[c] * hprev[c];
                        pre[r] += acc;
                    }

                double* zr = zrn_[l].data() + 3 * static_cast<std::size_t>(t) * hidden_;
                double* un = unh_[l].data() + static_cast<std::size_t>(t) * hidden_;
                for (int k = 0; k < hidden_; ++k) {
                    zr[k] = sigmoid(pre[k]);                 // z
                    zr[hidden_ + k] = sigmoid(pre[hidden_ + k]);  // r
                }
                for (int k = 0; k < hidden_; ++k) {
                    un[k] = 0.0;
                    if (hprev) {
                        const double* ur =
                            u_[l].w.data() + un_off + static_cast<std::size_t>(k) * hidden_;
                        double acc = 0.0;
                        for (int c = 0; c < hidden_; ++c) acc += ur[c] * hprev[c];
                        un[k] = acc;
                    }
                }
                for (int k = 0; k < hidden_; ++k) {
                    const double* wr =
                        w_[l].w.data() + wn_off + static_cast<std::size_t>(k) * in_width;
                    double acc = b_[l].w[2 * hidden_ + k];
                    for (int c = 0; c < in_width; ++c) acc += wr[c] * xt[c];
                    npre[k] = acc + zr[hidden_ + k] * un[k];
                }
                double* ht = h_[l].data() + static_cast<std::size_t>(t) * hidden_;
                for (int k = 0; k < hidden_; ++k) {
                    const double n = std::tanh(npre[k]);
                    zr[2 * hidden_ + k] = n;
                    ht[k] = (1.0 - zr[k]) * n + (hprev ? zr[k] * hprev[k] : 0.0);
                }
            }
            layer_in = h_[l].data();
            in_width = hidden_;
        }

        double margin = head_b_.w[0];
        const double* lasth =
            h_[layers_ - 1].data() + static_cast<std::size_t>(steps - 1) * hidden_;
        for (int k = 0; k < hidden_; ++k) margin += head_w_.w[k] * lasth[k];
        return margin;
    }

    void backward(double dmargin) override {
        std::vector<std::vector<double>> dh(
            layers_, std::vector<double>(static_cast<std::size_t>(steps_) * hidden_, 0.0));
        const double* lasth =
            h_[layers_ - 1].data() + static_cast<std::size_t>(steps_ - 1) * hidden_;
        head_b_.g[0] += dmargin;
        for (int k = 0; k < hidden_; ++k) {
            head_w_.g[k] += dmargin * lasth[k];
            dh[layers_ - 1][static_cast<std::size_t>(steps_ - 1) * hidden_ + k] +=
                dmargin * head_w_.w[k];
        }

        std::vector<double> dzr(2 * hidden_), dnpre(hidden_);
        for (int l = layers_ - 1; l >= 0; --l) {
            const int in_width = l == 0 ? channels_ : hidden_;
            const double* layer_in = l == 0 ? in_.data() : h_[l - 1].data();
            const std::size_t wn_off = 2 * static_cast<std::size_t>(hidden_) * in_width;
            const std::size_t un_off = 2 * static_cast<std::size_t>(hidden_) * hidden_;
            for (int t = steps_ - 1; t >= 0; --t) {
                const double* xt = layer_in + static_cast<std::size_t>(t) * in_width;
                const double* hprev =
                    t > 0 ? h_[l].data() + static_cast<std::size_t>(t - 1) * hidden_ : nullptr;
                double* dhprev =
                    t > 0 ? dh[l].data() + static_cast<std::size_t>(t - 1) * hidden_ : nullptr;
                const double* zr = zrn_[l].data() + 3 * static_cast<std::size_t>(t) * hidden_;
                const double* un = unh_[l].data() + static_cast<std::size_t>(t) * hidden_;
                const double* dht = dh[l].data() + static_cast<std::size_t>(t) * hidden_;

                for (int k = 0; k < hidden_; ++k) {
                    const double z = zr[k];
                    const double r = zr[hidden_ + k];
                    const double n = zr[2 * hidden_ + k];
                    const double dout = dht[k];
                    const double dz = dout * ((hprev ? hprev[k] : 0.0) - n);
                    const double dn = dout * (1.0 - z);
                    if (dhprev) dhprev[k] += dout * z;
                    dnpre[k] = dn * (1.0 - n * n);
                    const double dr = dnpre[k] * un[k];
                    dzr[k] = dz * z * (1.0 - z);
                    dzr[hidden_ + k] = dr * r * (1.0 - r);
                }

                // n-branch weights
                for (int k = 0; k < hidden_; ++k) {
                    double* wg = w_[l].g.data() + wn_off + static_cast<std::size_t>(k) * in_width;
                    for (int c = 0; c < in_width; ++c) wg[c] += dnpre[k] * xt[c];
                    b_[l].g[2 * hidden_ + k] += dnpre[k];
                    if (hprev) {
                        double* ug =
                            u_[l].g.data() + un_off + static_cast<std::size_t>(k) * hidden_;
                        const double dun = dnpre[k] * zr[hidden_ + k];  // through r*un
                        const double* ur =
                            u_[l].w.data() + un_off + static_cast<std::size_t>(k) * hidden_;
                        for (int c = 0; c < hidden_; ++c) {
                            ug[c] += dun * hprev[c];
                            dhprev[c] += ur[c] * dun;
                        }
                    }
                }
                // z/r-branch weights
                outer_add(w_[l].g, dzr.data(), xt, 2 * hidden_, in_width);
                for (int k = 0; k < 2 * hidden_; ++k) b_[l].g[k] += dzr[k];
                if (hprev) {
                    outer_add(u_[l].g, dzr.data(), hprev, 2 * hidden_, hidden_);
                    matvec_t_add(u_[l].w, dzr.data(), dhprev, 2 * hidden_, hidden_);
                }
                if (l > 0) {
                    double* dxl = dh[l - 1].data() + static_cast<std::size_t>(t) * hidden_;
                    matvec_t_add(w_[l].w, dzr.data(), dxl, 2 * hidden_, in_width);
                    for (int k = 0; k < hidden_; ++k) {
                        const double* wr =
                            w_[l].w.data() + wn_off + static_cast<std::size_t>(k) * in_width;
                        for (int c = 0; c < in_width; ++c) dxl[c] += wr[c] * dnpre[k];
                    }
                }
            }
        }
    }

    std::vector<ParamBlock*> params() override {
        std::vector<ParamBlock*> out;
        for (int l = 0; l < layers_; ++l) {
            out.push_back(&w_[l]);
            out.push_back(&u_[l]);
            out.push_back(&b_[l]);
        }
        out.push_back(&head_w_);
        out.push_back(&head_b_);
        return out;
    }

private:
    int channels_, hidden_, layers_;
    std::vector<ParamBlock> w_, u_, b_;  // packed rows: [z; r; n]
    ParamBlock head_w_, head_b_;
    int steps_ = 0;
    std::vector<double> in_;
    std::vector<std::vector<double>> zrn_, unh_, h_;
};

// 1-D convolutions over time with same padding, ReLU, global max pool.
class CnnNet : public SequenceNet {
public:
    static constexpr int kKernel = 3;

    CnnNet(int channels, int hidden, int layers, std::uint64_t seed)
        : channels_(channels), hidden_(hidden), layers_(layers) {
        Rng rng = Rng::stream(seed, 0x8Cu);
        for (int l = 0; l < layers; ++l) {
            const int in = l == 0 ? channels : hidden;
            w_.push_back(make_block("conv_w" + std::to_string(l),
                                    static_cast<std::size_t>(hidden) * kKernel * in));
            b_.push_back(make_block("conv_b" + std::to_string(l), hidden));
            glorot_init(w_.back(), in * kKernel, hidden, rng);
        }
        head_w_ = make_block("head_w", hidden);
        head_b_ = make_block("head_b", 1);
        glorot_init(head_w_, hidden, 1, rng);
    }

    ModelKind kind() const override { return ModelKind::CNN; }
    int channels() const override { return channels_; }

    double forward(const double* x, int steps) override {
        steps_ = steps;
        in_.assign(static_cast<std::size_t>(steps) * channels_, 0.0);
        std::memcpy(in_.data(), x, sizeof(double) * in_.size());
        act_.assign(layers_, std::vector<double>(static_cast<std::size_t>(steps) * hidden_, 0.0));
        pre_.assign(layers_, std::vector<double>(static_cast<std::size_t>(steps) * hidden_, 0.0));

        const double* layer_in = in_.data();
        int in_width = channels_;
        for (int l = 0; l < layers_; ++l) {
            for (int t = 0; t < steps; ++t) {
                double* out = pre_[l].data() + static_cast<std::size_t>(t) * hidden_;
                for (int k = 0; k < hidden_; ++k) out[k] = b_[l].w[k];
                for (int d = 0; d < kKernel; ++d) {
                    const int src = t + d - kKernel / 2;
                    if (src < 0 || src >= steps) continue;
                    const double* xt = layer_in + static_cast<std::size_t>(src) * in_width;
                    const double* wd =
                        w_[l].w.data() + static_cast<std::size_t>(d) * hidden_ * in_width;
                    for (int k = 0; k < hidden_; ++k) {
                        const double* wk = wd + static_cast<std::size_t>(k) * in_width;
                        double acc = 0.0;
                        for (int c = 0; c < in_width; ++c) acc += wk[c] * xt[c];
                        out[k] += acc;
                    }
                }
                double* a = act_[l].data() + static_cast<std::size_t>(t) * hidden_;
                for (int k = 0; k < hidden_; ++k) a[k] = out[k] > 0.0 ? out[k] : 0.0;
            }
            layer_in = act_[l].data();
            in_width = hidden_;
        }

        // global max pool over time
        argmax_.assign(hidden_, 0);
        pooled_.assign(hidden_, 0.0);
        const auto& top = act_[layers_ - 1];
        for (int k = 0; k < hidden_; ++k) {
            double best = top[k];
            int best_t = 0;
            for (int t = 1; t < steps; ++t) {
                const double v = top[static_cast<std::size_t>(t) * hidden_ + k];
                if (v > best) {
                    best = v;
                    best_t = t;
                }
            }
            pooled_[k] = best;
            argmax_[k] = best_t;
        }

        double margin = head_b_.w[0];
        for (int k = 0; k < hidden_; ++k) margin += head_w_.w[k] * pooled_[k];
        return margin;
    }

    void backward(double dmargin) override {
        std::vector<std::vector<double>> dact(
            layers_, std::vector<double>(static_cast<std::size_t>(steps_) * hidden_, 0.0));
        head_b_.g[0] += dmargin;
        for (int k = 0; k < hidden_; ++k) {
            head_w_.g[k] += dmargin * pooled_[k];
            dact[layers_ - 1][static_cast<std::size_t>(argmax_[k]) * hidden_ + k] +=
                dmargin * head_w_.w[k];
        }

        for (int l = layers_ - 1; l >= 0; --l) {
            const int in_width = l == 0 ? channels_ : hidden_;
            const double* layer_in = l == 0 ? in_.data() : act_[l - 1].data();
            for (int t = 0; t < steps_; ++t) {
                const double* pre = pre_[l].data() + static_cast<std::size_t>(t) * hidden_;
                const double* da = dact[l].data() + static_cast<std::size_t>(t) * hidden_;
                for (int d = 0; d < kKernel; ++d) {
                    const int src = t + d - kKernel / 2;
                    if (src < 0 || src >= steps_) continue;
                    const double* xt = layer_in + static_cast<std::size_t>(src) * in_width;
                    double* dxt = l > 0
                                      ? dact[l - 1].data() + static_cast<std::size_t>(src) * in_width
                                      : nullptr;
                    for (int k = 0; k < hidden_; ++k) {
                        if (pre[k] <= 0.0 || da[k] == 0.0) continue;
                        const double g = da[k];
                        double* wk = w_[l].g.data() +
                                     (static_cast<std::size_t>(d) * hidden_ + k) * in_width;
                        const double* wv = w_[l].w.data() +
                                           (static_cast<std::size_t>(d) * hidden_ + k) * in_width;
                        for (int c = 0; c < in_width; ++c) {
                            wk[c] += g * xt[c];
                            if (dxt) dxt[c] += g * wv[c];
                        }
                    }
                }
                for (int k = 0; k < hidden_; ++k)
                    if (pre[k] > 0.0) b_[l].g[k] += da[k];
            }
        }
    }

    std::vector<ParamBlock*> params() override {
        std::vector<ParamBlock*> out;
        for (int l = 0; l < layers_; ++l) {
            out.push_back(&w_[l]);
            out.push_back(&b_[l]);
        }
        out.push_back(&head_w_);
        out.push_back(&head_b_);
        return out;
    }

private:
    int channels_, hidden_, layers_;
    std::vector<ParamBlock> w_, b_;
    ParamBlock head_w_, head_b_;
    int steps_ = 0;
    std::vector<double> in_, pooled_;
    std::vector<int> argmax_;
    std::vector<std::vector<double>> pre_, act_;
};

// Dilated causal convolution residual blocks (dilations 1, 2, 4, ...);
// the margin reads the final time step.
class TcnNet : public SequenceNet {
public:
    static constexpr int kKernel = 2;

    TcnNet(int channels, int hidden, int levels, std::uint64_t seed)
        : channels_(channels), hidden_(hidden), levels_(levels) {
        Rng rng = Rng::stream(seed, 0x7cef);
        for (int l = 0; l < levels; ++l) {
            const int in = l == 0 ? channels : hidden;
            w_.push_back(make_block("tcn_w" + std::to_string(l),
                                    static_cast<std::size_t>(hidden) * kKernel * in));
            b_.push_back(make_block("tcn_b" + std::to_string(l), hidden));
            glorot_init(w_.back(), in * kKernel, hidden, rng);
        }
        proj_ = make_block("tcn_proj", static_cast<std::size_t>(hidden) * channels);
        glorot_init(proj_, channels, hidden, rng);
        head_w_ = make_block("head_w", hidden);
        head_b_ = make_block("head_b", 1);
        glorot_init(head_w_, hidden, 1, rng);
    }

    ModelKind kind() const override { return ModelKind::TCN; }
    int channels() const override { return channels_; }

    double forward(const double* x, int steps) override {
        steps_ = steps;
        in_.assign(static_cast<std::size_t>(steps) * channels_, 0.0);
        std::memcpy(in_.data(), x, sizeof(double) * in_.size());
        pre_.assign(levels_, std::vector<double>(static_cast<std::size_t>(steps) * hidden_, 0.0));
        out_.assign(levels_, std::vector<double>(static_cast<std::size_t>(steps) * hidden_, 0.0));

        const double* layer_in = in_.data();
        int in_width = channels_;
        for (int l = 0; l < levels_; ++l) {
            const int dilation = 1 << l;
            for (int t = 0; t < steps; ++t) {
                double* u = pre_[l].data() + static_cast<std::size_t>(t) * hidden_;
                for (int k = 0; k < hidden_; ++k) u[k] = b_[l].w[k];
                for (int d = 0; d < kKernel; ++d) {
                    const int src = t - d * dilation;
                    if (src < 0) continue;
                    const double* xt = layer_in + static_cast<std::size_t>(src) * in_width;
                    for (int k = 0; k < hidden_; ++k) {
                        const double* wk =
                            w_[l].w.data() +
                            (static_cast<std::size_t>(d) * hidden_ + k) * in_width;
                        double acc = 0.0;
                        for (int c = 0; c < in_width; ++c) acc += wk[c] * xt[c];
                        u[k] += acc;
                    }
                }
                double* y = out_[l].data() + static_cast<std::size_t>(t) * hidden_;
                // residual: identity for hidden inputs, a 1x1 projection of the raw input
                if (l == 0) {
                    const double* xt = in_.data() + static_cast<std::size_t>(t) * channels_;
                    for (int k = 0; k < hidden_; ++k) {
                        const double* pk = proj_.w.data() + static_cast<std::size_t>(k) * channels_;
                        double acc = 0.0;
                        for (int c = 0; c < channels_; ++c) acc += pk[c] * xt[c];
                        y[k] = (u[k] > 0.0 ? u[k] : 0.0) + acc;
                    }
                } else {
                    const double* xt = layer_in + static_cast<std::size_t>(t) * hidden_;
                    for (int k = 0; k < hidden_; ++k) y[k] = (u[k] > 0.0 ? u[k] : 0.0) + xt[k];
                }
            }
            layer_in = out_[l].data();
            in_width = hidden_;
        }

        double margin = head_b_.w[0];
        const double* last =
            out_[levels_ - 1].data() + static_cast<std::size_t>(steps - 1) * hidden_;
        for (int k = 0; k < hidden_; ++k) margin += head_w_.w[k] * last[k];
        return margin;
    }

    void backward(double dmargin) override {
        std::vector<std::vector<double>> dout(
            levels_, std::vector<double>(static_cast<std::size_t>(steps_) * hidden_, 0.0));
        std::vector<double> din(static_cast<std::size_t>(steps_) * channels_, 0.0);
        const double* last =
            out_[levels_ - 1].data() + static_cast<std::size_t>(steps_ - 1) * hidden_;
        head_b_.g[0] += dmargin;
        for (int k = 0; k < hidden_; ++k) {
            head_w_.g[k] += dmargin * last[k];
            dout[levels_ - 1][static_cast<std::size_t>(steps_ - 1) * hidden_ + k] +=
                dmargin * head_w_.w[k];
        }

        for (int l = levels_ - 1; l >= 0; --l) {
            const int dilation = 1 << l;
            const int in_width = l == 0 ? channels_ : hidden_;
            const double* layer_in = l == 0 ? in_.data() : out_[l - 1].data();
            double* dlayer_in = l == 0 ? din.data() : dout[l - 1].data();
            for (int t = steps_ - 1; t >= 0; --t) {
                const double* u = pre_[l].data() + static_cast<std::size_t>(t) * hidden_;
                const double* dy = dout[l].data() + static_cast<std::size_t>(t) * hidden_;
                // residual path
                if (l == 0) {
                    const double* xt = in_.data() + static_cast<std::size_t>(t) * channels_;
                    double* dxt = din.data() + static_cast<std::size_t>(t) * channels_;
                    for (int k = 0; k < hidden_; ++k) {
                        const double g = dy[k];
                        if (g == 0.0) continue;
                        double* pg = proj_.g.data() + static_cast<std::size_t>(k) * channels_;
                        const double* pv = proj_.w.data() + static_cast<std::size_t>(k) * channels_;
                        for (int c = 0; c < channels_; ++c) {
                            pg[c] += g * xt[c];
                            dxt[c] += g * pv[c];
                        }
                    }
                } else {
                    double* dxt = dout[l - 1].data() + static_cast<std::size_t>(t) * hidden_;
                    for (int k = 0; k < hidden_; ++k) dxt[k] += dy[k];
                }
                // conv path through the ReLU
                for (int d = 0; d < kKernel; ++d) {
                    const int src = t - d * dilation;
                    if (src < 0) continue;
                    const double* xt = layer_in + static_cast<std::size_t>(src) * in_width;
                    double* dxt = dlayer_in + static_cast<std::size_t>(src) * in_width;
                    for (int k = 0; k < hidden_; ++k) {
                        if (u[k] <= 0.0 || dy[k] == 0.0) continue;
                        const double g = dy[k];
                        double* wg = w_[l].g.data() +
                                     (static_cast<std::size_t>(d) * hidden_ + k) * in_width;
                        const double* wv = w_[l].w.data() +
                                           (static_cast<std::size_t>(d) * hidden_ + k) * in_width;
                        for (int c = 0; c < in_width; ++c) {
                            wg[c] += g * xt[c];
                            dxt[c] += g * wv[c];
                        }
                    }
                }
                for (int k = 0; k < hidden_; ++k)
                    if (u[k] > 0.0) b_[l].g[k] += dy[k];
            }
        }
    }

    std::vector<ParamBlock*> params() override {
        std::vector<ParamBlock*> out;
        for (int l = 0; l < levels_; ++l) {
            out.push_back(&w_[l]);
            out.push_back(&b_[l]);
        }
        out.push_back(&proj_);
        out.push_back(&head_w_);
        out.push_back(&head_b_);
        return out;
    }

private:
    int channels_, hidden_, levels_;
    std::vector<ParamBlock> w_, b_;
    ParamBlock proj_, head_w_, head_b_;
    int steps_ = 0;
    std::vector<double> in_;
    std::vector<std::vector<double>> pre_, out_;
};

}  // namespace

void SequenceNet::zero_grad() {
    for (auto* block : params()) std::fill(block->g.begin(), block->g.end(), 0.0);
}

std::unique_ptr<SequenceNet> make_sequence_net(ModelKind kind, int channels, int hidden,
                                               int layers, std::uint64_t seed) {
    if (channels < 1 || hidden < 1 || layers < 1)
        throw DataError("sequence net dims must be positive");
    switch (kind) {
        case ModelKind::RNN: return std::make_unique<RnnNet>(channels, hidden, layers, seed);
        case ModelKind::LSTM: return std::make_unique<LstmNet>(channels, hidden, layers, seed);
        case ModelKind::GRU: return std::make_unique<GruNet>(channels, hidden, layers, seed);
        case ModelKind::CNN: return std::make_unique<CnnNet>(channels, hidden, layers, seed);
        case ModelKind::TCN: return std::make_unique<TcnNet>(channels, hidden, layers, seed);
        default: throw DataError("not a sequence model kind");
    }
}

double net_batch_loss(SequenceNet& net, const std::vector<const SequenceTensor*>& batch,
                      const std::vector<int>& labels, bool with_grad) {
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& t = *batch[i];
        const double margin = net.forward(t.data.data(), t.steps);
        const double m = labels[i] ? margin : -margin;
        loss += (m > 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m))) * inv;
        if (with_grad) net.backward((sigmoid(margin) - static_cast<double>(labels[i])) * inv);
    }
    return loss;
}

void ChannelScaler::apply(const SequenceTensor& in, std::vector<double>& out) const {
    const int channels = in.channels;
    out.resize(in.data.size());
    for (int t = 0; t < in.steps; ++t)
        for (int c = 0; c < channels; ++c) {
            const double v = in.data[static_cast<std::size_t>(t) * channels + c];
            out[static_cast<std::size_t>(t) * channels + c] =
                sd[c] > 0.0 ? (v - mean[c]) / sd[c] : 0.0;
        }
}

double SequenceModel::predict_tensor(const SequenceTensor& tensor) const {
    if (tensor.channels != net->channels()) throw DataError("sequence channel mismatch");
    if (tensor.steps < 1) throw DataError("sequence tensor has no steps");
    std::vector<double> scaled;
    scaler.apply(tensor, scaled);
    return sigmoid(net->forward(scaled.data(), tensor.steps));
}

nlohmann::json SequenceModel::to_json() const {
    nlohmann::json blocks = nlohmann::json::object();
    for (const auto* block : const_cast<SequenceModel*>(this)->net->params())
        blocks[block->name] = block->w;
    return {{"format_version", kModelFormatVersion},
            {"kind", model_kind_name(kind())},
            {"channels", net->channels()},
            {"hidden", hidden},
            {"layers", layers},
            {"blocks", blocks},
            {"scaler_mean", scaler.mean},
            {"scaler_sd", scaler.sd}};
}

std::unique_ptr<SequenceModel> SequenceModel::from_json(const nlohmann::json& j) {
    const auto kind = parse_model_kind(j.at("kind").get<std::string>());
    if (!kind || !is_sequence_kind(*kind)) throw DataError("bad sequence model kind");
    auto m = std::make_unique<SequenceModel>();
    j.at("hidden").get_to(m->hidden);
    j.at("layers").get_to(m->layers);
    m->net = make_sequence_net(*kind, j.at("channels").get<int>(), m->hidden, m->layers, 0);
    for (auto* block : m->net->params()) {
        const auto& src = j.at("blocks").at(block->name);
        if (src.size() != block->w.size()) throw DataError("sequence block size mismatch");
        src.get_to(block->w);
    }
    j.at("scaler_mean").get_to(m->scaler.mean);
    j.at("scaler_sd").get_to(m->scaler.sd);
    return m;
}

namespace {

struct AdamState {
    std::vector<std::vector<double>> m, v;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;

    void init(const std::vector<ParamBlock*>& blocks) {
        for (const auto* b : blocks) {
            m.emplace_back(b->w.size(), 0.0);
            v.emplace_back(b->w.size(), 0.0);
        }
    }

    void update(std::vector<ParamBlock*>& blocks, double lr, double clip_norm) {
        double norm_sq = 0.0;
        for (const auto* b : blocks)
            for (const double g : b->g) norm_sq += g * g;
        const double norm = std::sqrt(norm_sq);
        const double scale = clip_norm > 0.0 && norm > clip_norm ? clip_norm / norm : 1.0;

        ++step;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            auto& w = blocks[i]->w;
            const auto& g = blocks[i]->g;
            for (std::size_t k = 0; k < w.size(); ++k) {
                const double gk = g[k] * scale;
                m[i][k] = beta1 * m[i][k] + (1.0 - beta1) * gk;
                v[i][k] = beta2 * v[i][k] + (1.0 - beta2) * gk * gk;
                w[k] -= lr * (m[i][k] / bc1) / (std::sqrt(v[i][k] / bc2) + eps);
            }
        }
    }
};

}  // namespace

std::unique_ptr<SequenceModel> train_sequence(ModelKind kind,
                                              const std::vector<SequenceTensor>& tensors,
                                              const std::vector<int>& labels,
                                              const SequenceParams& params) {
    if (!is_sequence_kind(kind)) throw DataError("train_sequence: not a sequence kind");
    if (tensors.empty() || tensors.size() != labels.size())
        throw DataError("train_sequence: empty data or size mismatch");
    const int steps = tensors[0].steps;
    const int channels = tensors[0].channels;
    if (steps < 2) throw DataError("train_sequence: need at least two time steps");
    for (const auto& t : tensors)
        if (t.steps != steps || t.channels != channels)
            throw DataError("train_sequence: tensor shape mismatch across patients");
    bool any_pos = false, any_neg = false;
    for (const int y : labels) (y ? any_pos : any_neg) = true;
    if (!any_pos || !any_neg) throw DataError("train_sequence needs both classes");

    // stratified validation carve-out for early stopping
    Rng split_rng = Rng::stream(params.seed, 0x5eeed);
    std::vector<std::size_t> pos_idx, neg_idx;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos_idx : neg_idx).push_back(i);
    split_rng.shuffle(pos_idx);
    split_rng.shuffle(neg_idx);
    std::vector<std::size_t> train_idx, val_idx;
    auto carve = [&](std::vector<std::size_t>& src) {
        const std::size_t n_val =
            std::min(src.size() - 1,
                     static_cast<std::size_t>(std::floor(params.val_fraction *
                                                         static_cast<double>(src.size()))));
        for (std::size_t i = 0; i < src.size(); ++i)
            (i < n_val ? val_idx : train_idx).push_back(src[i]);
    };
    carve(pos_idx);
    carve(neg_idx);
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());

    // per-channel standardization from the fitting split only
    auto model = std::make_unique<SequenceModel>();
    model->hidden = params.hidden;
    model->layers = params.layers;
    model->scaler.mean.assign(channels, 0.0);
    model->scaler.sd.assign(channels, 0.0);
    {
        std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
        std::size_t count = 0;
        for (const auto i : train_idx) {
            const auto& t = tensors[i];
            for (int s = 0; s < steps; ++s)
                for (int c = 0; c < channels; ++c)
                    sum[c] += t.data[static_cast<std::size_t>(s) * channels + c];
            count += static_cast<std::size_t>(steps);
        }
        for (int c = 0; c < channels; ++c) model->scaler.mean[c] = sum[c] / count;
        for (const auto i : train_idx) {
            const auto& t = tensors[i];
            for (int s = 0; s < steps; ++s)
                for (int c = 0; c < channels; ++c) {
                    const double d = t.data[static_cast<std::size_t>(s) * channels + c] -
                                     model->scaler.mean[c];
                    sq[c] += d * d;
                }
        }
        for (int c = 0; c < channels; ++c) model->scaler.sd[c] = std::sqrt(sq[c] / count);
    }

    // pre-scaled copies
    std::vector<SequenceTensor> scaled(tensors.size());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        scaled[i].patient_id = tensors[i].patient_id;
        scaled[i].steps = steps;
        scaled[i].channels = channels;
        scaled[i].label = labels[i];
        model->scaler.apply(tensors[i], scaled[i].data);
    }

    // TCN blocks double their dilation per level; grow levels until the
    // receptive field covers the whole sequence
    int layers = params.layers;
    if (kind == ModelKind::TCN) {
        int needed = 1;
        while ((1 << needed) < steps) ++needed;
        layers = std::max(layers, needed);
    }
    model->layers = layers;
    model->net = make_sequence_net(kind, channels, params.hidden, layers, params.seed);
    auto blocks = model->net->params();
    AdamState adam;
    adam.init(blocks);

    bool val_usable = false;
    {
        bool vp = false, vn = false;
        for (const auto i : val_idx) (labels[i] ? vp : vn) = true;
        val_usable = vp && vn;
    }

    double best_metric = -1e300;
    int stale = 0;
    std::vector<std::vector<double>> best_weights;
    auto snapshot = [&] {
        best_weights.clear();
        for (const auto* b : blocks) best_weights.push_back(b->w);
    };
    snapshot();

    std::vector<std::size_t> order = train_idx;
    std::vector<const SequenceTensor*> batch;
    std::vector<int> batch_labels;
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        Rng epoch_rng = Rng::stream(params.seed, 0xe90c, static_cast<std::uint64_t>(epoch));
        epoch_rng.shuffle(order);
        double train_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(params.batch)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(params.batch));
            batch.clear();
            batch_labels.clear();
            for (std::size_t i = start; i < stop; ++i) {
                batch.push_back(&scaled[order[i]]);
                batch_labels.push_back(labels[order[i]]);
            }
            model->net->zero_grad();
            train_loss += net_batch_loss(*model->net, batch, batch_labels, true);
            adam.update(blocks, params.learning_rate, params.clip_norm);
            ++batches;
        }

        double metric;
        if (val_usable) {
            std::vector<double> scores;
            std::vector<int> ys;
            for (const auto i : val_idx) {
                scores.push_back(
                    sigmoid(model->net->forward(scaled[i].data.data(), scaled[i].steps)));
                ys.push_back(labels[i]);
            }
            metric = auroc(scores, ys);
        } else {
            metric = -train_loss / static_cast<double>(std::max<std::size_t>(batches, 1));
        }

        if (metric > best_metric + 1e-9) {
            best_metric = metric;
            stale = 0;
            snapshot();
        } else if (++stale >= params.patience) {
            break;
        }
    }

    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i]->w = best_weights[i];
    return model;
}

}  // namespace ckd
