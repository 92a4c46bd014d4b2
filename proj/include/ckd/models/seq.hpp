#pragma once

#include <cstdint>
#include <memory>

#include "ckd/models/model.hpp"

namespace ckd {

struct SequenceParams {
    int hidden = 32;
    int layers = 1;
    int epochs = 100;
    int batch = 64;
    double learning_rate = 0.003;  // adaptive-moment step size
    double clip_norm = 5.0;        // global gradient norm
    int patience = 10;             // early stopping on validation AUROC
    double val_fraction = 0.15;
    std::uint64_t seed = 1;
};

struct ParamBlock {
    std::string name;
    std::vector<double> w;
    std::vector<double> g;
};

// One-sample forward/backward network producing a pre-sigmoid margin.
// backward() consumes the activations cached by the preceding forward().
class SequenceNet {
public:
    virtual ~SequenceNet() = default;
    virtual ModelKind kind() const = 0;
    virtual int channels() const = 0;
    virtual double forward(const double* x, int steps) = 0;
    virtual void backward(double dmargin) = 0;
    virtual std::vector<ParamBlock*> params() = 0;

    void zero_grad();
};

std::unique_ptr<SequenceNet> make_sequence_net(ModelKind kind, int channels, int hidden,
                                               int layers, std::uint64_t seed);

// Mean binary cross-entropy over the batch; with_grad also accumulates
// parameter gradients (call zero_grad first).
double net_batch_loss(SequenceNet& net, const std::vector<const SequenceTensor*>& batch,
                      const std::vector<int>& labels, bool with_grad);

// Per-channel z-scoring fitted on training tensors.
struct ChannelScaler {
    std::vector<double> mean;
    std::vector<double> sd;
    void apply(const SequenceTensor& in, std::vector<double>& out) const;
};

class SequenceModel : public Model {
public:
    ModelKind kind() const override { return net->kind(); }
    double predict_tensor(const SequenceTensor& tensor) const override;
    nlohmann::json to_json() const override;
    static std::unique_ptr<SequenceModel> from_json(const nlohmann::json& j);

    std::unique_ptr<SequenceNet> net;
    ChannelScaler scaler;
    int hidden = 0;
    int layers = 0;
};

// Mini-batch adaptive-moment training with gradient clipping and early
// stopping on a validation carve-out; deterministic given the seed.
std::unique_ptr<SequenceModel> train_sequence(ModelKind kind,
                                              const std::vector<SequenceTensor>& tensors,
                                              const std::vector<int>& labels,
                                              const SequenceParams& params = {});

}  // namespace ckd
