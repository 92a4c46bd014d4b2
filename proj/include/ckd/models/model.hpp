#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ckd/features.hpp"

namespace ckd {

enum class ModelKind { LR, RF, GBT, CNN, RNN, LSTM, GRU, TCN };

const char* model_kind_name(ModelKind kind);
std::optional<ModelKind> parse_model_kind(const std::string& name);
bool is_sequence_kind(ModelKind kind);

class Model {
public:
    virtual ~Model() = default;
    virtual ModelKind kind() const = 0;

    // probability in [0, 1]; throws DataError on arity mismatch
    virtual double predict_row(const std::vector<double>& row) const;
    virtual double predict_tensor(const SequenceTensor& tensor) const;

    virtual nlohmann::json to_json() const = 0;
};

std::vector<double> predict_rows(const Model& model, const std::vector<std::vector<double>>& rows);
std::vector<double> predict_tensors(const Model& model, const std::vector<SequenceTensor>& tensors);

inline constexpr int kModelFormatVersion = 1;

void save_model(const Model& model, const std::string& path);
std::unique_ptr<Model> load_model(const std::string& path);
std::unique_ptr<Model> model_from_json(const nlohmann::json& j);

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace ckd
