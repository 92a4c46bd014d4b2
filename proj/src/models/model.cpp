#include "ckd/models/model.hpp"

#include "ckd/csv.hpp"
#include "ckd/errors.hpp"
#include "ckd/models/gbt.hpp"
#include "ckd/models/linear.hpp"
#include "ckd/models/seq.hpp"
#include "ckd/models/tree.hpp"

namespace ckd {

namespace {
const char* kKindNames[] = {"LR", "RF", "GBT", "CNN", "RNN", "LSTM", "GRU", "TCN"};
}

const char* model_kind_name(ModelKind kind) { return kKindNames[static_cast<int>(kind)]; }

std::optional<ModelKind> parse_model_kind(const std::string& name) {
    for (int i = 0; i < 8; ++i)
        if (name == kKindNames[i]) return static_cast<ModelKind>(i);
    return std::nullopt;
}

bool is_sequence_kind(ModelKind kind) {
    switch (kind) {
        case ModelKind::CNN:
        case ModelKind::RNN:
        case ModelKind::LSTM:
        case ModelKind::GRU:
        case ModelKind::TCN: return true;
        default: return false;
    }
}

double Model::predict_row(const std::vector<double>&) const {
    throw DataError(std::string(model_kind_name(kind())) +
                    " expects a sequence tensor, not a feature row");
}

double Model::predict_tensor(const SequenceTensor&) const {
    throw DataError(std::string(model_kind_name(kind())) +
                    " expects a feature row, not a sequence tensor");
}

std::vector<double> predict_rows(const Model& model,
                                 const std::vector<std::vector<double>>& rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(model.predict_row(row));
    return out;
}

std::vector<double> predict_tensors(const Model& model,
                                    const std::vector<SequenceTensor>& tensors) {
    std::vector<double> out;
    out.reserve(tensors.size());
    for (const auto& t : tensors) out.push_back(model.predict_tensor(t));
    return out;
}

void save_model(const Model& model, const std::string& path) {
    write_text_file(path, model.to_json().dump());
}

std::unique_ptr<Model> model_from_json(const nlohmann::json& j) {
    if (!j.contains("format_version"))
        throw DataError("model file has no format_version tag");
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
        throw DataError("unsupported model format_version " + std::to_string(version));
    const auto kind = parse_model_kind(j.at("kind").get<std::string>());
    if (!kind) throw DataError("unknown model kind '" + j.at("kind").get<std::string>() + "'");
    switch (*kind) {
        case ModelKind::LR: return LogisticModel::from_json(j);
        case ModelKind::RF: return ForestModel::from_json(j);
        case ModelKind::GBT: return GbtModel::from_json(j);
        default: return SequenceModel::from_json(j);
    }
}

std::unique_ptr<Model> load_model(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupted model file " + path + ": " + e.what());
    }
    return model_from_json(j);
}

}  // namespace ckd
