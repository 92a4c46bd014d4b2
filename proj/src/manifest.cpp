#include "ckd/manifest.hpp"

#include <nlohmann/json.hpp>

#include "ckd/csv.hpp"

namespace ckd {

void RunManifest::add_input(const std::string& path) {
    inputs.emplace_back(path, file_hash_hex(path));
}

void RunManifest::write(const std::string& directory) const {
    nlohmann::json j;
    j["manifest_version"] = 1;
    j["tool_version"] = kToolVersion;
    j["subcommand"] = subcommand;
    j["master_seed"] = master_seed;
    j["duration_seconds"] = duration_seconds;
    j["config"] = config_json.empty() ? nlohmann::json::object()
                                      : nlohmann::json::parse(config_json);
    auto& in = j["inputs"] = nlohmann::json::array();
    for (const auto& [path, hash] : inputs) in.push_back({{"path", path}, {"hash", hash}});
    j["outputs"] = outputs;
    write_text_file(directory + "/manifest.json", j.dump(2));
}

}  // namespace ckd
