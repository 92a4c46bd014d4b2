#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ckd {

inline constexpr const char* kToolVersion = "0.1.0";

// One manifest per run, written next to the outputs.
struct RunManifest {
    std::string subcommand;
    std::string config_json;  // resolved configuration, "{}" when trivial
    std::vector<std::pair<std::string, std::string>> inputs;  // path, content hash
    std::vector<std::string> outputs;
    std::uint64_t master_seed = 0;
    double duration_seconds = 0.0;

    void add_input(const std::string& path);
    void write(const std::string& directory) const;
};

}  // namespace ckd
