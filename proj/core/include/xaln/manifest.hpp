#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xaln/objectives.hpp"

namespace xaln::manifest {

struct Record {
    std::string id;
    std::filesystem::path audio_path;  // resolved against the manifest dir
    std::vector<std::string> tags;
    std::optional<int> label;
    std::optional<std::string> split;  // "train", "test" or "fold<k>"
};

// JSON-lines, one record per line. Ids must be unique; audio paths are
// resolved relative to the manifest location.
std::vector<Record> read_manifest(const std::filesystem::path& path);

struct ProbeSettings {
    int hidden = 256;
    int repeats = 10;
    int epochs = 100;
    double learning_rate = 0.01;
    int batch_size = 32;
};

// Mirrors the training/probe configuration. Unknown keys are rejected before
// any work starts; every field has the published default.
struct RunConfig {
    std::string variant = "w2v-128-1h";
    int epochs = 200;
    std::int64_t batch_size = 128;
    double learning_rate = 0.005;
    std::uint64_t seed = 0;
    double validation_fraction = 0.10;
    objectives::LossWeights weights;  // lambda_a=5, lambda_xi=10, tau=0.1
    ProbeSettings probe;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    std::string digest() const;

    // Applies the XALN_SEED environment variable when set.
    void apply_seed_override();
};

}  // namespace xaln::manifest
