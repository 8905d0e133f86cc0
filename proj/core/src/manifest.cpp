#include "xaln/manifest.hpp"

#include <cstdlib>
#include <fstream>
#include <unordered_set>

#include "xaln/serialize.hpp"

namespace xaln::manifest {

std::vector<Record> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::filesystem::path base = path.parent_path();

    std::vector<Record> out;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw InvalidInputError(path.string() + ":" + std::to_string(lineno) +
                                    ": invalid JSON (" + e.what() + ")");
        }
        Record r;
        try {
            r.id = j.at("id").get<std::string>();
            r.audio_path = base / j.at("audio_path").get<std::string>();
            r.tags = j.at("tags").get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw InvalidInputError(path.string() + ":" + std::to_string(lineno) +
                                    ": missing or malformed field (" + e.what() + ")");
        }
        if (j.contains("label")) r.label = j.at("label").get<int>();
        if (j.contains("split")) r.split = j.at("split").get<std::string>();
        if (!ids.insert(r.id).second) {
            throw InvalidInputError(path.string() + ": duplicate id '" + r.id + "'");
        }
        out.push_back(std::move(r));
    }
    if (out.empty()) throw InvalidInputError(path.string() + ": empty manifest");
    return out;
}

namespace {

void reject_unknown_keys(const nlohmann::json& j,
                         const std::vector<std::string>& allowed,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : allowed) {
            if (it.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
        }
    }
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    reject_unknown_keys(j,
                        {"variant", "epochs", "batch_size", "learning_rate",
                         "seed", "validation_fraction", "lambda_a", "lambda_xi",
                         "tau", "probe"},
                        "config");
    RunConfig c;
    c.variant = j.value("variant", c.variant);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.weights.lambda_a = j.value("lambda_a", c.weights.lambda_a);
    c.weights.lambda_xi = j.value("lambda_xi", c.weights.lambda_xi);
    c.weights.tau = j.value("tau", c.weights.tau);
    if (j.contains("probe")) {
        const auto& p = j.at("probe");
        reject_unknown_keys(
            p, {"hidden", "repeats", "epochs", "learning_rate", "batch_size"},
            "config.probe");
        c.probe.hidden = p.value("hidden", c.probe.hidden);
        c.probe.repeats = p.value("repeats", c.probe.repeats);
        c.probe.epochs = p.value("epochs", c.probe.epochs);
        c.probe.learning_rate = p.value("learning_rate", c.probe.learning_rate);
        c.probe.batch_size = p.value("batch_size", c.probe.batch_size);
    }
    if (c.epochs < 0 || c.batch_size < 1 || c.learning_rate < 0 ||
        c.validation_fraction < 0 || c.validation_fraction >= 1 ||
        c.weights.tau <= 0 || c.probe.hidden < 1 || c.probe.repeats < 1 ||
        c.probe.epochs < 1 || c.probe.batch_size < 1) {
        throw ConfigError("config values out of range");
    }
    return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": invalid JSON (" + e.what() + ")");
    }
    return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
    return {
        {"variant", variant},
        {"epochs", epochs},
        {"batch_size", batch_size},
        {"learning_rate", learning_rate},
        {"seed", seed},
        {"validation_fraction", validation_fraction},
        {"lambda_a", weights.lambda_a},
        {"lambda_xi", weights.lambda_xi},
        {"tau", weights.tau},
        {"probe",
         {{"hidden", probe.hidden},
          {"repeats", probe.repeats},
          {"epochs", probe.epochs},
          {"learning_rate", probe.learning_rate},
          {"batch_size", probe.batch_size}}},
    };
}

std::string RunConfig::digest() const { return fnv1a_hex(to_json().dump()); }

void RunConfig::apply_seed_override() {
    if (const char* env = std::getenv("XALN_SEED")) {
        seed = std::strtoull(env, nullptr, 10);
    }
}

}  // namespace xaln::manifest
