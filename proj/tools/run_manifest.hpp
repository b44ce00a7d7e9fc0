#pragma once

// One JSON manifest per command run: what ran, with which resolved config
// and seeds, what it read and wrote, and how long each stage took.

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "optistate/core/kv_config.hpp"
#include "optistate/report/csv.hpp"

namespace optistate {

struct RunManifest {
    std::string command;
    KeyValueConfig config;
    std::map<std::string, std::uint64_t> seeds;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string version = OPTISTATE_VERSION;
    std::map<std::string, double> timings_s;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["command"] = command;
        j["version"] = version;
        j["config"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : config.entries()) j["config"][k] = v;
        j["seeds"] = seeds;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["timings_s"] = timings_s;
        return j;
    }

    void save(const std::string& path) const { write_text_file(path, to_json().dump(2) + "\n"); }

    /// The `config` object of a saved manifest, as key = value pairs.
    static KeyValueConfig load_config(const std::string& path) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_text_file(path));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ": not a valid manifest (" + e.what() + ")");
        }
        if (!j.contains("config") || !j["config"].is_object()) throw FormatError(path + ": manifest has no config");
        KeyValueConfig kv;
        for (const auto& [k, v] : j["config"].items()) {
            if (!v.is_string()) throw FormatError(path + ": config value for " + k + " is not a string");
            kv.set(k, v.get<std::string>());
        }
        return kv;
    }
};

} // namespace optistate
