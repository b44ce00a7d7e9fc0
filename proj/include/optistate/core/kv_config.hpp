#pragma once

// Human-readable `key = value` configuration text. Lines starting with '#'
// are comments. Keys are dotted paths (`terrain.kind`, `noise.imu_theta`).

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "optistate/core/errors.hpp"

namespace optistate {

class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text) {
        KeyValueConfig kv;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string t = trim(line);
            if (t.empty()) continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            }
            kv.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        }
        return kv;
    }

    static KeyValueConfig load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot open config file " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    void set(const std::string& key, double value) { values_[key] = format_double(value); }
    void set(const std::string& key, std::int64_t value) { values_[key] = std::to_string(value); }
    void set(const std::string& key, int value) { values_[key] = std::to_string(value); }
    void set(const std::string& key, std::uint64_t value) { values_[key] = std::to_string(value); }
    void set(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }
    void set(const std::string& key, const char* value) { values_[key] = value; }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& entries() const { return values_; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        double v = 0.0;
        const auto& s = it->second;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size()) {
            throw ConfigError(key + ": expected a number, got '" + s + "'");
        }
        return v;
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::int64_t v = 0;
        const auto& s = it->second;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size()) {
            throw ConfigError(key + ": expected an integer, got '" + s + "'");
        }
        return v;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::uint64_t v = 0;
        const auto& s = it->second;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size()) {
            throw ConfigError(key + ": expected an unsigned integer, got '" + s + "'");
        }
        return v;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ConfigError(key + ": expected true/false, got '" + it->second + "'");
    }

    /// Keys present here but absent from `known`.
    std::vector<std::string> unknown_keys(const KeyValueConfig& known) const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_) {
            if (!known.has(k)) out.push_back(k);
        }
        return out;
    }

    std::string to_text() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw IoError("cannot write " + path);
        f << to_text();
        if (!f) throw IoError("write failed for " + path);
    }

    /// Shortest text that parses back to the same double.
    static std::string format_double(double v) {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, ptr);
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

} // namespace optistate
