#pragma once

// Run profiles and the trajectory suite: per terrain, four training
// trajectories and one held-out trajectory.

#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "optistate/nn/gru.hpp"
#include "optistate/nn/vit_train.hpp"
#include "optistate/pipeline/estimator.hpp"
#include "optistate/sim/simulator.hpp"

namespace optistate {

struct Profile {
    std::string name;
    int image_size = 224;
    std::vector<double> train_durations;  // cycled over the training runs of each terrain
    double test_duration = 90.0;
    VitConfig vit;
    VitTrainConfig vit_train;
    std::size_t vit_max_images = 0;  // 0: train on every training image
    GruConfig gru;
    GruTrainConfig gru_train;
};

/// Full-size settings: 224×224 depth, 4×128 GRU, 60–120 s trajectories.
inline Profile paper_profile() {
    Profile p;
    p.name = "paper";
    p.image_size = 224;
    p.train_durations = {60.0, 80.0, 100.0, 120.0};
    p.test_duration = 90.0;
    p.vit = VitConfig{};
    p.vit_train = VitTrainConfig{};
    p.gru = GruConfig{};
    p.gru_train = GruTrainConfig{};
    p.gru_train.epochs = 100;
    return p;
}

/// Desk-scale settings sized for one CPU core.
inline Profile small_profile() {
    Profile p;
    p.name = "small";
    p.image_size = 64;
    p.train_durations = {15.0};
    p.test_duration = 15.0;
    p.vit = VitConfig::small();
    p.vit_train.epochs = 4;
    p.vit_max_images = 768;
    p.gru.hidden = 64;
    p.gru.layers = 2;
    p.gru_train.lr = 1e-4;
    p.gru_train.epochs = 16;
    return p;
}

/// Every tunable of a profile as key = value text. Simulation keys are kept
/// separately in SimConfig.
inline KeyValueConfig profile_to_kv(const Profile& p) {
    KeyValueConfig kv = p.vit.to_kv();
    const KeyValueConfig gru = p.gru.to_kv();
    for (const auto& [k, v] : gru.entries()) kv.set(k, v);
    kv.set("profile.name", p.name.c_str());
    kv.set("profile.image_size", p.image_size);
    std::string durations;
    for (double d : p.train_durations) durations += (durations.empty() ? "" : " ") + KeyValueConfig::format_double(d);
    kv.set("profile.train_durations", durations.c_str());
    kv.set("profile.test_duration", p.test_duration);
    kv.set("profile.vit_max_images", static_cast<std::uint64_t>(p.vit_max_images));
    kv.set("vit_train.epochs", p.vit_train.epochs);
    kv.set("vit_train.batch", p.vit_train.batch);
    kv.set("vit_train.lr", p.vit_train.lr);
    kv.set("vit_train.weight_decay", p.vit_train.weight_decay);
    kv.set("vit_train.augment", p.vit_train.augment);
    kv.set("gru_train.epochs", p.gru_train.epochs);
    kv.set("gru_train.batch", p.gru_train.batch);
    kv.set("gru_train.lr", p.gru_train.lr);
    kv.set("gru_train.weight_decay", p.gru_train.weight_decay);
    kv.set("gru_train.max_steps", static_cast<std::int64_t>(p.gru_train.max_steps));
    kv.set("gru_train.kf_init", p.gru_train.kf_init);
    return kv;
}

inline bool is_profile_key(const std::string& k) {
    for (const char* prefix : {"profile.", "vit.", "vit_train.", "gru.", "gru_train."}) {
        if (k.rfind(prefix, 0) == 0) return true;
    }
    return false;
}

/// Splits a config file into simulation keys and profile keys.
inline std::pair<KeyValueConfig, KeyValueConfig> split_config(const KeyValueConfig& kv) {
    std::pair<KeyValueConfig, KeyValueConfig> out;
    for (const auto& [k, v] : kv.entries()) (is_profile_key(k) ? out.second : out.first).set(k, v);
    return out;
}

/// Overlays profile keys on `base`. Unknown keys are rejected.
inline Profile apply_profile_overrides(const Profile& base, const KeyValueConfig& kv) {
    KeyValueConfig known = profile_to_kv(base);
    const auto unknown = kv.unknown_keys(known);
    if (!unknown.empty()) throw ConfigError(unknown.front() + ": unknown profile key");
    Profile p = base;
    p.image_size = static_cast<int>(kv.get_int("profile.image_size", p.image_size));
    if (kv.has("profile.train_durations")) {
        std::istringstream in(kv.get_string("profile.train_durations", ""));
        p.train_durations.clear();
        std::string tok;
        while (in >> tok) {
            KeyValueConfig one;
            one.set("d", tok);
            p.train_durations.push_back(one.get_double("d", 0.0));
        }
        if (p.train_durations.empty()) throw ConfigError("profile.train_durations: need at least one value");
    }
    p.test_duration = kv.get_double("profile.test_duration", p.test_duration);
    p.vit_max_images = static_cast<std::size_t>(kv.get_u64("profile.vit_max_images", p.vit_max_images));
    p.vit = VitConfig::from_kv(kv, p.vit);
    if (!kv.has("vit.image_h")) p.vit.image_h = p.image_size;
    if (!kv.has("vit.image_w")) p.vit.image_w = p.image_size;
    p.vit_train.epochs = static_cast<int>(kv.get_int("vit_train.epochs", p.vit_train.epochs));
    p.vit_train.batch = static_cast<int>(kv.get_int("vit_train.batch", p.vit_train.batch));
    p.vit_train.lr = kv.get_double("vit_train.lr", p.vit_train.lr);
    p.vit_train.weight_decay = kv.get_double("vit_train.weight_decay", p.vit_train.weight_decay);
    p.vit_train.augment = kv.get_bool("vit_train.augment", p.vit_train.augment);
    p.gru = GruConfig::from_kv(kv, p.gru);
    p.gru_train.epochs = static_cast<int>(kv.get_int("gru_train.epochs", p.gru_train.epochs));
    p.gru_train.batch = static_cast<int>(kv.get_int("gru_train.batch", p.gru_train.batch));
    p.gru_train.lr = kv.get_double("gru_train.lr", p.gru_train.lr);
    p.gru_train.weight_decay = kv.get_double("gru_train.weight_decay", p.gru_train.weight_decay);
    p.gru_train.max_steps = kv.get_int("gru_train.max_steps", p.gru_train.max_steps);
    p.gru_train.kf_init = kv.get_bool("gru_train.kf_init", p.gru_train.kf_init);
    if (kv.has("profile.name")) p.name = kv.get_string("profile.name", p.name);
    if (p.image_size <= 0) throw ConfigError("profile.image_size must be positive");
    if (!(p.test_duration > 0.0)) throw ConfigError("profile.test_duration must be > 0");
    p.vit.validate();
    p.gru_train.validate();
    return p;
}

inline Profile profile_from_name(const std::string& n) {
    if (n == "paper") return paper_profile();
    if (n == "small") return small_profile();
    throw ConfigError("profile: unknown profile '" + n + "' (paper, small)");
}

struct SuiteEntry {
    std::string name;
    bool test = false;
    SimConfig config;
};

inline constexpr int kTrainPerTerrain = 4;

inline const std::array<TerrainKind, 4>& suite_terrains() {
    static const std::array<TerrainKind, 4> t{TerrainKind::flat, TerrainKind::slippery, TerrainKind::incline,
                                              TerrainKind::rough};
    return t;
}

/// 16 training and 4 held-out trajectories derived from `base` and `seed`.
/// Flat and rough runs follow random-walk commands; slippery and incline
/// runs walk a straight line with a seeded heading.
inline std::vector<SuiteEntry> make_suite(const Profile& prof, const SimConfig& base, std::uint64_t seed) {
    std::vector<SuiteEntry> out;
    auto seeds = rng_stream(seed, 100);
    int index = 0;
    for (int split = 0; split < 2; ++split) {
        for (TerrainKind kind : suite_terrains()) {
            const int count = split == 0 ? kTrainPerTerrain : 1;
            for (int j = 0; j < count; ++j) {
                SuiteEntry e;
                e.test = split == 1;
                e.config = base;
                e.config.terrain.kind = kind;
                e.config.seed = seeds();
                const bool straight = kind == TerrainKind::slippery || kind == TerrainKind::incline;
                e.config.command.mode = straight ? CommandMode::straight : CommandMode::random;
                const double u = static_cast<double>(seeds() >> 11) * 0x1.0p-53;
                e.config.command.initial_yaw = straight ? (2.0 * u - 1.0) * std::numbers::pi : base.command.initial_yaw;
                e.config.camera.height = e.config.camera.width = prof.image_size;
                e.config.duration = e.test ? prof.test_duration
                                           : prof.train_durations[static_cast<std::size_t>(j) % prof.train_durations.size()];
                char buf[64];
                std::snprintf(buf, sizeof buf, "%s_%02d_%s", e.test ? "test" : "train", index++,
                              to_string(kind).c_str());
                e.name = buf;
                out.push_back(std::move(e));
            }
        }
    }
    return out;
}

/// Evenly strided subset of at most `max` images (all when max is 0).
inline std::vector<const DepthImage*> subsample_images(const std::vector<const Dataset*>& sets, std::size_t max) {
    std::vector<const DepthImage*> all;
    for (const auto* d : sets) {
        for (const auto& img : d->images) all.push_back(&img);
    }
    if (max == 0 || all.size() <= max) return all;
    std::vector<const DepthImage*> out;
    out.reserve(max);
    for (std::size_t i = 0; i < max; ++i) out.push_back(all[i * all.size() / max]);
    return out;
}

} // namespace optistate
