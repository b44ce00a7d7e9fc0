#pragma once

// Trot gait on an integer frame grid. Pair A = {FL, RR}, pair B = {FR, RL};
// pair B runs half a period behind pair A.

#include <cmath>
#include <string>
#include <vector>

#include "optistate/core/errors.hpp"
#include "optistate/core/state.hpp"

namespace optistate {

enum class GaitKind { trot, stand };

struct GaitConfig {
    GaitKind kind = GaitKind::trot;
    double period = 0.4;  // s
    double duty = 0.55;   // stance fraction per leg

    void validate(double dt) const {
        if (!(duty > 0.0 && duty < 1.0)) throw ConfigError("gait.duty must be in (0,1)");
        if (!(period > 0.0)) throw ConfigError("gait.period must be > 0");
        if (kind == GaitKind::trot && period_frames(dt) < 2) {
            throw ConfigError("gait.period must span at least two frames");
        }
    }

    int period_frames(double dt) const { return static_cast<int>(std::lround(period / dt)); }
    int stance_frames(double dt) const {
        return static_cast<int>(std::lround(duty * period_frames(dt)));
    }
};

inline std::string to_string(GaitKind k) { return k == GaitKind::trot ? "trot" : "stand"; }

inline GaitKind gait_from_string(const std::string& s) {
    if (s == "trot") return GaitKind::trot;
    if (s == "stand") return GaitKind::stand;
    throw ConfigError("gait.kind: unknown gait '" + s + "' (expected trot or stand)");
}

inline bool leg_in_pair_a(int leg) { return leg == 0 || leg == 3; }

/// Frames elapsed since the leg's last touchdown (stance) or liftoff (swing).
struct LegPhase {
    bool stance = true;
    int elapsed = 0;  // frames into the current stance/swing interval
    int length = 1;   // frames in that interval
};

inline LegPhase leg_phase(const GaitConfig& g, double dt, long frame, int leg) {
    if (g.kind == GaitKind::stand) return {true, static_cast<int>(frame), 1};
    const long P = g.period_frames(dt);
    const long S = g.stance_frames(dt);
    const long shift = leg_in_pair_a(leg) ? 0 : P / 2;
    const long ph = ((frame + P - shift) % P + P) % P;
    if (ph < S) return {true, static_cast<int>(ph), static_cast<int>(S)};
    return {false, static_cast<int>(ph - S), static_cast<int>(P - S)};
}

inline ContactRef contact_at(const GaitConfig& g, double dt, long frame) {
    ContactRef c;
    for (int i = 0; i < kNumLegs; ++i) {
        c.flags[static_cast<std::size_t>(i)] = leg_phase(g, dt, frame, i).stance;
    }
    return c;
}

inline std::vector<ContactRef> gait_schedule(const GaitConfig& g, double dt, long frames) {
    g.validate(dt);
    std::vector<ContactRef> out;
    out.reserve(static_cast<std::size_t>(frames));
    for (long k = 0; k < frames; ++k) out.push_back(contact_at(g, dt, k));
    return out;
}

} // namespace optistate
