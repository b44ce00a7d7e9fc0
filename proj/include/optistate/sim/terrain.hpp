#pragma once

// Procedural terrains: flat, a ramp rising along world +x, slippery flat
// ground and a value-noise heightfield with compliant contact.

#include <cmath>
#include <cstdint>
#include <string>

#include "optistate/core/errors.hpp"

namespace optistate {

enum class TerrainKind { flat, incline, slippery, rough };

inline std::string to_string(TerrainKind k) {
    switch (k) {
        case TerrainKind::flat: return "flat";
        case TerrainKind::incline: return "incline";
        case TerrainKind::slippery: return "slippery";
        case TerrainKind::rough: return "rough";
    }
    return "flat";
}

inline TerrainKind terrain_from_string(const std::string& s) {
    if (s == "flat") return TerrainKind::flat;
    if (s == "incline") return TerrainKind::incline;
    if (s == "slippery") return TerrainKind::slippery;
    if (s == "rough") return TerrainKind::rough;
    throw ConfigError("terrain.kind: unknown terrain '" + s +
                      "' (expected flat, incline, slippery or rough)");
}

struct TerrainConfig {
    TerrainKind kind = TerrainKind::flat;
    double incline_angle = 0.1745;   // rad, ~10°
    double slip_rate = 0.2;          // fraction of stance frames that slip
    double slip_magnitude = 0.3;     // m/s foot speed while slipping
    double slip_traction = 0.5;      // tangential force kept by a slipping foot
    double rough_amplitude = 0.04;   // m
    double rough_wavelength = 0.35;  // m, lattice spacing of the value noise
    double compliance_rate = 0.02;   // m/s initial sinking speed
    double compliance_depth = 0.02;  // m, asymptotic sink depth

    bool has_slip() const { return kind == TerrainKind::slippery && slip_rate > 0.0; }
    bool has_compliance() const { return kind == TerrainKind::rough && compliance_rate > 0.0; }

    void validate() const {
        if (!(slip_rate >= 0.0 && slip_rate <= 1.0)) throw ConfigError("terrain.slip_rate must be in [0,1]");
        if (!(rough_wavelength > 0.0)) throw ConfigError("terrain.rough_wavelength must be > 0");
        if (!(std::abs(incline_angle) < 1.2)) throw ConfigError("terrain.incline_angle out of range");
        if (!(compliance_depth > 0.0)) throw ConfigError("terrain.compliance_depth must be > 0");
    }
};

class Terrain {
public:
    Terrain() = default;
    Terrain(TerrainConfig cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {}

    const TerrainConfig& config() const { return cfg_; }

    double height(double x, double y) const {
        switch (cfg_.kind) {
            case TerrainKind::incline: return std::tan(cfg_.incline_angle) * x;
            case TerrainKind::rough: return cfg_.rough_amplitude * value_noise(x, y);
            default: return 0.0;
        }
    }

    /// Upper bound on |∇h|, used for conservative ray marching.
    double slope_bound() const {
        switch (cfg_.kind) {
            case TerrainKind::incline: return std::abs(std::tan(cfg_.incline_angle));
            case TerrainKind::rough:
                // Each axis: value jump ≤ 2, quintic fade slope ≤ 15/8.
                return cfg_.rough_amplitude * 2.0 * 1.875 / cfg_.rough_wavelength * std::sqrt(2.0);
            default: return 0.0;
        }
    }

    /// Gradient of height along world x and y.
    std::pair<double, double> gradient(double x, double y) const {
        const double h = 1e-5;
        return {(height(x + h, y) - height(x - h, y)) / (2 * h),
                (height(x, y + h) - height(x, y - h)) / (2 * h)};
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    double lattice(std::int64_t ix, std::int64_t iy) const {
        const std::uint64_t h = mix(seed_ ^ mix(static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ULL +
                                                static_cast<std::uint64_t>(iy)));
        return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
    }

    static double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

    double value_noise(double x, double y) const {
        const double gx = x / cfg_.rough_wavelength, gy = y / cfg_.rough_wavelength;
        const double fx = std::floor(gx), fy = std::floor(gy);
        const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
        const double u = fade(gx - fx), v = fade(gy - fy);
        const double a = lattice(ix, iy), b = lattice(ix + 1, iy);
        const double c = lattice(ix, iy + 1), d = lattice(ix + 1, iy + 1);
        return (a + (b - a) * u) * (1.0 - v) + (c + (d - c) * u) * v;
    }

    TerrainConfig cfg_;
    std::uint64_t seed_ = 0;
};

} // namespace optistate
