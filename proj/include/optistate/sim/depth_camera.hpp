#pragma once

// Depth camera rigidly mounted on the trunk, pitched down, ray cast against
// the terrain heightfield. Stored values are range along the ray divided by
// max_range, clamped to [0, 1]. Rays that miss read 1.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "optistate/core/errors.hpp"
#include "optistate/core/state.hpp"
#include "optistate/sim/terrain.hpp"

namespace optistate {

struct DepthImage {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;  // row-major, row 0 at the top

    DepthImage() = default;
    DepthImage(int h, int w, float fill = 0.0f)
        : height(h), width(w), pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

    float& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
    float at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }

    bool operator==(const DepthImage&) const = default;
};

struct CameraConfig {
    int height = 224;
    int width = 224;
    double hfov = 1.518;      // rad, ~87°
    double vfov = 1.012;      // rad, ~58°
    double pitch = 0.7854;    // rad down from the body x axis
    Vec3 mount{0.28, 0.0, 0.05};
    double max_range = 4.0;   // m
    double rate_hz = 60.0;

    void validate() const {
        if (height <= 0 || width <= 0) throw ConfigError("camera.height/width must be positive");
        if (!(hfov > 0.0 && hfov < 3.0 && vfov > 0.0 && vfov < 3.0)) {
            throw ConfigError("camera.hfov/vfov out of range");
        }
        if (!(max_range > 0.0)) throw ConfigError("camera.max_range must be > 0");
        if (!(rate_hz > 0.0)) throw ConfigError("camera.rate_hz must be > 0");
    }
};

/// Unit ray through pixel (r, c) in the body frame.
inline Vec3 camera_ray_body(const CameraConfig& cam, int r, int c) {
    const double sx = (2.0 * (c + 0.5) / cam.width - 1.0) * std::tan(0.5 * cam.hfov);
    const double sy = (2.0 * (r + 0.5) / cam.height - 1.0) * std::tan(0.5 * cam.vfov);
    // optical frame: forward = body x, image right = -body y, image down = -body z
    const Vec3 d = Vec3(1.0, -sx, -sy).normalized();
    return rot_y(cam.pitch) * d;
}

struct CameraPose {
    Vec3 origin;
    Rotation R;
};

inline CameraPose camera_pose(const CameraConfig& cam, const TrunkState& pose) {
    const Rotation R = euler_to_rotation(pose.theta());
    return {pose.r() + R * cam.mount, R};
}

/// Distance along the unit ray `d` from `o` to the terrain, or +inf beyond max_t.
/// Marches with steps the slope bound guarantees cannot cross the surface
/// (at least 1 mm), then refines the bracket with the Illinois method.
inline double cast_ray(const Terrain& terrain, const Vec3& o, const Vec3& d, double max_t) {
    const double L = terrain.slope_bound();
    const double dxy = std::hypot(d.x(), d.y());
    auto gap = [&](double t) {
        const Vec3 p = o + t * d;
        return p.z() - terrain.height(p.x(), p.y());
    };
    double t = 0.0;
    double f = gap(t);
    if (f <= 0.0) return 0.0;
    const double closing = -d.z() + L * dxy;
    constexpr double kMinStep = 1e-3;
    while (t <= max_t) {
        const double step = closing > 0.0 ? std::max(f / closing, kMinStep) : kMinStep;
        const double tn = t + step;
        const double fn = gap(tn);
        if (fn <= 0.0) {
            double a = t, fa = f, b = tn, fb = fn;
            int side = 0;
            for (int it = 0; it < 100 && b - a > 1e-13; ++it) {
                const double c = (a * fb - b * fa) / (fb - fa);
                const double fc = gap(c);
                if (fc == 0.0) return c;
                if (fc > 0.0) {
                    a = c;
                    fa = fc;
                    if (side == 1) fb *= 0.5;
                    side = 1;
                } else {
                    b = c;
                    fb = fc;
                    if (side == -1) fa *= 0.5;
                    side = -1;
                }
                if (std::abs(fc) < 1e-14) return c;
            }
            return 0.5 * (a + b);
        }
        t = tn;
        f = fn;
    }
    return std::numeric_limits<double>::infinity();
}

inline DepthImage render_depth(const Terrain& terrain, const TrunkState& pose, const CameraConfig& cam) {
    const CameraPose cp = camera_pose(cam, pose);
    DepthImage img(cam.height, cam.width);
    for (int r = 0; r < cam.height; ++r) {
        for (int c = 0; c < cam.width; ++c) {
            const Vec3 d = cp.R * camera_ray_body(cam, r, c);
            const double t = cast_ray(terrain, cp.origin, d, cam.max_range * 1.001);
            const double v = std::clamp(t / cam.max_range, 0.0, 1.0);
            img.at(r, c) = static_cast<float>(v);
        }
    }
    return img;
}

} // namespace optistate
