#pragma once

// State layout, frame conventions and small rotation helpers shared by every
// module. All quantities are world frame unless a name says otherwise.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "optistate/core/errors.hpp"

namespace optistate {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat12 = Eigen::Matrix<double, 12, 12>;

/// Body-to-world rotation R_b^w.
using Rotation = Mat3;

inline constexpr double kGravity = 9.81;
inline constexpr int kNumLegs = 4;

/// Offsets of the four 3-blocks inside the 12-dim trunk state.
namespace idx {
inline constexpr int theta = 0;
inline constexpr int r = 3;
inline constexpr int omega = 6;
inline constexpr int v = 9;
} // namespace idx

/// Trunk state [θx,θy,θz, rx,ry,rz, ωx,ωy,ωz, vx,vy,vz]. Euler angles are
/// Z-Y-X (yaw·pitch·roll) and stored unwrapped; ω is world frame.
struct TrunkState {
    Vec12 x = Vec12::Zero();

    TrunkState() = default;
    explicit TrunkState(const Vec12& v) : x(v) {}

    auto theta() { return x.segment<3>(idx::theta); }
    auto r() { return x.segment<3>(idx::r); }
    auto omega() { return x.segment<3>(idx::omega); }
    auto v() { return x.segment<3>(idx::v); }
    auto theta() const { return x.segment<3>(idx::theta); }
    auto r() const { return x.segment<3>(idx::r); }
    auto omega() const { return x.segment<3>(idx::omega); }
    auto v() const { return x.segment<3>(idx::v); }

    bool finite() const { return x.allFinite(); }

    friend bool operator==(const TrunkState& a, const TrunkState& b) { return a.x == b.x; }
};

/// Reference contact flags C for feet FL, FR, RL, RR.
struct ContactRef {
    std::array<bool, kNumLegs> flags{false, false, false, false};

    int count() const {
        int n = 0;
        for (bool f : flags) n += f ? 1 : 0;
        return n;
    }
    bool operator[](int i) const { return flags[static_cast<std::size_t>(i)]; }
    friend bool operator==(const ContactRef&, const ContactRef&) = default;

    static ContactRef all() { return ContactRef{{true, true, true, true}}; }
    static ContactRef none() { return ContactRef{}; }
};

/// [v]× such that skew(v)·q = v × q.
inline Mat3 skew(const Vec3& v) {
    Mat3 s;
    s << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return s;
}

inline Mat3 rot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << 1, 0, 0, 0, c, -s, 0, s, c;
    return m;
}

inline Mat3 rot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << c, 0, s, 0, 1, 0, -s, 0, c;
    return m;
}

inline Mat3 rot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << c, -s, 0, s, c, 0, 0, 0, 1;
    return m;
}

/// R = Rz(yaw)·Ry(pitch)·Rx(roll), written out in closed form.
inline Rotation euler_to_rotation(const Vec3& theta) {
    const double cr = std::cos(theta.x()), sr = std::sin(theta.x());
    const double cp = std::cos(theta.y()), sp = std::sin(theta.y());
    const double cy = std::cos(theta.z()), sy = std::sin(theta.z());
    Rotation R;
    R << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
         sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
         -sp, cp * sr, cp * cr;
    return R;
}

inline constexpr double kGimbalTolerance = 1e-6;

/// Inverse of euler_to_rotation. Throws GimbalLockError when |pitch| is
/// within 1e-6 of π/2, where roll and yaw are no longer separable.
inline Vec3 rotation_to_euler(const Rotation& R) {
    const double pitch = std::atan2(-R(2, 0), std::hypot(R(0, 0), R(1, 0)));
    if (std::numbers::pi / 2 - std::abs(pitch) < kGimbalTolerance) {
        throw GimbalLockError("rotation_to_euler: pitch within 1e-6 of +-pi/2");
    }
    const double roll = std::atan2(R(2, 1), R(2, 2));
    const double yaw = std::atan2(R(1, 0), R(0, 0));
    return {roll, pitch, yaw};
}

/// Wraps an angle into (-π, π].
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a + std::numbers::pi, two_pi);
    if (a <= 0.0) a += two_pi;
    return a - std::numbers::pi;
}

} // namespace optistate
