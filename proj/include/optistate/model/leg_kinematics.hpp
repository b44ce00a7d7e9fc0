#pragma once

// 3-DoF point-foot leg (abduction about x, hip pitch about y, knee pitch about
// y) and the leg-odometry measurements built on it.
//
// Legs are ordered FL, FR, RL, RR. Left legs carry the abduction link on +y.

#include "optistate/core/state.hpp"
#include "optistate/model/rigid_body.hpp"

namespace optistate {

struct LegGeometry {
    std::array<Vec3, kNumLegs> hip_offset{Vec3(0.19, 0.05, 0.0), Vec3(0.19, -0.05, 0.0),
                                          Vec3(-0.19, 0.05, 0.0), Vec3(-0.19, -0.05, 0.0)};
    double l1 = 0.06;  // abduction link
    double l2 = 0.20;  // thigh
    double l3 = 0.20;  // shank
    double joint_limit = 2.8;

    static constexpr double side_sign(int leg) { return (leg % 2 == 0) ? 1.0 : -1.0; }

    void validate() const {
        if (!(l1 > 0.0 && l2 > 0.0 && l3 > 0.0)) throw ConfigError("leg link lengths must be > 0");
    }
};

/// Joint encoder sample, three joints per leg in leg order.
struct JointSample {
    Vec12 theta = Vec12::Zero();
    Vec12 theta_dot = Vec12::Zero();
};

inline Vec3 leg_joints(const Vec12& q, int leg) { return q.segment<3>(3 * leg); }

/// Foot position in the body frame for one leg.
inline Vec3 forward_kinematics(const Vec3& q, const LegGeometry& geom, int leg) {
    const double s = LegGeometry::side_sign(leg);
    const double c2 = std::cos(q.y()), s2 = std::sin(q.y());
    const double c23 = std::cos(q.y() + q.z()), s23 = std::sin(q.y() + q.z());
    // Sagittal-plane point (x, z) of the thigh+shank chain.
    const double a = -geom.l2 * s2 - geom.l3 * s23;
    const double b = -geom.l2 * c2 - geom.l3 * c23;
    const double c1 = std::cos(q.x()), s1 = std::sin(q.x());
    const double y0 = s * geom.l1;
    return geom.hip_offset[static_cast<std::size_t>(leg)] +
           Vec3(a, c1 * y0 - s1 * b, s1 * y0 + c1 * b);
}

/// Analytic ∂p/∂q of forward_kinematics.
inline Mat3 jacobian(const Vec3& q, const LegGeometry& geom, int leg) {
    const double s = LegGeometry::side_sign(leg);
    const double c2 = std::cos(q.y()), s2 = std::sin(q.y());
    const double c23 = std::cos(q.y() + q.z()), s23 = std::sin(q.y() + q.z());
    const double b = -geom.l2 * c2 - geom.l3 * c23;
    const double da_dq2 = -geom.l2 * c2 - geom.l3 * c23;
    const double da_dq3 = -geom.l3 * c23;
    const double db_dq2 = geom.l2 * s2 + geom.l3 * s23;
    const double db_dq3 = geom.l3 * s23;
    const double c1 = std::cos(q.x()), s1 = std::sin(q.x());
    const double y0 = s * geom.l1;

    Mat3 J;
    J(0, 0) = 0.0;
    J(1, 0) = -s1 * y0 - c1 * b;
    J(2, 0) = c1 * y0 - s1 * b;
    J(0, 1) = da_dq2;
    J(1, 1) = -s1 * db_dq2;
    J(2, 1) = c1 * db_dq2;
    J(0, 2) = da_dq3;
    J(1, 2) = -s1 * db_dq3;
    J(2, 2) = c1 * db_dq3;
    return J;
}

/// Closed-form inverse kinematics (knee angle in [0, π]). Targets outside the
/// reachable shell are clamped to it.
inline Vec3 inverse_kinematics(const Vec3& p_body, const LegGeometry& geom, int leg) {
    const double s = LegGeometry::side_sign(leg);
    const Vec3 d = p_body - geom.hip_offset[static_cast<std::size_t>(leg)];
    const double y0 = s * geom.l1;
    const double yz2 = d.y() * d.y() + d.z() * d.z();
    const double b = -std::sqrt(std::max(yz2 - geom.l1 * geom.l1, 1e-12));
    const double q1 = std::atan2(d.z(), d.y()) - std::atan2(b, y0);
    const double a = d.x();
    const double reach2 = a * a + b * b;
    const double c3 = std::clamp((reach2 - geom.l2 * geom.l2 - geom.l3 * geom.l3) /
                                     (2.0 * geom.l2 * geom.l3),
                                 -1.0, 1.0);
    const double q3 = std::acos(c3);
    const double k1 = geom.l2 + geom.l3 * std::cos(q3);
    const double k2 = geom.l3 * std::sin(q3);
    const double q2 = std::atan2(-a, -b) - std::atan2(k2, k1);
    return {wrap_angle(q1), wrap_angle(q2), q3};
}

/// Body-frame foot positions for all legs.
inline FootPositions all_foot_positions(const JointSample& joints, const LegGeometry& geom) {
    FootPositions p;
    for (int i = 0; i < kNumLegs; ++i) {
        p.segment<3>(3 * i) = forward_kinematics(leg_joints(joints.theta, i), geom, i);
    }
    return p;
}

/// Per-leg ṗ = J(q) q̇, body frame.
inline Vec12 foot_velocity(const JointSample& joints, const LegGeometry& geom) {
    Vec12 pdot;
    for (int i = 0; i < kNumLegs; ++i) {
        pdot.segment<3>(3 * i) = jacobian(leg_joints(joints.theta, i), geom, i) *
                                 leg_joints(joints.theta_dot, i);
    }
    return pdot;
}

/// Trunk velocity from stance legs: v = -(1/n_c) Σ R (ṗ_i + ω_b × p_i).
/// `omega_body` is the IMU rate expressed in the body frame.
inline Vec3 trunk_velocity_odom(const FootPositions& p, const Vec12& pdot, const Vec3& omega_body,
                                const Rotation& R, const ContactRef& contact) {
    const int nc = contact.count();
    if (nc == 0) throw NoContactError("trunk_velocity_odom: no stance feet");
    Vec3 sum = Vec3::Zero();
    for (int i = 0; i < kNumLegs; ++i) {
        if (!contact[i]) continue;
        sum += R * (pdot.segment<3>(3 * i) + omega_body.cross(foot(p, i)));
    }
    return -sum / static_cast<double>(nc);
}

/// Trunk height from stance legs. By default foot positions are rotated into
/// the world frame before taking z; `raw_body_z` uses body-frame p_z as is.
inline double trunk_height_odom(const FootPositions& p, const Rotation& R,
                                const ContactRef& contact, bool raw_body_z = false) {
    const int nc = contact.count();
    if (nc == 0) throw NoContactError("trunk_height_odom: no stance feet");
    double sum = 0.0;
    for (int i = 0; i < kNumLegs; ++i) {
        if (!contact[i]) continue;
        sum += raw_body_z ? foot(p, i).z() : (R * foot(p, i)).z();
    }
    return -sum / static_cast<double>(nc);
}

} // namespace optistate
