#pragma once

// Discrete-time single-rigid-body trunk model driven by stance-foot ground
// reaction forces:
//
//   x_{k+1} = (I + A dt) x_k + (B dt) f_k + g dt
//
// A couples θ to ω through Rᵀ and r to v through I₃. B maps each foot force
// to angular acceleration Î⁻¹[p_i]× and linear acceleration I₃/m, with
// Î = R I_body Rᵀ the world-frame inertia.

#include "optistate/core/state.hpp"

namespace optistate {

using Mat12x12 = Eigen::Matrix<double, 12, 12>;

struct RobotPhysicalParams {
    double mass = 12.0;
    Mat3 inertia_body = Eigen::Vector3d(0.05, 0.15, 0.17).asDiagonal();

    void validate() const {
        if (!(mass > 0.0)) throw ConfigError("robot.mass must be > 0");
        if ((inertia_body - inertia_body.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
            throw ConfigError("robot.inertia must be symmetric");
        }
        Eigen::SelfAdjointEigenSolver<Mat3> es(inertia_body);
        if (es.eigenvalues().minCoeff() <= 0.0) {
            throw ConfigError("robot.inertia must be positive definite");
        }
    }
};

/// Stacked world-frame foot forces [f¹; f²; f³; f⁴].
using GroundReactionForces = Vec12;

/// Stacked body-frame foot positions relative to the CoM.
using FootPositions = Vec12;

inline Vec3 foot(const Vec12& stacked, int leg) { return stacked.segment<3>(3 * leg); }

/// Gravity contribution g·dt per step lives only in v_z.
inline Vec12 gravity_vector() {
    Vec12 g = Vec12::Zero();
    g(11) = -kGravity;
    return g;
}

inline constexpr double kInertiaDetGuard = 1e-12;

inline Mat3 world_inertia(const RobotPhysicalParams& params, const Rotation& R) {
    return R * params.inertia_body * R.transpose();
}

inline Mat3 inverse_world_inertia(const RobotPhysicalParams& params, const Rotation& R) {
    const Mat3 I_world = world_inertia(params, R);
    if (std::abs(I_world.determinant()) < kInertiaDetGuard) {
        throw SingularInertiaError("world-frame inertia is singular");
    }
    return I_world.inverse();
}

inline Mat12x12 build_A(const Rotation& R) {
    Mat12x12 A = Mat12x12::Zero();
    A.block<3, 3>(idx::theta, idx::omega) = R.transpose();
    A.block<3, 3>(idx::r, idx::v) = Mat3::Identity();
    return A;
}

inline Mat12x12 build_B(const RobotPhysicalParams& params, const Rotation& R,
                        const FootPositions& p_body) {
    const Mat3 I_inv = inverse_world_inertia(params, R);
    Mat12x12 B = Mat12x12::Zero();
    for (int i = 0; i < kNumLegs; ++i) {
        B.block<3, 3>(idx::omega, 3 * i) = I_inv * skew(foot(p_body, i));
        B.block<3, 3>(idx::v, 3 * i) = Mat3::Identity() / params.mass;
    }
    return B;
}

/// Matrix form of one model step.
inline TrunkState dyn_step(const TrunkState& x, const GroundReactionForces& f,
                           const FootPositions& p_body, const RobotPhysicalParams& params,
                           double dt) {
    const Rotation R = euler_to_rotation(x.theta());
    const Mat12x12 A = build_A(R);
    const Mat12x12 B = build_B(params, R, p_body);
    TrunkState next;
    next.x = (Mat12x12::Identity() + A * dt) * x.x + (B * dt) * f + gravity_vector() * dt;
    return next;
}

/// The same step evaluated block row by block row.
inline TrunkState dyn_step_blockwise(const TrunkState& x, const GroundReactionForces& f,
                                     const FootPositions& p_body,
                                     const RobotPhysicalParams& params, double dt) {
    const Rotation R = euler_to_rotation(x.theta());
    const Mat3 I_inv = inverse_world_inertia(params, R);
    Vec3 ang_acc = Vec3::Zero();
    Vec3 lin_acc = Vec3::Zero();
    for (int i = 0; i < kNumLegs; ++i) {
        const Vec3 fi = foot(f, i);
        ang_acc += I_inv * foot(p_body, i).cross(fi);
        lin_acc += fi / params.mass;
    }
    lin_acc.z() -= kGravity;

    TrunkState next;
    next.theta() = x.theta() + dt * R.transpose() * x.omega();
    next.r() = x.r() + dt * x.v();
    next.omega() = x.omega() + dt * ang_acc;
    next.v() = x.v() + dt * lin_acc;
    return next;
}

/// F = e^{A dt}. A is nilpotent of order two, so the series stops after the
/// linear term.
inline Mat12x12 transition_matrix(const Rotation& R, double dt) {
    return Mat12x12::Identity() + build_A(R) * dt;
}

} // namespace optistate
