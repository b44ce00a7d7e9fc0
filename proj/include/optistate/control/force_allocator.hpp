#pragma once

// Single-step ground reaction force allocation. Stand-in for a horizon MPC:
// pick stance forces whose net wrench best matches a PD tracking demand,
// subject to a linearised friction pyramid and vertical force bounds.
//
// Objective (wrench units, torque rows scaled by torque_weight):
//   ‖Σ [p_i]× f_i − Î ω̇_des‖² + ‖Σ f_i − m (v̇_des − g)‖² + ε‖f‖²
// solved by projected gradient descent with a fixed 1/L step.

#include <vector>

#include "optistate/core/state.hpp"
#include "optistate/model/rigid_body.hpp"

namespace optistate {

struct AllocatorParams {
    double friction = 0.6;
    double f_min = 0.0;
    double f_max = 500.0;
    Vec3 kp_theta = Vec3::Constant(50.0);
    Vec3 kd_omega = Vec3::Constant(10.0);
    Vec3 kp_r = Vec3::Constant(50.0);
    Vec3 kd_v = Vec3::Constant(10.0);
    double torque_weight = 1.0;  // scale of the torque rows relative to the force rows
    double regularization = 1e-6;
    int iterations = 500;
    double tracking_tolerance = 60.0;  // N or N·m, on the weighted residual norm

    void validate() const {
        if (!(friction > 0.0)) throw ConfigError("allocator.friction must be > 0");
        if (!(f_min >= 0.0 && f_max > f_min)) {
            throw ConfigError("allocator force bounds need f_max > f_min >= 0");
        }
        if (iterations < 1) throw ConfigError("allocator.iterations must be >= 1");
        if (!(torque_weight > 0.0)) throw ConfigError("allocator.torque_weight must be > 0");
    }
};

/// Euclidean projection of one foot force onto
/// {|fx| ≤ μ fz, |fy| ≤ μ fz, f_min ≤ fz ≤ f_max}.
///
/// For a fixed fz the optimal tangential components are clamps, leaving a
/// convex piecewise-quadratic problem in fz with breakpoints |fx|/μ, |fy|/μ.
inline Vec3 project_friction_pyramid(const Vec3& f, double mu, double f_min, double f_max) {
    const double ax = std::abs(f.x()), ay = std::abs(f.y()), c = f.z();
    auto cost = [&](double z) {
        const double ex = std::max(ax - mu * z, 0.0);
        const double ey = std::max(ay - mu * z, 0.0);
        return ex * ex + ey * ey + (z - c) * (z - c);
    };
    std::array<double, 4> knots{f_min, std::clamp(ax / mu, f_min, f_max),
                                std::clamp(ay / mu, f_min, f_max), f_max};
    std::sort(knots.begin(), knots.end());

    double best_z = f_min;
    double best = cost(f_min);
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
        const double lo = knots[k], hi = knots[k + 1];
        const double mid = 0.5 * (lo + hi);
        // On this piece the active set is fixed; solve the stationary point.
        double s = 0.0;
        int n = 0;
        if (ax > mu * mid) { s += ax; ++n; }
        if (ay > mu * mid) { s += ay; ++n; }
        const double z = std::clamp((c + mu * s) / (1.0 + n * mu * mu), lo, hi);
        for (double cand : {lo, z, hi}) {
            const double v = cost(cand);
            if (v < best) { best = v; best_z = cand; }
        }
    }
    const double lim = mu * best_z;
    return {std::clamp(f.x(), -lim, lim), std::clamp(f.y(), -lim, lim), best_z};
}

struct AllocationResult {
    GroundReactionForces f = GroundReactionForces::Zero();
    double residual = 0.0;          // ‖M f − b‖ at the solution
    std::vector<double> objective;  // per iteration, only if requested
};

/// Desired angular and linear accelerations from PD on the reference.
/// Roll and pitch errors live in the heading frame, so the angle term is
/// rotated by the current yaw before it is used as a world-frame ω̇.
inline Eigen::Matrix<double, 6, 1> desired_acceleration(const TrunkState& x,
                                                        const TrunkState& x_ref,
                                                        const AllocatorParams& ap) {
    Vec3 dtheta = x_ref.theta() - x.theta();
    dtheta.z() = wrap_angle(dtheta.z());
    const Mat3 Rz = Eigen::AngleAxisd(x.theta().z(), Vec3::UnitZ()).toRotationMatrix();
    Eigen::Matrix<double, 6, 1> a;
    a.head<3>() = Rz * ap.kp_theta.cwiseProduct(dtheta) +
                  ap.kd_omega.cwiseProduct(x_ref.omega() - x.omega());
    a.tail<3>() = ap.kp_r.cwiseProduct(x_ref.r() - x.r()) +
                  ap.kd_v.cwiseProduct(x_ref.v() - x.v());
    return a;
}

inline AllocationResult allocate_detailed(const TrunkState& x, const TrunkState& x_ref,
                                          const FootPositions& p_body, const ContactRef& contact,
                                          const AllocatorParams& ap,
                                          const RobotPhysicalParams& physical,
                                          bool record_objective = false) {
    AllocationResult out;
    const int nc = contact.count();
    if (nc == 0) return out;

    std::vector<int> legs;
    for (int i = 0; i < kNumLegs; ++i) {
        if (contact[i]) legs.push_back(i);
    }
    const int n = 3 * nc;

    const Rotation R = euler_to_rotation(x.theta());
    const Mat3 I_world = world_inertia(physical, R);
    const auto a_des = desired_acceleration(x, x_ref, ap);

    Eigen::MatrixXd M(6, n);
    for (int k = 0; k < nc; ++k) {
        M.block<3, 3>(0, 3 * k) = ap.torque_weight * skew(foot(p_body, legs[static_cast<std::size_t>(k)]));
        M.block<3, 3>(3, 3 * k) = Mat3::Identity();
    }
    Eigen::Matrix<double, 6, 1> b;
    b.head<3>() = ap.torque_weight * (I_world * a_des.head<3>());
    b.tail<3>() = physical.mass * (a_des.tail<3>() + Vec3(0.0, 0.0, kGravity));

    const Eigen::MatrixXd MtM = M.transpose() * M;
    const Eigen::VectorXd Mtb = M.transpose() * b;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(MtM, Eigen::EigenvaluesOnly);
    const double L = 2.0 * (es.eigenvalues().maxCoeff() + ap.regularization);
    const double step = 1.0 / L;

    auto objective = [&](const Eigen::VectorXd& f) {
        return (M * f - b).squaredNorm() + ap.regularization * f.squaredNorm();
    };

    Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
    const double fz0 = std::clamp(physical.mass * kGravity / nc, ap.f_min, ap.f_max);
    for (int k = 0; k < nc; ++k) f(3 * k + 2) = fz0;

    if (record_objective) out.objective.push_back(objective(f));
    for (int it = 0; it < ap.iterations; ++it) {
        const Eigen::VectorXd grad = 2.0 * (MtM * f - Mtb) + 2.0 * ap.regularization * f;
        Eigen::VectorXd g = f - step * grad;
        for (int k = 0; k < nc; ++k) {
            g.segment<3>(3 * k) =
                project_friction_pyramid(g.segment<3>(3 * k), ap.friction, ap.f_min, ap.f_max);
        }
        f = std::move(g);
        if (record_objective) out.objective.push_back(objective(f));
    }

    out.residual = (M * f - b).norm();
    if (out.residual > 10.0 * ap.tracking_tolerance) {
        throw InfeasibleError("force allocation cannot meet the reference within tolerance");
    }
    for (int k = 0; k < nc; ++k) {
        out.f.segment<3>(3 * legs[static_cast<std::size_t>(k)]) = f.segment<3>(3 * k);
    }
    return out;
}

inline GroundReactionForces allocate(const TrunkState& x, const TrunkState& x_ref,
                                     const FootPositions& p_body, const ContactRef& contact,
                                     const AllocatorParams& ap,
                                     const RobotPhysicalParams& physical) {
    return allocate_detailed(x, x_ref, p_body, contact, ap, physical).f;
}

} // namespace optistate
