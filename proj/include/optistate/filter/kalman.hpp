#pragma once

// Linear Kalman filter over the single-rigid-body model. Prediction reuses the
// controller's ground reaction forces; the update fuses IMU orientation and
// rate with leg-odometry height and velocity:
//
//   z = [θ_imu(3), r_z_odom, ω_imu(3), v_odom(3)]
//
// H picks every state except r_x and r_y. Rows without a stance foot (r_z and
// v) are dropped from H, z and R before the update.

#include <vector>

#include "optistate/core/state.hpp"
#include "optistate/model/leg_kinematics.hpp"
#include "optistate/model/rigid_body.hpp"

namespace optistate {

using Vec10 = Eigen::Matrix<double, 10, 1>;
using Mat10 = Eigen::Matrix<double, 10, 10>;

/// State index observed by each measurement row.
inline constexpr std::array<int, 10> kMeasuredStates{0, 1, 2, 5, 6, 7, 8, 9, 10, 11};

struct KalmanBelief {
    TrunkState x_hat;
    Mat12 P = Mat12::Identity() * 1e-2;
};

struct NoiseConfig {
    Mat12 Q = default_Q();
    Mat10 R = default_R();

    static Mat12 default_Q() {
        Vec12 d;
        d << 1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-3, 1e-3, 1e-3, 1e-2, 1e-2, 1e-2;
        return d.asDiagonal();
    }
    static Mat10 default_R() {
        Vec10 d;
        d << 1e-4, 1e-4, 1e-4, 1e-4, 1e-3, 1e-3, 1e-3, 1e-2, 1e-2, 1e-2;
        return d.asDiagonal();
    }
};

struct ImuSample {
    Vec3 theta = Vec3::Zero();  // Euler angles, rad
    Vec3 omega = Vec3::Zero();  // world-frame rate, rad/s
    Vec3 accel = Vec3::Zero();  // specific force, body frame, m/s²
    Vec3 alpha = Vec3::Zero();  // angular acceleration, rad/s²
};

struct Measurement {
    Vec10 z = Vec10::Zero();
    std::array<bool, 10> valid{};

    int valid_count() const {
        int n = 0;
        for (bool b : valid) n += b ? 1 : 0;
        return n;
    }
};

/// Leg-odometry outputs feeding the measurement.
struct OdometryOutputs {
    double height = 0.0;
    Vec3 velocity = Vec3::Zero();
};

inline Measurement assemble_measurement(const ImuSample& imu, const OdometryOutputs& odom,
                                        const ContactRef& contact) {
    Measurement m;
    m.z.segment<3>(0) = imu.theta;
    m.z(3) = odom.height;
    m.z.segment<3>(4) = imu.omega;
    m.z.segment<3>(7) = odom.velocity;
    const bool stance = contact.count() > 0;
    for (int i = 0; i < 10; ++i) {
        const bool odom_row = (i == 3) || (i >= 7);
        m.valid[static_cast<std::size_t>(i)] = odom_row ? stance : true;
    }
    return m;
}

/// Mean through the model step; covariance through F = I + A dt.
inline KalmanBelief predict(const KalmanBelief& belief, const GroundReactionForces& f,
                            const FootPositions& p_body, const RobotPhysicalParams& params,
                            double dt, const Mat12& Q) {
    const Rotation R = euler_to_rotation(belief.x_hat.theta());
    const Mat12 F = transition_matrix(R, dt);
    KalmanBelief out;
    out.x_hat = dyn_step(belief.x_hat, f, p_body, params, dt);
    out.P = F * belief.P * F.transpose() + Q;
    return out;
}

inline constexpr double kMaxInnovationCondition = 1e12;

/// Kalman update with masked rows removed, Joseph-form covariance.
inline KalmanBelief update(const KalmanBelief& belief, const Measurement& meas,
                           const Mat10& R_meas) {
    std::vector<int> rows;
    for (int i = 0; i < 10; ++i) {
        if (meas.valid[static_cast<std::size_t>(i)]) rows.push_back(i);
    }
    const int m = static_cast<int>(rows.size());
    if (m == 0) return belief;

    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, 12);
    Eigen::VectorXd z(m);
    Eigen::MatrixXd Rm(m, m);
    for (int a = 0; a < m; ++a) {
        const int ra = rows[static_cast<std::size_t>(a)];
        H(a, kMeasuredStates[static_cast<std::size_t>(ra)]) = 1.0;
        z(a) = meas.z(ra);
        for (int b = 0; b < m; ++b) Rm(a, b) = R_meas(ra, rows[static_cast<std::size_t>(b)]);
    }

    const Eigen::VectorXd y = z - H * belief.x_hat.x;
    const Eigen::MatrixXd S = H * belief.P * H.transpose() + Rm;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(S);
    const auto& sv = svd.singularValues();
    if (!(sv(m - 1) > 0.0) || sv(0) / sv(m - 1) > kMaxInnovationCondition) {
        throw InnovationSingularError("innovation covariance is singular");
    }
    // K = P Hᵀ S⁻¹, via S Kᵀ = H P (S and P symmetric).
    const Eigen::MatrixXd K = S.ldlt().solve(H * belief.P).transpose();

    KalmanBelief out;
    out.x_hat.x = belief.x_hat.x + K * y;
    const Mat12 IKH = Mat12::Identity() - K * H;
    Mat12 P = IKH * belief.P * IKH.transpose() + K * Rm * K.transpose();
    out.P = 0.5 * (P + P.transpose());
    return out;
}

/// Control input for one prediction: the forces commanded over the previous
/// interval and the foot positions they act at.
struct ControlInput {
    GroundReactionForces f = GroundReactionForces::Zero();
    FootPositions p_body = FootPositions::Zero();
};

struct FilterConfig {
    RobotPhysicalParams robot;
    LegGeometry legs;
    NoiseConfig noise;
    double dt = 0.005;
    bool raw_body_z = false;
};

/// Everything the filter derives from one sensor frame before fusing it.
struct LegOdometry {
    FootPositions p = FootPositions::Zero();
    Vec12 pdot = Vec12::Zero();
    OdometryOutputs outputs;
    bool valid = false;
};

inline LegOdometry compute_leg_odometry(const JointSample& joints, const ImuSample& imu,
                                        const ContactRef& contact, const FilterConfig& cfg) {
    LegOdometry lo;
    lo.p = all_foot_positions(joints, cfg.legs);
    lo.pdot = foot_velocity(joints, cfg.legs);
    if (contact.count() > 0) {
        const Rotation R = euler_to_rotation(imu.theta);
        const Vec3 omega_body = R.transpose() * imu.omega;
        lo.outputs.velocity = trunk_velocity_odom(lo.p, lo.pdot, omega_body, R, contact);
        lo.outputs.height = trunk_height_odom(lo.p, R, contact, cfg.raw_body_z);
        lo.valid = true;
    }
    return lo;
}

/// One filter cycle: odometry → measurement → predict (with the previous
/// control) → update.
inline KalmanBelief kf_step(const KalmanBelief& belief, const ControlInput& previous,
                            const JointSample& joints, const ImuSample& imu,
                            const ContactRef& contact, const FilterConfig& cfg,
                            LegOdometry* odom_out = nullptr) {
    const LegOdometry lo = compute_leg_odometry(joints, imu, contact, cfg);
    const Measurement z = assemble_measurement(imu, lo.outputs, contact);
    const KalmanBelief prior = predict(belief, previous.f, previous.p_body, cfg.robot, cfg.dt,
                                      cfg.noise.Q);
    if (odom_out != nullptr) *odom_out = lo;
    return update(prior, z, cfg.noise.R);
}

/// Stateful wrapper that remembers the last control input. On the first frame
/// the frame's own forces and foot positions stand in for the previous ones.
class KalmanFilter {
public:
    KalmanFilter() = default;
    KalmanFilter(FilterConfig cfg, KalmanBelief initial)
        : cfg_(std::move(cfg)), belief_(std::move(initial)) {}

    const KalmanBelief& belief() const { return belief_; }
    const FilterConfig& config() const { return cfg_; }
    const LegOdometry& last_odometry() const { return last_odom_; }

    const KalmanBelief& step(const JointSample& joints, const ImuSample& imu,
                             const ContactRef& contact, const GroundReactionForces& forces) {
        LegOdometry lo = compute_leg_odometry(joints, imu, contact, cfg_);
        if (!has_previous_) {
            previous_.f = forces;
            previous_.p_body = lo.p;
            has_previous_ = true;
        }
        belief_ = kf_step(belief_, previous_, joints, imu, contact, cfg_, &last_odom_);
        previous_.f = forces;
        previous_.p_body = last_odom_.p;
        return belief_;
    }

private:
    FilterConfig cfg_;
    KalmanBelief belief_;
    ControlInput previous_;
    LegOdometry last_odom_;
    bool has_previous_ = false;
};

} // namespace optistate
