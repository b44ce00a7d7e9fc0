#pragma once

// Closed-loop trot simulator: reference generator → force allocator →
// single-rigid-body ground truth, with feet placed in the world and joints
// recovered by inverse kinematics. Disturbances are injected on top:
// actuation error on the applied forces, stance-foot slip, compliant sinking
// and sensor noise. Every random draw comes from a stream seeded by
// (seed, stream id), so the output is a pure function of the config.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include "optistate/control/force_allocator.hpp"
#include "optistate/core/kv_config.hpp"
#include "optistate/model/leg_kinematics.hpp"
#include "optistate/model/rigid_body.hpp"
#include "optistate/sim/dataset.hpp"
#include "optistate/sim/depth_camera.hpp"
#include "optistate/sim/gait.hpp"
#include "optistate/sim/terrain.hpp"

namespace optistate {

enum class CommandMode { random, straight, stand };

inline std::string to_string(CommandMode m) {
    switch (m) {
        case CommandMode::random: return "random";
        case CommandMode::straight: return "straight";
        case CommandMode::stand: return "stand";
    }
    return "random";
}

inline CommandMode command_from_string(const std::string& s) {
    if (s == "random") return CommandMode::random;
    if (s == "straight") return CommandMode::straight;
    if (s == "stand") return CommandMode::stand;
    throw ConfigError("command.mode: unknown mode '" + s + "' (expected random, straight or stand)");
}

struct CommandConfig {
    CommandMode mode = CommandMode::random;
    double speed = 0.3;           // m/s, straight-line forward speed
    double sigma_vx = 0.25;       // random walk stationary std, m/s
    double sigma_vy = 0.1;
    double sigma_yaw_rate = 0.3;  // rad/s
    double tau = 2.0;             // s, random walk correlation time
    double max_speed = 0.5;
    double arena_radius = 1.5;    // m
    double max_yaw = 1.2;         // rad, |yaw| kept inside this band
    double ramp_time = 1.0;       // s
    double initial_yaw = 0.0;
};

struct SensorNoise {
    double joint_pos = 0.002;    // rad
    double joint_vel = 0.05;     // rad/s
    double imu_theta = 0.005;    // rad
    double imu_omega = 0.02;     // rad/s
    double imu_accel = 0.1;      // m/s²
    double imu_alpha = 0.5;      // rad/s²
    double mocap = 1e-3;         // m, rad (all truth components)
    double force_scale = 0.05;   // relative actuation error on applied forces

    static SensorNoise zero() {
        return {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    }
};

struct SimConfig {
    double dt = 0.005;
    double duration = 15.0;
    std::uint64_t seed = 1;
    double nominal_height = 0.30;
    double swing_height = 0.08;
    GaitConfig gait;
    TerrainConfig terrain;
    CommandConfig command;
    SensorNoise noise;
    CameraConfig camera;
    bool render = true;
    RobotPhysicalParams robot;
    LegGeometry legs;
    AllocatorParams allocator = default_allocator();

    /// Diagonal-pair support leaves one torque axis reachable only through
    /// net horizontal force, so the simulator weights torque rows heavily.
    static AllocatorParams default_allocator() {
        AllocatorParams a;
        a.torque_weight = 30.0;
        a.kd_omega = Vec3::Constant(20.0);
        return a;
    }

    long frame_count() const { return static_cast<long>(std::lround(duration / dt)); }

    void validate() const {
        if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
        if (!(duration > 0.0)) throw ConfigError("duration must be > 0");
        if (!(nominal_height > 0.05)) throw ConfigError("nominal_height must be > 0.05");
        gait.validate(dt);
        terrain.validate();
        camera.validate();
        robot.validate();
        legs.validate();
        allocator.validate();
        const double reach = legs.l2 + legs.l3;
        if (nominal_height >= reach) throw ConfigError("nominal_height exceeds leg reach");
    }

    KeyValueConfig to_kv() const {
        KeyValueConfig kv;
        kv.set("dt", dt);
        kv.set("duration", duration);
        kv.set("seed", seed);
        kv.set("nominal_height", nominal_height);
        kv.set("swing_height", swing_height);
        kv.set("gait.kind", to_string(gait.kind).c_str());
        kv.set("gait.period", gait.period);
        kv.set("gait.duty", gait.duty);
        kv.set("terrain.kind", to_string(terrain.kind).c_str());
        kv.set("terrain.incline_angle", terrain.incline_angle);
        kv.set("terrain.slip_rate", terrain.slip_rate);
        kv.set("terrain.slip_magnitude", terrain.slip_magnitude);
        kv.set("terrain.slip_traction", terrain.slip_traction);
        kv.set("terrain.rough_amplitude", terrain.rough_amplitude);
        kv.set("terrain.rough_wavelength", terrain.rough_wavelength);
        kv.set("terrain.compliance_rate", terrain.compliance_rate);
        kv.set("terrain.compliance_depth", terrain.compliance_depth);
        kv.set("command.mode", to_string(command.mode).c_str());
        kv.set("command.speed", command.speed);
        kv.set("command.sigma_vx", command.sigma_vx);
        kv.set("command.sigma_vy", command.sigma_vy);
        kv.set("command.sigma_yaw_rate", command.sigma_yaw_rate);
        kv.set("command.tau", command.tau);
        kv.set("command.max_speed", command.max_speed);
        kv.set("command.arena_radius", command.arena_radius);
        kv.set("command.max_yaw", command.max_yaw);
        kv.set("command.ramp_time", command.ramp_time);
        kv.set("command.initial_yaw", command.initial_yaw);
        kv.set("noise.joint_pos", noise.joint_pos);
        kv.set("noise.joint_vel", noise.joint_vel);
        kv.set("noise.imu_theta", noise.imu_theta);
        kv.set("noise.imu_omega", noise.imu_omega);
        kv.set("noise.imu_accel", noise.imu_accel);
        kv.set("noise.imu_alpha", noise.imu_alpha);
        kv.set("noise.mocap", noise.mocap);
        kv.set("noise.force_scale", noise.force_scale);
        kv.set("camera.height", camera.height);
        kv.set("camera.width", camera.width);
        kv.set("camera.hfov", camera.hfov);
        kv.set("camera.vfov", camera.vfov);
        kv.set("camera.pitch", camera.pitch);
        kv.set("camera.max_range", camera.max_range);
        kv.set("camera.rate_hz", camera.rate_hz);
        kv.set("camera.render", render);
        kv.set("robot.mass", robot.mass);
        kv.set("allocator.friction", allocator.friction);
        kv.set("allocator.f_max", allocator.f_max);
        kv.set("allocator.kp_theta", allocator.kp_theta.x());
        kv.set("allocator.kd_omega", allocator.kd_omega.x());
        kv.set("allocator.kp_r", allocator.kp_r.x());
        kv.set("allocator.kd_v", allocator.kd_v.x());
        kv.set("allocator.torque_weight", allocator.torque_weight);
        return kv;
    }

    /// Overlays keys from `kv` on `base`. Unknown keys are rejected.
    static SimConfig from_kv(const KeyValueConfig& kv, const SimConfig& base) {
        const auto unknown = kv.unknown_keys(base.to_kv());
        if (!unknown.empty()) throw ConfigError(unknown.front() + ": unknown simulation key");
        SimConfig c = base;
        c.dt = kv.get_double("dt", c.dt);
        c.duration = kv.get_double("duration", c.duration);
        c.seed = kv.get_u64("seed", c.seed);
        c.nominal_height = kv.get_double("nominal_height", c.nominal_height);
        c.swing_height = kv.get_double("swing_height", c.swing_height);
        c.gait.kind = gait_from_string(kv.get_string("gait.kind", to_string(c.gait.kind)));
        c.gait.period = kv.get_double("gait.period", c.gait.period);
        c.gait.duty = kv.get_double("gait.duty", c.gait.duty);
        c.terrain.kind = terrain_from_string(kv.get_string("terrain.kind", to_string(c.terrain.kind)));
        c.terrain.incline_angle = kv.get_double("terrain.incline_angle", c.terrain.incline_angle);
        c.terrain.slip_rate = kv.get_double("terrain.slip_rate", c.terrain.slip_rate);
        c.terrain.slip_magnitude = kv.get_double("terrain.slip_magnitude", c.terrain.slip_magnitude);
        c.terrain.slip_traction = kv.get_double("terrain.slip_traction", c.terrain.slip_traction);
        c.terrain.rough_amplitude = kv.get_double("terrain.rough_amplitude", c.terrain.rough_amplitude);
        c.terrain.rough_wavelength = kv.get_double("terrain.rough_wavelength", c.terrain.rough_wavelength);
        c.terrain.compliance_rate = kv.get_double("terrain.compliance_rate", c.terrain.compliance_rate);
        c.terrain.compliance_depth = kv.get_double("terrain.compliance_depth", c.terrain.compliance_depth);
        c.command.mode = command_from_string(kv.get_string("command.mode", to_string(c.command.mode)));
        c.command.speed = kv.get_double("command.speed", c.command.speed);
        c.command.sigma_vx = kv.get_double("command.sigma_vx", c.command.sigma_vx);
        c.command.sigma_vy = kv.get_double("command.sigma_vy", c.command.sigma_vy);
        c.command.sigma_yaw_rate = kv.get_double("command.sigma_yaw_rate", c.command.sigma_yaw_rate);
        c.command.tau = kv.get_double("command.tau", c.command.tau);
        c.command.max_speed = kv.get_double("command.max_speed", c.command.max_speed);
        c.command.arena_radius = kv.get_double("command.arena_radius", c.command.arena_radius);
        c.command.max_yaw = kv.get_double("command.max_yaw", c.command.max_yaw);
        c.command.ramp_time = kv.get_double("command.ramp_time", c.command.ramp_time);
        c.command.initial_yaw = kv.get_double("command.initial_yaw", c.command.initial_yaw);
        c.noise.joint_pos = kv.get_double("noise.joint_pos", c.noise.joint_pos);
        c.noise.joint_vel = kv.get_double("noise.joint_vel", c.noise.joint_vel);
        c.noise.imu_theta = kv.get_double("noise.imu_theta", c.noise.imu_theta);
        c.noise.imu_omega = kv.get_double("noise.imu_omega", c.noise.imu_omega);
        c.noise.imu_accel = kv.get_double("noise.imu_accel", c.noise.imu_accel);
        c.noise.imu_alpha = kv.get_double("noise.imu_alpha", c.noise.imu_alpha);
        c.noise.mocap = kv.get_double("noise.mocap", c.noise.mocap);
        c.noise.force_scale = kv.get_double("noise.force_scale", c.noise.force_scale);
        c.camera.height = static_cast<int>(kv.get_int("camera.height", c.camera.height));
        c.camera.width = static_cast<int>(kv.get_int("camera.width", c.camera.width));
        c.camera.hfov = kv.get_double("camera.hfov", c.camera.hfov);
        c.camera.vfov = kv.get_double("camera.vfov", c.camera.vfov);
        c.camera.pitch = kv.get_double("camera.pitch", c.camera.pitch);
        c.camera.max_range = kv.get_double("camera.max_range", c.camera.max_range);
        c.camera.rate_hz = kv.get_double("camera.rate_hz", c.camera.rate_hz);
        c.render = kv.get_bool("camera.render", c.render);
        c.robot.mass = kv.get_double("robot.mass", c.robot.mass);
        c.allocator.friction = kv.get_double("allocator.friction", c.allocator.friction);
        c.allocator.f_max = kv.get_double("allocator.f_max", c.allocator.f_max);
        c.allocator.kp_theta = Vec3::Constant(kv.get_double("allocator.kp_theta", c.allocator.kp_theta.x()));
        c.allocator.kd_omega = Vec3::Constant(kv.get_double("allocator.kd_omega", c.allocator.kd_omega.x()));
        c.allocator.kp_r = Vec3::Constant(kv.get_double("allocator.kp_r", c.allocator.kp_r.x()));
        c.allocator.kd_v = Vec3::Constant(kv.get_double("allocator.kd_v", c.allocator.kd_v.x()));
        c.allocator.torque_weight = kv.get_double("allocator.torque_weight", c.allocator.torque_weight);
        c.validate();
        return c;
    }
};

inline SimConfig sim_config_from_kv(const KeyValueConfig& kv) { return SimConfig::from_kv(kv, SimConfig{}); }

/// Independent RNG stream per purpose, derived from the master seed.
inline std::mt19937_64 rng_stream(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream,
                      0x6f707473u};
    return std::mt19937_64(seq);
}

namespace rng_ids {
inline constexpr std::uint32_t command = 1, slip = 2, sensors = 3, forces = 4, mocap = 5, terrain = 6;
}

/// Index of the camera tick containing frame k.
inline long camera_tick(long k, double dt, double rate_hz) {
    return static_cast<long>(std::floor(static_cast<double>(k) * dt * rate_hz + 1e-9));
}

class Simulator {
public:
    explicit Simulator(SimConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        terrain_ = Terrain(cfg_.terrain, rng_stream(cfg_.seed, rng_ids::terrain)());
    }

    const Terrain& terrain() const { return terrain_; }
    const SimConfig& config() const { return cfg_; }

    Dataset run() {
        const double dt = cfg_.dt;
        const long n = cfg_.frame_count();
        auto rng_cmd = rng_stream(cfg_.seed, rng_ids::command);
        auto rng_slip = rng_stream(cfg_.seed, rng_ids::slip);
        auto rng_sens = rng_stream(cfg_.seed, rng_ids::sensors);
        auto rng_force = rng_stream(cfg_.seed, rng_ids::forces);
        auto rng_mocap = rng_stream(cfg_.seed, rng_ids::mocap);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);

        Dataset ds;
        ds.dt = dt;
        if (cfg_.render) {
            ds.image_height = cfg_.camera.height;
            ds.image_width = cfg_.camera.width;
        }
        ds.frames.reserve(static_cast<std::size_t>(n));

        // Reference and initial state.
        const double yaw0 = cfg_.command.initial_yaw;
        ref_xy_ = Vec3::Zero();
        ref_yaw_ = yaw0;
        cmd_body_ = Vec3::Zero();
        TrunkState x = reference_state(Vec3::Zero());
        TrunkState x_prev = x;

        // Feet start under the hips, on the ground.
        const Rotation R0 = euler_to_rotation(x.theta());
        for (int i = 0; i < kNumLegs; ++i) {
            Vec3 pw = x.r() + R0 * nominal_foot_body(i);
            pw.z() = terrain_.height(pw.x(), pw.y());
            feet_[static_cast<std::size_t>(i)] = {pw, pw, Vec3::Zero(), 0.0, true};
        }

        long last_tick = -1;
        for (long k = 0; k < n; ++k) {
            if (!x.finite()) throw DivergedError("simulation state became non-finite");
            const Rotation R = euler_to_rotation(x.theta());
            const Vec3 omega_body = R.transpose() * x.omega();

            // Reference command for this frame.
            const double t = static_cast<double>(k) * dt;
            const Vec3 v_world_cmd = advance_command(t, rng_cmd);
            const TrunkState x_ref = reference_state(v_world_cmd);

            // Foot world positions and velocities at this frame.
            ContactRef contact;
            std::array<bool, 4> slip{};
            Vec12 pdot_world = Vec12::Zero();
            for (int i = 0; i < kNumLegs; ++i) {
                const auto li = static_cast<std::size_t>(i);
                const LegPhase ph = leg_phase(cfg_.gait, dt, k, i);
                contact.flags[li] = ph.stance;
                FootState& fs = feet_[li];
                if (ph.stance) {
                    if (!fs.stance) {
                        // Touchdown: pin the foot where the swing ended.
                        fs.stance = true;
                        fs.sink = 0.0;
                        fs.pos.z() = terrain_.height(fs.pos.x(), fs.pos.y());
                        const double a = 2.0 * std::numbers::pi * unif(rng_slip);
                        fs.slip_dir = Vec3(std::cos(a), std::sin(a), 0.0);
                    }
                    Vec3 vel = Vec3::Zero();
                    if (cfg_.terrain.has_slip() && unif(rng_slip) < cfg_.terrain.slip_rate) {
                        slip[li] = true;
                        vel += cfg_.terrain.slip_magnitude * fs.slip_dir;
                    }
                    if (cfg_.terrain.has_compliance()) {
                        vel.z() -= cfg_.terrain.compliance_rate * (1.0 - fs.sink / cfg_.terrain.compliance_depth);
                    }
                    pdot_world.segment<3>(3 * i) = vel;
                } else {
                    if (fs.stance) {
                        fs.stance = false;
                        fs.start = fs.pos;
                    }
                    const double s = static_cast<double>(ph.elapsed + 1) / ph.length;
                    const double remaining = static_cast<double>(ph.length - ph.elapsed - 1) * dt;
                    const double stance_time = cfg_.gait.stance_frames(dt) * dt;
                    Vec3 hip = x.r() + R * nominal_foot_body(i);
                    Vec3 target = hip + x.v() * (remaining + 0.5 * stance_time);
                    target.z() = terrain_.height(target.x(), target.y());
                    const double b = s * s * (3.0 - 2.0 * s);
                    Vec3 p = fs.start + (target - fs.start) * b;
                    p.z() += cfg_.swing_height * std::sin(std::numbers::pi * s);
                    pdot_world.segment<3>(3 * i) = (p - fs.pos) / dt;
                    fs.pos = p;
                }
            }

            // Body-frame feet, joints and joint rates.
            FootPositions p_body;
            JointSample joints;
            for (int i = 0; i < kNumLegs; ++i) {
                const Vec3 pb = R.transpose() * (feet_[static_cast<std::size_t>(i)].pos - x.r());
                const Vec3 pbdot = R.transpose() * (pdot_world.segment<3>(3 * i) - x.v()) - omega_body.cross(pb);
                const Vec3 q = inverse_kinematics(pb, cfg_.legs, i);
                if ((forward_kinematics(q, cfg_.legs, i) - pb).norm() > 1e-6) {
                    throw DivergedError("simulation: foot " + std::to_string(i) + " left the workspace at t = " +
                                        std::to_string(t));
                }
                const Mat3 J = jacobian(q, cfg_.legs, i);
                p_body.segment<3>(3 * i) = pb;
                joints.theta.segment<3>(3 * i) = q;
                joints.theta_dot.segment<3>(3 * i) = J.partialPivLu().solve(pbdot);
            }

            // Commanded and applied forces.
            const GroundReactionForces f_cmd = allocate(x, x_ref, p_body, contact, cfg_.allocator, cfg_.robot);
            GroundReactionForces f_app = f_cmd;
            for (int i = 0; i < kNumLegs; ++i) {
                if (!contact[i]) continue;
                for (int j = 0; j < 3; ++j) {
                    f_app(3 * i + j) *= 1.0 + cfg_.noise.force_scale * gauss(rng_force);
                }
                if (slip[static_cast<std::size_t>(i)]) {
                    f_app.segment<2>(3 * i) *= cfg_.terrain.slip_traction;
                }
            }

            // Sensors.
            SensorFrame fr;
            fr.t = t;
            fr.contact = contact;
            fr.forces = f_cmd;
            fr.applied_forces = f_app;
            fr.feet_body_true = p_body;
            fr.slip = slip;
            fr.has_truth = true;
            fr.truth = x;
            fr.joints = joints;
            const auto& ns = cfg_.noise;
            for (int j = 0; j < 12; ++j) fr.joints.theta(j) += ns.joint_pos * gauss(rng_sens);
            for (int j = 0; j < 12; ++j) fr.joints.theta_dot(j) += ns.joint_vel * gauss(rng_sens);
            const Vec3 accel_world = (x.v() - x_prev.v()) / dt + Vec3(0.0, 0.0, kGravity);
            fr.imu.theta = x.theta();
            fr.imu.omega = x.omega();
            fr.imu.accel = R.transpose() * accel_world;
            fr.imu.alpha = (x.omega() - x_prev.omega()) / dt;
            for (int j = 0; j < 3; ++j) {
                fr.imu.theta(j) += ns.imu_theta * gauss(rng_sens);
                fr.imu.omega(j) += ns.imu_omega * gauss(rng_sens);
                fr.imu.accel(j) += ns.imu_accel * gauss(rng_sens);
                fr.imu.alpha(j) += ns.imu_alpha * gauss(rng_sens);
            }
            fr.mocap = x;
            for (int j = 0; j < 12; ++j) fr.mocap.x(j) += ns.mocap * gauss(rng_mocap);

            if (cfg_.render) {
                const long tick = camera_tick(k, dt, cfg_.camera.rate_hz);
                if (tick != last_tick) {
                    ds.images.push_back(render_depth(terrain_, x, cfg_.camera));
                    last_tick = tick;
                }
                fr.depth_index = static_cast<int>(ds.images.size()) - 1;
            }
            ds.frames.push_back(std::move(fr));

            // Advance truth and stance feet.
            x_prev = x;
            x = dyn_step(x, f_app, p_body, cfg_.robot, dt);
            for (int i = 0; i < kNumLegs; ++i) {
                FootState& fs = feet_[static_cast<std::size_t>(i)];
                if (!fs.stance) continue;
                const Vec3 vel = pdot_world.segment<3>(3 * i);
                fs.pos += vel * dt;
                fs.sink -= vel.z() * dt;
            }
            check_posture(x, t);
        }
        return ds;
    }

private:
    struct FootState {
        Vec3 pos;
        Vec3 start;
        Vec3 slip_dir;
        double sink = 0.0;
        bool stance = true;
    };

    Vec3 nominal_foot_body(int leg) const {
        const Vec3 hip = cfg_.legs.hip_offset[static_cast<std::size_t>(leg)];
        return hip + Vec3(0.0, LegGeometry::side_sign(leg) * cfg_.legs.l1, -cfg_.nominal_height);
    }

    /// Steps the command random walk and integrates the reference pose;
    /// returns the world-frame velocity command.
    Vec3 advance_command(double t, std::mt19937_64& rng) {
        const auto& cc = cfg_.command;
        const double dt = cfg_.dt;
        std::normal_distribution<double> gauss(0.0, 1.0);
        Vec3 body = Vec3::Zero();
        switch (cc.mode) {
            case CommandMode::stand: break;
            case CommandMode::straight: body = Vec3(cc.speed, 0.0, 0.0); break;
            case CommandMode::random: {
                const double a = std::exp(-dt / cc.tau);
                const double b = std::sqrt(1.0 - a * a);
                cmd_body_.x() = a * cmd_body_.x() + b * cc.sigma_vx * gauss(rng);
                cmd_body_.y() = a * cmd_body_.y() + b * cc.sigma_vy * gauss(rng);
                cmd_body_.z() = a * cmd_body_.z() + b * cc.sigma_yaw_rate * gauss(rng);
                body = cmd_body_;
                const double sp = std::hypot(body.x(), body.y());
                if (sp > cc.max_speed) body.head<2>() *= cc.max_speed / sp;
                break;
            }
        }
        const double ramp = cc.ramp_time > 0.0 ? std::min(1.0, t / cc.ramp_time) : 1.0;
        body *= ramp;
        // Yaw stays inside the band.
        double yaw_rate = cc.mode == CommandMode::random ? body.z() : 0.0;
        if ((ref_yaw_ >= cc.max_yaw && yaw_rate > 0.0) || (ref_yaw_ <= -cc.max_yaw && yaw_rate < 0.0)) {
            yaw_rate = 0.0;
        }
        Vec3 v_world(std::cos(ref_yaw_) * body.x() - std::sin(ref_yaw_) * body.y(),
                     std::sin(ref_yaw_) * body.x() + std::cos(ref_yaw_) * body.y(), 0.0);
        if (cc.mode == CommandMode::random) {
            const double rad = std::hypot(ref_xy_.x(), ref_xy_.y());
            if (rad > cc.arena_radius) {
                const Vec3 inward = -ref_xy_ / rad;
                v_world += inward * std::min(cc.max_speed, 0.8 * (rad - cc.arena_radius) + 0.2);
            }
        }
        ref_xy_ += v_world * dt;
        ref_yaw_ += yaw_rate * dt;
        yaw_rate_ = yaw_rate;
        return v_world;
    }

    TrunkState reference_state(const Vec3& v_world) const {
        TrunkState s;
        const double x = ref_xy_.x(), y = ref_xy_.y();
        const double h = terrain_.height(x, y);
        double roll = 0.0, pitch = 0.0, vz = 0.0;
        if (cfg_.terrain.kind == TerrainKind::incline) {
            const auto [gx, gy] = terrain_.gradient(x, y);
            const double c = std::cos(ref_yaw_), sn = std::sin(ref_yaw_);
            pitch = -std::atan(gx * c + gy * sn);
            roll = std::atan(-gx * sn + gy * c);
            vz = gx * v_world.x() + gy * v_world.y();
        }
        s.theta() = Vec3(roll, pitch, ref_yaw_);
        s.r() = Vec3(x, y, h + cfg_.nominal_height);
        s.omega() = Vec3(0.0, 0.0, yaw_rate_);
        s.v() = Vec3(v_world.x(), v_world.y(), vz);
        return s;
    }

    void check_posture(const TrunkState& x, double t) const {
        const double ground = terrain_.height(x.r().x(), x.r().y());
        if (!x.finite() || std::abs(x.theta().x()) > 0.8 || std::abs(x.theta().y()) > 0.8 + std::abs(cfg_.terrain.incline_angle) ||
            x.r().z() - ground < 0.12) {
            throw DivergedError("simulation: trunk fell at t = " + std::to_string(t));
        }
    }

    SimConfig cfg_;
    Terrain terrain_;
    std::array<FootState, 4> feet_{};
    Vec3 ref_xy_ = Vec3::Zero();
    double ref_yaw_ = 0.0;
    double yaw_rate_ = 0.0;
    Vec3 cmd_body_ = Vec3::Zero();
};

inline Dataset simulate(const SimConfig& cfg) { return Simulator(cfg).run(); }

} // namespace optistate
