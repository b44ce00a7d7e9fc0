#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "optistate/filter/kalman.hpp"
#include "optistate/sim/simulator.hpp"

using namespace optistate;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("optistate_" + name)).string();
}

std::vector<char> file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

SimConfig quiet_config(TerrainKind kind, CommandMode mode, double duration) {
    SimConfig c;
    c.terrain.kind = kind;
    c.command.mode = mode;
    c.duration = duration;
    c.noise = SensorNoise::zero();
    c.render = false;
    return c;
}

} // namespace

TEST(Gait, HalfDutyPairsShareThePeriodEqually) {
    GaitConfig g;
    g.duty = 0.5;
    g.period = 0.4;
    const double dt = 0.005;
    const auto sched = gait_schedule(g, dt, 80);
    int a = 0, b = 0;
    for (const auto& c : sched) {
        EXPECT_EQ(c[0], c[3]);
        EXPECT_EQ(c[1], c[2]);
        EXPECT_NE(c[0], c[1]);
        a += c[0] ? 1 : 0;
        b += c[1] ? 1 : 0;
    }
    EXPECT_EQ(a, 40);  // 0.2 s at 200 Hz
    EXPECT_EQ(b, 40);
}

TEST(Gait, ScheduleIsPeriodic) {
    const double dt = 0.005;
    for (double duty : {0.3, 0.5, 0.55, 0.7}) {
        GaitConfig g;
        g.duty = duty;
        const int P = g.period_frames(dt);
        const auto sched = gait_schedule(g, dt, 5 * P);
        for (int k = 0; k + P < static_cast<int>(sched.size()); ++k) {
            EXPECT_EQ(sched[k].flags, sched[k + P].flags) << "duty " << duty << " frame " << k;
        }
    }
}

TEST(Gait, NoFlightPhaseAtOrAboveHalfDuty) {
    const double dt = 0.005;
    for (double duty = 0.5; duty < 0.96; duty += 0.05) {
        for (double period : {0.2, 0.3, 0.4, 0.5}) {
            GaitConfig g;
            g.duty = duty;
            g.period = period;
            for (const auto& c : gait_schedule(g, dt, g.period_frames(dt))) {
                EXPECT_TRUE(c.count() == 2 || c.count() == 4) << duty << " " << period;
            }
        }
    }
}

TEST(Gait, DoubleSupportAppearsAboveHalfDuty) {
    GaitConfig g;
    g.duty = 0.55;
    int four = 0;
    for (const auto& c : gait_schedule(g, 0.005, 80)) four += c.count() == 4 ? 1 : 0;
    EXPECT_EQ(four, 8);
}

TEST(Gait, InvalidDutyRejected) {
    GaitConfig g;
    g.duty = 1.0;
    EXPECT_THROW(g.validate(0.005), ConfigError);
    g.duty = 0.0;
    EXPECT_THROW(g.validate(0.005), ConfigError);
}

TEST(DepthCamera, CentrePixelMatchesRayPlaneDistance) {
    // Odd image: the centre pixel lies on the optical axis.
    CameraConfig cam;
    cam.height = cam.width = 33;
    Terrain flat;
    TrunkState pose;
    pose.r() = Vec3(0.4, -0.2, 0.3);
    const DepthImage img = render_depth(flat, pose, cam);
    const double cam_z = 0.3 + cam.mount.z();
    const double expected = cam_z / std::sin(cam.pitch);
    EXPECT_NEAR(img.at(16, 16) * cam.max_range, expected, 1e-6);
}

TEST(DepthCamera, TiltedPoseMatchesRayPlaneOracle) {
    CameraConfig cam;
    cam.height = 48;
    cam.width = 64;
    Terrain flat;
    TrunkState pose;
    pose.theta() = Vec3(0.05, -0.08, 0.7);
    pose.r() = Vec3(1.0, 2.0, 0.33);
    const DepthImage img = render_depth(flat, pose, cam);

    const int r = cam.height / 2, c = cam.width / 2;
    const double sx = (2.0 * (c + 0.5) / cam.width - 1.0) * std::tan(0.5 * cam.hfov);
    const double sy = (2.0 * (r + 0.5) / cam.height - 1.0) * std::tan(0.5 * cam.vfov);
    const double n = std::sqrt(1.0 + sx * sx + sy * sy);
    const double ox = 1.0 / n, oy = -sx / n, oz = -sy / n;
    const double cp = std::cos(cam.pitch), sp = std::sin(cam.pitch);
    const Vec3 d_body(cp * ox + sp * oz, oy, -sp * ox + cp * oz);
    const Rotation R = euler_to_rotation(pose.theta());
    const Vec3 d = R * d_body;
    const Vec3 o = pose.r() + R * cam.mount;
    const double t = -o.z() / d.z();
    EXPECT_NEAR(img.at(r, c) * cam.max_range, t, 1e-6);
}

TEST(DepthCamera, FlatGroundDepthFallsMonotonicallyDownTheImage) {
    // Row 0 is the top of the image and looks furthest ahead.
    CameraConfig cam;
    cam.height = cam.width = 32;
    TrunkState pose;
    pose.r().z() = 0.3;
    const DepthImage img = render_depth(Terrain{}, pose, cam);
    for (int c = 0; c < cam.width; ++c) {
        for (int r = 1; r < cam.height; ++r) EXPECT_LT(img.at(r, c), img.at(r - 1, c));
    }
}

TEST(DepthCamera, RaisingTheTrunkIncreasesMeanDepth) {
    CameraConfig cam;
    cam.height = cam.width = 32;
    TerrainConfig tc;
    tc.kind = TerrainKind::rough;
    const Terrain terrain(tc, 7);
    TrunkState pose;
    pose.r().z() = 0.3;
    auto mean = [](const DepthImage& im) {
        double s = 0.0;
        for (float v : im.pixels) s += v;
        return s / static_cast<double>(im.pixels.size());
    };
    const double low = mean(render_depth(terrain, pose, cam));
    pose.r().z() += 0.1;
    EXPECT_GT(mean(render_depth(terrain, pose, cam)), low);
}

TEST(DepthCamera, ValuesStayInUnitRange) {
    CameraConfig cam;
    cam.height = cam.width = 16;
    TrunkState pose;
    pose.r().z() = 3.0;  // most rays exceed the max range
    pose.theta() = Vec3(0.0, -0.6, 0.0);
    for (float v : render_depth(Terrain{}, pose, cam).pixels) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
}

TEST(Terrain, InclineRisesAlongX) {
    TerrainConfig tc;
    tc.kind = TerrainKind::incline;
    tc.incline_angle = 0.2;
    const Terrain t(tc, 0);
    EXPECT_NEAR(t.height(2.0, -5.0), 2.0 * std::tan(0.2), 1e-15);
    EXPECT_DOUBLE_EQ(t.height(0.0, 3.0), 0.0);
}

TEST(Terrain, RoughSlopeStaysUnderBound) {
    TerrainConfig tc;
    tc.kind = TerrainKind::rough;
    const Terrain t(tc, 11);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 10000; ++i) {
        const double x = u(rng), y = u(rng);
        const auto [gx, gy] = t.gradient(x, y);
        EXPECT_LE(std::hypot(gx, gy), t.slope_bound());
        EXPECT_LE(std::abs(t.height(x, y)), tc.rough_amplitude);
    }
}

TEST(Simulator, SameSeedGivesByteIdenticalFiles) {
    SimConfig c;
    c.terrain.kind = TerrainKind::rough;
    c.duration = 1.5;
    c.camera.height = c.camera.width = 16;
    const auto a = temp_path("det_a.ostd"), b = temp_path("det_b.ostd");
    write_dataset(simulate(c), a);
    write_dataset(simulate(c), b);
    EXPECT_EQ(file_bytes(a), file_bytes(b));
    c.seed += 1;
    write_dataset(simulate(c), b);
    EXPECT_NE(file_bytes(a), file_bytes(b));
    std::remove(a.c_str());
    std::remove(b.c_str());
}

TEST(Simulator, SlipFrequencyMatchesConfiguredRate) {
    SimConfig c = quiet_config(TerrainKind::slippery, CommandMode::straight, 30.0);
    c.terrain.slip_rate = 0.2;
    const Dataset ds = simulate(c);
    long stance = 0, slips = 0;
    for (const auto& f : ds.frames) {
        for (int i = 0; i < kNumLegs; ++i) {
            stance += f.contact[i] ? 1 : 0;
            slips += f.slip[static_cast<std::size_t>(i)] ? 1 : 0;
            if (!f.contact[i]) EXPECT_FALSE(f.slip[static_cast<std::size_t>(i)]);
        }
    }
    ASSERT_GE(stance, 10000);
    EXPECT_NEAR(static_cast<double>(slips) / static_cast<double>(stance), 0.2, 0.02);
}

TEST(Simulator, OdometryIsExactWithoutSlipOrNoise) {
    for (auto mode : {CommandMode::straight, CommandMode::random}) {
        const SimConfig c = quiet_config(TerrainKind::flat, mode, 10.0);
        const Dataset ds = simulate(c);
        FilterConfig fc;
        double worst_v = 0.0, worst_h = 0.0;
        for (const auto& f : ds.frames) {
            ASSERT_GT(f.contact.count(), 0);
            const LegOdometry lo = compute_leg_odometry(f.joints, f.imu, f.contact, fc);
            worst_v = std::max(worst_v, (lo.outputs.velocity - f.truth.v()).cwiseAbs().maxCoeff());
            worst_h = std::max(worst_h, std::abs(lo.outputs.height - f.truth.r().z()));
        }
        EXPECT_LT(worst_v, 1e-9);
        EXPECT_LT(worst_h, 1e-9);
    }
}

TEST(Simulator, TruthFollowsTheModelStep) {
    SimConfig c;
    c.terrain.kind = TerrainKind::slippery;
    c.duration = 5.0;
    c.render = false;
    const Dataset ds = simulate(c);
    for (std::size_t k = 0; k + 1 < ds.frames.size(); ++k) {
        const auto& f = ds.frames[k];
        const TrunkState next = dyn_step(f.truth, f.applied_forces, f.feet_body_true, c.robot, c.dt);
        EXPECT_LT((next.x - ds.frames[k + 1].truth.x).cwiseAbs().maxCoeff(), 1e-12) << "frame " << k;
    }
}

TEST(Simulator, StandingWithoutNoiseHoldsStill) {
    SimConfig c = quiet_config(TerrainKind::flat, CommandMode::stand, 3.0);
    c.gait.kind = GaitKind::stand;
    const Dataset ds = simulate(c);
    FilterConfig fc;
    const Vec12 x0 = ds.frames.front().truth.x;
    for (const auto& f : ds.frames) {
        EXPECT_LT((f.truth.x - x0).cwiseAbs().maxCoeff(), 1e-6);
        const LegOdometry lo = compute_leg_odometry(f.joints, f.imu, f.contact, fc);
        EXPECT_LT((lo.outputs.velocity - f.truth.v()).norm(), 1e-9);
        EXPECT_NEAR(lo.outputs.height, f.truth.r().z(), 1e-9);
    }
}

TEST(Simulator, TrotTracksCommandedSpeed) {
    SimConfig c = quiet_config(TerrainKind::flat, CommandMode::straight, 8.0);
    const Dataset ds = simulate(c);
    double sum = 0.0;
    int n = 0;
    for (const auto& f : ds.frames) {
        if (f.t < 3.0) continue;
        sum += f.truth.v().x();
        ++n;
    }
    EXPECT_NEAR(sum / n, c.command.speed, 0.2 * c.command.speed);
}

TEST(Simulator, SlipRaisesFilterVelocityError) {
    auto velocity_rmse = [](const Dataset& ds) {
        FilterConfig fc;
        KalmanBelief b;
        b.x_hat = ds.frames.front().truth;
        KalmanFilter kf(fc, b);
        double se = 0.0;
        for (const auto& f : ds.frames) {
            kf.step(f.joints, f.imu, f.contact, f.forces);
            se += (kf.belief().x_hat.v() - f.truth.v()).squaredNorm();
        }
        return std::sqrt(se / static_cast<double>(ds.frames.size()));
    };
    SimConfig c;
    c.terrain.kind = TerrainKind::slippery;
    c.command.mode = CommandMode::straight;
    c.duration = 10.0;
    c.render = false;
    const double with_slip = velocity_rmse(simulate(c));
    c.terrain.slip_rate = 0.0;
    const double without = velocity_rmse(simulate(c));
    EXPECT_GT(with_slip, without);
}

TEST(Simulator, OneMinuteAtBaseRateHoldsSixtyHertzDepth) {
    SimConfig c;
    c.duration = 60.0;
    c.camera.height = c.camera.width = 4;
    c.command.mode = CommandMode::straight;
    const Dataset ds = simulate(c);
    EXPECT_EQ(ds.frames.size(), 12000u);
    std::set<int> distinct;
    for (const auto& f : ds.frames) distinct.insert(f.depth_index);
    EXPECT_EQ(distinct.size(), 3600u);
    EXPECT_EQ(ds.images.size(), 3600u);
    // Held images change only on camera ticks.
    for (std::size_t k = 1; k < ds.frames.size(); ++k) {
        const int step = ds.frames[k].depth_index - ds.frames[k - 1].depth_index;
        EXPECT_TRUE(step == 0 || step == 1);
    }
}

TEST(Simulator, TimestampsIncrease) {
    SimConfig c = quiet_config(TerrainKind::flat, CommandMode::random, 1.0);
    const Dataset ds = simulate(c);
    for (std::size_t k = 1; k < ds.frames.size(); ++k) EXPECT_GT(ds.frames[k].t, ds.frames[k - 1].t);
}

TEST(SimConfigText, RoundTripsThroughKeyValueText) {
    SimConfig c;
    c.terrain.kind = TerrainKind::incline;
    c.noise.imu_theta = 0.0123;
    c.seed = 0xfeedbeefcafeULL;
    const KeyValueConfig kv = KeyValueConfig::parse(c.to_kv().to_text());
    EXPECT_EQ(sim_config_from_kv(kv).to_kv().to_text(), c.to_kv().to_text());
}

TEST(SimConfigText, UnknownTerrainNamesTheField) {
    try {
        sim_config_from_kv(KeyValueConfig::parse("terrain.kind = lava\n"));
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("terrain.kind"), std::string::npos);
        EXPECT_EQ(e.exit_code(), 2);
    }
}

TEST(SimConfigText, UnknownKeyRejected) {
    EXPECT_THROW(sim_config_from_kv(KeyValueConfig::parse("terrian.kind = flat\n")), ConfigError);
    EXPECT_THROW(sim_config_from_kv(KeyValueConfig::parse("dt = fast\n")), ConfigError);
    EXPECT_THROW(sim_config_from_kv(KeyValueConfig::parse("gait.duty = 1.5\n")), ConfigError);
}

TEST(DatasetFile, RoundTripIsLossless) {
    SimConfig c;
    c.terrain.kind = TerrainKind::slippery;
    c.duration = 0.5;
    c.camera.height = c.camera.width = 8;
    const Dataset ds = simulate(c);
    const auto path = temp_path("roundtrip.ostd");
    write_dataset(ds, path);
    const Dataset back = read_dataset(path);
    EXPECT_TRUE(back == ds);
    std::remove(path.c_str());
}

TEST(DatasetFile, TruncatedFileIsAFormatError) {
    SimConfig c;
    c.duration = 0.2;
    c.camera.height = c.camera.width = 8;
    const auto path = temp_path("trunc.ostd");
    write_dataset(simulate(c), path);
    auto bytes = file_bytes(path);
    for (std::size_t keep : {bytes.size() - 1, bytes.size() / 2, std::size_t{30}, std::size_t{6}}) {
        {
            std::ofstream f(path, std::ios::binary | std::ios::trunc);
            f.write(bytes.data(), static_cast<std::streamsize>(keep));
        }
        EXPECT_THROW(read_dataset(path), FormatError) << keep;
    }
    std::remove(path.c_str());
}

TEST(DatasetFile, BadMagicAndVersionAreFormatErrors) {
    SimConfig c;
    c.duration = 0.1;
    c.render = false;
    const auto path = temp_path("magic.ostd");
    write_dataset(simulate(c), path);
    auto bytes = file_bytes(path);
    auto rewrite = [&](const std::vector<char>& b) {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f.write(b.data(), static_cast<std::streamsize>(b.size()));
    };
    auto bad = bytes;
    bad[0] = 'X';
    rewrite(bad);
    EXPECT_THROW(read_dataset(path), FormatError);
    bad = bytes;
    bad[4] = 2;
    rewrite(bad);
    EXPECT_THROW(read_dataset(path), FormatError);
    std::remove(path.c_str());
    EXPECT_THROW(read_dataset(path), IoError);
}

TEST(Simulator, StraightRunsHoldAnyHeading) {
    for (TerrainKind kind : {TerrainKind::flat, TerrainKind::incline, TerrainKind::slippery}) {
        for (double yaw : {3.0, -2.0}) {
            SimConfig c = quiet_config(kind, CommandMode::straight, 6.0);
            c.command.initial_yaw = yaw;
            const Dataset ds = simulate(c);
            const auto& last = ds.frames.back().truth;
            EXPECT_LT(std::abs(last.theta().x()), 0.3) << to_string(kind) << " " << yaw;
            EXPECT_NEAR(wrap_angle(last.theta().z() - yaw), 0.0, 0.2) << to_string(kind) << " " << yaw;
            const Vec3 d = last.r() - ds.frames.front().truth.r();
            EXPECT_GT(d.x() * std::cos(yaw) + d.y() * std::sin(yaw), 0.5 * c.command.speed * 6.0);
        }
    }
}
