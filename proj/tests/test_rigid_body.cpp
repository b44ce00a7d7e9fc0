#include <gtest/gtest.h>

#include <random>

#include "optistate/model/rigid_body.hpp"

using namespace optistate;

namespace {

Mat12x12 taylor_expm(const Mat12x12& M, int terms) {
    Mat12x12 sum = Mat12x12::Identity();
    Mat12x12 term = Mat12x12::Identity();
    for (int k = 1; k < terms; ++k) {
        term = term * M / static_cast<double>(k);
        sum += term;
    }
    return sum;
}

Vec12 random_vec12(std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> n(0.0, scale);
    Vec12 v;
    for (int i = 0; i < 12; ++i) v(i) = n(rng);
    return v;
}

FootPositions symmetric_feet(double x, double y, double z) {
    FootPositions p;
    p << x, y, z, x, -y, z, -x, y, z, -x, -y, z;
    return p;
}

} // namespace

TEST(BuildA, IdentityRotationLayout) {
    const Mat12x12 A = build_A(Mat3::Identity());
    Mat12x12 expected = Mat12x12::Zero();
    expected.block<3, 3>(0, 6) = Mat3::Identity();
    expected.block<3, 3>(3, 9) = Mat3::Identity();
    EXPECT_EQ(A, expected);
}

TEST(BuildA, PureYawBlockIsTransposedRotation) {
    const Mat3 R = rot_z(std::numbers::pi / 2);
    EXPECT_EQ((build_A(R).block<3, 3>(0, 6)), R.transpose());
}

TEST(BuildA, NilpotentAndExponentialIsLinear) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int t = 0; t < 1000; ++t) {
        const Mat3 R = euler_to_rotation(Vec3(u(rng), u(rng), u(rng)));
        const Mat12x12 A = build_A(R);
        ASSERT_TRUE((A * A).isZero(0.0));
        const double dt = 0.005;
        ASSERT_LT((taylor_expm(A * dt, 20) - transition_matrix(R, dt)).cwiseAbs().maxCoeff(),
                  1e-12);
    }
}

TEST(BuildB, ZeroFeetGiveOnlyMassBlocks) {
    RobotPhysicalParams params;
    const Mat12x12 B = build_B(params, Mat3::Identity(), FootPositions::Zero());
    EXPECT_TRUE(B.topRows<9>().isZero(0.0));
    for (int i = 0; i < 4; ++i) {
        EXPECT_LT((B.block<3, 3>(9, 3 * i) - Mat3::Identity() / params.mass).norm(), 1e-15);
    }
}

TEST(BuildB, SingleFootAngularBlock) {
    RobotPhysicalParams params;
    params.mass = 10.0;
    params.inertia_body = Mat3::Identity() * 0.1;
    FootPositions p = FootPositions::Zero();
    p.segment<3>(0) = Vec3(0.2, 0.0, -0.3);
    const Mat12x12 B = build_B(params, Mat3::Identity(), p);
    // Inverse computed independently through a linear solve.
    const Mat3 I_inv = params.inertia_body.fullPivLu().solve(Mat3::Identity());
    const Mat3 expected = I_inv * skew(Vec3(0.2, 0.0, -0.3));
    EXPECT_LT((B.block<3, 3>(6, 0) - expected).norm(), 1e-12);
    EXPECT_LT((B.block<3, 3>(6, 0) - 10.0 * skew(Vec3(0.2, 0.0, -0.3))).norm(), 1e-12);
}

TEST(BuildB, IsotropicInertiaUnchangedByYaw) {
    RobotPhysicalParams params;
    params.inertia_body = Mat3::Identity() * 0.2;
    const Mat3 R = rot_z(0.7);
    EXPECT_LT((world_inertia(params, R) - params.inertia_body).norm(), 1e-15);
}

TEST(BuildB, SingularInertiaThrows) {
    RobotPhysicalParams params;
    params.inertia_body = Mat3::Zero();
    EXPECT_THROW(build_B(params, Mat3::Identity(), FootPositions::Zero()), SingularInertiaError);
}

TEST(DynStep, FreeFallOneStep) {
    const TrunkState next = dyn_step(TrunkState{}, Vec12::Zero(), FootPositions::Zero(),
                                     RobotPhysicalParams{}, 0.005);
    Vec12 expected = Vec12::Zero();
    expected(11) = -0.04905;
    EXPECT_LT((next.x - expected).norm(), 1e-15);
}

TEST(DynStep, HoverIsFixedPoint) {
    RobotPhysicalParams params;
    const FootPositions p = symmetric_feet(0.19, 0.11, -0.3);
    GroundReactionForces f = GroundReactionForces::Zero();
    for (int i = 0; i < 4; ++i) f(3 * i + 2) = params.mass * kGravity / 4.0;
    TrunkState x;
    x.r() = Vec3(0.3, -0.2, 0.3);
    const TrunkState x0 = x;
    for (int k = 0; k < 1000; ++k) x = dyn_step(x, f, p, params, 0.005);
    EXPECT_LT((x.x - x0.x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DynStep, MatrixAndBlockFormsAgree) {
    std::mt19937_64 rng(5);
    RobotPhysicalParams params;
    for (int t = 0; t < 1000; ++t) {
        TrunkState x(random_vec12(rng, 0.5));
        const Vec12 f = random_vec12(rng, 40.0);
        const Vec12 p = random_vec12(rng, 0.2);
        const TrunkState a = dyn_step(x, f, p, params, 0.005);
        const TrunkState b = dyn_step_blockwise(x, f, p, params, 0.005);
        ASSERT_LT((a.x - b.x).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(DynStep, ZeroForceOnlyGravityChangesRates) {
    std::mt19937_64 rng(9);
    RobotPhysicalParams params;
    TrunkState x(random_vec12(rng, 0.5));
    const TrunkState n = dyn_step(x, Vec12::Zero(), random_vec12(rng, 0.2), params, 0.01);
    EXPECT_EQ(n.omega(), x.omega());
    EXPECT_EQ(n.v().head<2>(), x.v().head<2>());
    EXPECT_NEAR(n.v().z() - x.v().z(), -kGravity * 0.01, 1e-15);
}

TEST(DynStep, LinearInStateAndForce) {
    std::mt19937_64 rng(21);
    RobotPhysicalParams params;
    const double dt = 0.005;
    for (int t = 0; t < 200; ++t) {
        // A and B are evaluated at one orientation, so hold θ fixed across inputs.
        Vec12 x1 = random_vec12(rng, 0.5), x2 = random_vec12(rng, 0.5);
        const double a = 0.7, b = -1.3;
        x2.head<3>() = x1.head<3>();
        const Vec3 theta = x1.head<3>();
        const Vec12 f1 = random_vec12(rng, 30.0), f2 = random_vec12(rng, 30.0);
        const Vec12 p = random_vec12(rng, 0.2);
        const Mat3 R = euler_to_rotation(theta);
        const Mat12x12 A = build_A(R), B = build_B(params, R, p);
        auto step = [&](const Vec12& x, const Vec12& f) {
            return Vec12((Mat12x12::Identity() + A * dt) * x + B * dt * f + gravity_vector() * dt);
        };
        const Vec12 lhs = step(a * x1 + b * x2, a * f1 + b * f2) + gravity_vector() * dt * (a + b - 1.0);
        const Vec12 rhs = a * dyn_step(TrunkState(x1), f1, p, params, dt).x +
                          b * dyn_step(TrunkState(x2), f2, p, params, dt).x;
        ASSERT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
    }
}
