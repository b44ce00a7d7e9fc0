#include <gtest/gtest.h>

#include <map>
#include <set>

#include "optistate/pipeline/evaluate.hpp"
#include "optistate/pipeline/metrics.hpp"
#include "optistate/pipeline/suite.hpp"

using namespace optistate;

TEST(Suite, SixteenTrainingAndFourHeldOutRuns) {
    const auto s = make_suite(small_profile(), SimConfig{}, 7);
    ASSERT_EQ(s.size(), 20u);
    std::map<TerrainKind, int> train, test;
    std::set<std::uint64_t> seeds;
    std::set<std::string> names;
    for (const auto& e : s) {
        (e.test ? test : train)[e.config.terrain.kind]++;
        seeds.insert(e.config.seed);
        names.insert(e.name);
        EXPECT_EQ(e.config.camera.width, 64);
        const bool straight = e.config.command.mode == CommandMode::straight;
        EXPECT_EQ(straight, e.config.terrain.kind == TerrainKind::slippery || e.config.terrain.kind == TerrainKind::incline);
        EXPECT_LE(std::abs(e.config.command.initial_yaw), std::numbers::pi);
    }
    for (TerrainKind k : suite_terrains()) {
        EXPECT_EQ(train[k], 4);
        EXPECT_EQ(test[k], 1);
    }
    EXPECT_EQ(seeds.size(), 20u);
    EXPECT_EQ(names.size(), 20u);
    EXPECT_EQ(s.front().name, "train_00_flat");
    EXPECT_EQ(s.back().name, "test_19_rough");
}

TEST(Suite, SameSeedSameSuiteDifferentSeedDifferent) {
    const auto a = make_suite(small_profile(), SimConfig{}, 1), b = make_suite(small_profile(), SimConfig{}, 1),
               c = make_suite(small_profile(), SimConfig{}, 2);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].config.to_kv().to_text(), b[i].config.to_kv().to_text());
    EXPECT_NE(a[0].config.seed, c[0].config.seed);
}

TEST(Suite, PaperProfileDurations) {
    const auto s = make_suite(paper_profile(), SimConfig{}, 1);
    std::multiset<double> d;
    for (const auto& e : s) {
        if (e.config.terrain.kind == TerrainKind::flat) d.insert(e.config.duration);
    }
    EXPECT_EQ(d, (std::multiset<double>{60.0, 80.0, 90.0, 100.0, 120.0}));
    EXPECT_EQ(s.front().config.camera.height, 224);
    EXPECT_THROW(profile_from_name("huge"), ConfigError);
}

TEST(Suite, SubsampleIsEvenAndBounded) {
    Dataset a, b;
    for (int i = 0; i < 6; ++i) {
        a.images.push_back(DepthImage(2, 2, static_cast<float>(i)));
        b.images.push_back(DepthImage(2, 2, static_cast<float>(10 + i)));
    }
    EXPECT_EQ(subsample_images({&a, &b}, 0).size(), 12u);
    const auto s = subsample_images({&a, &b}, 4);
    ASSERT_EQ(s.size(), 4u);
    EXPECT_EQ(s[0]->at(0, 0), 0.0f);
    EXPECT_EQ(s[1]->at(0, 0), 3.0f);
    EXPECT_EQ(s[2]->at(0, 0), 10.0f);
    EXPECT_EQ(s[3]->at(0, 0), 13.0f);
}

TEST(Metrics, RmseMatchesTwoPassSum) {
    Eigen::MatrixXd e1 = Eigen::MatrixXd::Random(3, 5), t1 = Eigen::MatrixXd::Random(3, 5);
    Eigen::MatrixXd e2 = Eigen::MatrixXd::Random(3, 2), t2 = Eigen::MatrixXd::Random(3, 2);
    const Eigen::VectorXd r = rmse_rows({&e1, &e2}, {&t1, &t2});
    for (int i = 0; i < 3; ++i) {
        double s = 0.0;
        for (int j = 0; j < 5; ++j) s += (e1(i, j) - t1(i, j)) * (e1(i, j) - t1(i, j));
        for (int j = 0; j < 2; ++j) s += (e2(i, j) - t2(i, j)) * (e2(i, j) - t2(i, j));
        EXPECT_NEAR(r(i), std::sqrt(s / 7.0), 1e-14);
    }
    EXPECT_THROW(rmse_rows({&e1}, {&t2}), ShapeError);
}

TEST(Metrics, ImprovementPercent) {
    const Eigen::VectorXd p = improvement_percent(Eigen::Vector3d(2.0, 1.0, 0.0), Eigen::Vector3d(1.0, 1.5, 1.0));
    EXPECT_DOUBLE_EQ(p(0), 50.0);
    EXPECT_DOUBLE_EQ(p(1), -50.0);
    EXPECT_DOUBLE_EQ(p(2), 0.0);
}

TEST(Metrics, SpearmanAgainstRankDifferenceFormula) {
    // Without ties ρ = 1 − 6 Σd² / (n(n²−1)).
    const std::vector<double> a{0.3, 1.2, -0.5, 4.0, 2.2, 0.9}, b{1.0, 0.2, 0.1, 3.0, 5.0, 0.4};
    const std::vector<int> ra{2, 4, 1, 6, 5, 3}, rb{4, 2, 1, 5, 6, 3};
    double d2 = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
    const double n = 6.0;
    EXPECT_NEAR(spearman(a, b), 1.0 - 6.0 * d2 / (n * (n * n - 1.0)), 1e-14);
    EXPECT_NEAR(spearman(a, a), 1.0, 1e-15);
}

TEST(Metrics, TiesGetAverageRanks) {
    const auto r = average_ranks({5.0, 1.0, 5.0, 3.0});
    EXPECT_EQ(r, (std::vector<double>{3.5, 1.0, 3.5, 2.0}));
    EXPECT_EQ(spearman({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), 0.0);
}

TEST(Evaluation, FilterAloneTracksPositionOnCleanFlatGround) {
    SimConfig c;
    c.duration = 10.0;
    c.render = false;
    c.terrain.kind = TerrainKind::flat;
    const Dataset ds = simulate(c);
    const auto tf = compute_features(ds, {}, FeatureLayout{0}, FilterConfig{}, "flat");
    const RmseTable t = rmse_table({{"kf-only", {tf.kf}}}, {tf.truth});
    for (int c3 = 3; c3 < 6; ++c3) EXPECT_LT(t.rmse(c3, 0), 0.01) << state_component_names()[static_cast<std::size_t>(c3)];
}
