#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "optistate/nn/gradcheck.hpp"
#include "optistate/nn/vit_train.hpp"
#include "optistate/pipeline/estimator.hpp"
#include "optistate/sim/simulator.hpp"

using namespace optistate;
using MatD = nn::Mat<double>;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

GruConfig micro() {
    GruConfig c;
    c.input_dim = 5;
    c.hidden = 3;
    c.layers = 2;
    c.horizon = 4;
    c.state_dim = 2;
    return c;
}

std::vector<MatD> random_window(int steps, int dim, int batch, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<MatD> w;
    for (int t = 0; t < steps; ++t) {
        MatD x(dim, batch);
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = g(rng);
        w.push_back(x);
    }
    return w;
}

void randomize(Gru<double>& m, std::uint64_t seed, double scale = 0.5) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, scale);
    for (int i = 0; i < m.params().size(); ++i) {
        for (Eigen::Index j = 0; j < m.params()[i].size(); ++j) m.params()[i](j) = g(rng);
    }
}

Dataset short_run(double duration, int image = 0, std::uint64_t seed = 3) {
    SimConfig c;
    c.duration = duration;
    c.seed = seed;
    c.render = image > 0;
    c.camera.height = c.camera.width = image > 0 ? image : 4;
    return simulate(c);
}

} // namespace

TEST(Gru, ScalarCellMatchesHandRecurrence) {
    GruConfig c;
    c.input_dim = 1;
    c.hidden = 1;
    c.layers = 1;
    c.horizon = 3;
    c.state_dim = 1;
    c.skip = false;
    Gru<double> m(c, 1);
    auto& p = m.params();
    p[m.w(0)] << 0.7, -0.4, 1.3;
    p[m.u(0)] << -0.2, 0.9, 0.5;
    p[m.b(0)] << 0.1, -0.3, 0.05;
    p[m.head_w()] << 1.5, -0.8;
    p[m.head_b()] << 0.2, 0.1;
    const std::array<double, 3> xs{0.4, -1.1, 2.0};
    double h = 0.0;
    for (double x : xs) {
        const double z = sig(0.7 * x - 0.2 * h + 0.1);
        const double r = sig(-0.4 * x + 0.9 * h - 0.3);
        const double n = std::tanh(1.3 * x + 0.5 * (r * h) + 0.05);
        h = (1.0 - z) * n + z * h;
    }
    const double o0 = 1.5 * h + 0.2, o1 = -0.8 * h + 0.1;
    std::vector<MatD> w;
    for (double x : xs) w.push_back(MatD::Constant(1, 1, x));
    const auto out = m.forward(w);
    EXPECT_NEAR(out.x_bar(0, 0), 0.5 + o0, 1e-12);
    EXPECT_NEAR(out.mu(0, 0), std::log1p(std::exp(o1)), 1e-12);
}

TEST(Gru, ZeroParametersGiveMidRangeConstant) {
    GruConfig c;
    Gru<double> m(c, 1);
    for (int i = 0; i < m.params().size(); ++i) m.params()[i].setZero();
    std::mt19937_64 rng(1);
    Gru<double>::Trace tr;
    const auto out = m.forward(random_window(10, 182, 3, rng), &tr);
    for (const auto& layer : tr.layers) {
        for (const auto& s : layer) {
            EXPECT_TRUE((s.z.array() == 0.5).all());
            EXPECT_TRUE((s.r.array() == 0.5).all());
            EXPECT_TRUE(s.n.isZero());
            EXPECT_TRUE(s.h_prev.isZero());
        }
    }
    EXPECT_TRUE((out.x_bar.array() == 0.5).all());
    EXPECT_NEAR(out.mu(0, 0), std::log(2.0), 1e-15);

    Normalizer n;
    n.out_min.setConstant(-2.0);
    n.out_max.setConstant(6.0);
    const Eigen::MatrixXd x = n.denormalize_state(out.x_bar);
    EXPECT_TRUE((x.array() == 2.0).all());
}

TEST(Gru, GatesInUnitIntervalAndHiddenBounded) {
    Gru<double> m(GruConfig{}, 4);
    randomize(m, 9, 0.05);
    std::mt19937_64 rng(2);
    Gru<double>::Trace tr;
    m.forward(random_window(10, 182, 16, rng, 1.0), &tr);
    for (const auto& layer : tr.layers) {
        for (std::size_t t = 0; t < layer.size(); ++t) {
            const auto& s = layer[t];
            EXPECT_GT(s.z.minCoeff(), 0.0);
            EXPECT_LT(s.z.maxCoeff(), 1.0);
            EXPECT_GT(s.r.minCoeff(), 0.0);
            EXPECT_LT(s.r.maxCoeff(), 1.0);
            if (t > 0) EXPECT_LT(s.h_prev.cwiseAbs().maxCoeff(), 1.0);
        }
    }
    EXPECT_LT(tr.h_top.cwiseAbs().maxCoeff(), 1.0);
}

TEST(Gru, MuIsNonnegativeForAnyInput) {
    Gru<double> m(micro(), 2);
    randomize(m, 3, 2.0);
    m.params()[m.head_b()].setConstant(-40.0);
    std::mt19937_64 rng(5);
    const auto out = m.forward(random_window(4, 5, 200, rng, 10.0));
    EXPECT_GE(out.mu.minCoeff(), 0.0);
}

TEST(Gru, OnlyTheLastHorizonStepsAreUsed) {
    Gru<double> m(micro(), 2);
    randomize(m, 4);
    std::mt19937_64 rng(6);
    auto w = random_window(9, 5, 2, rng);
    const std::vector<MatD> tail(w.end() - 4, w.end());
    const auto a = m.forward(w), b = m.forward(tail);
    EXPECT_EQ(a.x_bar, b.x_bar);
    EXPECT_EQ(a.mu, b.mu);
    EXPECT_THROW(m.forward(std::vector<MatD>(w.begin(), w.begin() + 3)), ShapeError);
}

TEST(Gru, FrameOutsideTheWindowHasNoEffect) {
    Gru<double> m(micro(), 2);
    randomize(m, 5);
    std::mt19937_64 rng(7);
    Eigen::MatrixXd frames = Eigen::MatrixXd::Random(5, 12);
    const Eigen::Index k = 9;
    const auto base = m.forward(window_at<double>(frames, k, 4));
    Eigen::MatrixXd moved = frames;
    moved.col(k - 4).array() += 5.0;  // frame k−N
    EXPECT_EQ(m.forward(window_at<double>(moved, k, 4)).x_bar, base.x_bar);
    moved = frames;
    moved.col(k - 3).array() += 5.0;  // frame k−N+1
    EXPECT_NE(m.forward(window_at<double>(moved, k, 4)).x_bar, base.x_bar);
}

TEST(Gru, GradientsMatchFiniteDifferences) {
    for (bool skip : {false, true}) {
        GruConfig c = micro();
        c.skip = skip;
        Gru<double> m(c, 1);
        randomize(m, 11);
        std::mt19937_64 rng(8);
        const auto w = random_window(6, 5, 3, rng);
        MatD y = MatD::Random(2, 3);
        Gru<double>::Trace tr;
        const auto out = m.forward(w, &tr);
        const MatD e = (out.x_bar - y).cwiseAbs();  // μ target held fixed, as in training
        MatD dx, dm;
        gru_loss(out, y, &dx, &dm, &e);
        auto grads = m.params().zeros_like();
        m.backward(tr, dx, dm, grads);
        const auto rows = nn::finite_difference_check(
            m.params(), grads, [&] { return gru_loss<double>(m.forward(w), y, nullptr, nullptr, &e); }, 1e-5);
        for (const auto& r : rows) {
            EXPECT_LT(r.relative_error, 1e-4) << r.name;
            EXPECT_GT(r.scale, 1e-6) << r.name;
        }
    }
}

TEST(Gru, ConfigRoundTripAndValidation) {
    GruConfig c = micro();
    c.skip = false;
    EXPECT_EQ(GruConfig::from_kv(c.to_kv(), GruConfig{}), c);
    c.horizon = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Features, SentinelsLandInDocumentedColumns) {
    const FeatureLayout lay;
    ASSERT_EQ(lay.dim(), 182);
    TrunkState x;
    x.x.setConstant(1.0);
    LegOdometry odom;
    odom.p.setConstant(3.0);
    odom.pdot.setConstant(4.0);
    ImuSample imu;
    imu.accel.setConstant(5.0);
    imu.alpha.setConstant(6.0);
    const Eigen::VectorXd f =
        frame_features(lay, x, Eigen::VectorXd::Constant(128, 2.0), odom, imu, GroundReactionForces::Constant(7.0));
    const std::array<std::pair<int, int>, 7> ranges{{{0, 12}, {12, 140}, {140, 152}, {152, 164}, {164, 167}, {167, 170}, {170, 182}}};
    for (std::size_t s = 0; s < ranges.size(); ++s) {
        for (int i = ranges[s].first; i < ranges[s].second; ++i) EXPECT_EQ(f(i), static_cast<double>(s + 1)) << i;
    }
    EXPECT_THROW(frame_features(lay, x, Eigen::VectorXd::Zero(3), odom, imu, GroundReactionForces::Zero()), ShapeError);
}

TEST(Features, ConstantHistoryGivesIdenticalRows) {
    const Eigen::MatrixXd frames = Eigen::VectorXd::LinSpaced(182, -1.0, 1.0).replicate(1, 6);
    const auto w = window_at<double>(frames, 5, 10);
    ASSERT_EQ(w.size(), 10u);
    for (const auto& s : w) EXPECT_EQ(s, w.front());
}

TEST(Features, StartupRepeatsOldestFrame) {
    Eigen::MatrixXd frames(2, 4);
    frames << 0, 1, 2, 3, 10, 11, 12, 13;
    const auto w = window_at<double>(frames, 1, 4);
    EXPECT_EQ(w[0](0, 0), 0.0);
    EXPECT_EQ(w[1](0, 0), 0.0);
    EXPECT_EQ(w[2](0, 0), 0.0);
    EXPECT_EQ(w[3](0, 0), 1.0);
}

TEST(Features, AblationMasksOnlyTheirColumns) {
    const FeatureLayout lay;
    const auto none = ablation_mask(lay, InputAblation::none);
    const auto kf = ablation_mask(lay, InputAblation::no_kf);
    const auto vis = ablation_mask(lay, InputAblation::no_vision);
    EXPECT_EQ(none.sum(), 182.0);
    EXPECT_EQ(kf.head(12).sum(), 0.0);
    EXPECT_EQ(kf.sum(), 170.0);
    EXPECT_EQ(vis.segment(12, 128).sum(), 0.0);
    EXPECT_EQ(vis.sum(), 54.0);
    EXPECT_EQ(ablation_from_string(to_string(InputAblation::no_kf)), InputAblation::no_kf);
    EXPECT_THROW(ablation_from_string("none"), ConfigError);
}

TEST(Normalizer, MapsExtremesToZeroAndOne) {
    Eigen::MatrixXd x(3, 4), y = Eigen::MatrixXd::Random(12, 4);
    x << 1, 5, 3, 2,   //
        -2, -2, -2, -2,  // constant feature
        0.1, 0.4, 0.2, 0.3;
    const Normalizer n = Normalizer::fit({&x}, {&y});
    const Eigen::MatrixXd xn = n.normalize_inputs(x);
    EXPECT_EQ(xn(0, 0), 0.0);
    EXPECT_EQ(xn(0, 1), 1.0);
    EXPECT_TRUE(xn.row(1).isZero());
    EXPECT_EQ(xn.row(2).minCoeff(), 0.0);
    EXPECT_EQ(xn.row(2).maxCoeff(), 1.0);
    const Eigen::MatrixXd yn = n.normalize_targets(y);
    EXPECT_LT((n.denormalize_state(yn) - y).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(n.normalize_inputs(Eigen::MatrixXd::Zero(4, 1)), ShapeError);
}

TEST(Normalizer, ErrorsScaleByRangeOnly) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 5), y = Eigen::MatrixXd::Random(12, 5);
    const Normalizer n = Normalizer::fit({&x}, {&y});
    const Eigen::MatrixXd e = n.denormalize_error(Eigen::MatrixXd::Constant(12, 1, 0.5));
    for (int c = 0; c < 12; ++c) EXPECT_NEAR(e(c, 0), 0.5 * (n.out_max(c) - n.out_min(c)), 1e-15);
}

TEST(GruTrain, KfInitReproducesTheFilter) {
    const Dataset ds = short_run(2.0);
    const auto tf = compute_features(ds, {}, FeatureLayout{}, FilterConfig{}, "run");
    GruConfig c;
    c.hidden = 16;
    c.layers = 1;
    GruTrainConfig hp;
    hp.epochs = 0;
    const auto res = train_gru({&tf}, c, hp, InputAblation::none);
    const auto p = predict_trajectory(res.model, tf);
    EXPECT_LT((p.x_bar - tf.kf).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(GruTrain, OverfitsSmallSet) {
    const Dataset ds = short_run(256 * 0.005);
    const auto tf = compute_features(ds, {}, FeatureLayout{}, FilterConfig{}, "run");
    ASSERT_EQ(tf.frames(), 256);
    GruConfig c;
    c.hidden = 64;
    c.layers = 2;
    GruTrainConfig hp;
    hp.lr = 1e-3;
    hp.epochs = 100000;
    hp.max_steps = 2000;
    hp.kf_init = false;
    const auto res = train_gru({&tf}, c, hp, InputAblation::none);
    EXPECT_EQ(res.steps, 2000);
    EXPECT_LT(res.loss_history.back(), 0.05 * res.loss_history.front());
}

TEST(GruTrain, MissingTruthRejected) {
    Dataset ds = short_run(0.5);
    for (auto& f : ds.frames) f.has_truth = false;
    const auto tf = compute_features(ds, {}, FeatureLayout{}, FilterConfig{}, "bare");
    EXPECT_FALSE(tf.has_truth());
    EXPECT_THROW(train_gru({&tf}, GruConfig{}, GruTrainConfig{}, InputAblation::none), MissingTruthError);
}

TEST(GruTrain, SameSeedIsBitIdentical) {
    const Dataset ds = short_run(1.0);
    const auto tf = compute_features(ds, {}, FeatureLayout{}, FilterConfig{}, "run");
    GruConfig c;
    c.hidden = 8;
    c.layers = 2;
    GruTrainConfig hp;
    hp.epochs = 2;
    hp.lr = 1e-3;
    const auto a = train_gru({&tf}, c, hp, InputAblation::none);
    const auto b = train_gru({&tf}, c, hp, InputAblation::none);
    EXPECT_EQ(a.loss_history, b.loss_history);
    hp.seed = 2;
    const auto d = train_gru({&tf}, c, hp, InputAblation::none);
    EXPECT_NE(a.loss_history, d.loss_history);
}

TEST(GruTrain, ShuffleSeedBarelyMovesHeldOutError) {
    const Dataset train_ds = short_run(6.0, 0, 3), test_ds = short_run(3.0, 0, 4);
    const auto tr = compute_features(train_ds, {}, FeatureLayout{}, FilterConfig{}, "train");
    const auto te = compute_features(test_ds, {}, FeatureLayout{}, FilterConfig{}, "test");
    GruConfig c;
    c.hidden = 32;
    c.layers = 2;
    GruTrainConfig hp;
    hp.epochs = 4;
    hp.lr = 1e-4;
    auto held_out = [&](std::uint64_t seed) {
        hp.seed = seed;
        const auto res = train_gru({&tr}, c, hp, InputAblation::none);
        const auto p = predict_trajectory(res.model, te);
        return std::sqrt((p.x_bar - te.truth).squaredNorm() / static_cast<double>(p.x_bar.size()));
    };
    const double a = held_out(1), b = held_out(2);
    EXPECT_LT(std::abs(a - b), 0.1 * std::min(a, b));
}

TEST(GruCheckpoint, RoundTripKeepsNetAndNormalizer) {
    const Dataset ds = short_run(1.0);
    const auto tf = compute_features(ds, {}, FeatureLayout{}, FilterConfig{}, "run");
    GruConfig c;
    c.hidden = 8;
    GruTrainConfig hp;
    hp.epochs = 1;
    const auto res = train_gru({&tf}, c, hp, InputAblation::no_vision);
    const auto path = (std::filesystem::temp_directory_path() / "optistate_gru_rt.osgr").string();
    save_gru(path, res.model);
    const GruModel back = load_gru(path);
    EXPECT_EQ(back.ablation, InputAblation::no_vision);
    EXPECT_EQ(back.norm, res.model.norm);
    EXPECT_EQ(back.net.config(), res.model.net.config());
    for (int i = 0; i < back.net.params().size(); ++i) EXPECT_EQ(back.net.params()[i], res.model.net.params()[i]);
    EXPECT_THROW(load_vit<float>(path), FormatError);
    std::filesystem::remove(path);
}

TEST(Pipeline, StreamingReplayMatchesBatchPrediction) {
    const Dataset ds = short_run(1.5, 16);
    ASSERT_TRUE(ds.has_depth());
    VitConfig vc;
    vc.image_h = vc.image_w = 16;
    vc.patch = 4;
    vc.embed = 16;
    vc.depth = 1;
    const Vit<float> vit(vc, 3);
    const FeatureLayout lay{16};
    const auto tf = compute_features(ds, image_latents(ds, &vit), lay, FilterConfig{}, "run");
    GruConfig c;
    c.hidden = 8;
    c.layers = 2;
    GruTrainConfig hp;
    hp.epochs = 1;
    hp.lr = 1e-3;
    const auto res = train_gru({&tf}, c, hp, InputAblation::none);
    const auto batch = predict_trajectory(res.model, tf);
    OptiStatePipeline pipe(FilterConfig{}, &vit, res.model);
    for (std::size_t k = 0; k < ds.frames.size(); ++k) {
        const StepEstimate e = pipe.step(ds.frames[k], ds.depth_for(k));
        const auto kk = static_cast<Eigen::Index>(k);
        ASSERT_LT((e.x_hat.x - tf.kf.col(kk)).cwiseAbs().maxCoeff(), 1e-12) << k;
        ASSERT_LT((e.x_bar.x - batch.x_bar.col(kk)).cwiseAbs().maxCoeff(), 1e-9) << k;
        ASSERT_LT((e.mu - batch.mu.col(kk)).cwiseAbs().maxCoeff(), 1e-9) << k;
    }
}
