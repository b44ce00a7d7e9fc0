#pragma once

// Per-frame GRU input features, min/max normalization and ablation masks.
//
// Column order of one feature frame (latent dim L, 128 by default):
//   [0, 12)           KF estimate x̂
//   [12, 12+L)        depth latent, held between camera frames
//   next 12           foot positions p (body frame)
//   next 12           foot velocities ṗ (body frame)
//   next 3            IMU linear acceleration
//   next 3            IMU angular acceleration
//   next 12           commanded ground reaction forces

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "optistate/filter/kalman.hpp"
#include "optistate/nn/vit.hpp"
#include "optistate/sim/dataset.hpp"

namespace optistate {

struct FeatureLayout {
    int latent_dim = 128;

    int kf() const { return 0; }
    int latent() const { return 12; }
    int p() const { return 12 + latent_dim; }
    int pdot() const { return p() + 12; }
    int accel() const { return pdot() + 12; }
    int alpha() const { return accel() + 3; }
    int force() const { return alpha() + 3; }
    int dim() const { return force() + 12; }
};

enum class InputAblation { none, no_kf, no_vision };

inline std::string to_string(InputAblation a) {
    switch (a) {
        case InputAblation::none: return "full";
        case InputAblation::no_kf: return "no-kf-input";
        case InputAblation::no_vision: return "no-vision";
    }
    return "?";
}

inline InputAblation ablation_from_string(const std::string& s) {
    if (s == "full") return InputAblation::none;
    if (s == "no-kf-input") return InputAblation::no_kf;
    if (s == "no-vision") return InputAblation::no_vision;
    throw ConfigError("gru.ablation: unknown value '" + s + "' (full, no-kf-input, no-vision)");
}

/// 1 for kept columns, 0 for masked ones.
inline Eigen::VectorXd ablation_mask(const FeatureLayout& lay, InputAblation a) {
    Eigen::VectorXd m = Eigen::VectorXd::Ones(lay.dim());
    if (a == InputAblation::no_kf) m.segment(lay.kf(), 12).setZero();
    if (a == InputAblation::no_vision) m.segment(lay.latent(), lay.latent_dim).setZero();
    return m;
}

inline Eigen::VectorXd frame_features(const FeatureLayout& lay, const TrunkState& x_hat,
                                      const Eigen::VectorXd& latent, const LegOdometry& odom,
                                      const ImuSample& imu, const GroundReactionForces& forces) {
    if (latent.size() != lay.latent_dim) {
        throw ShapeError("features: latent has " + std::to_string(latent.size()) + " entries, expected " +
                         std::to_string(lay.latent_dim));
    }
    Eigen::VectorXd f(lay.dim());
    f.segment<12>(lay.kf()) = x_hat.x;
    f.segment(lay.latent(), lay.latent_dim) = latent;
    for (int i = 0; i < kNumLegs; ++i) f.segment<3>(lay.p() + 3 * i) = foot(odom.p, i);
    f.segment<12>(lay.pdot()) = odom.pdot;
    f.segment<3>(lay.accel()) = imu.accel;
    f.segment<3>(lay.alpha()) = imu.alpha;
    f.segment<12>(lay.force()) = forces;
    return f;
}

/// Per-feature min/max scaling to [0, 1] over the training set. A feature
/// with max == min normalizes to 0 and denormalizes to min.
struct Normalizer {
    Eigen::VectorXd in_min, in_max;
    Vec12 out_min = Vec12::Zero(), out_max = Vec12::Zero();

    static Normalizer fit(const std::vector<const Eigen::MatrixXd*>& inputs,
                          const std::vector<const Eigen::MatrixXd*>& targets) {
        if (inputs.empty() || inputs.size() != targets.size()) {
            throw ShapeError("normalizer: need matching, nonempty input and target sets");
        }
        Normalizer n;
        const auto D = inputs.front()->rows();
        n.in_min = Eigen::VectorXd::Constant(D, std::numeric_limits<double>::infinity());
        n.in_max = Eigen::VectorXd::Constant(D, -std::numeric_limits<double>::infinity());
        n.out_min.setConstant(std::numeric_limits<double>::infinity());
        n.out_max.setConstant(-std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (inputs[i]->rows() != D || targets[i]->rows() != 12 || inputs[i]->cols() != targets[i]->cols() ||
                inputs[i]->cols() == 0) {
                throw ShapeError("normalizer: inconsistent feature matrices");
            }
            n.in_min = n.in_min.cwiseMin(inputs[i]->rowwise().minCoeff());
            n.in_max = n.in_max.cwiseMax(inputs[i]->rowwise().maxCoeff());
            n.out_min = n.out_min.cwiseMin(targets[i]->rowwise().minCoeff());
            n.out_max = n.out_max.cwiseMax(targets[i]->rowwise().maxCoeff());
        }
        return n;
    }

    int input_dim() const { return static_cast<int>(in_min.size()); }

    /// Columns are frames.
    Eigen::MatrixXd normalize_inputs(const Eigen::MatrixXd& x) const {
        if (x.rows() != in_min.size()) throw ShapeError("normalizer: input has the wrong feature count");
        return scale(x, in_min, in_max);
    }

    Eigen::MatrixXd normalize_targets(const Eigen::MatrixXd& y) const {
        if (y.rows() != 12) throw ShapeError("normalizer: targets must have 12 rows");
        return scale(y, out_min, out_max);
    }

    Eigen::MatrixXd denormalize_state(const Eigen::MatrixXd& yn) const {
        return (yn.array().colwise() * (out_max - out_min).array()).colwise() + out_min.array();
    }

    /// μ is an absolute error, so only the range applies.
    Eigen::MatrixXd denormalize_error(const Eigen::MatrixXd& en) const {
        return en.array().colwise() * (out_max - out_min).array();
    }

    bool operator==(const Normalizer&) const = default;

private:
    static Eigen::MatrixXd scale(const Eigen::MatrixXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
        Eigen::MatrixXd out(x.rows(), x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const double range = hi(r) - lo(r);
            if (range > 0.0) {
                out.row(r) = (x.row(r).array() - lo(r)) / range;
            } else {
                out.row(r).setZero();
            }
        }
        return out;
    }
};

/// Filter setup shared by training, evaluation and streaming.
inline KalmanBelief initial_belief(const SensorFrame& first, const FilterConfig& cfg) {
    KalmanBelief b;
    if (first.has_truth) {
        b.x_hat = first.mocap;
        return b;
    }
    const LegOdometry lo = compute_leg_odometry(first.joints, first.imu, first.contact, cfg);
    b.x_hat.theta() = first.imu.theta;
    b.x_hat.r().z() = lo.valid ? lo.outputs.height : 0.0;
    b.x_hat.omega() = first.imu.omega;
    return b;
}

/// Everything a trajectory contributes to training or evaluation, one
/// column per frame.
struct TrajectoryFeatures {
    std::string name;
    Eigen::MatrixXd features;  // layout.dim() × n
    Eigen::MatrixXd kf;        // 12 × n
    Eigen::MatrixXd mocap;     // 12 × n (empty without truth)
    Eigen::MatrixXd truth;     // 12 × n (empty without truth)
    Eigen::VectorXd time;

    Eigen::Index frames() const { return features.cols(); }
    bool has_truth() const { return truth.cols() == features.cols() && features.cols() > 0; }
};

/// Latent per image, or nothing when `vit` is null (zeros are used).
template <class T>
std::vector<Eigen::VectorXd> image_latents(const Dataset& ds, const Vit<T>* vit) {
    std::vector<Eigen::VectorXd> out;
    if (vit == nullptr) return out;
    out.reserve(ds.images.size());
    for (const auto& img : ds.images) out.push_back(vit->encode(img).template cast<double>());
    return out;
}

/// Runs the filter over a dataset and assembles the feature matrix.
inline TrajectoryFeatures compute_features(const Dataset& ds, const std::vector<Eigen::VectorXd>& latents,
                                           const FeatureLayout& lay, const FilterConfig& fcfg,
                                           const std::string& name = {}) {
    if (ds.frames.empty()) throw ConfigError("features: dataset '" + name + "' has no frames");
    const auto n = static_cast<Eigen::Index>(ds.frames.size());
    TrajectoryFeatures tf;
    tf.name = name;
    tf.features.resize(lay.dim(), n);
    tf.kf.resize(12, n);
    tf.time.resize(n);
    const bool truth = std::all_of(ds.frames.begin(), ds.frames.end(), [](const SensorFrame& f) { return f.has_truth; });
    if (truth) {
        tf.mocap.resize(12, n);
        tf.truth.resize(12, n);
    }
    KalmanFilter kf(fcfg, initial_belief(ds.frames.front(), fcfg));
    Eigen::VectorXd latent = Eigen::VectorXd::Zero(lay.latent_dim);
    for (Eigen::Index k = 0; k < n; ++k) {
        const SensorFrame& f = ds.frames[static_cast<std::size_t>(k)];
        if (f.depth_index >= 0 && !latents.empty()) latent = latents.at(static_cast<std::size_t>(f.depth_index));
        kf.step(f.joints, f.imu, f.contact, f.forces);
        tf.features.col(k) = frame_features(lay, kf.belief().x_hat, latent, kf.last_odometry(), f.imu, f.forces);
        tf.kf.col(k) = kf.belief().x_hat.x;
        tf.time(k) = f.t;
        if (truth) {
            tf.mocap.col(k) = f.mocap.x;
            tf.truth.col(k) = f.truth.x;
        }
    }
    return tf;
}

} // namespace optistate
