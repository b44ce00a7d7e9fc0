#pragma once

// GRU correction stage: sliding windows, training, batched prediction,
// checkpoints and the streaming estimator (KF → features → window → GRU).

#include <deque>
#include <optional>
#include <functional>
#include <numeric>
#include <random>

#include "optistate/nn/gru.hpp"
#include "optistate/nn/vit.hpp"
#include "optistate/pipeline/features.hpp"

namespace optistate {

struct GruTrainConfig {
    int epochs = 40;
    int batch = 64;
    double lr = 1e-5;
    double weight_decay = 1e-5;
    long max_steps = 0;  // 0: no limit
    std::uint64_t seed = 1;
    bool kf_init = true;  // start from the KF estimate when x̂ is an input

    void validate() const {
        if (epochs < 0 || batch < 1 || !(lr > 0.0) || weight_decay < 0.0 || max_steps < 0) {
            throw ConfigError("gru training: epochs/batch/lr/weight_decay out of range");
        }
    }
};

struct GruModel {
    Gru<float> net;
    Normalizer norm;
    InputAblation ablation = InputAblation::none;
    int latent_dim = 128;

    FeatureLayout layout() const { return FeatureLayout{latent_dim}; }

    /// Normalized, masked inputs in float (one column per frame).
    nn::Mat<float> prepare(const Eigen::MatrixXd& features) const {
        const Eigen::VectorXd mask = ablation_mask(layout(), ablation);
        return (norm.normalize_inputs(features).array().colwise() * mask.array()).matrix().cast<float>();
    }
};

/// Window ending at frame k: frames k−N+1 … k, with frames before the start
/// replaced by frame 0. `inputs` has one column per frame.
template <class T, class Derived>
std::vector<nn::Mat<T>> window_at(const Eigen::MatrixBase<Derived>& inputs, Eigen::Index k, int N) {
    if (k < 0 || k >= inputs.cols()) throw ShapeError("window: frame index out of range");
    std::vector<nn::Mat<T>> w;
    w.reserve(static_cast<std::size_t>(N));
    for (int s = N - 1; s >= 0; --s) {
        const Eigen::Index j = std::max<Eigen::Index>(0, k - s);
        w.push_back(inputs.col(j).template cast<T>());
    }
    return w;
}

/// Batched windows: `refs` holds (trajectory, frame) pairs.
template <class T>
std::vector<nn::Mat<T>> gather_windows(const std::vector<nn::Mat<float>>& inputs,
                                       const std::vector<std::pair<int, Eigen::Index>>& refs, int N) {
    const Eigen::Index D = inputs.front().rows();
    const auto B = static_cast<Eigen::Index>(refs.size());
    std::vector<nn::Mat<T>> w(static_cast<std::size_t>(N), nn::Mat<T>(D, B));
    for (Eigen::Index b = 0; b < B; ++b) {
        const auto& [tj, k] = refs[static_cast<std::size_t>(b)];
        const auto& X = inputs[static_cast<std::size_t>(tj)];
        for (int s = 0; s < N; ++s) {
            const Eigen::Index j = std::max<Eigen::Index>(0, k - (N - 1 - s));
            w[static_cast<std::size_t>(s)].col(b) = X.col(j).template cast<T>();
        }
    }
    return w;
}

/// Sets the skip path to the map normalized x̂ → normalized x̄ and zeroes the
/// head's state rows, so the untrained network reproduces the KF estimate
/// and training learns a correction to it.
inline void init_from_kf(GruModel& m) {
    auto& p = m.net.params();
    const int kf = m.layout().kf();
    auto& S = p[m.net.skip_w()];
    auto& W = p[m.net.head_w()];
    auto& b = p[m.net.head_b()];
    for (int c = 0; c < 12; ++c) {
        const double in_range = m.norm.in_max(kf + c) - m.norm.in_min(kf + c);
        const double out_range = m.norm.out_max(c) - m.norm.out_min(c);
        S.row(c).setZero();
        W.row(c).setZero();
        if (out_range > 0.0) {
            S(c, kf + c) = static_cast<float>(in_range / out_range);
            b(c, 0) = static_cast<float>((m.norm.in_min(kf + c) - m.norm.out_min(c)) / out_range - 0.5);
        } else {
            b(c, 0) = -0.5f;
        }
    }
}

struct GruTrainResult {
    GruModel model;
    std::vector<double> loss_history;  // mean batch loss per epoch
    long steps = 0;
};

/// Trains the correction network on every stride-1 window of `train`.
/// The normalizer is fitted on the same trajectories.
inline GruTrainResult train_gru(const std::vector<const TrajectoryFeatures*>& train, GruConfig cfg,
                                const GruTrainConfig& hp, InputAblation ablation,
                                const std::function<void(int, double)>& on_epoch = {}) {
    hp.validate();
    if (train.empty()) throw ConfigError("train_gru: no training trajectories");
    std::vector<const Eigen::MatrixXd*> xs, ys;
    for (const auto* t : train) {
        if (!t->has_truth()) throw MissingTruthError("train_gru: trajectory '" + t->name + "' has no ground truth");
        xs.push_back(&t->features);
        ys.push_back(&t->mocap);
    }
    GruTrainResult res;
    res.model.latent_dim = static_cast<int>(train.front()->features.rows()) - (FeatureLayout{0}.dim());
    cfg.input_dim = static_cast<int>(train.front()->features.rows());
    res.model.ablation = ablation;
    res.model.norm = Normalizer::fit(xs, ys);
    res.model.net = Gru<float>(cfg, hp.seed);
    if (hp.kf_init && cfg.skip && ablation != InputAblation::no_kf) init_from_kf(res.model);

    std::vector<nn::Mat<float>> inputs, targets;
    std::vector<std::pair<int, Eigen::Index>> all;
    for (std::size_t i = 0; i < train.size(); ++i) {
        inputs.push_back(res.model.prepare(train[i]->features));
        targets.push_back(res.model.norm.normalize_targets(train[i]->mocap).cast<float>());
        for (Eigen::Index k = 0; k < train[i]->frames(); ++k) all.emplace_back(static_cast<int>(i), k);
    }

    nn::AdamConfig ac;
    ac.lr = hp.lr;
    ac.weight_decay = hp.weight_decay;
    ac.decoupled = false;
    auto& net = res.model.net;
    nn::Adam<float> opt(net.params(), ac);
    auto grads = net.params().zeros_like();
    std::mt19937_64 rng(hp.seed ^ 0x9e3779b97f4a7c15ULL);
    const int N = cfg.horizon;
    for (int ep = 0; ep < hp.epochs; ++ep) {
        if (hp.max_steps > 0 && res.steps >= hp.max_steps) break;
        std::shuffle(all.begin(), all.end(), rng);
        double sum = 0.0;
        int batches = 0;
        for (std::size_t s = 0; s < all.size(); s += static_cast<std::size_t>(hp.batch)) {
            if (hp.max_steps > 0 && res.steps >= hp.max_steps) break;
            const std::size_t e = std::min(all.size(), s + static_cast<std::size_t>(hp.batch));
            const std::vector<std::pair<int, Eigen::Index>> refs(all.begin() + static_cast<std::ptrdiff_t>(s),
                                                                 all.begin() + static_cast<std::ptrdiff_t>(e));
            const auto win = gather_windows<float>(inputs, refs, N);
            nn::Mat<float> y(12, static_cast<Eigen::Index>(refs.size()));
            for (std::size_t b = 0; b < refs.size(); ++b) {
                y.col(static_cast<Eigen::Index>(b)) = targets[static_cast<std::size_t>(refs[b].first)].col(refs[b].second);
            }
            Gru<float>::Trace tr;
            const auto out = net.forward(win, &tr);
            nn::Mat<float> dx, dm;
            const float l = gru_loss(out, y, &dx, &dm);
            if (!std::isfinite(l)) {
                throw DivergedError("train_gru: loss became non-finite at epoch " + std::to_string(ep));
            }
            grads.set_zero();
            net.backward(tr, dx, dm, grads);
            opt.step(net.params(), grads);
            sum += l;
            ++batches;
            ++res.steps;
        }
        res.loss_history.push_back(sum / std::max(batches, 1));
        if (on_epoch) on_epoch(ep, res.loss_history.back());
    }
    if (!net.params().all_finite()) throw DivergedError("train_gru: parameters became non-finite");
    return res;
}

struct GruPrediction {
    Eigen::MatrixXd x_bar;  // 12 × n, physical units
    Eigen::MatrixXd mu;     // 12 × n, physical units, ≥ 0
};

/// Evaluates every window of a trajectory in double precision.
inline GruPrediction predict_trajectory(const GruModel& model, const TrajectoryFeatures& tf,
                                        std::size_t chunk = 512) {
    const Gru<double> net = model.net.cast<double>();
    const std::vector<nn::Mat<float>> inputs{model.prepare(tf.features)};
    const int N = net.config().horizon;
    GruPrediction p;
    p.x_bar.resize(12, tf.frames());
    p.mu.resize(12, tf.frames());
    for (Eigen::Index s = 0; s < tf.frames(); s += static_cast<Eigen::Index>(chunk)) {
        const Eigen::Index e = std::min(tf.frames(), s + static_cast<Eigen::Index>(chunk));
        std::vector<std::pair<int, Eigen::Index>> refs;
        for (Eigen::Index k = s; k < e; ++k) refs.emplace_back(0, k);
        const auto out = net.forward(gather_windows<double>(inputs, refs, N));
        p.x_bar.middleCols(s, e - s) = model.norm.denormalize_state(out.x_bar);
        p.mu.middleCols(s, e - s) = model.norm.denormalize_error(out.mu);
    }
    return p;
}

inline constexpr char kGruMagic[4] = {'O', 'S', 'G', 'R'};

inline void save_gru(const std::string& path, const GruModel& m, const KeyValueConfig& extra = {}) {
    KeyValueConfig kv = m.net.config().to_kv();
    kv.set("gru.ablation", to_string(m.ablation));
    kv.set("gru.latent_dim", m.latent_dim);
    for (const auto& [k, v] : extra.entries()) kv.set(k, v);
    nn::ParamStore<double> all = m.net.params().cast<double>();
    const auto add = [&](const std::string& n, const Eigen::MatrixXd& v) {
        all[all.add(n, static_cast<int>(v.rows()), static_cast<int>(v.cols()), false)] = v;
    };
    add("norm.in_min", m.norm.in_min);
    add("norm.in_max", m.norm.in_max);
    add("norm.out_min", m.norm.out_min);
    add("norm.out_max", m.norm.out_max);
    nn::write_checkpoint(path, kGruMagic, kv.to_text(), all);
}

inline GruModel load_gru(const std::string& path) {
    auto ck = nn::read_checkpoint(path, kGruMagic);
    const KeyValueConfig kv = KeyValueConfig::parse(ck.config_text);
    GruModel m;
    m.ablation = ablation_from_string(kv.get_string("gru.ablation", "full"));
    m.latent_dim = static_cast<int>(kv.get_int("gru.latent_dim", 128));
    const GruConfig cfg = GruConfig::from_kv(kv, GruConfig{});
    if (cfg.input_dim != FeatureLayout{m.latent_dim}.dim()) {
        throw ConfigError("GRU checkpoint: input_dim does not match latent_dim");
    }
    m.net = Gru<float>(cfg, 0);
    std::vector<nn::CheckpointTensor> net_tensors;
    auto take = [&](const std::string& n, Eigen::Index rows) -> Eigen::MatrixXd {
        for (const auto& t : ck.tensors) {
            if (t.name == n) {
                if (t.value.rows() != rows || t.value.cols() != 1) {
                    throw ConfigError("GRU checkpoint tensor '" + n + "' has the wrong shape");
                }
                return t.value;
            }
        }
        throw ConfigError("GRU checkpoint is missing '" + n + "'");
    };
    m.norm.in_min = take("norm.in_min", cfg.input_dim);
    m.norm.in_max = take("norm.in_max", cfg.input_dim);
    m.norm.out_min = take("norm.out_min", 12);
    m.norm.out_max = take("norm.out_max", 12);
    for (auto& t : ck.tensors) {
        if (!t.name.starts_with("norm.")) net_tensors.push_back(std::move(t));
    }
    ck.tensors = std::move(net_tensors);
    nn::load_tensors(ck, m.net.params(), "GRU");
    return m;
}

struct StepEstimate {
    TrunkState x_hat;
    TrunkState x_bar;
    Vec12 mu = Vec12::Zero();
};

/// Streaming estimator. Frames must arrive in order; the depth latent is
/// refreshed whenever a frame names a new image and held otherwise.
class OptiStatePipeline {
public:
    OptiStatePipeline(FilterConfig fcfg, const Vit<float>* vit, const GruModel& gru)
        : fcfg_(std::move(fcfg)), vit_(vit), model_(gru), net_(gru.net.cast<double>()),
          latent_(Eigen::VectorXd::Zero(gru.latent_dim)) {
        if (vit_ != nullptr && vit_->config().embed != gru.latent_dim) {
            throw ConfigError("pipeline: ViT embed dim does not match the GRU's latent dim");
        }
    }

    StepEstimate step(const SensorFrame& f, const DepthImage* image) {
        if (!kf_) kf_.emplace(fcfg_, initial_belief(f, fcfg_));
        if (f.depth_index >= 0 && f.depth_index != last_image_ && image != nullptr && vit_ != nullptr) {
            latent_ = vit_->encode(*image).cast<double>();
            last_image_ = f.depth_index;
        }
        kf_->step(f.joints, f.imu, f.contact, f.forces);
        const auto lay = model_.layout();
        const Eigen::VectorXd feat =
            frame_features(lay, kf_->belief().x_hat, latent_, kf_->last_odometry(), f.imu, f.forces);
        const int N = net_.config().horizon;
        window_.push_back(model_.prepare(feat).cast<double>());
        while (static_cast<int>(window_.size()) > N) window_.pop_front();
        std::vector<nn::Mat<double>> w;
        for (int s = 0; s < N - static_cast<int>(window_.size()); ++s) w.push_back(window_.front());
        for (const auto& c : window_) w.push_back(c);
        const auto out = net_.forward(w);
        StepEstimate e;
        e.x_hat = kf_->belief().x_hat;
        e.x_bar.x = model_.norm.denormalize_state(out.x_bar).col(0);
        e.mu = model_.norm.denormalize_error(out.mu).col(0);
        return e;
    }

    const KalmanBelief& belief() const { return kf_->belief(); }

private:
    FilterConfig fcfg_;
    const Vit<float>* vit_;
    GruModel model_;
    Gru<double> net_;
    std::optional<KalmanFilter> kf_;
    Eigen::VectorXd latent_;
    int last_image_ = -1;
    std::deque<nn::Mat<double>> window_;
};

} // namespace optistate
