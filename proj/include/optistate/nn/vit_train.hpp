#pragma once

// Augmentation, AdamW training loop and checkpoint I/O for the ViT.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "optistate/nn/vit.hpp"

namespace optistate {

struct AugmentDraw {
    double angle = 0.0;  // rad
    bool flip = false;
    double zoom = 1.0;
};

inline AugmentDraw draw_augment(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ang(-15.0 * std::numbers::pi / 180.0, 15.0 * std::numbers::pi / 180.0);
    std::uniform_real_distribution<double> zoom(0.9, 1.1);
    std::bernoulli_distribution flip(0.5);
    AugmentDraw d;
    d.angle = ang(rng);
    d.flip = flip(rng);
    d.zoom = zoom(rng);
    return d;
}

/// Horizontal flip, then rotation and zoom about the image centre with
/// bilinear sampling. Samples outside the source repeat the nearest edge
/// pixel; results are clamped to [0, 1].
inline DepthImage apply_augment(const DepthImage& img, const AugmentDraw& a) {
    DepthImage out(img.height, img.width);
    const double cy = 0.5 * (img.height - 1), cx = 0.5 * (img.width - 1);
    const double c = std::cos(a.angle), s = std::sin(a.angle);
    auto px = [&](int r, int col) {
        r = std::clamp(r, 0, img.height - 1);
        col = std::clamp(col, 0, img.width - 1);
        return static_cast<double>(img.at(r, col));
    };
    for (int r = 0; r < img.height; ++r) {
        for (int col = 0; col < img.width; ++col) {
            const double xo = (a.flip ? img.width - 1 - col : col) - cx;
            const double yo = r - cy;
            const double sx = cx + (c * xo + s * yo) / a.zoom;
            const double sy = cy + (-s * xo + c * yo) / a.zoom;
            const double fx = std::floor(sx), fy = std::floor(sy);
            const double tx = sx - fx, ty = sy - fy;
            const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
            double v = (1 - ty) * ((1 - tx) * px(y0, x0) + tx * px(y0, x0 + 1)) +
                       ty * ((1 - tx) * px(y0 + 1, x0) + tx * px(y0 + 1, x0 + 1));
            out.at(r, col) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return out;
}

inline DepthImage augment(const DepthImage& img, std::mt19937_64& rng) { return apply_augment(img, draw_augment(rng)); }

struct VitTrainConfig {
    int epochs = 20;
    int batch = 64;
    double lr = 4e-4;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.1;
    bool augment = true;
    std::uint64_t seed = 1;
};

template <class T>
struct VitTrainResult {
    Vit<T> model;
    std::vector<double> loss_history;  // mean batch loss per epoch
};

/// Trains on `images` (shuffled each epoch). `on_epoch(epoch, loss)` is
/// called after every epoch when set.
template <class T>
VitTrainResult<T> train_vit(const std::vector<const DepthImage*>& images, const VitConfig& cfg,
                            const VitTrainConfig& hp,
                            const std::function<void(int, double)>& on_epoch = {}) {
    if (images.empty()) throw ConfigError("train_vit: no images");
    if (hp.batch < 1 || hp.epochs < 0) throw ConfigError("train_vit: batch and epochs must be positive");
    VitTrainResult<T> res{Vit<T>(cfg, hp.seed), {}};
    nn::AdamConfig ac;
    ac.lr = hp.lr;
    ac.beta1 = hp.beta1;
    ac.beta2 = hp.beta2;
    ac.weight_decay = hp.weight_decay;
    ac.decoupled = true;
    nn::Adam<T> opt(res.model.params(), ac);
    nn::ParamStore<T> grads = res.model.params().zeros_like();
    std::mt19937_64 rng(hp.seed ^ 0x5eedULL);
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int ep = 0; ep < hp.epochs; ++ep) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        int batches = 0;
        for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(hp.batch)) {
            const std::size_t e = std::min(order.size(), s + static_cast<std::size_t>(hp.batch));
            std::vector<DepthImage> aug;
            std::vector<const DepthImage*> ptrs;
            aug.reserve(e - s);
            for (std::size_t i = s; i < e; ++i) {
                const DepthImage& src = *images[order[i]];
                if (hp.augment) {
                    aug.push_back(augment(src, rng));
                    ptrs.push_back(&aug.back());
                } else {
                    ptrs.push_back(&src);
                }
            }
            grads.set_zero();
            const T l = res.model.loss(res.model.batch_patches(ptrs), &grads);
            if (!std::isfinite(static_cast<double>(l)) || !grads.all_finite()) {
                throw DivergedError("train_vit: loss became non-finite at epoch " + std::to_string(ep));
            }
            opt.step(res.model.params(), grads);
            sum += static_cast<double>(l);
            ++batches;
        }
        res.loss_history.push_back(sum / batches);
        if (on_epoch) on_epoch(ep, res.loss_history.back());
    }
    return res;
}

/// Mean reconstruction MSE over images (no augmentation).
template <class T>
double vit_mse(const Vit<T>& model, const std::vector<const DepthImage*>& images, std::size_t chunk = 16) {
    double sum = 0.0;
    for (std::size_t s = 0; s < images.size(); s += chunk) {
        const std::size_t e = std::min(images.size(), s + chunk);
        std::vector<const DepthImage*> part(images.begin() + static_cast<std::ptrdiff_t>(s),
                                            images.begin() + static_cast<std::ptrdiff_t>(e));
        sum += static_cast<double>(model.loss(model.batch_patches(part))) * static_cast<double>(e - s);
    }
    return sum / static_cast<double>(images.size());
}

inline constexpr char kVitMagic[4] = {'O', 'S', 'V', 'T'};

template <class T>
void save_vit(const std::string& path, const Vit<T>& model, const KeyValueConfig& extra = {}) {
    KeyValueConfig kv = model.config().to_kv();
    for (const auto& [k, v] : extra.entries()) kv.set(k, v);
    nn::write_checkpoint(path, kVitMagic, kv.to_text(), model.params());
}

template <class T>
Vit<T> load_vit(const std::string& path) {
    const auto ck = nn::read_checkpoint(path, kVitMagic);
    const VitConfig cfg = VitConfig::from_kv(KeyValueConfig::parse(ck.config_text), VitConfig{});
    Vit<T> model(cfg, 0);
    nn::load_tensors(ck, model.params(), "ViT");
    return model;
}

} // namespace optistate
