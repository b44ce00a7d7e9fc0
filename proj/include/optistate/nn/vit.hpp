#pragma once

// Vision-transformer depth autoencoder.
//
//   patches (P × T per image) → W_p·x + b_p + pos → pre-norm blocks → LN
//     → E (tokens), latent = mean of E over tokens
//   E + pos_dec → pre-norm blocks → LN → W_h·x + b_h → patches → image
//
// A batch of B images is processed as d × (B·T) with image b in columns
// [b·T, (b+1)·T). Attention never mixes images.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "optistate/core/kv_config.hpp"
#include "optistate/nn/layers.hpp"
#include "optistate/nn/params.hpp"
#include "optistate/sim/depth_camera.hpp"

namespace optistate {

struct VitConfig {
    int image_h = 224;
    int image_w = 224;
    int patch = 16;
    int embed = 128;
    int depth = 4;
    int heads = 4;
    int mlp_ratio = 4;

    int tokens() const { return (image_h / patch) * (image_w / patch); }
    int patch_dim() const { return patch * patch; }
    int head_dim() const { return embed / heads; }
    int hidden() const { return embed * mlp_ratio; }

    static VitConfig small() {
        VitConfig c;
        c.image_h = c.image_w = 64;
        c.patch = 8;
        return c;
    }

    void validate() const {
        if (patch <= 0 || image_h <= 0 || image_w <= 0 || embed <= 0 || depth < 0 || heads <= 0 ||
            mlp_ratio <= 0) {
            throw ConfigError("vit: sizes must be positive");
        }
        if (embed % heads != 0) throw ConfigError("vit.embed must be divisible by vit.heads");
        if (image_h % patch != 0 || image_w % patch != 0) {
            throw ShapeError("vit: image dims must be divisible by the patch size");
        }
    }

    KeyValueConfig to_kv() const {
        KeyValueConfig kv;
        kv.set("vit.image_h", image_h);
        kv.set("vit.image_w", image_w);
        kv.set("vit.patch", patch);
        kv.set("vit.embed", embed);
        kv.set("vit.depth", depth);
        kv.set("vit.heads", heads);
        kv.set("vit.mlp_ratio", mlp_ratio);
        return kv;
    }

    static VitConfig from_kv(const KeyValueConfig& kv, const VitConfig& base) {
        VitConfig c = base;
        c.image_h = static_cast<int>(kv.get_int("vit.image_h", c.image_h));
        c.image_w = static_cast<int>(kv.get_int("vit.image_w", c.image_w));
        c.patch = static_cast<int>(kv.get_int("vit.patch", c.patch));
        c.embed = static_cast<int>(kv.get_int("vit.embed", c.embed));
        c.depth = static_cast<int>(kv.get_int("vit.depth", c.depth));
        c.heads = static_cast<int>(kv.get_int("vit.heads", c.heads));
        c.mlp_ratio = static_cast<int>(kv.get_int("vit.mlp_ratio", c.mlp_ratio));
        c.validate();
        return c;
    }

    bool operator==(const VitConfig&) const = default;
};

/// Parameter count: patch embed P·d + d, two positional tables 2·d·T, per
/// block 4d² + 4d (attention) + 2·d·m + m + d (MLP) + 4d (two LayerNorms),
/// two final LayerNorms 4d, head P·d + P. Encoder and decoder have `depth`
/// blocks each.
inline std::size_t vit_parameter_count(const VitConfig& c) {
    const std::size_t d = static_cast<std::size_t>(c.embed), P = static_cast<std::size_t>(c.patch_dim()),
                      T = static_cast<std::size_t>(c.tokens()), m = static_cast<std::size_t>(c.hidden());
    const std::size_t block = 4 * d * d + 4 * d + 2 * d * m + m + d + 4 * d;
    return P * d + d + 2 * d * T + 2 * static_cast<std::size_t>(c.depth) * block + 4 * d + P * d + P;
}

/// Tokens as columns: column t holds patch (t / (W/ps), t % (W/ps)), pixels row-major.
template <class T>
nn::Mat<T> patchify(const DepthImage& img, int ps) {
    if (ps <= 0 || img.height % ps != 0 || img.width % ps != 0) {
        throw ShapeError("patchify: image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                         " not divisible by patch " + std::to_string(ps));
    }
    const int pw = img.width / ps, ph = img.height / ps;
    nn::Mat<T> out(ps * ps, ph * pw);
    for (int pr = 0; pr < ph; ++pr) {
        for (int pc = 0; pc < pw; ++pc) {
            const int t = pr * pw + pc;
            for (int i = 0; i < ps; ++i) {
                for (int j = 0; j < ps; ++j) out(i * ps + j, t) = static_cast<T>(img.at(pr * ps + i, pc * ps + j));
            }
        }
    }
    return out;
}

template <class T>
DepthImage unpatchify(const nn::Mat<T>& tokens, int height, int width, int ps) {
    if (ps <= 0 || height % ps != 0 || width % ps != 0 || tokens.rows() != ps * ps ||
        tokens.cols() != (height / ps) * (width / ps)) {
        throw ShapeError("unpatchify: token matrix does not match the image shape");
    }
    DepthImage img(height, width);
    const int pw = width / ps;
    for (int t = 0; t < tokens.cols(); ++t) {
        const int pr = t / pw, pc = t % pw;
        for (int i = 0; i < ps; ++i) {
            for (int j = 0; j < ps; ++j) img.at(pr * ps + i, pc * ps + j) = static_cast<float>(tokens(i * ps + j, t));
        }
    }
    return img;
}

struct VitBlockIdx {
    int ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
};

template <class T>
class Vit {
public:
    using M = nn::Mat<T>;

    struct BlockTrace {
        nn::LayerNormCache<T> ln1, ln2;
        M xn1, q, k, v, o, xn2, h1, g;
        std::vector<M> attn;  // per (image, head), T × T
    };

    struct Trace {
        int batch = 0;
        M patches;
        std::vector<BlockTrace> enc, dec;
        nn::LayerNormCache<T> enc_ln, dec_ln;
        M enc_out, dec_out, recon;
    };

    Vit() = default;

    Vit(VitConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        build_layout();
        std::mt19937_64 rng(seed);
        for (int i = 0; i < params_.size(); ++i) {
            if (params_.decays(i)) nn::init_trunc_normal(params_[i], 0.02, rng);
        }
        for (int i : ln_gains_) params_[i].setOnes();
    }

    const VitConfig& config() const { return cfg_; }
    nn::ParamStore<T>& params() { return params_; }
    const nn::ParamStore<T>& params() const { return params_; }

    template <class U>
    Vit<U> cast() const {
        Vit<U> out;
        out.cfg_ = cfg_;
        out.build_layout();
        out.params_ = params_.template cast<U>();
        return out;
    }

    /// Patches of a batch stacked side by side.
    M batch_patches(const std::vector<const DepthImage*>& imgs) const {
        const int Tn = cfg_.tokens();
        M out(cfg_.patch_dim(), static_cast<Eigen::Index>(imgs.size()) * Tn);
        for (std::size_t b = 0; b < imgs.size(); ++b) {
            check_image(*imgs[b]);
            out.middleCols(static_cast<Eigen::Index>(b) * Tn, Tn) = patchify<T>(*imgs[b], cfg_.patch);
        }
        return out;
    }

    /// Encoder output tokens (d × B·T).
    M encode_tokens(const M& patches, Trace* tr = nullptr) const {
        const int Tn = cfg_.tokens();
        const int B = static_cast<int>(patches.cols() / Tn);
        if (patches.rows() != cfg_.patch_dim() || patches.cols() != static_cast<Eigen::Index>(B) * Tn) {
            throw ShapeError("vit encode: patch matrix has the wrong shape");
        }
        M x = (params_[patch_w_] * patches).colwise() + params_[patch_b_].col(0);
        add_pos(x, params_[enc_pos_], B);
        if (tr != nullptr) tr->enc.resize(enc_.size());
        for (std::size_t i = 0; i < enc_.size(); ++i) {
            x = block_forward(enc_[i], x, B, tr != nullptr ? &tr->enc[i] : nullptr);
        }
        return nn::layer_norm<T>(x, params_[enc_ln_g_], params_[enc_ln_b_], tr != nullptr ? &tr->enc_ln : nullptr);
    }

    /// Mean over each image's tokens (d × B).
    M pool(const M& tokens) const {
        const int Tn = cfg_.tokens();
        const auto B = tokens.cols() / Tn;
        M out(tokens.rows(), B);
        for (Eigen::Index b = 0; b < B; ++b) out.col(b) = tokens.middleCols(b * Tn, Tn).rowwise().mean();
        return out;
    }

    /// Reconstructed patches (P × B·T) from encoder tokens.
    M decode_tokens(const M& enc_tokens, Trace* tr = nullptr) const {
        const int Tn = cfg_.tokens();
        const int B = static_cast<int>(enc_tokens.cols() / Tn);
        if (enc_tokens.rows() != cfg_.embed || enc_tokens.cols() != static_cast<Eigen::Index>(B) * Tn) {
            throw ShapeError("vit decode: token matrix has the wrong shape");
        }
        M x = enc_tokens;
        add_pos(x, params_[dec_pos_], B);
        if (tr != nullptr) tr->dec.resize(dec_.size());
        for (std::size_t i = 0; i < dec_.size(); ++i) {
            x = block_forward(dec_[i], x, B, tr != nullptr ? &tr->dec[i] : nullptr);
        }
        M f = nn::layer_norm<T>(x, params_[dec_ln_g_], params_[dec_ln_b_], tr != nullptr ? &tr->dec_ln : nullptr);
        M out = (params_[head_w_] * f).colwise() + params_[head_b_].col(0);
        if (tr != nullptr) tr->dec_out = std::move(f);
        return out;
    }

    /// Latent vector of one image.
    Eigen::Matrix<T, Eigen::Dynamic, 1> encode(const DepthImage& img) const {
        return pool(encode_tokens(batch_patches({&img}))).col(0);
    }

    /// Latents for many images, evaluated `chunk` at a time.
    M encode_many(const std::vector<const DepthImage*>& imgs, std::size_t chunk = 32) const {
        M out(cfg_.embed, static_cast<Eigen::Index>(imgs.size()));
        for (std::size_t s = 0; s < imgs.size(); s += chunk) {
            const std::size_t e = std::min(imgs.size(), s + chunk);
            std::vector<const DepthImage*> part(imgs.begin() + static_cast<std::ptrdiff_t>(s),
                                                imgs.begin() + static_cast<std::ptrdiff_t>(e));
            out.middleCols(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(e - s)) =
                pool(encode_tokens(batch_patches(part)));
        }
        return out;
    }

    DepthImage decode(const M& enc_tokens) const {
        return unpatchify<T>(decode_tokens(enc_tokens), cfg_.image_h, cfg_.image_w, cfg_.patch);
    }

    DepthImage reconstruct(const DepthImage& img) const { return decode(encode_tokens(batch_patches({&img}))); }

    /// Mean squared reconstruction error over all pixels of the batch;
    /// gradients are accumulated into `grads` when given.
    T loss(const M& patches, nn::ParamStore<T>* grads = nullptr) const {
        Trace tr;
        tr.batch = static_cast<int>(patches.cols() / cfg_.tokens());
        if (grads != nullptr) tr.patches = patches;
        tr.enc_out = encode_tokens(patches, grads != nullptr ? &tr : nullptr);
        const M recon = decode_tokens(tr.enc_out, grads != nullptr ? &tr : nullptr);
        const M diff = recon - patches;
        const T n = static_cast<T>(diff.size());
        const T value = diff.squaredNorm() / n;
        if (grads != nullptr) {
            const M d_out = diff * (T(2) / n);
            backward(tr, d_out, *grads);
        }
        return value;
    }

private:
    template <class U>
    friend class Vit;

    void check_image(const DepthImage& img) const {
        if (img.height != cfg_.image_h || img.width != cfg_.image_w) {
            throw ShapeError("vit: image is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                             ", model expects " + std::to_string(cfg_.image_h) + "x" + std::to_string(cfg_.image_w));
        }
    }

    void build_layout() {
        params_ = nn::ParamStore<T>();
        ln_gains_.clear();
        const int d = cfg_.embed, P = cfg_.patch_dim(), Tn = cfg_.tokens(), m = cfg_.hidden();
        patch_w_ = params_.add("enc.patch.w", d, P, true);
        patch_b_ = params_.add("enc.patch.b", d, 1, false);
        enc_pos_ = params_.add("enc.pos", d, Tn, false);
        auto block = [&](const std::string& p) {
            VitBlockIdx b{};
            b.ln1_g = params_.add(p + ".ln1.g", d, 1, false);
            b.ln1_b = params_.add(p + ".ln1.b", d, 1, false);
            b.wq = params_.add(p + ".attn.wq", d, d, true);
            b.bq = params_.add(p + ".attn.bq", d, 1, false);
            b.wk = params_.add(p + ".attn.wk", d, d, true);
            b.bk = params_.add(p + ".attn.bk", d, 1, false);
            b.wv = params_.add(p + ".attn.wv", d, d, true);
            b.bv = params_.add(p + ".attn.bv", d, 1, false);
            b.wo = params_.add(p + ".attn.wo", d, d, true);
            b.bo = params_.add(p + ".attn.bo", d, 1, false);
            b.ln2_g = params_.add(p + ".ln2.g", d, 1, false);
            b.ln2_b = params_.add(p + ".ln2.b", d, 1, false);
            b.w1 = params_.add(p + ".mlp.w1", m, d, true);
            b.b1 = params_.add(p + ".mlp.b1", m, 1, false);
            b.w2 = params_.add(p + ".mlp.w2", d, m, true);
            b.b2 = params_.add(p + ".mlp.b2", d, 1, false);
            ln_gains_.push_back(b.ln1_g);
            ln_gains_.push_back(b.ln2_g);
            return b;
        };
        enc_.clear();
        dec_.clear();
        for (int i = 0; i < cfg_.depth; ++i) enc_.push_back(block("enc.block" + std::to_string(i)));
        enc_ln_g_ = params_.add("enc.ln.g", d, 1, false);
        enc_ln_b_ = params_.add("enc.ln.b", d, 1, false);
        dec_pos_ = params_.add("dec.pos", d, Tn, false);
        for (int i = 0; i < cfg_.depth; ++i) dec_.push_back(block("dec.block" + std::to_string(i)));
        dec_ln_g_ = params_.add("dec.ln.g", d, 1, false);
        dec_ln_b_ = params_.add("dec.ln.b", d, 1, false);
        head_w_ = params_.add("dec.head.w", P, d, true);
        head_b_ = params_.add("dec.head.b", P, 1, false);
        ln_gains_.push_back(enc_ln_g_);
        ln_gains_.push_back(dec_ln_g_);
    }

    void add_pos(M& x, const M& pos, int B) const {
        const int Tn = cfg_.tokens();
        for (int b = 0; b < B; ++b) x.middleCols(static_cast<Eigen::Index>(b) * Tn, Tn) += pos;
    }

    M block_forward(const VitBlockIdx& p, const M& x, int B, BlockTrace* tr) const {
        const int Tn = cfg_.tokens(), H = cfg_.heads, dh = cfg_.head_dim();
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
        nn::LayerNormCache<T> ln1, ln2;
        M xn1 = nn::layer_norm<T>(x, params_[p.ln1_g], params_[p.ln1_b], tr != nullptr ? &ln1 : nullptr);
        M q = (params_[p.wq] * xn1).colwise() + params_[p.bq].col(0);
        M k = (params_[p.wk] * xn1).colwise() + params_[p.bk].col(0);
        M v = (params_[p.wv] * xn1).colwise() + params_[p.bv].col(0);
        M o(cfg_.embed, x.cols());
        std::vector<M> attn;
        if (tr != nullptr) attn.reserve(static_cast<std::size_t>(B * H));
        for (int b = 0; b < B; ++b) {
            const Eigen::Index c0 = static_cast<Eigen::Index>(b) * Tn;
            for (int h = 0; h < H; ++h) {
                const Eigen::Index r0 = static_cast<Eigen::Index>(h) * dh;
                M A = (q.block(r0, c0, dh, Tn).transpose() * k.block(r0, c0, dh, Tn)) * scale;
                nn::softmax_rows(A);
                o.block(r0, c0, dh, Tn).noalias() = v.block(r0, c0, dh, Tn) * A.transpose();
                if (tr != nullptr) attn.push_back(std::move(A));
            }
        }
        M x1 = x + ((params_[p.wo] * o).colwise() + params_[p.bo].col(0));
        M xn2 = nn::layer_norm<T>(x1, params_[p.ln2_g], params_[p.ln2_b], tr != nullptr ? &ln2 : nullptr);
        M h1 = (params_[p.w1] * xn2).colwise() + params_[p.b1].col(0);
        M g = h1.unaryExpr([](T z) { return nn::gelu(z); });
        M out = x1 + ((params_[p.w2] * g).colwise() + params_[p.b2].col(0));
        if (tr != nullptr) {
            tr->ln1 = std::move(ln1);
            tr->ln2 = std::move(ln2);
            tr->xn1 = std::move(xn1);
            tr->q = std::move(q);
            tr->k = std::move(k);
            tr->v = std::move(v);
            tr->o = std::move(o);
            tr->xn2 = std::move(xn2);
            tr->h1 = std::move(h1);
            tr->g = std::move(g);
            tr->attn = std::move(attn);
        }
        return out;
    }

    M block_backward(const VitBlockIdx& p, const M& dout, const BlockTrace& tr, int B,
                     nn::ParamStore<T>& gr) const {
        const int Tn = cfg_.tokens(), H = cfg_.heads, dh = cfg_.head_dim();
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
        // MLP branch
        gr[p.w2].noalias() += dout * tr.g.transpose();
        gr[p.b2].col(0) += dout.rowwise().sum();
        M dh1 = params_[p.w2].transpose() * dout;
        dh1.array() *= tr.h1.unaryExpr([](T z) { return nn::gelu_grad(z); }).array();
        gr[p.w1].noalias() += dh1 * tr.xn2.transpose();
        gr[p.b1].col(0) += dh1.rowwise().sum();
        const M dxn2 = params_[p.w1].transpose() * dh1;
        M dx1 = dout + nn::layer_norm_backward<T>(dxn2, params_[p.ln2_g], tr.ln2, gr[p.ln2_g], gr[p.ln2_b]);
        // attention branch
        gr[p.wo].noalias() += dx1 * tr.o.transpose();
        gr[p.bo].col(0) += dx1.rowwise().sum();
        const M dO = params_[p.wo].transpose() * dx1;
        M dq(cfg_.embed, dout.cols()), dk(cfg_.embed, dout.cols()), dv(cfg_.embed, dout.cols());
        std::size_t a = 0;
        for (int b = 0; b < B; ++b) {
            const Eigen::Index c0 = static_cast<Eigen::Index>(b) * Tn;
            for (int h = 0; h < H; ++h, ++a) {
                const Eigen::Index r0 = static_cast<Eigen::Index>(h) * dh;
                const M& A = tr.attn[a];
                const auto dOh = dO.block(r0, c0, dh, Tn);
                dv.block(r0, c0, dh, Tn).noalias() = dOh * A;
                M dA = dOh.transpose() * tr.v.block(r0, c0, dh, Tn);
                const Eigen::Matrix<T, Eigen::Dynamic, 1> rs = (dA.array() * A.array()).rowwise().sum();
                M dS = A.array() * (dA.colwise() - rs).array();
                dq.block(r0, c0, dh, Tn).noalias() = tr.k.block(r0, c0, dh, Tn) * dS.transpose() * scale;
                dk.block(r0, c0, dh, Tn).noalias() = tr.q.block(r0, c0, dh, Tn) * dS * scale;
            }
        }
        gr[p.wq].noalias() += dq * tr.xn1.transpose();
        gr[p.bq].col(0) += dq.rowwise().sum();
        gr[p.wk].noalias() += dk * tr.xn1.transpose();
        gr[p.bk].col(0) += dk.rowwise().sum();
        gr[p.wv].noalias() += dv * tr.xn1.transpose();
        gr[p.bv].col(0) += dv.rowwise().sum();
        M dxn1 = params_[p.wq].transpose() * dq;
        dxn1.noalias() += params_[p.wk].transpose() * dk;
        dxn1.noalias() += params_[p.wv].transpose() * dv;
        return dx1 + nn::layer_norm_backward<T>(dxn1, params_[p.ln1_g], tr.ln1, gr[p.ln1_g], gr[p.ln1_b]);
    }

    void backward(const Trace& tr, const M& d_out, nn::ParamStore<T>& gr) const {
        const int Tn = cfg_.tokens();
        const int B = tr.batch;
        gr[head_w_].noalias() += d_out * tr.dec_out.transpose();
        gr[head_b_].col(0) += d_out.rowwise().sum();
        M dx = params_[head_w_].transpose() * d_out;
        dx = nn::layer_norm_backward<T>(dx, params_[dec_ln_g_], tr.dec_ln, gr[dec_ln_g_], gr[dec_ln_b_]);
        for (int i = static_cast<int>(dec_.size()) - 1; i >= 0; --i) {
            dx = block_backward(dec_[static_cast<std::size_t>(i)], dx, tr.dec[static_cast<std::size_t>(i)], B, gr);
        }
        for (int b = 0; b < B; ++b) gr[dec_pos_] += dx.middleCols(static_cast<Eigen::Index>(b) * Tn, Tn);
        // dx now flows into the encoder output
        dx = nn::layer_norm_backward<T>(dx, params_[enc_ln_g_], tr.enc_ln, gr[enc_ln_g_], gr[enc_ln_b_]);
        for (int i = static_cast<int>(enc_.size()) - 1; i >= 0; --i) {
            dx = block_backward(enc_[static_cast<std::size_t>(i)], dx, tr.enc[static_cast<std::size_t>(i)], B, gr);
        }
        for (int b = 0; b < B; ++b) gr[enc_pos_] += dx.middleCols(static_cast<Eigen::Index>(b) * Tn, Tn);
        gr[patch_b_].col(0) += dx.rowwise().sum();
        gr[patch_w_].noalias() += dx * tr.patches.transpose();
    }

    VitConfig cfg_;
    nn::ParamStore<T> params_;
    std::vector<int> ln_gains_;
    int patch_w_ = 0, patch_b_ = 0, enc_pos_ = 0, enc_ln_g_ = 0, enc_ln_b_ = 0;
    int dec_pos_ = 0, dec_ln_g_ = 0, dec_ln_b_ = 0, head_w_ = 0, head_b_ = 0;
    std::vector<VitBlockIdx> enc_, dec_;
};

} // namespace optistate
