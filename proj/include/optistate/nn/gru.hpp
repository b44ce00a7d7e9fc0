#pragma once

// Stacked GRU over a fixed window, many-to-one head:
//
//   z = σ(W_z x + U_z h + b_z)
//   r = σ(W_r x + U_r h + b_r)
//   n = tanh(W_n x + U_n (r ⊙ h) + b_n)
//   h' = (1 − z) ⊙ n + z ⊙ h
//
// Per layer W is 3H × in, U is 3H × H and b is 3H with rows ordered [z; r; n].
// The head reads the top layer's last hidden state and, through a linear
// skip path S, the newest input step:
//   o = W_o h + S x_N + b_o,  x̄ = 0.5 + o[0:12],  μ = softplus(o[12:24])
// in normalized units, so zero parameters give a mid-range state. S starts
// at zero; `skip = false` drops it.
//
// Samples are columns: a window is N matrices of size in × B.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "optistate/core/kv_config.hpp"
#include "optistate/nn/layers.hpp"
#include "optistate/nn/params.hpp"

namespace optistate {

struct GruConfig {
    int input_dim = 182;
    int hidden = 128;
    int layers = 4;
    int horizon = 10;
    int state_dim = 12;  // output is 2 · state_dim (x̄ and μ)
    bool skip = true;

    int output_dim() const { return 2 * state_dim; }

    void validate() const {
        if (input_dim <= 0 || hidden <= 0 || layers <= 0 || state_dim <= 0) {
            throw ConfigError("gru: dims must be positive");
        }
        if (horizon < 1) throw ConfigError("gru.horizon must be >= 1");
    }

    KeyValueConfig to_kv() const {
        KeyValueConfig kv;
        kv.set("gru.input_dim", input_dim);
        kv.set("gru.hidden", hidden);
        kv.set("gru.layers", layers);
        kv.set("gru.horizon", horizon);
        kv.set("gru.state_dim", state_dim);
        kv.set("gru.skip", skip);
        return kv;
    }

    static GruConfig from_kv(const KeyValueConfig& kv, const GruConfig& base) {
        GruConfig c = base;
        c.input_dim = static_cast<int>(kv.get_int("gru.input_dim", c.input_dim));
        c.hidden = static_cast<int>(kv.get_int("gru.hidden", c.hidden));
        c.layers = static_cast<int>(kv.get_int("gru.layers", c.layers));
        c.horizon = static_cast<int>(kv.get_int("gru.horizon", c.horizon));
        c.state_dim = static_cast<int>(kv.get_int("gru.state_dim", c.state_dim));
        c.skip = kv.get_bool("gru.skip", c.skip);
        c.validate();
        return c;
    }

    bool operator==(const GruConfig&) const = default;
};

template <class T>
struct GruOutput {
    nn::Mat<T> x_bar;  // state_dim × B, normalized
    nn::Mat<T> mu;     // state_dim × B, normalized, ≥ 0
};

template <class T>
class Gru {
public:
    using M = nn::Mat<T>;

    struct StepCache {
        M x, h_prev, z, r, n;
    };

    struct Trace {
        std::vector<std::vector<StepCache>> layers;  // [layer][t]
        M h_top, o, x_last;
    };

    Gru() = default;

    /// Uniform(±1/√H) initialization.
    Gru(GruConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        build_layout();
        std::mt19937_64 rng(seed);
        const double k = 1.0 / std::sqrt(static_cast<double>(cfg_.hidden));
        std::uniform_real_distribution<double> u(-k, k);
        for (int i = 0; i < params_.size(); ++i) {
            if (i == skip_w_) continue;
            for (Eigen::Index j = 0; j < params_[i].size(); ++j) params_[i](j) = static_cast<T>(u(rng));
        }
    }

    const GruConfig& config() const { return cfg_; }
    nn::ParamStore<T>& params() { return params_; }
    const nn::ParamStore<T>& params() const { return params_; }

    int w(int l) const { return idx_[static_cast<std::size_t>(3 * l)]; }
    int u(int l) const { return idx_[static_cast<std::size_t>(3 * l + 1)]; }
    int b(int l) const { return idx_[static_cast<std::size_t>(3 * l + 2)]; }
    int head_w() const { return head_w_; }
    int head_b() const { return head_b_; }
    int skip_w() const { return skip_w_; }

    template <class U>
    Gru<U> cast() const {
        Gru<U> out;
        out.cfg_ = cfg_;
        out.build_layout();
        out.params_ = params_.template cast<U>();
        return out;
    }

    /// `window[t]` is input_dim × B; only the last `horizon` steps are used.
    GruOutput<T> forward(const std::vector<M>& window, Trace* tr = nullptr) const {
        if (static_cast<int>(window.size()) < cfg_.horizon) {
            throw ShapeError("gru: window shorter than the horizon");
        }
        const std::size_t first = window.size() - static_cast<std::size_t>(cfg_.horizon);
        const Eigen::Index B = window[first].cols();
        const int H = cfg_.hidden;
        std::vector<M> seq(window.begin() + static_cast<std::ptrdiff_t>(first), window.end());
        for (const auto& x : seq) {
            if (x.rows() != cfg_.input_dim || x.cols() != B) throw ShapeError("gru: input step has the wrong shape");
        }
        M x_last = seq.back();
        if (tr != nullptr) tr->layers.assign(static_cast<std::size_t>(cfg_.layers), {});
        for (int l = 0; l < cfg_.layers; ++l) {
            const M& W = params_[w(l)];
            const M& U = params_[u(l)];
            const auto bias = params_[b(l)].col(0);
            M h = M::Zero(H, B);
            for (std::size_t t = 0; t < seq.size(); ++t) {
                M a = (W * seq[t]).colwise() + bias;
                M uh = U.topRows(2 * H) * h;
                M z = (a.topRows(H) + uh.topRows(H)).unaryExpr([](T v) { return nn::sigmoid(v); });
                M r = (a.middleRows(H, H) + uh.bottomRows(H)).unaryExpr([](T v) { return nn::sigmoid(v); });
                M rh = r.cwiseProduct(h);
                M n = (a.bottomRows(H) + U.bottomRows(H) * rh).unaryExpr([](T v) { return std::tanh(v); });
                M hn = n + z.cwiseProduct(h - n);
                if (tr != nullptr) {
                    tr->layers[static_cast<std::size_t>(l)].push_back(
                        {std::move(seq[t]), std::move(h), std::move(z), std::move(r), std::move(n)});
                }
                seq[t] = hn;  // becomes the next layer's input
                h = std::move(hn);
            }
        }
        const M& h_top = seq.back();
        M o = (params_[head_w_] * h_top).colwise() + params_[head_b_].col(0);
        if (skip_w_ >= 0) o.noalias() += params_[skip_w_] * x_last;
        GruOutput<T> out;
        out.x_bar = (o.topRows(cfg_.state_dim).array() + T(0.5)).matrix();
        out.mu = o.bottomRows(cfg_.state_dim).unaryExpr([](T v) { return nn::softplus(v); });
        if (tr != nullptr) {
            tr->h_top = h_top;
            tr->o = std::move(o);
            tr->x_last = std::move(x_last);
        }
        return out;
    }

    /// Accumulates parameter gradients given dL/dx̄ and dL/dμ (normalized units).
    void backward(const Trace& tr, const M& d_xbar, const M& d_mu, nn::ParamStore<T>& gr) const {
        const int H = cfg_.hidden, S = cfg_.state_dim;
        M d_o(2 * S, d_xbar.cols());
        d_o.topRows(S) = d_xbar;
        d_o.bottomRows(S) = d_mu.cwiseProduct(tr.o.bottomRows(S).unaryExpr([](T v) { return nn::sigmoid(v); }));
        gr[head_w_].noalias() += d_o * tr.h_top.transpose();
        gr[head_b_].col(0) += d_o.rowwise().sum();
        if (skip_w_ >= 0) gr[skip_w_].noalias() += d_o * tr.x_last.transpose();

        const std::size_t N = tr.layers.front().size();
        // Gradient w.r.t. each step's output of the current layer.
        std::vector<M> d_out(N, M::Zero(H, d_xbar.cols()));
        d_out.back() = params_[head_w_].transpose() * d_o;
        for (int l = cfg_.layers - 1; l >= 0; --l) {
            const auto& steps = tr.layers[static_cast<std::size_t>(l)];
            const M& W = params_[w(l)];
            const M& U = params_[u(l)];
            M& gW = gr[w(l)];
            M& gU = gr[u(l)];
            M& gb = gr[b(l)];
            std::vector<M> d_in(N);
            M dh = M::Zero(H, d_xbar.cols());
            for (std::size_t ti = N; ti-- > 0;) {
                const StepCache& c = steps[ti];
                dh += d_out[ti];
                const M dn = dh.cwiseProduct((M::Ones(H, dh.cols()) - c.z));
                const M dz = dh.cwiseProduct(c.h_prev - c.n);
                M dh_prev = dh.cwiseProduct(c.z);
                M da(3 * H, dh.cols());
                da.bottomRows(H) = dn.cwiseProduct((T(1) - c.n.array().square()).matrix());
                const M rh = c.r.cwiseProduct(c.h_prev);
                gU.bottomRows(H).noalias() += da.bottomRows(H) * rh.transpose();
                const M drh = U.bottomRows(H).transpose() * da.bottomRows(H);
                const M dr = drh.cwiseProduct(c.h_prev);
                dh_prev += drh.cwiseProduct(c.r);
                da.topRows(H) = dz.cwiseProduct((c.z.array() * (T(1) - c.z.array())).matrix());
                da.middleRows(H, H) = dr.cwiseProduct((c.r.array() * (T(1) - c.r.array())).matrix());
                gU.topRows(2 * H).noalias() += da.topRows(2 * H) * c.h_prev.transpose();
                dh_prev.noalias() += U.topRows(2 * H).transpose() * da.topRows(2 * H);
                gW.noalias() += da * c.x.transpose();
                gb.col(0) += da.rowwise().sum();
                if (l > 0) d_in[ti] = W.transpose() * da;
                dh = std::move(dh_prev);
            }
            if (l > 0) d_out = std::move(d_in);
        }
    }

private:
    template <class U>
    friend class Gru;

    void build_layout() {
        params_ = nn::ParamStore<T>();
        idx_.clear();
        const int H = cfg_.hidden;
        for (int l = 0; l < cfg_.layers; ++l) {
            const int in = l == 0 ? cfg_.input_dim : H;
            const std::string p = "gru.layer" + std::to_string(l);
            idx_.push_back(params_.add(p + ".w", 3 * H, in, true));
            idx_.push_back(params_.add(p + ".u", 3 * H, H, true));
            idx_.push_back(params_.add(p + ".b", 3 * H, 1, false));
        }
        head_w_ = params_.add("gru.head.w", cfg_.output_dim(), H, true);
        head_b_ = params_.add("gru.head.b", cfg_.output_dim(), 1, false);
        skip_w_ = cfg_.skip ? params_.add("gru.skip.w", cfg_.output_dim(), cfg_.input_dim, true) : -1;
    }

    GruConfig cfg_;
    nn::ParamStore<T> params_;
    std::vector<int> idx_;
    int head_w_ = 0, head_b_ = 0, skip_w_ = -1;
};

/// Loss used for training, in normalized units:
///   mean((x̄ − y)²) + mean((μ − e)²),  e = |x̄ − y| held constant
/// Fills dL/dx̄ and dL/dμ when asked. `mu_target` overrides e.
template <class T>
T gru_loss(const GruOutput<T>& out, const nn::Mat<T>& target, nn::Mat<T>* d_xbar = nullptr,
           nn::Mat<T>* d_mu = nullptr, const nn::Mat<T>* mu_target = nullptr) {
    if (target.rows() != out.x_bar.rows() || target.cols() != out.x_bar.cols()) {
        throw ShapeError("gru_loss: target shape does not match the output");
    }
    const nn::Mat<T> err = out.x_bar - target;
    const nn::Mat<T> mu_err = out.mu - (mu_target != nullptr ? *mu_target : nn::Mat<T>(err.cwiseAbs()));
    const T n = static_cast<T>(err.size());
    if (d_xbar != nullptr) *d_xbar = err * (T(2) / n);
    if (d_mu != nullptr) *d_mu = mu_err * (T(2) / n);
    return (err.squaredNorm() + mu_err.squaredNorm()) / n;
}

} // namespace optistate
