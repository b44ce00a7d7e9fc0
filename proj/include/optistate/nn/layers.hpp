#pragma once

// Column-wise layer kernels. Activations are d × n matrices with one token
// per column.

#include <cmath>
#include <numbers>

#include "optistate/nn/params.hpp"

namespace optistate::nn {

inline constexpr double kLayerNormEps = 1e-9;

template <class T>
struct LayerNormCache {
    Mat<T> xhat;
    Eigen::Matrix<T, 1, Eigen::Dynamic> rstd;
};

template <class T>
Mat<T> layer_norm(const Mat<T>& X, const Mat<T>& g, const Mat<T>& b, LayerNormCache<T>* cache) {
    const auto d = X.rows();
    const Eigen::Matrix<T, 1, Eigen::Dynamic> mean = X.colwise().mean();
    Mat<T> xc = X.rowwise() - mean;
    const Eigen::Matrix<T, 1, Eigen::Dynamic> var = xc.cwiseAbs2().colwise().sum() / static_cast<T>(d);
    const Eigen::Matrix<T, 1, Eigen::Dynamic> rstd =
        (var.array() + static_cast<T>(kLayerNormEps)).rsqrt().matrix();
    xc.array().rowwise() *= rstd.array();
    Mat<T> Y = (xc.array().colwise() * g.col(0).array()).colwise() + b.col(0).array();
    if (cache != nullptr) {
        cache->xhat = std::move(xc);
        cache->rstd = rstd;
    }
    return Y;
}

/// Returns dX; accumulates dg, db.
template <class T>
Mat<T> layer_norm_backward(const Mat<T>& dY, const Mat<T>& g, const LayerNormCache<T>& c, Mat<T>& dg,
                           Mat<T>& db) {
    const auto d = static_cast<T>(dY.rows());
    dg.col(0) += (dY.array() * c.xhat.array()).rowwise().sum().matrix();
    db.col(0) += dY.rowwise().sum();
    Mat<T> dxh = dY.array().colwise() * g.col(0).array();
    const Eigen::Matrix<T, 1, Eigen::Dynamic> m1 = dxh.colwise().sum() / d;
    const Eigen::Matrix<T, 1, Eigen::Dynamic> m2 = (dxh.array() * c.xhat.array()).colwise().sum().matrix() / d;
    Mat<T> dX = dxh.rowwise() - m1;
    dX.array() -= c.xhat.array().rowwise() * m2.array();
    dX.array().rowwise() *= c.rstd.array();
    return dX;
}

template <class T>
T gelu(T x) {
    return static_cast<T>(0.5) * x * (T(1) + std::erf(x / static_cast<T>(std::numbers::sqrt2)));
}

template <class T>
T gelu_grad(T x) {
    const T cdf = static_cast<T>(0.5) * (T(1) + std::erf(x / static_cast<T>(std::numbers::sqrt2)));
    const T pdf = std::exp(static_cast<T>(-0.5) * x * x) / static_cast<T>(std::sqrt(2.0 * std::numbers::pi));
    return cdf + x * pdf;
}

/// Row-wise softmax in place.
template <class T>
void softmax_rows(Mat<T>& S) {
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        const T mx = S.row(i).maxCoeff();
        S.row(i) = (S.row(i).array() - mx).exp().matrix();
        S.row(i) /= S.row(i).sum();
    }
}

template <class T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

/// log(1 + eˣ) without overflow.
template <class T>
T softplus(T x) {
    return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

} // namespace optistate::nn
