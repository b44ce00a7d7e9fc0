#pragma once

// Central finite-difference check of analytic gradients, one row per tensor.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "optistate/nn/params.hpp"

namespace optistate::nn {

struct TensorGradCheck {
    std::string name;
    double max_abs_error = 0.0;
    double scale = 0.0;           // max(‖analytic‖∞, ‖numeric‖∞)
    double relative_error = 0.0;  // max_abs_error / max(scale, floor)
};

/// `loss()` must read the current values of `params`. Every scalar is
/// perturbed by ±h and restored. The floor keeps tensors whose true gradient
/// is zero (e.g. attention key biases) from dividing rounding noise by ~0.
template <class LossFn>
std::vector<TensorGradCheck> finite_difference_check(ParamStore<double>& params, const ParamStore<double>& analytic,
                                                     LossFn&& loss, double h = 1e-5, double floor = 1e-6) {
    std::vector<TensorGradCheck> out;
    for (int i = 0; i < params.size(); ++i) {
        TensorGradCheck r;
        r.name = params.name(i);
        for (Eigen::Index j = 0; j < params[i].size(); ++j) {
            const double saved = params[i](j);
            params[i](j) = saved + h;
            const double up = loss();
            params[i](j) = saved - h;
            const double down = loss();
            params[i](j) = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[i](j);
            r.max_abs_error = std::max(r.max_abs_error, std::abs(a - numeric));
            r.scale = std::max({r.scale, std::abs(a), std::abs(numeric)});
        }
        r.relative_error = r.max_abs_error / std::max(r.scale, floor);
        out.push_back(r);
    }
    return out;
}

inline double worst_relative_error(const std::vector<TensorGradCheck>& rows) {
    double w = 0.0;
    for (const auto& r : rows) w = std::max(w, r.relative_error);
    return w;
}

} // namespace optistate::nn
