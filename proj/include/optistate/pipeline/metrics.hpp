#pragma once

// Evaluation metrics: per-component RMSE, improvement tables and Spearman
// rank correlation.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "optistate/core/errors.hpp"

namespace optistate {

/// Per-row RMSE between two equally shaped matrices (columns are samples),
/// pooled over every matrix pair.
inline Eigen::VectorXd rmse_rows(const std::vector<const Eigen::MatrixXd*>& est,
                                 const std::vector<const Eigen::MatrixXd*>& truth) {
    if (est.empty() || est.size() != truth.size()) throw ShapeError("rmse: need matching, nonempty inputs");
    const auto R = est.front()->rows();
    Eigen::VectorXd se = Eigen::VectorXd::Zero(R);
    double n = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        if (est[i]->rows() != R || truth[i]->rows() != R || est[i]->cols() != truth[i]->cols()) {
            throw ShapeError("rmse: shape mismatch");
        }
        se += (*est[i] - *truth[i]).rowwise().squaredNorm();
        n += static_cast<double>(est[i]->cols());
    }
    if (n == 0.0) throw ShapeError("rmse: no samples");
    return (se / n).cwiseSqrt();
}

/// 100·(baseline − candidate)/baseline per entry; 0 where the baseline is 0.
inline Eigen::VectorXd improvement_percent(const Eigen::VectorXd& baseline, const Eigen::VectorXd& candidate) {
    Eigen::VectorXd out(baseline.size());
    for (Eigen::Index i = 0; i < baseline.size(); ++i) {
        out(i) = baseline(i) > 0.0 ? 100.0 * (baseline(i) - candidate(i)) / baseline(i) : 0.0;
    }
    return out;
}

/// Ranks starting at 1, ties get their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

/// Pearson correlation of average ranks.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw ShapeError("spearman: need two equal-length samples");
    return pearson(average_ranks(a), average_ranks(b));
}

} // namespace optistate
