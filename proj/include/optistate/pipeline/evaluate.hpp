#pragma once

// Evaluation over held-out trajectories: per-component RMSE tables for any
// number of estimator columns and the μ-versus-error rank correlation.

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "optistate/pipeline/metrics.hpp"

namespace optistate {

inline const std::array<std::string, 12>& state_component_names() {
    static const std::array<std::string, 12> n{"theta_x", "theta_y", "theta_z", "r_x",     "r_y", "r_z",
                                               "omega_x", "omega_y", "omega_z", "v_x", "v_y", "v_z"};
    return n;
}

/// One estimator's output on every evaluated trajectory (12 × n each).
struct EstimatorColumn {
    std::string name;
    std::vector<Eigen::MatrixXd> x;
};

struct RmseTable {
    std::vector<std::string> names;
    Eigen::MatrixXd rmse;  // 12 × columns

    int index(const std::string& n) const {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == n) return static_cast<int>(i);
        }
        throw ConfigError("no estimator column named '" + n + "'");
    }
    /// Mean over the 12 components per column.
    Eigen::VectorXd average() const { return rmse.colwise().mean().transpose(); }
    /// Per-component improvement of every column over `baseline`, in percent.
    Eigen::MatrixXd improvement(const std::string& baseline) const {
        const Eigen::VectorXd b = rmse.col(index(baseline));
        Eigen::MatrixXd out(rmse.rows(), rmse.cols());
        for (Eigen::Index c = 0; c < rmse.cols(); ++c) out.col(c) = improvement_percent(b, rmse.col(c));
        return out;
    }
};

inline RmseTable rmse_table(const std::vector<EstimatorColumn>& cols, const std::vector<Eigen::MatrixXd>& truth) {
    RmseTable t;
    t.rmse.resize(12, static_cast<Eigen::Index>(cols.size()));
    std::vector<const Eigen::MatrixXd*> tp;
    for (const auto& m : truth) tp.push_back(&m);
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c].x.size() != truth.size()) throw ShapeError("rmse table: '" + cols[c].name + "' trajectory count");
        std::vector<const Eigen::MatrixXd*> ep;
        for (const auto& m : cols[c].x) ep.push_back(&m);
        t.names.push_back(cols[c].name);
        t.rmse.col(static_cast<Eigen::Index>(c)) = rmse_rows(ep, tp);
    }
    return t;
}

/// Spearman correlation between μ and |x̄ − truth|, pooled over every frame
/// and component of every trajectory.
inline double uncertainty_rank_correlation(const std::vector<Eigen::MatrixXd>& x_bar,
                                           const std::vector<Eigen::MatrixXd>& mu,
                                           const std::vector<Eigen::MatrixXd>& truth) {
    if (x_bar.size() != mu.size() || x_bar.size() != truth.size()) throw ShapeError("spearman: trajectory count");
    std::vector<double> a, b;
    for (std::size_t i = 0; i < x_bar.size(); ++i) {
        if (x_bar[i].rows() != mu[i].rows() || x_bar[i].cols() != mu[i].cols() || x_bar[i].rows() != truth[i].rows() ||
            x_bar[i].cols() != truth[i].cols()) {
            throw ShapeError("spearman: shape mismatch");
        }
        const Eigen::MatrixXd e = (x_bar[i] - truth[i]).cwiseAbs();
        for (Eigen::Index j = 0; j < e.size(); ++j) {
            a.push_back(mu[i](j));
            b.push_back(e(j));
        }
    }
    return spearman(a, b);
}

} // namespace optistate
