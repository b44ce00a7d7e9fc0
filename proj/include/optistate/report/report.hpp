#pragma once

// Report files: loss curves, per-trajectory evaluation CSVs, RMSE and
// improvement tables, trajectory overlays and μ-band plots.

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "optistate/pipeline/evaluate.hpp"
#include "optistate/report/csv.hpp"
#include "optistate/report/svg.hpp"

namespace optistate {

inline const std::array<const char*, 6>& plot_colors() {
    static const std::array<const char*, 6> c{"#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"};
    return c;
}

inline std::string loss_csv(const std::vector<double>& history) {
    CsvWriter w({"epoch", "loss"});
    for (std::size_t i = 0; i < history.size(); ++i) w.row(std::vector<double>{static_cast<double>(i + 1), history[i]});
    return w.text();
}

inline svg::Figure loss_figure(const std::vector<double>& history, const std::string& title) {
    svg::Series s;
    s.label = "training loss";
    for (std::size_t i = 0; i < history.size(); ++i) {
        s.x.push_back(static_cast<double>(i + 1));
        s.y.push_back(history[i]);
    }
    svg::Figure f;
    f.title = title;
    f.xlabel = "epoch";
    f.panels.push_back({"loss", {s}, {}});
    return f;
}

/// One estimator variant on one trajectory, everything needed for plots.
struct EvalSeries {
    std::string trajectory;
    std::string variant;
    Eigen::VectorXd time;
    Eigen::MatrixXd truth, kf, x_bar, mu;  // 12 × n
};

inline std::string eval_csv(const EvalSeries& e) {
    const auto n = e.time.size();
    if (e.truth.cols() != n || e.kf.cols() != n || e.x_bar.cols() != n || e.mu.cols() != n) {
        throw ShapeError("eval csv: column counts differ");
    }
    std::vector<std::string> header{"t"};
    for (const auto& c : state_component_names()) {
        for (const char* p : {"truth_", "kf_", "xbar_", "mu_"}) header.push_back(p + c);
    }
    CsvWriter w(header);
    std::vector<double> row(header.size());
    for (Eigen::Index k = 0; k < n; ++k) {
        row[0] = e.time(k);
        for (int c = 0; c < 12; ++c) {
            row[1 + 4 * c] = e.truth(c, k);
            row[2 + 4 * c] = e.kf(c, k);
            row[3 + 4 * c] = e.x_bar(c, k);
            row[4 + 4 * c] = e.mu(c, k);
        }
        w.row(row);
    }
    return w.text();
}

inline EvalSeries parse_eval_csv(const CsvTable& t) {
    EvalSeries e;
    const auto time = t.numbers("t");
    const auto n = static_cast<Eigen::Index>(time.size());
    e.time = Eigen::Map<const Eigen::VectorXd>(time.data(), n);
    e.truth.resize(12, n);
    e.kf.resize(12, n);
    e.x_bar.resize(12, n);
    e.mu.resize(12, n);
    for (int c = 0; c < 12; ++c) {
        const std::string& name = state_component_names()[static_cast<std::size_t>(c)];
        const std::array<Eigen::MatrixXd*, 4> dst{&e.truth, &e.kf, &e.x_bar, &e.mu};
        const std::array<const char*, 4> prefix{"truth_", "kf_", "xbar_", "mu_"};
        for (std::size_t j = 0; j < 4; ++j) {
            const auto v = t.numbers(prefix[j] + name);
            dst[j]->row(c) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), n);
        }
    }
    return e;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }
inline std::vector<double> to_std(const Eigen::RowVectorXd& v) { return {v.data(), v.data() + v.size()}; }

/// Truth, KF and every given estimate, one panel per state component.
inline svg::Figure overlay_figure(const std::string& title, const Eigen::VectorXd& time, const Eigen::MatrixXd& truth,
                                  const std::vector<std::pair<std::string, const Eigen::MatrixXd*>>& estimates) {
    svg::Figure f;
    f.title = title;
    f.xlabel = "time [s]";
    f.panel_height = 110;
    const auto t = to_std(time);
    for (int c = 0; c < 12; ++c) {
        svg::Panel p;
        p.title = state_component_names()[static_cast<std::size_t>(c)];
        p.lines.push_back({"truth", t, to_std(Eigen::RowVectorXd(truth.row(c))), plot_colors()[0], false});
        for (std::size_t i = 0; i < estimates.size(); ++i) {
            p.lines.push_back({estimates[i].first, t, to_std(Eigen::RowVectorXd(estimates[i].second->row(c))),
                               plot_colors()[1 + i % 5], i == 0});
        }
        f.panels.push_back(std::move(p));
    }
    return f;
}

/// x̄ with the shaded band x̄ ± μ against truth, one panel per component.
inline svg::Figure uncertainty_figure(const EvalSeries& e) {
    svg::Figure f;
    f.title = e.trajectory + " (" + e.variant + "): estimate ± predicted error";
    f.xlabel = "time [s]";
    f.panel_height = 110;
    const auto t = to_std(e.time);
    for (int c = 0; c < 12; ++c) {
        svg::Panel p;
        p.title = state_component_names()[static_cast<std::size_t>(c)];
        const Eigen::RowVectorXd xb = e.x_bar.row(c), m = e.mu.row(c);
        p.bands.push_back({"estimate ± mu", t, to_std(Eigen::RowVectorXd(xb - m)), to_std(Eigen::RowVectorXd(xb + m)),
                           plot_colors()[2]});
        p.lines.push_back({"truth", t, to_std(Eigen::RowVectorXd(e.truth.row(c))), plot_colors()[0], false});
        p.lines.push_back({"estimate", t, to_std(xb), plot_colors()[2], false});
        f.panels.push_back(std::move(p));
    }
    return f;
}

inline std::string rmse_csv(const RmseTable& t) {
    std::vector<std::string> header{"component"};
    for (const auto& n : t.names) header.push_back(n);
    CsvWriter w(header);
    auto emit = [&](const std::string& label, const Eigen::VectorXd& v) {
        std::vector<std::string> row{label};
        for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(format_number(v(i)));
        w.row(row);
    };
    for (int c = 0; c < 12; ++c) emit(state_component_names()[static_cast<std::size_t>(c)], t.rmse.row(c).transpose());
    emit("average", t.average());
    return w.text();
}

/// Percent improvement of each column over `baseline`. The last row is the
/// improvement of the component-averaged RMSE.
inline std::string improvement_csv(const RmseTable& t, const std::string& baseline) {
    std::vector<std::string> header{"component"};
    for (const auto& n : t.names) header.push_back(n + "_vs_" + baseline + "_pct");
    CsvWriter w(header);
    const Eigen::MatrixXd imp = t.improvement(baseline);
    for (int c = 0; c < 12; ++c) {
        std::vector<std::string> row{state_component_names()[static_cast<std::size_t>(c)]};
        for (Eigen::Index j = 0; j < imp.cols(); ++j) row.push_back(format_number(imp(c, j)));
        w.row(row);
    }
    const Eigen::VectorXd avg = t.average();
    const Eigen::VectorXd avg_imp = improvement_percent(Eigen::VectorXd::Constant(avg.size(), avg(t.index(baseline))), avg);
    std::vector<std::string> row{"average"};
    for (Eigen::Index j = 0; j < avg_imp.size(); ++j) row.push_back(format_number(avg_imp(j)));
    w.row(row);
    return w.text();
}

/// Evaluation CSVs in a run directory, sorted by name.
inline std::vector<std::filesystem::path> find_eval_csvs(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.rfind("eval_", 0) == 0 && e.path().extension() == ".csv") {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Reads the evaluation outputs in `run_dir` and writes μ-band plots and an
/// index into `out_dir`. Returns the files written.
inline std::vector<std::string> build_report(const std::string& run_dir, const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(run_dir)) throw IoError("report: " + run_dir + " is not a directory");
    const auto csvs = find_eval_csvs(run_dir);
    if (csvs.empty()) throw ConfigError("report: no eval_*.csv files in " + run_dir + " (run evaluate first)");
    fs::create_directories(out_dir);
    std::vector<std::string> written;
    CsvWriter index({"trajectory", "variant", "plot", "mean_mu", "mean_abs_error", "spearman_mu_error"});
    for (const auto& p : csvs) {
        EvalSeries e = parse_eval_csv(read_csv(p.string()));
        const std::string stem = p.stem().string().substr(5);
        const auto cut = stem.rfind('_');
        e.trajectory = cut == std::string::npos ? stem : stem.substr(0, cut);
        e.variant = cut == std::string::npos ? "" : stem.substr(cut + 1);
        const std::string plot = (fs::path(out_dir) / ("uncertainty_" + stem + ".svg")).string();
        write_text_file(plot, uncertainty_figure(e).render());
        written.push_back(plot);
        const Eigen::MatrixXd err = (e.x_bar - e.truth).cwiseAbs();
        const double rho = e.time.size() > 1 ? uncertainty_rank_correlation({e.x_bar}, {e.mu}, {e.truth}) : 0.0;
        index.row({e.trajectory, e.variant, fs::path(plot).filename().string(), format_number(e.mu.mean()),
                   format_number(err.mean()), format_number(rho)});
    }
    for (const char* name : {"rmse.csv", "improvement.csv"}) {
        const fs::path src = fs::path(run_dir) / name;
        if (!fs::exists(src)) continue;
        const std::string dst = (fs::path(out_dir) / name).string();
        write_text_file(dst, read_text_file(src.string()));
        written.push_back(dst);
    }
    const std::string idx = (fs::path(out_dir) / "report_index.csv").string();
    index.save(idx);
    written.push_back(idx);
    return written;
}

} // namespace optistate
