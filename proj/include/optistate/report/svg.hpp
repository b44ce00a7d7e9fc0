#pragma once

// Self-contained SVG line plots: stacked panels sharing an x axis, each with
// line series and optional shaded bands. Output depends only on the data.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "optistate/core/errors.hpp"

namespace optistate::svg {

struct Series {
    std::string label;
    std::vector<double> x, y;
    std::string color = "#1f77b4";
    bool dashed = false;
};

struct Band {
    std::string label;
    std::vector<double> x, lo, hi;
    std::string color = "#1f77b4";
};

struct Panel {
    std::string title;
    std::vector<Series> lines;
    std::vector<Band> bands;
};

/// Affine map from data to pixels.
struct Axis {
    double lo = 0.0, hi = 1.0;
    double px_lo = 0.0, px_hi = 1.0;
    double map(double v) const { return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo); }
};

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string fmt(double v, const char* f = "%.2f") {
    char buf[48];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

/// Indices of at most `max` evenly strided samples, always keeping the last.
inline std::vector<std::size_t> thin(std::size_t n, std::size_t max) {
    std::vector<std::size_t> idx;
    if (n == 0) return idx;
    const std::size_t stride = max == 0 || n <= max ? 1 : (n + max - 1) / max;
    for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
    if (idx.back() != n - 1) idx.push_back(n - 1);
    return idx;
}

struct Figure {
    std::string title;
    std::string xlabel;
    std::vector<Panel> panels;
    int width = 900;
    int panel_height = 180;
    std::size_t max_points = 1500;

    static constexpr double kLeft = 70.0, kRight = 160.0, kTop = 40.0, kGap = 36.0, kBottom = 40.0;

    int height() const {
        return static_cast<int>(kTop + kBottom + static_cast<double>(panels.size()) * (panel_height + kGap));
    }

    Axis x_axis() const {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& p : panels) {
            for (const auto& s : p.lines) {
                for (double v : s.x) { lo = std::min(lo, v); hi = std::max(hi, v); }
            }
            for (const auto& b : p.bands) {
                for (double v : b.x) { lo = std::min(lo, v); hi = std::max(hi, v); }
            }
        }
        widen(lo, hi);
        return {lo, hi, kLeft, width - kRight};
    }

    Axis y_axis(std::size_t i) const {
        const Panel& p = panels.at(i);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& s : p.lines) {
            for (double v : s.y) { lo = std::min(lo, v); hi = std::max(hi, v); }
        }
        for (const auto& b : p.bands) {
            for (double v : b.lo) lo = std::min(lo, v);
            for (double v : b.hi) hi = std::max(hi, v);
        }
        widen(lo, hi);
        const double pad = 0.05 * (hi - lo);
        const double top = kTop + static_cast<double>(i) * (panel_height + kGap) + 18.0;
        return {lo - pad, hi + pad, top + panel_height - 18.0, top};
    }

    std::string render() const {
        validate();
        const Axis xa = x_axis();
        std::string s;
        s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
        s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
             std::to_string(height()) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
        s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        s += "<text x=\"" + fmt(width / 2.0) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
             escape(title) + "</text>\n";
        for (std::size_t i = 0; i < panels.size(); ++i) {
            const Panel& p = panels[i];
            const Axis ya = y_axis(i);
            s += "<g class=\"panel\">\n";
            s += "<text x=\"" + fmt(kLeft) + "\" y=\"" + fmt(ya.px_hi - 4.0) + "\" font-size=\"12\">" +
                 escape(p.title) + "</text>\n";
            s += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(ya.px_hi) + "\" width=\"" + fmt(xa.px_hi - xa.px_lo) +
                 "\" height=\"" + fmt(ya.px_lo - ya.px_hi) + "\" fill=\"none\" stroke=\"#888\"/>\n";
            for (int t = 0; t <= 4; ++t) {
                const double yv = ya.lo + (ya.hi - ya.lo) * t / 4.0;
                const double xv = xa.lo + (xa.hi - xa.lo) * t / 4.0;
                s += "<text x=\"" + fmt(kLeft - 4.0) + "\" y=\"" + fmt(ya.map(yv) + 4.0) +
                     "\" text-anchor=\"end\">" + fmt(yv, "%.3g") + "</text>\n";
                s += "<text x=\"" + fmt(xa.map(xv)) + "\" y=\"" + fmt(ya.px_lo + 13.0) +
                     "\" text-anchor=\"middle\">" + fmt(xv, "%.3g") + "</text>\n";
            }
            int legend = 0;
            for (const auto& b : p.bands) {
                const auto idx = thin(b.x.size(), max_points);
                std::string pts;
                for (std::size_t k : idx) pts += fmt(xa.map(b.x[k])) + "," + fmt(ya.map(b.hi[k])) + " ";
                for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
                    pts += fmt(xa.map(b.x[*it])) + "," + fmt(ya.map(b.lo[*it])) + " ";
                }
                if (!pts.empty()) pts.pop_back();
                s += "<polygon class=\"band\" points=\"" + pts + "\" fill=\"" + b.color +
                     "\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
                s += legend_entry(ya, legend++, b.label, b.color, false, true);
            }
            for (const auto& l : p.lines) {
                std::string pts;
                for (std::size_t k : thin(l.x.size(), max_points)) {
                    pts += fmt(xa.map(l.x[k])) + "," + fmt(ya.map(l.y[k])) + " ";
                }
                if (!pts.empty()) pts.pop_back();
                s += "<polyline class=\"line\" points=\"" + pts + "\" fill=\"none\" stroke=\"" + l.color +
                     "\" stroke-width=\"1.2\"" + (l.dashed ? " stroke-dasharray=\"5,3\"" : "") + "/>\n";
                s += legend_entry(ya, legend++, l.label, l.color, l.dashed, false);
            }
            s += "</g>\n";
        }
        s += "<text x=\"" + fmt((xa.px_lo + xa.px_hi) / 2.0) + "\" y=\"" + fmt(height() - 10.0) +
             "\" text-anchor=\"middle\">" + escape(xlabel) + "</text>\n";
        s += "</svg>\n";
        return s;
    }

private:
    static void widen(double& lo, double& hi) {
        if (hi > lo) return;
        const double h = std::max(0.5 * std::abs(lo), 0.5);
        lo -= h;
        hi += h;
    }

    std::string legend_entry(const Axis& ya, int slot, const std::string& label, const std::string& color,
                             bool dashed, bool filled) const {
        const double x = width - kRight + 12.0, y = ya.px_hi + 10.0 + 14.0 * slot;
        std::string s;
        if (filled) {
            s += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y - 5.0) + "\" width=\"18\" height=\"8\" fill=\"" + color +
                 "\" fill-opacity=\"0.25\"/>\n";
        } else {
            s += "<line x1=\"" + fmt(x) + "\" y1=\"" + fmt(y) + "\" x2=\"" + fmt(x + 18.0) + "\" y2=\"" + fmt(y) +
                 "\" stroke=\"" + color + "\"" + (dashed ? " stroke-dasharray=\"5,3\"" : "") + "/>\n";
        }
        s += "<text x=\"" + fmt(x + 22.0) + "\" y=\"" + fmt(y + 4.0) + "\">" + escape(label) + "</text>\n";
        return s;
    }

    void validate() const {
        if (panels.empty()) throw ShapeError("svg: figure has no panels");
        for (std::size_t i = 0; i < panels.size(); ++i) {
            bool any = false;
            for (const auto& l : panels[i].lines) {
                if (l.x.size() != l.y.size()) throw ShapeError("svg: series x/y lengths differ");
                any = any || !l.x.empty();
            }
            for (const auto& b : panels[i].bands) {
                if (b.x.size() != b.lo.size() || b.x.size() != b.hi.size()) {
                    throw ShapeError("svg: band lengths differ");
                }
                any = any || !b.x.empty();
            }
            if (!any) throw ShapeError("svg: panel " + std::to_string(i) + " has no data");
        }
    }
};

} // namespace optistate::svg
