#include "derain/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "derain/errors.hpp"

namespace derain::plot {

namespace {

struct Bounds {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finish() {
        if (!std::isfinite(lo)) lo = 0, hi = 1;
        if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
        const double pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
};

std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

}  // namespace

void save(const Figure& fig, const std::filesystem::path& path) {
    cv::Mat img(fig.height, fig.width, CV_8UC3, cv::Scalar(255, 255, 255));
    const int left = 70, right = 20, top = 40, bottom = 50;
    const int pw = fig.width - left - right, ph = fig.height - top - bottom;

    Bounds bx, by;
    for (const auto& s : fig.series) {
        for (double v : s.x) bx.add(v);
        for (double v : s.y) by.add(v);
    }
    bx.finish();
    by.finish();
    const auto to_px = [&](double x, double y) {
        return cv::Point(left + static_cast<int>(std::lround((x - bx.lo) / (bx.hi - bx.lo) * pw)),
                         top + ph - static_cast<int>(std::lround((y - by.lo) / (by.hi - by.lo) * ph)));
    };

    const cv::Scalar axis(60, 60, 60), grid(225, 225, 225);
    for (int i = 0; i <= 5; ++i) {
        const double gx = bx.lo + (bx.hi - bx.lo) * i / 5.0, gy = by.lo + (by.hi - by.lo) * i / 5.0;
        cv::line(img, to_px(gx, by.lo), to_px(gx, by.hi), grid, 1);
        cv::line(img, to_px(bx.lo, gy), to_px(bx.hi, gy), grid, 1);
        cv::putText(img, tick(gx), to_px(gx, by.lo) + cv::Point(-12, 18), cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1,
                    cv::LINE_AA);
        cv::putText(img, tick(gy), to_px(bx.lo, gy) + cv::Point(-60, 4), cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1,
                    cv::LINE_AA);
    }
    if (by.lo < 0 && by.hi > 0) cv::line(img, to_px(bx.lo, 0), to_px(bx.hi, 0), cv::Scalar(160, 160, 160), 1);
    cv::rectangle(img, cv::Point(left, top), cv::Point(left + pw, top + ph), axis, 1);

    for (const auto& s : fig.series) {
        const cv::Scalar color(s.rgb[2], s.rgb[1], s.rgb[0]);
        const std::size_t n = std::min(s.x.size(), s.y.size());
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (s.scatter)
                cv::circle(img, to_px(s.x[i], s.y[i]), 2, color, cv::FILLED, cv::LINE_AA);
            else if (i + 1 < n && std::isfinite(s.x[i + 1]) && std::isfinite(s.y[i + 1]))
                cv::line(img, to_px(s.x[i], s.y[i]), to_px(s.x[i + 1], s.y[i + 1]), color, 1, cv::LINE_AA);
        }
    }

    int ly = top + 16;
    for (const auto& s : fig.series) {
        const cv::Scalar color(s.rgb[2], s.rgb[1], s.rgb[0]);
        cv::line(img, cv::Point(left + pw - 170, ly - 4), cv::Point(left + pw - 150, ly - 4), color, 2);
        cv::putText(img, s.label, cv::Point(left + pw - 145, ly), cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1, cv::LINE_AA);
        ly += 18;
    }
    for (const auto& note : fig.notes) {
        cv::putText(img, note, cv::Point(left + pw - 170, ly), cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1, cv::LINE_AA);
        ly += 18;
    }

    cv::putText(img, fig.title, cv::Point(left, 25), cv::FONT_HERSHEY_SIMPLEX, 0.6, axis, 1, cv::LINE_AA);
    cv::putText(img, fig.x_label, cv::Point(left + pw / 2 - 40, fig.height - 12), cv::FONT_HERSHEY_SIMPLEX, 0.45,
                axis, 1, cv::LINE_AA);
    cv::putText(img, fig.y_label, cv::Point(5, top - 10), cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1, cv::LINE_AA);

    if (!cv::imwrite(path.string(), img)) throw Error("failed to write plot " + path.string());
}

}  // namespace derain::plot
