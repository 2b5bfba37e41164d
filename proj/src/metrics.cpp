#include "derain/metrics.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "derain/errors.hpp"

namespace derain {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b, std::size_t min_size) {
    if (a.size() != b.size())
        throw ShapeError("length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    if (a.size() < min_size) throw EmptyDatasetError("need at least " + std::to_string(min_size) + " values");
}

}  // namespace

double mean_absolute_error(std::span<const double> pred, std::span<const double> truth) {
    check_lengths(pred, truth, 1);
    const double sum = std::transform_reduce(pred.begin(), pred.end(), truth.begin(), 0.0, std::plus<>(),
                                             [](double p, double t) { return std::abs(p - t); });
    return sum / static_cast<double>(pred.size());
}

double mean_squared_error(std::span<const double> pred, std::span<const double> truth) {
    check_lengths(pred, truth, 1);
    const double sum = std::transform_reduce(pred.begin(), pred.end(), truth.begin(), 0.0, std::plus<>(),
                                             [](double p, double t) { return (p - t) * (p - t); });
    return sum / static_cast<double>(pred.size());
}

RegressionResult linear_regression(std::span<const double> x, std::span<const double> y) {
    check_lengths(x, y, 2);
    const double n = static_cast<double>(x.size());
    const double mx = std::reduce(x.begin(), x.end()) / n;
    const double my = std::reduce(y.begin(), y.end()) / n;

    // Centred two-pass sums.
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }

    RegressionResult r;
    r.degenerate_x = sxx == 0.0;
    r.degenerate_y = syy == 0.0;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (r.degenerate_x) {
        r.slope = nan;
        r.intercept = nan;
        r.r_squared = nan;
        return r;
    }
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    if (r.degenerate_y) {
        r.r_squared = nan;
        return r;
    }
    double ss_res = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (r.slope * x[i] + r.intercept);
        ss_res += e * e;
    }
    r.r_squared = 1.0 - ss_res / syy;
    return r;
}

}  // namespace derain
