#pragma once

#include <span>

namespace derain {

double mean_absolute_error(std::span<const double> pred, std::span<const double> truth);
double mean_squared_error(std::span<const double> pred, std::span<const double> truth);

// Ordinary least squares y = slope * x + intercept.
struct RegressionResult {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    bool degenerate_x = false;  // all x equal: slope undefined
    bool degenerate_y = false;  // all y equal: SS_tot = 0, R^2 undefined

    bool degenerate() const { return degenerate_x || degenerate_y; }
};

RegressionResult linear_regression(std::span<const double> x, std::span<const double> y);

}  // namespace derain
