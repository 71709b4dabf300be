#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace rsmppi::harness {

/// Least-squares polynomial value at offset 0 for samples at integer offsets
/// [lo, hi] around the evaluation point.
inline Eigen::VectorXd savgol_coefficients(int lo, int hi, int degree)
{
    const int n = hi - lo + 1;
    const int d = std::min(degree, n - 1);
    Eigen::MatrixXd vander(n, d + 1);
    for (int r = 0; r < n; ++r) {
        double x = 1.0;
        const double t = static_cast<double>(lo + r);
        for (int c = 0; c <= d; ++c) {
            vander(r, c) = x;
            x *= t;
        }
    }
    // Row 0 of the pseudo-inverse gives the fitted constant term, i.e. the value at t = 0.
    const Eigen::MatrixXd pinv = vander.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(n, n));
    return pinv.row(0).transpose();
}

/**
 * Savitzky-Golay smoothing, applied per coordinate.
 *
 * Interior points use the centered window. Within window/2 of either end the
 * window is truncated to the available samples and the polynomial is fitted
 * to those, so no padding is invented.
 */
template <typename Vec>
std::vector<Vec> savgol_smooth(const std::vector<Vec>& series, int window = 7, int degree = 2)
{
    if (window < 1 || window % 2 == 0) {
        throw std::invalid_argument("savgol_smooth: window must be a positive odd count");
    }
    if (degree < 0 || degree >= window) {
        throw std::invalid_argument("savgol_smooth: degree must lie in [0, window)");
    }
    if (series.size() < static_cast<std::size_t>(window)) {
        throw std::invalid_argument("savgol_smooth: series shorter than window");
    }
    const int n = static_cast<int>(series.size());
    const int half = window / 2;
    const Eigen::VectorXd centered = savgol_coefficients(-half, half, degree);
    std::vector<Vec> out(series.size());
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half) - i;
        const int hi = std::min(n - 1, i + half) - i;
        const Eigen::VectorXd coeffs =
            (lo == -half && hi == half) ? centered : savgol_coefficients(lo, hi, degree);
        Vec acc = coeffs[0] * series[static_cast<std::size_t>(i + lo)];
        for (int r = 1; r < coeffs.size(); ++r) {
            acc += coeffs[r] * series[static_cast<std::size_t>(i + lo + r)];
        }
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

}  // namespace rsmppi::harness
