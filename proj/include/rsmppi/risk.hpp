#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsmppi {

/// Confidence level beta in the open interval (0, 1).
class ConfidenceLevel
{
  public:
    explicit ConfidenceLevel(double beta) : beta_(beta)
    {
        if (!(beta > 0.0 && beta < 1.0)) {
            throw std::invalid_argument("confidence level must lie in (0,1), got " +
                                        std::to_string(beta));
        }
    }

    [[nodiscard]] double value() const noexcept { return beta_; }

    friend bool operator==(const ConfidenceLevel&, const ConfidenceLevel&) = default;

  private:
    double beta_;
};

namespace detail {

// Neumaier compensated summation. The VaR scan compares running weight sums
// against beta exactly, so naive accumulation of 1/N weights would misplace
// integer-boundary quantiles (0.1 summed eight times is below 0.8).
class CompensatedSum
{
  public:
    void add(double x) noexcept
    {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline std::vector<std::size_t> ascending_order(std::span<const double> values)
{
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    return order;
}

}  // namespace detail

/**
 * Finite weighted sample set: the empirical law of a scalar loss.
 *
 * Values must be finite; weights nonnegative and summing to one within 1e-9.
 */
class SampleSet
{
  public:
    static constexpr double kWeightTolerance = 1e-9;

    SampleSet(std::vector<double> values, std::vector<double> weights)
        : values_(std::move(values)), weights_(std::move(weights))
    {
        if (values_.empty()) {
            throw std::invalid_argument("sample set is empty");
        }
        if (values_.size() != weights_.size()) {
            throw std::invalid_argument("sample set values and weights differ in length");
        }
        detail::CompensatedSum total;
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i])) {
                throw std::invalid_argument("sample set contains a non-finite value");
            }
            if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i])) {
                throw std::invalid_argument("sample set weights must be finite and nonnegative");
            }
            total.add(weights_[i]);
        }
        if (std::abs(total.value() - 1.0) > kWeightTolerance) {
            throw std::invalid_argument("sample set weights must sum to 1");
        }
    }

    /// Equal weights 1/N.
    static SampleSet uniform(std::vector<double> values)
    {
        const std::size_t n = values.size();
        std::vector<double> w(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
        return SampleSet(std::move(values), std::move(w));
    }

    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] std::span<const double> weights() const noexcept { return weights_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }

  private:
    std::vector<double> values_;
    std::vector<double> weights_;
};

/// Left-continuous generalized inverse CDF: the smallest sample value whose
/// cumulative weight reaches beta.
inline double value_at_risk(const SampleSet& s, ConfidenceLevel beta)
{
    const auto values = s.values();
    const auto weights = s.weights();
    const auto order = detail::ascending_order(values);
    detail::CompensatedSum cumulative;
    for (const std::size_t i : order) {
        cumulative.add(weights[i]);
        if (cumulative.value() >= beta.value()) {
            return values[i];
        }
    }
    // Weights may sum to 1 - 1e-9; the largest value then carries the residual mass.
    return values[order.back()];
}

/// ceil((1 - beta) * n), clamped to [1, n].
///
/// The product is snapped to the nearest integer when it is within rounding
/// error of one: (1 - 0.7) * 10 evaluates to 3.0000000000000004 in binary.
inline std::size_t tail_size(std::size_t n, ConfidenceLevel beta)
{
    const double x = (1.0 - beta.value()) * static_cast<double>(n);
    const double nearest = std::round(x);
    const double k = std::abs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x);
    return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, n);
}

/// Indices of the ceil((1 - beta) N) largest values, ties broken by lower index.
/// Returned in selection order (largest first).
inline std::vector<std::size_t> tail_index_set(std::span<const double> values,
                                               ConfidenceLevel beta)
{
    if (values.empty()) {
        throw std::invalid_argument("tail_index_set: empty input");
    }
    const std::size_t k = tail_size(values.size(), beta);
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto before = [&](std::size_t a, std::size_t b) {
        return values[a] > values[b] || (values[a] == values[b] && a < b);
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      before);
    idx.resize(k);
    return idx;
}

/// Equal-weight tail average over the ceil((1 - beta) N) largest values.
inline double cvar_tail_average(std::span<const double> values, ConfidenceLevel beta)
{
    if (values.empty()) {
        throw std::invalid_argument("cvar_tail_average: empty input");
    }
    const auto tail = tail_index_set(values, beta);
    double sum = 0.0;
    for (const std::size_t i : tail) {
        sum += values[i];
    }
    return sum / static_cast<double>(tail.size());
}

/// Rockafellar-Uryasev CVaR of a discrete law. The infimum over eta is attained
/// at eta = VaR_beta, so the closed form is VaR + E[(Z - VaR)^+] / (1 - beta).
inline double cvar_ru(const SampleSet& s, ConfidenceLevel beta)
{
    const double eta = value_at_risk(s, beta);
    const auto values = s.values();
    const auto weights = s.weights();
    detail::CompensatedSum excess;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] > eta) {
            excess.add(weights[i] * (values[i] - eta));
        }
    }
    return eta + excess.value() / (1.0 - beta.value());
}

/// Rockafellar-Uryasev objective eta + E[(Z - eta)^+] / (1 - beta) at a given eta.
inline double ru_objective(const SampleSet& s, ConfidenceLevel beta, double eta)
{
    const auto values = s.values();
    const auto weights = s.weights();
    detail::CompensatedSum excess;
    for (std::size_t i = 0; i < values.size(); ++i) {
        excess.add(weights[i] * std::max(values[i] - eta, 0.0));
    }
    return eta + excess.value() / (1.0 - beta.value());
}

inline double mean(std::span<const double> values)
{
    if (values.empty()) {
        throw std::invalid_argument("mean: empty input");
    }
    detail::CompensatedSum s;
    for (const double v : values) {
        s.add(v);
    }
    return s.value() / static_cast<double>(values.size());
}

}  // namespace rsmppi
