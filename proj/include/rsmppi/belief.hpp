#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rsmppi/random.hpp"
#include "rsmppi/risk.hpp"

namespace rsmppi {

/**
 * Weighted particle approximation of the posterior over a static latent
 * parameter. Immutable once built; every filter operation returns a new value.
 *
 * Param is an Eigen column vector.
 */
template <typename Param>
class ParticleBelief
{
  public:
    static constexpr double kWeightTolerance = 1e-9;

    ParticleBelief(std::vector<Param> particles, std::vector<double> weights)
        : particles_(std::move(particles)), weights_(std::move(weights))
    {
        if (particles_.empty()) {
            throw std::invalid_argument("particle belief needs at least one particle");
        }
        if (particles_.size() != weights_.size()) {
            throw std::invalid_argument("particle and weight counts differ");
        }
        detail::CompensatedSum total;
        for (const double w : weights_) {
            if (!(w >= 0.0) || !std::isfinite(w)) {
                throw std::invalid_argument("particle weights must be finite and nonnegative");
            }
            total.add(w);
        }
        if (std::abs(total.value() - 1.0) > kWeightTolerance) {
            throw std::invalid_argument("particle weights must sum to 1");
        }
    }

    static ParticleBelief uniform(std::vector<Param> particles)
    {
        const std::size_t n = particles.size();
        std::vector<double> w(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
        return ParticleBelief(std::move(particles), std::move(w));
    }

    [[nodiscard]] const std::vector<Param>& particles() const noexcept { return particles_; }
    [[nodiscard]] const std::vector<double>& weights() const noexcept { return weights_; }
    [[nodiscard]] std::size_t size() const noexcept { return particles_.size(); }

  private:
    std::vector<Param> particles_;
    std::vector<double> weights_;
};

template <typename Param>
struct BeliefUpdate
{
    ParticleBelief<Param> belief;
    // Every particle had zero likelihood; the prior weights were kept.
    bool degenerate = false;
};

/// n independent draws from a diagonal Gaussian, uniform weights. `project`
/// maps each draw onto the admissible parameter set (e.g. a positive floor).
template <typename Param, typename Projection = std::identity>
ParticleBelief<Param> init_gaussian(const Param& mean, const Param& stddev, std::size_t n,
                                    Stream& rng, Projection project = {})
{
    if (n == 0) {
        throw std::invalid_argument("init_gaussian: particle count must be positive");
    }
    for (Eigen::Index d = 0; d < stddev.size(); ++d) {
        if (!(stddev[d] >= 0.0)) {
            throw std::invalid_argument("init_gaussian: negative standard deviation");
        }
    }
    std::vector<Param> particles;
    particles.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Param p = mean;
        for (Eigen::Index d = 0; d < p.size(); ++d) {
            p[d] += stddev[d] * rng.normal();
        }
        particles.push_back(project(p));
    }
    return ParticleBelief<Param>::uniform(std::move(particles));
}

/// Bayes reweighting w_i <- w_i p(z | theta_i, x) / eta. Particles do not move.
template <typename Param, typename Likelihood>
BeliefUpdate<Param> update(const ParticleBelief<Param>& b, Likelihood&& likelihood)
{
    const auto& prior = b.weights();
    std::vector<double> w(prior.size());
    detail::CompensatedSum total;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double l = likelihood(b.particles()[i]);
        w[i] = (l > 0.0 && std::isfinite(l)) ? prior[i] * l : 0.0;
        total.add(w[i]);
    }
    const double eta = total.value();
    if (!(eta > 0.0) || !std::isfinite(eta)) {
        return {b, true};
    }
    for (double& wi : w) {
        wi /= eta;
    }
    return {ParticleBelief<Param>(b.particles(), std::move(w)), false};
}

/// Effective sample size (sum w^2)^-1, in [1, N].
template <typename Param>
double ess(const ParticleBelief<Param>& b)
{
    detail::CompensatedSum sq;
    for (const double w : b.weights()) {
        sq.add(w * w);
    }
    return 1.0 / sq.value();
}

namespace detail {

inline std::vector<double> cumulative_weights(const std::vector<double>& w)
{
    std::vector<double> cdf(w.size());
    CompensatedSum s;
    for (std::size_t i = 0; i < w.size(); ++i) {
        s.add(w[i]);
        cdf[i] = s.value();
    }
    return cdf;
}

}  // namespace detail

/// Systematic (low-variance) resampling: one uniform offset, N evenly spaced
/// pointers. Particle i receives floor(N w_i) or ceil(N w_i) copies.
template <typename Param>
ParticleBelief<Param> resample_systematic(const ParticleBelief<Param>& b, Stream& rng)
{
    const std::size_t n = b.size();
    const auto cdf = detail::cumulative_weights(b.weights());
    const double step = 1.0 / static_cast<double>(n);
    const double offset = rng.uniform() * step;
    std::vector<Param> out;
    out.reserve(n);
    std::size_t i = 0;
    for (std::size_t m = 0; m < n; ++m) {
        const double pointer = offset + static_cast<double>(m) * step;
        while (i + 1 < n && pointer >= cdf[i]) {
            ++i;
        }
        out.push_back(b.particles()[i]);
    }
    return ParticleBelief<Param>::uniform(std::move(out));
}

/// n i.i.d. draws with replacement from the weighted particle set.
template <typename Param>
std::vector<Param> sample(const ParticleBelief<Param>& b, std::size_t n, Stream& rng)
{
    if (n == 0) {
        throw std::invalid_argument("sample: draw count must be positive");
    }
    const auto cdf = detail::cumulative_weights(b.weights());
    std::vector<Param> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double u = rng.uniform() * cdf.back();
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        auto i = static_cast<std::size_t>(std::distance(cdf.begin(), it));
        i = std::min(i, b.size() - 1);
        // Skip zero-weight particles that share a cdf plateau.
        while (b.weights()[i] == 0.0 && i + 1 < b.size()) {
            ++i;
        }
        out.push_back(b.particles()[i]);
    }
    return out;
}

template <typename Param>
Param posterior_mean(const ParticleBelief<Param>& b)
{
    Param m = b.weights()[0] * b.particles()[0];
    for (std::size_t i = 1; i < b.size(); ++i) {
        m += b.weights()[i] * b.particles()[i];
    }
    return m;
}

/// Per-coordinate posterior standard deviation.
template <typename Param>
Param posterior_stddev(const ParticleBelief<Param>& b)
{
    const Param m = posterior_mean(b);
    Param var = Param::Zero(m.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
        const Param d = b.particles()[i] - m;
        var += b.weights()[i] * d.cwiseProduct(d);
    }
    return var.cwiseSqrt();
}

/// Filter step used by the episode loop: reweight, then resample when the ESS
/// falls below `ess_threshold`.
template <typename Param>
struct FilterStep
{
    ParticleBelief<Param> belief;
    bool degenerate = false;
    bool resampled = false;
    double ess_after_update = 0.0;
};

template <typename Param, typename Likelihood>
FilterStep<Param> filter_step(const ParticleBelief<Param>& b, Likelihood&& likelihood,
                              double ess_threshold, Stream& rng)
{
    auto upd = update(b, std::forward<Likelihood>(likelihood));
    const double n_eff = ess(upd.belief);
    if (n_eff < ess_threshold) {
        return {resample_systematic(upd.belief, rng), upd.degenerate, true, n_eff};
    }
    return {std::move(upd.belief), upd.degenerate, false, n_eff};
}

}  // namespace rsmppi
