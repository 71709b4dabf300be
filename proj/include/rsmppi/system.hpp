#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "rsmppi/random.hpp"

namespace rsmppi {

/**
 * Stochastic parametric system: dynamics x' = f(x, u, theta, w), stage and
 * terminal cost, and a safety function h whose sign marks the safe set.
 * Implementations are stateless evaluators; all randomness comes through the
 * explicit stream argument.
 */
template <typename M>
concept SystemModel = requires(const M& m, const typename M::State& x,
                               const typename M::Control& u, const typename M::Param& theta,
                               Stream& rng) {
    typename M::State;
    typename M::Control;
    typename M::Param;
    { M::kControlDim } -> std::convertible_to<int>;
    { m.step(x, u, theta, rng) } -> std::same_as<typename M::State>;
    { m.stage_cost(x, u, theta) } -> std::convertible_to<double>;
    { m.terminal_cost(x, theta) } -> std::convertible_to<double>;
    { m.safety_margin(x, theta) } -> std::convertible_to<double>;
    { m.clamp(u) } -> std::same_as<typename M::Control>;
};

template <SystemModel Model>
struct Trajectory
{
    std::vector<typename Model::State> states;      // H + 1
    std::vector<typename Model::Control> controls;  // H
};

/// Repeated application of Model::step from x0 under the given controls.
template <SystemModel Model>
Trajectory<Model> simulate(const Model& model, const typename Model::State& x0,
                           std::span<const typename Model::Control> controls,
                           const typename Model::Param& theta, Stream& rng)
{
    Trajectory<Model> traj;
    traj.states.reserve(controls.size() + 1);
    traj.states.push_back(x0);
    traj.controls.assign(controls.begin(), controls.end());
    for (const auto& u : controls) {
        traj.states.push_back(model.step(traj.states.back(), u, theta, rng));
    }
    return traj;
}

namespace detail {
template <SystemModel Model>
void check_shape(const Trajectory<Model>& traj)
{
    if (traj.states.size() != traj.controls.size() + 1) {
        throw std::invalid_argument("trajectory needs exactly one more state than controls");
    }
}
}  // namespace detail

/// Sum of stage costs over the H controls plus the terminal cost at x_H.
template <SystemModel Model>
double trajectory_cost(const Model& model, const Trajectory<Model>& traj,
                       const typename Model::Param& theta)
{
    detail::check_shape(traj);
    double j = 0.0;
    for (std::size_t k = 0; k < traj.controls.size(); ++k) {
        j += model.stage_cost(traj.states[k], traj.controls[k], theta);
    }
    return j + model.terminal_cost(traj.states.back(), theta);
}

/// Minimum of h over all H + 1 states.
template <SystemModel Model>
double trajectory_margin(const Model& model, const Trajectory<Model>& traj,
                         const typename Model::Param& theta)
{
    detail::check_shape(traj);
    double m = std::numeric_limits<double>::infinity();
    for (const auto& x : traj.states) {
        m = std::min(m, static_cast<double>(model.safety_margin(x, theta)));
    }
    return m;
}

struct RolloutOutcome
{
    double cost = 0.0;
    double margin = 0.0;
};

/// Streaming equivalent of simulate + trajectory_cost + trajectory_margin,
/// without storing the states.
template <SystemModel Model>
RolloutOutcome rollout(const Model& model, typename Model::State x,
                       std::span<const typename Model::Control> controls,
                       const typename Model::Param& theta, Stream& rng)
{
    RolloutOutcome out;
    out.margin = model.safety_margin(x, theta);
    for (const auto& u : controls) {
        out.cost += model.stage_cost(x, u, theta);
        x = model.step(x, u, theta, rng);
        out.margin = std::min(out.margin, static_cast<double>(model.safety_margin(x, theta)));
    }
    out.cost += model.terminal_cost(x, theta);
    return out;
}

}  // namespace rsmppi
