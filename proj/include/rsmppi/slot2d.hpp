#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Core>

#include "rsmppi/random.hpp"
#include "rsmppi/system.hpp"

// Planar slot-insertion testbed.
//
// A square object of half-width r_obj is carried (kinematically, velocity
// controlled) above a receptacle whose opening lies on y = 0. The slot
// interior is (c - w, c + w) x (-D, 0]; everything else with y <= 0 is solid.
// A previously stored block sits against the left wall at the slot bottom.
// The latent parameter is theta = (c, w). Units: mm, mm/s, s, N.
namespace rsmppi::slot2d {

using Vec2 = Eigen::Vector2d;
using Param = Eigen::Vector2d;  // (slot center c, slot half-width w)
using Control = Eigen::Vector2d;

struct State
{
    Vec2 p = Vec2::Zero();
    // Last applied command; feeds the grasp-load surrogate.
    Control u_prev = Control::Zero();
};

struct Geometry
{
    double depth = 100.0;          // D
    double object_half = 40.0;     // r_obj
    double nominal_half_width = 48.75;
    bool stored_block = true;
    double block_width = 6.0;      // w_env
    double block_height = 40.0;
};

struct Params
{
    Geometry geometry;
    double dt = 0.1;
    double sigma_w = 0.25;         // process noise per step, mm
    double sigma_v = 15.0;         // slot-center observation noise, mm
    double u_max = 80.0;
    double d_min = 2.0;
    double k_contact = 10.0;       // N per mm of penetration
    double grasp_gain = 0.25;      // N per mm/s
    double f_env_max = 80.0;
    double f_grasp_max = 80.0;
    double q_pos = 1e-3;           // stage position weight, 1/mm^2
    double r_u = 1e-5;             // control weight, 1/(mm/s)^2
    double q_terminal = 2e-2;      // terminal weight, 1/mm^2
    double y_align = 50.0;         // approach waypoint height above the opening
    double eps_p = 60.0;
    double w_floor = 1.0;          // lower clamp on sampled half-widths
};

/// Axis-aligned box; infinite extents model half-planes.
struct Box
{
    double x_lo, x_hi, y_lo, y_hi;
};

/// Signed distance between two boxes: Euclidean gap when separated, minus the
/// minimum translation depth when overlapping.
inline double signed_distance(const Box& a, const Box& b) noexcept
{
    const double gx = std::max(b.x_lo - a.x_hi, a.x_lo - b.x_hi);
    const double gy = std::max(b.y_lo - a.y_hi, a.y_lo - b.y_hi);
    if (gx > 0.0 || gy > 0.0) {
        return std::hypot(std::max(gx, 0.0), std::max(gy, 0.0));
    }
    return std::max(gx, gy);
}

struct MarginChannels
{
    double clearance;   // d_env - d_min, mm
    double env_force;   // f_env_max - |f_env|, N
    double grasp;       // f_grasp_max - |f_grasp|, N
    [[nodiscard]] double min() const noexcept { return std::min({clearance, env_force, grasp}); }
};

class Model
{
  public:
    using State = slot2d::State;
    using Control = slot2d::Control;
    using Param = slot2d::Param;
    static constexpr int kControlDim = 2;

    Model() = default;
    explicit Model(Params params) : params_(params) {}

    [[nodiscard]] const Params& params() const noexcept { return params_; }

    [[nodiscard]] Control clamp(const Control& u) const noexcept
    {
        return u.cwiseMax(-params_.u_max).cwiseMin(params_.u_max);
    }

    /// p' = p + u dt + w, w ~ N(0, sigma_w^2 I).
    [[nodiscard]] State step(const State& x, const Control& u, const Param& /*theta*/,
                             Stream& rng) const
    {
        State next;
        next.p = x.p + u * params_.dt;
        if (params_.sigma_w > 0.0) {
            next.p.x() += params_.sigma_w * rng.normal();
            next.p.y() += params_.sigma_w * rng.normal();
        }
        next.u_prev = u;
        return next;
    }

    /// Goal position p*(theta): object resting on the slot floor at the center.
    [[nodiscard]] Vec2 goal(const Param& theta) const noexcept
    {
        return {theta[0], -params_.geometry.depth + params_.geometry.object_half};
    }

    /// Align-before-descend waypoint above the opening, goal once inside.
    [[nodiscard]] Vec2 reference(const State& x, const Param& theta) const noexcept
    {
        if (x.p.y() > 0.0) {
            return {theta[0], params_.y_align};
        }
        return goal(theta);
    }

    [[nodiscard]] double stage_cost(const State& x, const Control& u, const Param& theta) const
    {
        return params_.q_pos * (x.p - reference(x, theta)).squaredNorm() +
               params_.r_u * u.squaredNorm();
    }

    [[nodiscard]] double terminal_cost(const State& x, const Param& theta) const
    {
        return params_.q_terminal * (x.p - goal(theta)).squaredNorm();
    }

    [[nodiscard]] Box object_box(const Vec2& p) const noexcept
    {
        const double r = params_.geometry.object_half;
        return {p.x() - r, p.x() + r, p.y() - r, p.y() + r};
    }

    /// Signed distance from the object to the receptacle and stored block.
    [[nodiscard]] double env_distance(const Vec2& p, const Param& theta) const noexcept
    {
        constexpr double inf = std::numeric_limits<double>::infinity();
        const auto& g = params_.geometry;
        const double c = theta[0];
        const double w = theta[1];
        const Box obj = object_box(p);
        const Box left{-inf, c - w, -inf, 0.0};
        const Box right{c + w, inf, -inf, 0.0};
        const Box floor{c - w, c + w, -inf, -g.depth};
        double d = std::min({signed_distance(obj, left), signed_distance(obj, right),
                             signed_distance(obj, floor)});
        if (g.stored_block) {
            const Box block{c - w, c - w + g.block_width, -g.depth, -g.depth + g.block_height};
            d = std::min(d, signed_distance(obj, block));
        }
        return d;
    }

    [[nodiscard]] double penetration(const Vec2& p, const Param& theta) const noexcept
    {
        return std::max(-env_distance(p, theta), 0.0);
    }

    /// Linear penalty contact force, N.
    [[nodiscard]] double contact_force(const State& x, const Param& theta) const noexcept
    {
        return params_.k_contact * penetration(x.p, theta);
    }

    [[nodiscard]] double grasp_load(const State& x) const noexcept
    {
        return params_.grasp_gain * x.u_prev.norm();
    }

    [[nodiscard]] MarginChannels margin_channels(const State& x, const Param& theta) const noexcept
    {
        const double d = env_distance(x.p, theta);
        return {d - params_.d_min,
                params_.f_env_max - params_.k_contact * std::max(-d, 0.0),
                params_.f_grasp_max - grasp_load(x)};
    }

    /// h(x, theta) = min(clearance, contact-force, grasp-load margins).
    [[nodiscard]] double safety_margin(const State& x, const Param& theta) const noexcept
    {
        return margin_channels(x, theta).min();
    }

    /// Gaussian density of the slot-center reading z given theta.
    [[nodiscard]] double observe_likelihood(double z, const Param& theta,
                                            const State& /*x*/) const noexcept
    {
        const double s = params_.sigma_v;
        const double d = (z - theta[0]) / s;
        return std::exp(-0.5 * d * d) / (s * std::sqrt(2.0 * std::numbers::pi));
    }

    [[nodiscard]] double observe(const Param& theta_true, const State& /*x*/, Stream& rng) const
    {
        return theta_true[0] + params_.sigma_v * rng.normal();
    }

    /// Within eps_p of the goal and not penetrating anything.
    [[nodiscard]] bool success(const State& x, const Param& theta_true) const noexcept
    {
        return (x.p - goal(theta_true)).norm() <= params_.eps_p &&
               penetration(x.p, theta_true) == 0.0;
    }

    /// Keeps sampled half-widths positive.
    [[nodiscard]] Param project(Param theta) const noexcept
    {
        theta[1] = std::max(theta[1], params_.w_floor);
        return theta;
    }

  private:
    Params params_;
};

static_assert(SystemModel<Model>);

}  // namespace rsmppi::slot2d
