#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rsmppi/belief.hpp"
#include "rsmppi/controller.hpp"
#include "rsmppi/harness/config.hpp"
#include "rsmppi/harness/savgol.hpp"
#include "rsmppi/random.hpp"
#include "rsmppi/slot2d.hpp"

namespace rsmppi::harness {

using Param = slot2d::Param;
using Vec2 = slot2d::Vec2;
using Belief = ParticleBelief<Param>;

struct StepRecord
{
    std::size_t t = 0;
    Vec2 p = Vec2::Zero();           // position after applying u
    Vec2 u = Vec2::Zero();
    double z = 0.0;                  // observation taken before the solve
    Param belief_mean = Param::Zero();
    Param belief_std = Param::Zero();
    double ess = 0.0;                // after reweighting, before any resampling
    bool resampled = false;
    bool degenerate = false;
    CandidateScore chosen;           // statistics of u* on the controller's particles
    bool infeasible = false;
    bool weight_fallback = false;
    double margin = 0.0;             // h(x_{t+1}, theta_true)
    double clearance = 0.0;
    double env_margin = 0.0;
    double grasp_margin = 0.0;
    double contact_force = 0.0;
    double distance = 0.0;           // |p - p*(theta_true)|
    // Margin of the whole planned sequence u* rolled out under theta_true.
    std::optional<double> plan_margin_true;
    double wall_ms = 0.0;            // not serialized
};

struct EpisodeRecord
{
    std::string label;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    Param theta_true = Param::Zero();
    Param theta_hat = Param::Zero();
    Vec2 start = Vec2::Zero();
    std::vector<StepRecord> steps;
    bool success = false;
    bool aborted = false;
    double final_distance = 0.0;     // smoothed
    std::optional<Belief> final_belief;
};

/// Episode summary statistics shared by reports and the metrics table.
struct EpisodeSummary
{
    bool contact = false;
    double max_force = 0.0;
    double mean_force = 0.0;
    double min_margin = std::numeric_limits<double>::infinity();
    double min_clearance = std::numeric_limits<double>::infinity();
    double min_env_margin = std::numeric_limits<double>::infinity();
    double min_grasp_margin = std::numeric_limits<double>::infinity();
    double mean_cvar = 0.0;
    double wall_ms_per_step = 0.0;
};

inline EpisodeSummary summarize(const EpisodeRecord& r)
{
    EpisodeSummary s;
    if (r.steps.empty()) {
        s.min_margin = s.min_clearance = s.min_env_margin = s.min_grasp_margin = 0.0;
        return s;
    }
    double force_sum = 0.0;
    double cvar_sum = 0.0;
    double wall = 0.0;
    for (const auto& st : r.steps) {
        s.contact = s.contact || st.contact_force > 0.0;
        s.max_force = std::max(s.max_force, st.contact_force);
        force_sum += st.contact_force;
        s.min_margin = std::min(s.min_margin, st.margin);
        s.min_clearance = std::min(s.min_clearance, st.clearance);
        s.min_env_margin = std::min(s.min_env_margin, st.env_margin);
        s.min_grasp_margin = std::min(s.min_grasp_margin, st.grasp_margin);
        cvar_sum += st.chosen.cvar_violation;
        wall += st.wall_ms;
    }
    const double n = static_cast<double>(r.steps.size());
    s.mean_force = force_sum / n;
    s.mean_cvar = cvar_sum / n;
    s.wall_ms_per_step = wall / n;
    return s;
}

/// Latent truth, camera estimate and start pose of one randomized trial.
struct TrialSetup
{
    Param theta_true;
    Param theta_hat;
    Vec2 start;
};

/// True center ~ N(nominal, sigma_p^2), half-width jittered; the camera
/// estimate is the truth plus another sigma_p draw; the object starts above
/// the estimate with a lateral offset.
inline TrialSetup draw_trial(const ExperimentConfig& cfg, Stream rng)
{
    const auto& g = cfg.task.geometry;
    TrialSetup s;
    s.theta_true = {cfg.nominal_center + cfg.sigma_p * rng.normal(),
                    g.nominal_half_width + cfg.sigma_w_slot * rng.normal()};
    s.theta_true[1] = std::max(s.theta_true[1], cfg.task.w_floor);
    s.theta_hat = {s.theta_true[0] + cfg.sigma_p * rng.normal(), g.nominal_half_width};
    s.start = {s.theta_hat[0] + cfg.start_lateral_std * rng.normal(), cfg.start_height};
    return s;
}

/// Seed of trial `index` under a root seed. Independent of the sweep cell, so
/// cells see paired trials.
inline std::uint64_t trial_seed(std::uint64_t root, std::size_t index)
{
    return Stream(root).split(0x7472'6961'6cULL, index)();
}

struct EpisodeOptions
{
    // Roll each solve's u* out under theta_true and record its margin.
    bool evaluate_plan_under_truth = false;
    bool keep_final_belief = true;
};

namespace detail {
enum EpisodeStream : std::uint64_t
{
    kSetup = 1,
    kController = 2,
    kObservation = 3,
    kProcess = 4,
    kResample = 5,
    kPlanCheck = 6,
    kBeliefInit = 7,
};
}  // namespace detail

inline Belief initial_belief(const ExperimentConfig& cfg, const slot2d::Model& model,
                             const Param& theta_hat, Stream rng)
{
    const Param stddev{cfg.sigma_p, cfg.sigma_w_slot};
    return init_gaussian(theta_hat, stddev, cfg.n_filter, rng,
                         [&](const Param& p) { return model.project(p); });
}

/// Closed-loop episode: observe, update belief, solve, apply the first control
/// through the true dynamics. Stops on success, on an abort-level contact
/// force, or after T steps.
inline EpisodeRecord run_episode(const ExperimentConfig& cfg, const TrialSetup& setup,
                                 std::uint64_t seed, const EpisodeOptions& opt = {})
{
    const slot2d::Model model(cfg.task);
    const Stream root(seed);
    EpisodeRecord rec;
    rec.seed = seed;
    rec.theta_true = setup.theta_true;
    rec.theta_hat = setup.theta_hat;
    rec.start = setup.start;

    Belief belief = initial_belief(cfg, model, setup.theta_hat, root.split(detail::kBeliefInit));
    Controller<slot2d::Model> controller(model, cfg.mppi, cfg.variant, cfg.chance,
                                         root.split(detail::kController)());
    slot2d::State x;
    x.p = setup.start;
    const double abort_force = cfg.abort_force_factor * cfg.task.f_env_max;
    std::vector<Vec2> positions{x.p};

    for (std::size_t t = 0; t < cfg.max_steps; ++t) {
        Stream obs_rng = root.split(detail::kObservation, t);
        const double z = model.observe(setup.theta_true, x, obs_rng);
        Stream res_rng = root.split(detail::kResample, t);
        auto fs = filter_step(
            belief, [&](const Param& th) { return model.observe_likelihood(z, th, x); },
            cfg.ess_threshold(), res_rng);
        belief = std::move(fs.belief);

        const auto sol = controller.solve(x, belief);

        StepRecord st;
        st.t = t;
        st.z = z;
        st.ess = fs.ess_after_update;
        st.resampled = fs.resampled;
        st.degenerate = fs.degenerate;
        st.belief_mean = posterior_mean(belief);
        st.belief_std = posterior_stddev(belief);
        st.chosen = sol.diagnostics.chosen;
        st.infeasible = sol.diagnostics.infeasible;
        st.weight_fallback = sol.diagnostics.weight_fallback;
        st.wall_ms = sol.diagnostics.wall_ms;
        if (opt.evaluate_plan_under_truth) {
            Stream plan_rng = root.split(detail::kPlanCheck, t);
            st.plan_margin_true =
                rollout(model, x, std::span(sol.u_star.steps), setup.theta_true, plan_rng).margin;
        }

        Stream proc_rng = root.split(detail::kProcess, t);
        x = model.step(x, sol.u_first, setup.theta_true, proc_rng);
        positions.push_back(x.p);

        const auto ch = model.margin_channels(x, setup.theta_true);
        st.p = x.p;
        st.u = sol.u_first;
        st.margin = ch.min();
        st.clearance = ch.clearance;
        st.env_margin = ch.env_force;
        st.grasp_margin = ch.grasp;
        st.contact_force = model.contact_force(x, setup.theta_true);
        st.distance = (x.p - model.goal(setup.theta_true)).norm();
        rec.steps.push_back(st);

        if (st.contact_force > abort_force) {
            rec.aborted = true;
            break;
        }
        if (model.success(x, setup.theta_true)) {
            break;
        }
    }

    // Smoothed final distance; series shorter than the window use the raw value.
    const Vec2 goal = model.goal(setup.theta_true);
    if (positions.size() >= static_cast<std::size_t>(cfg.savgol_window)) {
        const auto smooth = savgol_smooth(positions, cfg.savgol_window, cfg.savgol_degree);
        rec.final_distance = (smooth.back() - goal).norm();
    } else {
        rec.final_distance = (positions.back() - goal).norm();
    }
    rec.success = !rec.aborted && model.success(x, setup.theta_true) &&
                  rec.final_distance <= cfg.task.eps_p;
    if (opt.keep_final_belief) {
        rec.final_belief = belief;
    }
    return rec;
}

/// Draws the trial setup from the seed, then runs the episode.
inline EpisodeRecord run_episode(const ExperimentConfig& cfg, std::uint64_t seed,
                                 const EpisodeOptions& opt = {})
{
    const TrialSetup setup = draw_trial(cfg, Stream(seed).split(detail::kSetup));
    return run_episode(cfg, setup, seed, opt);
}

}  // namespace rsmppi::harness
