#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsmppi/belief.hpp"
#include "rsmppi/controller.hpp"
#include "rsmppi/harness/config.hpp"
#include "rsmppi/harness/episode.hpp"
#include "rsmppi/risk.hpp"
#include "rsmppi/slot2d.hpp"

namespace rsmppi::harness {

/// Binomial standard error of a proportion p over n draws.
inline double binomial_se(double p, std::size_t n)
{
    return std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Single-solve safety implication
// ---------------------------------------------------------------------------

struct Thm1Report
{
    bool vacuous = false;          // no sequence met the constraint on the validation set
    bool pass = false;
    double beta_s = 0.0;
    std::size_t n_validation = 0;
    double validation_cvar = 0.0;  // CVaR_{beta_s}(-M_H) of the frozen sequence, validation draws
    double lateral_bias = 0.0;     // mm/s added to every step along (+x, -y), toward the right wall
    double prob_safe = 0.0;        // fresh draws: fraction with M_H >= 0
    double threshold = 0.0;        // beta_s - 3 sqrt(beta_s (1 - beta_s) / n)
};

namespace detail {

// Margins of one sequence under n (theta, noise) draws from a belief.
inline std::vector<double> margins_under_belief(const slot2d::Model& model, const slot2d::State& x,
                                                const std::vector<slot2d::Control>& seq,
                                                const Belief& belief, std::size_t n,
                                                const Stream& rng)
{
    Stream theta_rng = rng.split(1);
    const auto thetas = sample(belief, n, theta_rng);
    std::vector<double> m(n);
    for (std::size_t i = 0; i < n; ++i) {
        Stream s = rng.split(2, i);
        m[i] = rollout(model, x, std::span<const slot2d::Control>(seq), thetas[i], s).margin;
    }
    return m;
}

inline double cvar_of_violation(const std::vector<double>& margins, ConfidenceLevel beta)
{
    std::vector<double> v(margins.size());
    std::transform(margins.begin(), margins.end(), v.begin(), [](double m) { return -m; });
    return cvar_tail_average(v, beta);
}

inline std::vector<slot2d::Control> biased(const std::vector<slot2d::Control>& seq,
                                           const slot2d::Model& model, double bias)
{
    std::vector<slot2d::Control> out = seq;
    for (auto& u : out) u = model.clamp(u + slot2d::Control(bias, -bias));
    return out;
}

}  // namespace detail

/**
 * Solves once from a state above the opening, then freezes a sequence
 * whose empirical CVaR_{beta_s}(-M_H) over n_validation draws is at most zero.
 * The sequence is pushed sideways and down by bisection until the constraint is nearly
 * active, which is the least favourable admissible case. The claim
 * Pr(M_H >= 0) >= beta_s is then checked on n_validation fresh draws.
 */
inline Thm1Report verify_thm1(const ExperimentConfig& base, double beta_s, std::size_t n_validation,
                              std::uint64_t seed)
{
    ExperimentConfig cfg = base;
    cfg.mppi.beta_s = ConfidenceLevel(beta_s);
    cfg.mppi.beta_c = ConfidenceLevel(beta_s);
    const slot2d::Model model(cfg.task);
    const Stream root(seed);

    Thm1Report rep;
    rep.beta_s = beta_s;
    rep.n_validation = n_validation;
    rep.threshold = beta_s - 3.0 * binomial_se(beta_s, n_validation);

    // Partially informed belief around a drawn truth; object above the opening, descending.
    Stream setup = root.split(1);
    const Param truth{cfg.nominal_center + cfg.sigma_p * setup.normal(),
                      cfg.task.geometry.nominal_half_width};
    const Param stddev{3.0, cfg.sigma_w_slot};
    const Belief belief =
        init_gaussian(truth, stddev, cfg.n_filter, setup, [&](const Param& p) { return model.project(p); });
    slot2d::State x;
    x.p = {posterior_mean(belief)[0], cfg.task.geometry.object_half + 60.0};

    Controller<slot2d::Model> ctl(model, cfg.mppi, Variant::Cvar, cfg.chance, root.split(2)());
    SolveResult<slot2d::Model> sol = ctl.solve(x, belief);
    for (int warm = 0; warm < 5; ++warm) sol = ctl.solve(x, belief);  // settle the warm start

    const Stream validation = root.split(3);
    const auto cvar_at = [&](double bias) {
        const auto m = detail::margins_under_belief(model, x, detail::biased(sol.u_star.steps, model, bias),
                                                    belief, n_validation, validation);
        return detail::cvar_of_violation(m, cfg.mppi.beta_s);
    };

    if (cvar_at(0.0) > 0.0) {
        rep.vacuous = true;
        rep.validation_cvar = cvar_at(0.0);
        return rep;
    }
    // Bisection on the bias: feasible at lo, infeasible at hi.
    double lo = 0.0;
    double hi = cfg.task.u_max;
    if (cvar_at(hi) <= 0.0) {
        lo = hi;
    } else {
        for (int it = 0; it < 40; ++it) {
            const double mid = 0.5 * (lo + hi);
            (cvar_at(mid) <= 0.0 ? lo : hi) = mid;
        }
    }
    rep.lateral_bias = lo;
    rep.validation_cvar = cvar_at(lo);

    const auto fresh = detail::margins_under_belief(model, x, detail::biased(sol.u_star.steps, model, lo),
                                                    belief, n_validation, root.split(4));
    const auto safe = std::count_if(fresh.begin(), fresh.end(), [](double m) { return m >= 0.0; });
    rep.prob_safe = static_cast<double>(safe) / static_cast<double>(n_validation);
    rep.pass = rep.prob_safe >= rep.threshold;
    return rep;
}

// ---------------------------------------------------------------------------
// Risk-neutral limit on a frozen batch
// ---------------------------------------------------------------------------

struct Thm2Report
{
    bool empty_feasible = false;
    bool pass = false;
    std::vector<std::size_t> feasible;          // candidate indices with CVaR_{beta_s}(-M) <= 0
    std::vector<std::size_t> neutral_argmin;    // argmin of E[J] over the feasible set (ties kept)
    std::vector<std::size_t> argmin_per_lambda; // argmin of E[J] + lambda_r CVaR_{beta_c}(J)
    // First listed lambda_r from which every later argmin lies in neutral_argmin.
    std::optional<std::size_t> converged_from;
};

/// Exact enumeration over a frozen batch. `lambda_list` must be decreasing.
inline Thm2Report verify_thm2(const RolloutBatch& batch, const std::vector<double>& lambda_list,
                              ConfidenceLevel beta_c, ConfidenceLevel beta_s)
{
    if (lambda_list.empty()) throw std::invalid_argument("verify_thm2: lambda list is empty");
    for (std::size_t k = 1; k < lambda_list.size(); ++k) {
        if (!(lambda_list[k] < lambda_list[k - 1])) {
            throw std::invalid_argument("verify_thm2: lambda list must be strictly decreasing");
        }
    }
    Thm2Report rep;
    std::vector<CandidateScore> stats(batch.num_candidates);
    for (std::size_t j = 0; j < batch.num_candidates; ++j) {
        stats[j] = rsmppi::detail::statistics(batch.cost_row(j), batch.margin_row(j), beta_c, beta_s);
        if (stats[j].cvar_violation <= 0.0) rep.feasible.push_back(j);
    }
    if (rep.feasible.empty()) {
        rep.empty_feasible = true;
        return rep;
    }
    double best = std::numeric_limits<double>::infinity();
    for (const std::size_t j : rep.feasible) best = std::min(best, stats[j].mean_cost);
    for (const std::size_t j : rep.feasible) {
        if (stats[j].mean_cost == best) rep.neutral_argmin.push_back(j);
    }
    const auto in_neutral = [&](std::size_t j) {
        return std::find(rep.neutral_argmin.begin(), rep.neutral_argmin.end(), j) != rep.neutral_argmin.end();
    };
    for (const double lr : lambda_list) {
        std::size_t arg = rep.feasible.front();
        double val = std::numeric_limits<double>::infinity();
        for (const std::size_t j : rep.feasible) {
            const double s = stats[j].mean_cost + lr * stats[j].cvar_cost;
            if (s < val) {
                val = s;
                arg = j;
            }
        }
        rep.argmin_per_lambda.push_back(arg);
    }
    for (std::size_t k = lambda_list.size(); k-- > 0;) {
        if (!in_neutral(rep.argmin_per_lambda[k])) break;
        rep.converged_from = k;
    }
    rep.pass = rep.converged_from.has_value();
    return rep;
}

/// A batch of real testbed rollouts: random state above the opening, random
/// Gaussian belief, K candidates around a random warm start.
inline RolloutBatch testbed_batch(const ExperimentConfig& cfg, std::uint64_t seed)
{
    const slot2d::Model model(cfg.task);
    Stream rng(seed);
    const Param truth{cfg.nominal_center + cfg.sigma_p * rng.normal(),
                      cfg.task.geometry.nominal_half_width};
    const Param stddev{0.5 + 4.0 * rng.uniform(), cfg.sigma_w_slot};
    const Belief belief = init_gaussian(truth, stddev, 256, rng, [&](const Param& p) { return model.project(p); });
    slot2d::State x;
    x.p = {truth[0] + 6.0 * rng.normal(), cfg.task.geometry.object_half + 30.0 * rng.uniform()};
    auto u_hat = ControlSequence<slot2d::Control>::zeros(cfg.mppi.horizon);
    for (std::size_t k = 0; k < u_hat.size(); ++k) {
        u_hat[k] = model.clamp(slot2d::Control(10.0 * rng.normal(), -20.0 * rng.uniform()));
    }
    Stream theta_rng = rng.split(1);
    const auto thetas = sample(belief, cfg.mppi.num_particles, theta_rng);
    const auto cand = sample_candidates(model, u_hat, cfg.mppi, rng.split(2));
    return rollout_batch(model, x, cand, std::span<const Param>(thetas), rng.split(3), 1);
}

/// Two feasible candidates whose argmin switches between lambda_r = 0.5 and 0.1:
/// A has E[J] = 1, CVaR_{0.5}(J) = 10; B has E[J] = 2, CVaR_{0.5}(J) = 3.
inline RolloutBatch crossover_batch()
{
    RolloutBatch b;
    b.num_candidates = 2;
    b.num_particles = 2;
    b.costs = {-8.0, 10.0, 1.0, 3.0};
    b.margins = {1.0, 1.0, 1.0, 1.0};
    return b;
}

// ---------------------------------------------------------------------------
// Cumulative receding-horizon safety
// ---------------------------------------------------------------------------

struct Thm3Report
{
    bool pass = false;
    double beta_s = 0.0;
    std::size_t horizon_solves = 0;  // T
    std::size_t episodes_run = 0;
    std::size_t excluded = 0;        // at least one infeasible solve
    std::size_t included = 0;
    double joint_safe = 0.0;         // fraction of included episodes whose T planned margins are all >= 0
    double realized_safe = 0.0;      // same, using the executed step margins
    double bound = 0.0;              // 1 - T (1 - beta_s)
    double threshold = 0.0;          // bound - 3 SE
    double slack = 0.0;              // joint_safe - bound
};

/**
 * Runs T-solve episodes until `n_runs` have every solve feasible (or the
 * attempt cap is hit). Each solve's planned sequence is rolled out under the
 * true parameter; the joint event is that all T planned margins are
 * nonnegative.
 */
inline Thm3Report verify_thm3(const ExperimentConfig& base, std::size_t T, std::size_t n_runs,
                              std::size_t max_attempts = 0)
{
    ExperimentConfig cfg = base;
    cfg.max_steps = T;
    cfg.variant = Variant::Cvar;
    if (max_attempts == 0) max_attempts = 4 * n_runs;
    Thm3Report rep;
    rep.beta_s = cfg.mppi.beta_s.value();
    rep.horizon_solves = T;
    rep.bound = 1.0 - static_cast<double>(T) * (1.0 - rep.beta_s);
    EpisodeOptions opt;
    opt.evaluate_plan_under_truth = true;
    opt.keep_final_belief = false;
    std::size_t joint = 0;
    std::size_t realized = 0;
    for (std::size_t i = 0; i < max_attempts && rep.included < n_runs; ++i) {
        const EpisodeRecord r = run_episode(cfg, trial_seed(cfg.seed, i), opt);
        ++rep.episodes_run;
        const bool feasible =
            std::none_of(r.steps.begin(), r.steps.end(), [](const StepRecord& s) { return s.infeasible; });
        if (!feasible) {
            ++rep.excluded;
            continue;
        }
        ++rep.included;
        joint += std::all_of(r.steps.begin(), r.steps.end(),
                             [](const StepRecord& s) { return *s.plan_margin_true >= 0.0; })
                     ? 1
                     : 0;
        realized += std::all_of(r.steps.begin(), r.steps.end(),
                                [](const StepRecord& s) { return s.margin >= 0.0; })
                        ? 1
                        : 0;
    }
    if (rep.included == 0) return rep;
    const double n = static_cast<double>(rep.included);
    rep.joint_safe = static_cast<double>(joint) / n;
    rep.realized_safe = static_cast<double>(realized) / n;
    rep.threshold = rep.bound - 3.0 * binomial_se(rep.joint_safe, rep.included);
    rep.slack = rep.joint_safe - rep.bound;
    rep.pass = rep.included >= n_runs && rep.joint_safe >= rep.threshold;
    return rep;
}

}  // namespace rsmppi::harness
