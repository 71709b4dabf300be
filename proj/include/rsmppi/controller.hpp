#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "rsmppi/belief.hpp"
#include "rsmppi/random.hpp"
#include "rsmppi/risk.hpp"
#include "rsmppi/system.hpp"

namespace rsmppi {

template <int M>
using Covariance = Eigen::Matrix<double, M, M>;

/// H-step control sequence.
template <typename Control>
struct ControlSequence
{
    std::vector<Control> steps;

    ControlSequence() = default;
    explicit ControlSequence(std::vector<Control> s) : steps(std::move(s)) {}
    static ControlSequence zeros(std::size_t horizon)
    {
        return ControlSequence(std::vector<Control>(horizon, Control::Zero()));
    }

    [[nodiscard]] std::size_t size() const noexcept { return steps.size(); }
    const Control& operator[](std::size_t k) const { return steps[k]; }
    Control& operator[](std::size_t k) { return steps[k]; }
    friend bool operator==(const ControlSequence& a, const ControlSequence& b)
    {
        return a.steps.size() == b.steps.size() &&
               std::equal(a.steps.begin(), a.steps.end(), b.steps.begin(),
                          [](const Control& x, const Control& y) { return x == y; });
    }
};

template <int M>
struct MppiConfig
{
    std::size_t num_candidates = 64;  // K
    std::size_t horizon = 12;         // H
    std::size_t num_particles = 16;   // N_p
    double lambda = 0.4;
    Covariance<M> sigma = Covariance<M>::Identity() * 15.0 * 15.0;
    double lambda_r = 0.5;
    ConfidenceLevel beta_c{0.95};
    ConfidenceLevel beta_s{0.95};
    double mu = 250.0;
    // Nominal mean u-bar of the importance weights. Empty means u-bar = u-hat.
    std::vector<Eigen::Matrix<double, M, 1>> u_nominal;
    // Threads used for rollouts. Results do not depend on this value.
    std::size_t workers = 1;

    void validate() const
    {
        if (num_candidates < 1 || horizon < 1 || num_particles < 1) {
            throw std::invalid_argument("MPPI sizes K, H, N_p must be at least 1");
        }
        if (!(lambda > 0.0)) {
            throw std::invalid_argument("MPPI temperature lambda must be positive");
        }
        if (!(mu >= 0.0)) {
            throw std::invalid_argument("safety penalty mu must be nonnegative");
        }
        if (!(lambda_r >= 0.0 && lambda_r <= 1.0)) {
            throw std::invalid_argument("risk weight lambda_r must lie in [0,1]");
        }
        if (!sigma.isApprox(sigma.transpose()) ||
            Eigen::LLT<Covariance<M>>(sigma).info() != Eigen::Success) {
            throw std::invalid_argument("perturbation covariance must be symmetric positive-definite");
        }
        if (!u_nominal.empty() && u_nominal.size() != horizon) {
            throw std::invalid_argument("nominal mean must have H steps");
        }
        if (workers < 1) {
            throw std::invalid_argument("worker count must be at least 1");
        }
    }
};

/// Chance-constrained baseline settings.
struct ChanceConfig
{
    double delta_h = 0.05;
    double mu_cc = 250.0;
    // Evaluate a single rollout at the posterior mean instead of per-particle rollouts.
    bool mean_theta = false;
};

enum class Variant
{
    Cvar,
    Chance,
    Neutral,
};

/// K perturbed candidate sequences, stored row-major as j * H + k.
template <typename Control>
struct Candidates
{
    std::size_t count = 0;
    std::size_t horizon = 0;
    std::vector<Control> perturbations;  // applied (post-clamp) epsilon
    std::vector<Control> sequences;

    [[nodiscard]] std::span<const Control> sequence(std::size_t j) const
    {
        return std::span<const Control>(sequences).subspan(j * horizon, horizon);
    }
    [[nodiscard]] std::span<const Control> perturbation(std::size_t j) const
    {
        return std::span<const Control>(perturbations).subspan(j * horizon, horizon);
    }
};

/// Per-(candidate j, particle i) costs J and margins M, stored as j * N_p + i.
struct RolloutBatch
{
    std::size_t num_candidates = 0;
    std::size_t num_particles = 0;
    std::vector<double> costs;
    std::vector<double> margins;

    [[nodiscard]] std::span<const double> cost_row(std::size_t j) const
    {
        return std::span<const double>(costs).subspan(j * num_particles, num_particles);
    }
    [[nodiscard]] std::span<const double> margin_row(std::size_t j) const
    {
        return std::span<const double>(margins).subspan(j * num_particles, num_particles);
    }
};

/// Candidate sampling: u_j = clamp(u_hat + eps_j), eps_j ~ N(0, Sigma) per step.
/// The stored perturbation is the post-clamp difference u_j - u_hat.
template <SystemModel Model, int M = Model::kControlDim>
Candidates<typename Model::Control> sample_candidates(
    const Model& model, const ControlSequence<typename Model::Control>& u_hat,
    const MppiConfig<M>& cfg, const Stream& rng)
{
    using Control = typename Model::Control;
    const std::size_t K = cfg.num_candidates;
    const std::size_t H = u_hat.size();
    const Covariance<M> chol = Eigen::LLT<Covariance<M>>(cfg.sigma).matrixL();
    Candidates<Control> c;
    c.count = K;
    c.horizon = H;
    c.perturbations.resize(K * H);
    c.sequences.resize(K * H);
    for (std::size_t j = 0; j < K; ++j) {
        Stream s = rng.split(j);
        for (std::size_t k = 0; k < H; ++k) {
            Control n;
            for (int d = 0; d < M; ++d) {
                n[d] = s.normal();
            }
            const Control u = model.clamp(u_hat[k] + chol * n);
            c.sequences[j * H + k] = u;
            c.perturbations[j * H + k] = u - u_hat[k];
        }
    }
    return c;
}

/// Rolls every candidate out under every particle. Particle i uses the noise
/// stream rng.split(i) for all candidates (common random numbers), so results
/// are independent of candidate order and of the worker count.
template <SystemModel Model>
RolloutBatch rollout_batch(const Model& model, const typename Model::State& x0,
                           const Candidates<typename Model::Control>& candidates,
                           std::span<const typename Model::Param> thetas, const Stream& rng,
                           std::size_t workers = 1)
{
    RolloutBatch batch;
    batch.num_candidates = candidates.count;
    batch.num_particles = thetas.size();
    batch.costs.resize(candidates.count * thetas.size());
    batch.margins.resize(candidates.count * thetas.size());
    const auto work = [&](std::size_t j_begin, std::size_t j_end) {
        for (std::size_t j = j_begin; j < j_end; ++j) {
            const auto seq = candidates.sequence(j);
            for (std::size_t i = 0; i < thetas.size(); ++i) {
                Stream s = rng.split(i);
                const RolloutOutcome r = rollout(model, x0, seq, thetas[i], s);
                batch.costs[j * thetas.size() + i] = r.cost;
                batch.margins[j * thetas.size() + i] = r.margin;
            }
        }
    };
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(candidates.count, 1));
    if (workers == 1) {
        work(0, candidates.count);
        return batch;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (candidates.count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t b = w * chunk;
        const std::size_t e = std::min(candidates.count, b + chunk);
        if (b < e) {
            pool.emplace_back(work, b, e);
        }
    }
    pool.clear();
    return batch;
}

struct CandidateScore
{
    double mean_cost = 0.0;
    double cvar_cost = 0.0;        // CVaR_{beta_c}(J)
    double cvar_violation = 0.0;   // CVaR_{beta_s}(-M)
    double violation_prob = 0.0;   // fraction of particles with M < 0
    double score = 0.0;

    friend bool operator==(const CandidateScore&, const CandidateScore&) = default;
};

namespace detail {

inline CandidateScore statistics(std::span<const double> costs, std::span<const double> margins,
                                 ConfidenceLevel beta_c, ConfidenceLevel beta_s)
{
    CandidateScore s;
    s.mean_cost = mean(costs);
    s.cvar_cost = cvar_tail_average(costs, beta_c);
    std::vector<double> violation(margins.size());
    std::size_t violated = 0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
        violation[i] = -margins[i];
        violated += margins[i] < 0.0 ? 1 : 0;
    }
    s.cvar_violation = cvar_tail_average(violation, beta_s);
    s.violation_prob = static_cast<double>(violated) / static_cast<double>(margins.size());
    return s;
}

}  // namespace detail

/// S = E[J] + lambda_r CVaR_{beta_c}(J) + mu (CVaR_{beta_s}(-M))^+.
template <int M>
CandidateScore score(std::span<const double> costs, std::span<const double> margins,
                     const MppiConfig<M>& cfg)
{
    CandidateScore s = detail::statistics(costs, margins, cfg.beta_c, cfg.beta_s);
    s.score = s.mean_cost + cfg.lambda_r * s.cvar_cost + cfg.mu * std::max(s.cvar_violation, 0.0);
    return s;
}

/// Chance-constrained score S = E[J] + mu_cc (P_viol - delta_H)^+. No risk term.
template <int M>
CandidateScore cc_score(std::span<const double> costs, std::span<const double> margins,
                        const MppiConfig<M>& cfg, const ChanceConfig& cc)
{
    CandidateScore s = detail::statistics(costs, margins, cfg.beta_c, cfg.beta_s);
    s.score = s.mean_cost + cc.mu_cc * std::max(s.violation_prob - cc.delta_h, 0.0);
    return s;
}

struct WeightResult
{
    std::vector<double> weights;
    // Exponentials were not finite; uniform weights were substituted.
    bool fallback = false;
};

/**
 * Importance weights
 *   rho_j ∝ exp(-(S_j + lambda sum_k (u_hat_k - u_bar_k)^T Sigma^-1 eps_jk) / lambda).
 *
 * The smallest exponent argument is subtracted before exponentiation so the
 * best candidate always maps to exp(0) = 1.
 */
template <typename Control, int M>
WeightResult mppi_weights(std::span<const double> scores, const Candidates<Control>& candidates,
                          const ControlSequence<Control>& u_hat, const MppiConfig<M>& cfg)
{
    const std::size_t K = scores.size();
    std::vector<double> arg(K);
    const bool has_nominal = !cfg.u_nominal.empty();
    Covariance<M> sigma_inv = Covariance<M>::Zero();
    if (has_nominal) {
        sigma_inv = Eigen::LLT<Covariance<M>>(cfg.sigma).solve(Covariance<M>::Identity());
    }
    for (std::size_t j = 0; j < K; ++j) {
        double correction = 0.0;
        if (has_nominal) {
            const auto eps = candidates.perturbation(j);
            for (std::size_t k = 0; k < u_hat.size(); ++k) {
                correction += (u_hat[k] - cfg.u_nominal[k]).dot(sigma_inv * eps[k]);
            }
        }
        arg[j] = (scores[j] + cfg.lambda * correction) / cfg.lambda;
    }
    WeightResult out;
    out.weights.assign(K, 0.0);
    const double lo = *std::min_element(arg.begin(), arg.end());
    double total = 0.0;
    if (std::isfinite(lo)) {
        for (std::size_t j = 0; j < K; ++j) {
            out.weights[j] = std::exp(-(arg[j] - lo));
            total += out.weights[j];
        }
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
        out.weights.assign(K, 1.0 / static_cast<double>(K));
        out.fallback = true;
        return out;
    }
    for (double& w : out.weights) {
        w /= total;
    }
    return out;
}

/// u* = clamp(u_hat + sum_j rho_j eps_j).
template <SystemModel Model>
ControlSequence<typename Model::Control> update_control(
    const Model& model, const ControlSequence<typename Model::Control>& u_hat,
    std::span<const double> weights, const Candidates<typename Model::Control>& candidates)
{
    using Control = typename Model::Control;
    ControlSequence<Control> out = u_hat;
    for (std::size_t k = 0; k < u_hat.size(); ++k) {
        Control delta = Control::Zero();
        for (std::size_t j = 0; j < weights.size(); ++j) {
            delta += weights[j] * candidates.perturbations[j * candidates.horizon + k];
        }
        out[k] = model.clamp(u_hat[k] + delta);
    }
    return out;
}

/// Drops the first step and repeats the last one.
template <typename Control>
ControlSequence<Control> shift_warm_start(const ControlSequence<Control>& u)
{
    if (u.size() == 0) {
        throw std::invalid_argument("shift_warm_start: empty sequence");
    }
    std::vector<Control> s(u.steps.begin() + 1, u.steps.end());
    s.push_back(u.steps.back());
    return ControlSequence<Control>(std::move(s));
}

struct SolveDiagnostics
{
    std::vector<CandidateScore> candidates;
    std::vector<double> weights;
    // Statistics of the updated sequence u*, re-evaluated on the same particles.
    CandidateScore chosen;
    bool weight_fallback = false;
    // CVaR_{beta_s}(-M) of u* is positive: the safety constraint is not met.
    bool infeasible = false;
    double wall_ms = 0.0;
};

template <SystemModel Model>
struct SolveResult
{
    typename Model::Control u_first;
    ControlSequence<typename Model::Control> u_star;
    ControlSequence<typename Model::Control> u_hat_next;
    SolveDiagnostics diagnostics;
};

namespace detail {

enum StreamTag : std::uint64_t
{
    kThetaStream = 1,
    kCandidateStream = 2,
    kRolloutStream = 3,
};

template <SystemModel Model, int M, typename Scorer>
SolveResult<Model> solve_with(const Model& model, const typename Model::State& x,
                              std::span<const typename Model::Param> thetas,
                              const ControlSequence<typename Model::Control>& u_hat,
                              const MppiConfig<M>& cfg, const Stream& rng, Scorer&& scorer)
{
    const auto t0 = std::chrono::steady_clock::now();
    if (u_hat.size() != cfg.horizon) {
        throw std::invalid_argument("warm start length differs from horizon H");
    }
    const Stream rollout_rng = rng.split(kRolloutStream);
    const auto cand = sample_candidates(model, u_hat, cfg, rng.split(kCandidateStream));
    const RolloutBatch batch = rollout_batch(model, x, cand, thetas, rollout_rng, cfg.workers);

    SolveResult<Model> out;
    auto& diag = out.diagnostics;
    diag.candidates.reserve(cand.count);
    std::vector<double> scores(cand.count);
    for (std::size_t j = 0; j < cand.count; ++j) {
        diag.candidates.push_back(scorer(batch.cost_row(j), batch.margin_row(j)));
        scores[j] = diag.candidates.back().score;
    }
    WeightResult w = mppi_weights(scores, cand, u_hat, cfg);
    diag.weight_fallback = w.fallback;
    out.u_star = update_control(model, u_hat, w.weights, cand);
    diag.weights = std::move(w.weights);

    // Evaluate u* itself under the same particles and noise streams.
    std::vector<double> costs(thetas.size());
    std::vector<double> margins(thetas.size());
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        Stream s = rollout_rng.split(i);
        const RolloutOutcome r = rollout(model, x, std::span(out.u_star.steps), thetas[i], s);
        costs[i] = r.cost;
        margins[i] = r.margin;
    }
    diag.chosen = scorer(costs, margins);
    diag.infeasible = diag.chosen.cvar_violation > 0.0;

    out.u_first = out.u_star[0];
    out.u_hat_next = shift_warm_start(out.u_star);
    diag.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace detail

/// One receding-horizon solve of the risk-sensitive belief-space MPPI problem.
/// The belief must already include the latest observation.
template <SystemModel Model, int M = Model::kControlDim>
SolveResult<Model> solve_step(const Model& model, const typename Model::State& x,
                              const ParticleBelief<typename Model::Param>& belief,
                              const ControlSequence<typename Model::Control>& u_hat,
                              const MppiConfig<M>& cfg, const Stream& rng)
{
    Stream theta_rng = rng.split(detail::kThetaStream);
    const auto thetas = sample(belief, cfg.num_particles, theta_rng);
    return detail::solve_with(model, x, std::span<const typename Model::Param>(thetas), u_hat, cfg,
                              rng, [&](std::span<const double> c, std::span<const double> m) {
                                  return score(c, m, cfg);
                              });
}

/// Chance-constrained MPPI baseline: same pipeline, probability-of-violation
/// penalty, no risk term.
template <SystemModel Model, int M = Model::kControlDim>
SolveResult<Model> cc_solve_step(const Model& model, const typename Model::State& x,
                                 const ParticleBelief<typename Model::Param>& belief,
                                 const ControlSequence<typename Model::Control>& u_hat,
                                 const MppiConfig<M>& cfg, const ChanceConfig& cc,
                                 const Stream& rng)
{
    std::vector<typename Model::Param> thetas;
    if (cc.mean_theta) {
        thetas.push_back(posterior_mean(belief));
    } else {
        Stream theta_rng = rng.split(detail::kThetaStream);
        thetas = sample(belief, cfg.num_particles, theta_rng);
    }
    return detail::solve_with(model, x, std::span<const typename Model::Param>(thetas), u_hat, cfg,
                              rng, [&](std::span<const double> c, std::span<const double> m) {
                                  return cc_score(c, m, cfg, cc);
                              });
}

/// Owns the warm start between solves. One driver at a time.
template <SystemModel Model, int M = Model::kControlDim>
class Controller
{
  public:
    using Control = typename Model::Control;

    Controller(Model model, MppiConfig<M> cfg, Variant variant, ChanceConfig cc,
               std::uint64_t seed)
        : model_(std::move(model)), cfg_(std::move(cfg)), cc_(cc), variant_(variant), root_(seed)
    {
        if (variant_ == Variant::Neutral) {
            cfg_.lambda_r = 0.0;
            cfg_.mu = 0.0;
        }
        cfg_.validate();
        u_hat_ = ControlSequence<Control>::zeros(cfg_.horizon);
    }

    SolveResult<Model> solve(const typename Model::State& x,
                             const ParticleBelief<typename Model::Param>& belief)
    {
        const Stream rng = root_.split(solves_++);
        SolveResult<Model> r = variant_ == Variant::Chance
                                   ? cc_solve_step(model_, x, belief, u_hat_, cfg_, cc_, rng)
                                   : solve_step(model_, x, belief, u_hat_, cfg_, rng);
        u_hat_ = r.u_hat_next;
        return r;
    }

    [[nodiscard]] const ControlSequence<Control>& warm_start() const noexcept { return u_hat_; }
    [[nodiscard]] const MppiConfig<M>& config() const noexcept { return cfg_; }
    [[nodiscard]] std::uint64_t solve_count() const noexcept { return solves_; }

  private:
    Model model_;
    MppiConfig<M> cfg_;
    ChanceConfig cc_;
    Variant variant_;
    Stream root_;
    std::uint64_t solves_ = 0;
    ControlSequence<Control> u_hat_;
};

}  // namespace rsmppi
