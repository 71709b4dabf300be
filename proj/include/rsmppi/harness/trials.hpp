#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "rsmppi/harness/config.hpp"
#include "rsmppi/harness/episode.hpp"

namespace rsmppi::harness {

/// One configuration of a sweep.
struct Cell
{
    Variant variant = Variant::Cvar;
    double beta_s = 0.95;
    double beta_c = 0.95;
    double lambda_r = 0.5;

    [[nodiscard]] std::string label() const
    {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%s_bs%g_bc%g_lr%g", to_string(variant).c_str(), beta_s,
                      beta_c, lambda_r);
        return buf;
    }
};

/// Cartesian product of the sweep lists. beta_c follows beta_s when its list is empty.
inline std::vector<Cell> sweep_cells(const ExperimentConfig& cfg)
{
    std::vector<Cell> cells;
    for (const double bs : cfg.beta_s_list) {
        const std::vector<double> bcs = cfg.beta_c_list.empty() ? std::vector<double>{bs}
                                                                 : cfg.beta_c_list;
        for (const double bc : bcs) {
            for (const double lr : cfg.lambda_r_list) {
                cells.push_back({cfg.variant, bs, bc, lr});
            }
        }
    }
    return cells;
}

inline ExperimentConfig apply_cell(ExperimentConfig cfg, const Cell& cell)
{
    cfg.variant = cell.variant;
    cfg.mppi.beta_s = ConfidenceLevel(cell.beta_s);
    cfg.mppi.beta_c = ConfidenceLevel(cell.beta_c);
    cfg.mppi.lambda_r = cell.lambda_r;
    return cfg;
}

/// One row of the metrics table.
struct MetricsRow
{
    std::string label;
    std::size_t trials = 0;     // requested
    std::size_t completed = 0;
    std::size_t failed = 0;     // raised during the episode, excluded
    double success_rate = 0.0;  // %
    double contact_rate = 0.0;  // %
    double mean_force = 0.0;    // N, mean over episodes of per-step mean force
    double max_force = 0.0;     // N
    double min_margin = 0.0;    // min over episodes of per-step h
    double min_clearance = 0.0;
    double min_env_margin = 0.0;
    double min_grasp_margin = 0.0;
    double mean_cvar = 0.0;     // mean per-solve CVaR_{beta_s}(-M_H) of u*
    double final_distance = 0.0;  // mm, smoothed
    double wall_ms_per_step = 0.0;
};

inline MetricsRow aggregate(const std::string& label, const std::vector<EpisodeRecord>& records,
                            std::size_t requested, std::size_t failed)
{
    MetricsRow row;
    row.label = label;
    row.trials = requested;
    row.failed = failed;
    row.completed = records.size();
    if (records.empty()) {
        return row;
    }
    std::size_t successes = 0;
    std::size_t contacts = 0;
    double force = 0.0, cvar = 0.0, dist = 0.0, wall = 0.0;
    row.min_margin = row.min_clearance = row.min_env_margin = row.min_grasp_margin =
        std::numeric_limits<double>::infinity();
    for (const auto& r : records) {
        const EpisodeSummary s = summarize(r);
        successes += r.success ? 1 : 0;
        contacts += s.contact ? 1 : 0;
        force += s.mean_force;
        row.max_force = std::max(row.max_force, s.max_force);
        row.min_margin = std::min(row.min_margin, s.min_margin);
        row.min_clearance = std::min(row.min_clearance, s.min_clearance);
        row.min_env_margin = std::min(row.min_env_margin, s.min_env_margin);
        row.min_grasp_margin = std::min(row.min_grasp_margin, s.min_grasp_margin);
        cvar += s.mean_cvar;
        dist += r.final_distance;
        wall += s.wall_ms_per_step;
    }
    const double n = static_cast<double>(records.size());
    row.success_rate = 100.0 * static_cast<double>(successes) / n;
    row.contact_rate = 100.0 * static_cast<double>(contacts) / n;
    row.mean_force = force / n;
    row.mean_cvar = cvar / n;
    row.final_distance = dist / n;
    row.wall_ms_per_step = wall / n;
    return row;
}

struct TrialsResult
{
    Cell cell;
    std::vector<EpisodeRecord> records;
    std::vector<std::string> errors;
    MetricsRow metrics;
};

/// Runs `n_trials` paired episodes of one cell. Trial i uses trial_seed(root, i)
/// whatever the cell, so cells differ only in the controller settings.
inline TrialsResult run_trials(const ExperimentConfig& base, const Cell& cell,
                               std::size_t n_trials, const EpisodeOptions& opt = {})
{
    if (n_trials < 1) {
        throw std::invalid_argument("run_trials: trial count must be at least 1");
    }
    const ExperimentConfig cfg = apply_cell(base, cell);
    cfg.validate();
    TrialsResult out;
    out.cell = cell;
    for (std::size_t i = 0; i < n_trials; ++i) {
        try {
            EpisodeRecord r = run_episode(cfg, trial_seed(cfg.seed, i), opt);
            r.label = cell.label();
            r.trial = i;
            out.records.push_back(std::move(r));
        } catch (const std::exception& e) {
            out.errors.push_back("trial " + std::to_string(i) + ": " + e.what());
        }
    }
    out.metrics = aggregate(cell.label(), out.records, n_trials, out.errors.size());
    return out;
}

}  // namespace rsmppi::harness
