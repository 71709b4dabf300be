#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsmppi/harness/config.hpp"
#include "rsmppi/harness/episode.hpp"
#include "rsmppi/harness/trials.hpp"

namespace rsmppi::harness {

// Serialization of episode records and metric tables. Wall-clock figures are
// kept out of every file except timing.csv so that the other outputs depend
// only on the configuration and the seed.

namespace detail {

inline json vec(const Eigen::Vector2d& v) { return json::array({v[0], v[1]}); }

inline Eigen::Vector2d vec(const json& j)
{
    if (!j.is_array() || j.size() != 2) throw std::invalid_argument("expected a 2-vector");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline json score_json(const CandidateScore& s)
{
    return {{"mean_cost", s.mean_cost},
            {"cvar_cost", s.cvar_cost},
            {"cvar_violation", s.cvar_violation},
            {"violation_prob", s.violation_prob},
            {"score", s.score}};
}

inline CandidateScore score_from(const json& j)
{
    CandidateScore s;
    s.mean_cost = j.at("mean_cost").get<double>();
    s.cvar_cost = j.at("cvar_cost").get<double>();
    s.cvar_violation = j.at("cvar_violation").get<double>();
    s.violation_prob = j.at("violation_prob").get<double>();
    s.score = j.at("score").get<double>();
    return s;
}

inline std::string num(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace detail

inline json to_json(const StepRecord& s)
{
    json j{{"type", "step"},
           {"t", s.t},
           {"p", detail::vec(s.p)},
           {"u", detail::vec(s.u)},
           {"z", s.z},
           {"belief_mean", detail::vec(s.belief_mean)},
           {"belief_std", detail::vec(s.belief_std)},
           {"ess", s.ess},
           {"resampled", s.resampled},
           {"degenerate", s.degenerate},
           {"chosen", detail::score_json(s.chosen)},
           {"infeasible", s.infeasible},
           {"weight_fallback", s.weight_fallback},
           {"margin", s.margin},
           {"clearance", s.clearance},
           {"env_margin", s.env_margin},
           {"grasp_margin", s.grasp_margin},
           {"contact_force", s.contact_force},
           {"distance", s.distance}};
    if (s.plan_margin_true) j["plan_margin_true"] = *s.plan_margin_true;
    return j;
}

inline StepRecord step_from_json(const json& j)
{
    StepRecord s;
    s.t = j.at("t").get<std::size_t>();
    s.p = detail::vec(j.at("p"));
    s.u = detail::vec(j.at("u"));
    s.z = j.at("z").get<double>();
    s.belief_mean = detail::vec(j.at("belief_mean"));
    s.belief_std = detail::vec(j.at("belief_std"));
    s.ess = j.at("ess").get<double>();
    s.resampled = j.at("resampled").get<bool>();
    s.degenerate = j.at("degenerate").get<bool>();
    s.chosen = detail::score_from(j.at("chosen"));
    s.infeasible = j.at("infeasible").get<bool>();
    s.weight_fallback = j.at("weight_fallback").get<bool>();
    s.margin = j.at("margin").get<double>();
    s.clearance = j.at("clearance").get<double>();
    s.env_margin = j.at("env_margin").get<double>();
    s.grasp_margin = j.at("grasp_margin").get<double>();
    s.contact_force = j.at("contact_force").get<double>();
    s.distance = j.at("distance").get<double>();
    if (j.contains("plan_margin_true")) s.plan_margin_true = j["plan_margin_true"].get<double>();
    return s;
}

inline json belief_json(const Belief& b)
{
    json parts = json::array();
    for (const auto& p : b.particles()) parts.push_back(detail::vec(p));
    return {{"particles", parts}, {"weights", b.weights()}};
}

inline Belief belief_from_json(const json& j)
{
    std::vector<Param> parts;
    for (const auto& p : j.at("particles")) parts.push_back(detail::vec(p));
    return Belief(std::move(parts), j.at("weights").get<std::vector<double>>());
}

/// First line of an episode log: provenance of the whole run.
inline void write_run_header(std::ostream& os, const std::string& cfg_hash, std::uint64_t root_seed)
{
    os << json{{"type", "run"}, {"config_hash", cfg_hash}, {"root_seed", root_seed}}.dump() << '\n';
}

/// Episode as JSON lines: a header, one line per step, a summary.
inline void write_episode_jsonl(std::ostream& os, const EpisodeRecord& r,
                                const std::string& cfg_hash, bool include_belief = false)
{
    json head{{"type", "header"},     {"config_hash", cfg_hash}, {"label", r.label},
              {"trial", r.trial},     {"seed", r.seed},          {"theta_true", detail::vec(r.theta_true)},
              {"theta_hat", detail::vec(r.theta_hat)}, {"start", detail::vec(r.start)}};
    os << head.dump() << '\n';
    for (const auto& s : r.steps) os << to_json(s).dump() << '\n';
    const EpisodeSummary sum = summarize(r);
    json tail{{"type", "summary"},
              {"success", r.success},
              {"aborted", r.aborted},
              {"contact", sum.contact},
              {"min_margin", sum.min_margin},
              {"max_force", sum.max_force},
              {"final_distance", r.final_distance},
              {"steps", r.steps.size()}};
    if (include_belief && r.final_belief) tail["final_belief"] = belief_json(*r.final_belief);
    os << tail.dump() << '\n';
}

struct ParsedEpisode
{
    std::string config_hash;
    EpisodeRecord record;
};

/// Reads every episode from a JSONL stream written by write_episode_jsonl.
inline std::vector<ParsedEpisode> read_episodes_jsonl(std::istream& is)
{
    std::vector<ParsedEpisode> out;
    std::string line;
    bool open = false;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("line " + std::to_string(lineno) + ": " + e.what());
        }
        const std::string type = j.at("type").get<std::string>();
        if (type == "run") {
            continue;
        }
        if (type == "header") {
            if (open) throw std::runtime_error("line " + std::to_string(lineno) + ": header before summary");
            ParsedEpisode p;
            p.config_hash = j.at("config_hash").get<std::string>();
            auto& r = p.record;
            r.label = j.at("label").get<std::string>();
            r.trial = j.at("trial").get<std::size_t>();
            r.seed = j.at("seed").get<std::uint64_t>();
            r.theta_true = detail::vec(j.at("theta_true"));
            r.theta_hat = detail::vec(j.at("theta_hat"));
            r.start = detail::vec(j.at("start"));
            out.push_back(std::move(p));
            open = true;
        } else if (type == "step") {
            if (!open) throw std::runtime_error("line " + std::to_string(lineno) + ": step outside an episode");
            out.back().record.steps.push_back(step_from_json(j));
        } else if (type == "summary") {
            if (!open) throw std::runtime_error("line " + std::to_string(lineno) + ": summary outside an episode");
            auto& r = out.back().record;
            r.success = j.at("success").get<bool>();
            r.aborted = j.at("aborted").get<bool>();
            r.final_distance = j.at("final_distance").get<double>();
            if (j.contains("final_belief")) r.final_belief = belief_from_json(j["final_belief"]);
            open = false;
        } else {
            throw std::runtime_error("line " + std::to_string(lineno) + ": unknown record type '" + type + "'");
        }
    }
    if (open) throw std::runtime_error("truncated episode stream");
    return out;
}

inline const std::vector<std::string>& metrics_columns()
{
    static const std::vector<std::string> cols{
        "label",         "trials",         "completed",        "failed",
        "success_rate",  "contact_rate",   "mean_force",       "max_force",
        "min_margin",    "min_clearance",  "min_env_margin",   "min_grasp_margin",
        "mean_cvar",     "final_distance"};
    return cols;
}

/// metrics.csv: one row per sweep cell, preceded by a provenance comment.
inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows,
                              const std::string& cfg_hash, std::uint64_t root_seed)
{
    os << "# config_hash=" << cfg_hash << " root_seed=" << root_seed << '\n';
    const auto& cols = metrics_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << '\n';
    for (const auto& r : rows) {
        os << r.label << ',' << r.trials << ',' << r.completed << ',' << r.failed << ','
           << detail::num(r.success_rate) << ',' << detail::num(r.contact_rate) << ','
           << detail::num(r.mean_force) << ',' << detail::num(r.max_force) << ','
           << detail::num(r.min_margin) << ',' << detail::num(r.min_clearance) << ','
           << detail::num(r.min_env_margin) << ',' << detail::num(r.min_grasp_margin) << ','
           << detail::num(r.mean_cvar) << ',' << detail::num(r.final_distance) << '\n';
    }
}

inline void write_timing_csv(std::ostream& os, const std::vector<MetricsRow>& rows)
{
    os << "label,wall_ms_per_step\n";
    for (const auto& r : rows) os << r.label << ',' << detail::num(r.wall_ms_per_step) << '\n';
}

/// Per-step trajectories of every episode, flat for plotting.
inline void write_traces_header(std::ostream& os)
{
    os << "label,trial,t,px,py,ux,uy,belief_c,belief_c_std,ess,margin,contact_force,distance\n";
}

inline void write_traces(std::ostream& os, const EpisodeRecord& r)
{
    for (const auto& s : r.steps) {
        os << r.label << ',' << r.trial << ',' << s.t << ',' << detail::num(s.p[0]) << ','
           << detail::num(s.p[1]) << ',' << detail::num(s.u[0]) << ',' << detail::num(s.u[1]) << ','
           << detail::num(s.belief_mean[0]) << ',' << detail::num(s.belief_std[0]) << ','
           << detail::num(s.ess) << ',' << detail::num(s.margin) << ','
           << detail::num(s.contact_force) << ',' << detail::num(s.distance) << '\n';
    }
}

/// Fixed-width text rendering of a metrics table.
inline std::string format_table(const std::vector<MetricsRow>& rows)
{
    std::ostringstream os;
    os << std::left << std::setw(30) << "config" << std::right << std::setw(9) << "success%"
       << std::setw(9) << "contact%" << std::setw(10) << "meanF[N]" << std::setw(10) << "maxF[N]"
       << std::setw(11) << "minM[mm]" << std::setw(10) << "CVaR" << std::setw(10) << "dist[mm]"
       << std::setw(8) << "n" << '\n';
    os << std::fixed;
    for (const auto& r : rows) {
        os << std::left << std::setw(30) << r.label << std::right << std::setprecision(1)
           << std::setw(9) << r.success_rate << std::setw(9) << r.contact_rate << std::setprecision(2)
           << std::setw(10) << r.mean_force << std::setw(10) << r.max_force << std::setw(11)
           << r.min_margin << std::setw(10) << r.mean_cvar << std::setw(10) << r.final_distance
           << std::setw(8) << r.completed << '\n';
    }
    return os.str();
}

/// Recomputes metrics from parsed episodes, grouped by label in first-seen order.
inline std::vector<MetricsRow> metrics_from_episodes(const std::vector<ParsedEpisode>& eps)
{
    std::vector<std::string> order;
    std::map<std::string, std::vector<EpisodeRecord>> groups;
    for (const auto& e : eps) {
        if (!groups.count(e.record.label)) order.push_back(e.record.label);
        groups[e.record.label].push_back(e.record);
    }
    std::vector<MetricsRow> rows;
    for (const auto& label : order) {
        const auto& g = groups[label];
        rows.push_back(aggregate(label, g, g.size(), 0));
    }
    return rows;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& body)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
    f << body;
}

}  // namespace rsmppi::harness
