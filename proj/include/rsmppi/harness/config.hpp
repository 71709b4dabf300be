#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "rsmppi/controller.hpp"
#include "rsmppi/random.hpp"
#include "rsmppi/slot2d.hpp"

namespace rsmppi::harness {

using json = nlohmann::json;

inline std::string to_string(Variant v)
{
    switch (v) {
        case Variant::Cvar: return "cvar";
        case Variant::Chance: return "cc";
        case Variant::Neutral: return "neutral";
    }
    return "cvar";
}

inline Variant parse_variant(const std::string& s)
{
    if (s == "cvar") return Variant::Cvar;
    if (s == "cc") return Variant::Chance;
    if (s == "neutral") return Variant::Neutral;
    throw std::invalid_argument("unknown controller variant '" + s + "' (expected cvar|cc|neutral)");
}

/// Controller settings used on the slot testbed. Differs from the MppiConfig
/// defaults in particle count, temperature and perturbation spread.
inline MppiConfig<2> testbed_mppi(double sigma = 10.0)
{
    MppiConfig<2> m;
    m.num_particles = 64;
    m.lambda = 4.0;
    m.sigma = Covariance<2>::Identity() * sigma * sigma;
    return m;
}

/// Everything needed to reproduce a sweep.
struct ExperimentConfig
{
    MppiConfig<2> mppi = testbed_mppi(10.0);
    double sigma = 10.0;  // perturbation std per control axis, mm/s; Sigma = sigma^2 I
    ChanceConfig chance;
    slot2d::Params task;

    // Belief
    std::size_t n_filter = 1000;
    std::optional<double> n_thr;   // resampling ESS threshold; default n_filter / 2
    double sigma_p = 12.0;         // initial slot-center spread, mm
    double sigma_w_slot = 1.0;     // half-width jitter of the true slot, mm

    // Episodes
    double start_height = 50.0;    // object center above the opening, mm
    double start_lateral_std = 10.0;
    double nominal_center = 0.0;
    double abort_force_factor = 10.0;
    int savgol_window = 7;
    int savgol_degree = 2;

    // Sweep
    std::size_t trials = 50;
    std::size_t max_steps = 100;   // T
    std::uint64_t seed = 0;
    Variant variant = Variant::Cvar;
    std::vector<double> beta_s_list{0.5, 0.9, 0.95};
    std::vector<double> beta_c_list;  // empty: beta_c tracks beta_s
    std::vector<double> lambda_r_list{0.5};
    std::string out_dir = "out";

    [[nodiscard]] double ess_threshold() const
    {
        return n_thr.value_or(static_cast<double>(n_filter) / 2.0);
    }

    void validate() const
    {
        mppi.validate();
        if (trials < 1) throw std::invalid_argument("trial count must be at least 1");
        if (max_steps < 1) throw std::invalid_argument("T must be at least 1");
        if (n_filter < 1) throw std::invalid_argument("N_filter must be at least 1");
        if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
        if (!(sigma_p >= 0.0) || !(sigma_w_slot >= 0.0)) {
            throw std::invalid_argument("belief spreads must be nonnegative");
        }
        if (!(task.sigma_v > 0.0)) throw std::invalid_argument("sigma_v must be positive");
        if (!(task.geometry.depth > 0.0) || !(task.geometry.object_half > 0.0)) {
            throw std::invalid_argument("slot depth and object half-width must be positive");
        }
        for (double b : beta_s_list) (void)ConfidenceLevel(b);
        for (double b : beta_c_list) (void)ConfidenceLevel(b);
        for (double l : lambda_r_list) {
            if (!(l >= 0.0 && l <= 1.0)) throw std::invalid_argument("lambda_r must lie in [0,1]");
        }
        if (beta_s_list.empty() || lambda_r_list.empty()) {
            throw std::invalid_argument("beta_s and lambda_r sweep lists must be nonempty");
        }
    }
};

namespace detail {

// Reads known keys from a section and rejects anything else, so typos fail loudly.
class Section
{
  public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name))
    {
        if (!j_.is_object()) throw std::invalid_argument("config section '" + name_ + "' must be an object");
    }
    template <typename T>
    void read(const char* key, T& out)
    {
        seen_.insert(key);
        if (auto it = j_.find(key); it != j_.end() && !it->is_null()) {
            try {
                if constexpr (std::is_same_v<T, std::optional<double>>) {
                    out = it->template get<double>();
                } else {
                    out = it->template get<T>();
                }
            } catch (const json::exception& e) {
                throw std::invalid_argument("config key '" + name_ + "." + key + "': " + e.what());
            }
        }
    }
    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                throw std::invalid_argument("unknown config key '" + name_ + "." + it.key() + "'");
            }
        }
    }

  private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline json to_json(const ExperimentConfig& c)
{
    const auto& g = c.task.geometry;
    json j;
    j["mppi"] = {{"K", c.mppi.num_candidates}, {"H", c.mppi.horizon},
                 {"N_p", c.mppi.num_particles}, {"lambda", c.mppi.lambda},
                 {"sigma", c.sigma}, {"workers", c.mppi.workers}};
    j["risk"] = {{"beta_c", c.mppi.beta_c.value()}, {"beta_s", c.mppi.beta_s.value()},
                 {"lambda_r", c.mppi.lambda_r}, {"mu", c.mppi.mu}};
    j["chance"] = {{"delta_H", c.chance.delta_h}, {"mu_cc", c.chance.mu_cc},
                   {"mean_theta", c.chance.mean_theta}};
    j["task"] = {{"d_min", c.task.d_min},       {"eps_p", c.task.eps_p},
                 {"f_env_max", c.task.f_env_max}, {"f_grasp_max", c.task.f_grasp_max},
                 {"dt", c.task.dt},             {"sigma_w", c.task.sigma_w},
                 {"u_max", c.task.u_max},       {"k_contact", c.task.k_contact},
                 {"grasp_gain", c.task.grasp_gain}, {"q_pos", c.task.q_pos},
                 {"r_u", c.task.r_u},           {"q_terminal", c.task.q_terminal},
                 {"y_align", c.task.y_align},   {"w_floor", c.task.w_floor}};
    j["geometry"] = {{"depth", g.depth},           {"r_obj", g.object_half},
                     {"w_slot", g.nominal_half_width}, {"stored_block", g.stored_block},
                     {"w_env", g.block_width},     {"h_env", g.block_height}};
    j["filter"] = {{"N_filter", c.n_filter}, {"sigma_v", c.task.sigma_v},
                   {"sigma_p", c.sigma_p},   {"sigma_w_slot", c.sigma_w_slot}};
    j["filter"]["N_thr"] = c.n_thr ? json(*c.n_thr) : json(nullptr);
    j["episode"] = {{"start_height", c.start_height},
                    {"start_lateral_std", c.start_lateral_std},
                    {"nominal_center", c.nominal_center},
                    {"abort_force_factor", c.abort_force_factor},
                    {"savgol_window", c.savgol_window},
                    {"savgol_degree", c.savgol_degree}};
    j["experiment"] = {{"trials", c.trials},       {"T", c.max_steps},
                       {"seed", c.seed},           {"variant", to_string(c.variant)},
                       {"beta_s", c.beta_s_list},  {"beta_c", c.beta_c_list},
                       {"lambda_r", c.lambda_r_list}, {"out", c.out_dir}};
    return j;
}

/// Overlays the keys present in `j` onto `base`.
inline ExperimentConfig from_json(const json& j, ExperimentConfig c = {})
{
    if (!j.is_object()) throw std::invalid_argument("config root must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        static const std::set<std::string> known{"mppi",   "risk",    "chance",    "task",
                                                 "geometry", "filter", "episode", "experiment"};
        if (!known.count(it.key())) throw std::invalid_argument("unknown config section '" + it.key() + "'");
    }
    const json empty = json::object();
    const auto sec = [&](const char* name) -> const json& {
        return j.contains(name) ? j.at(name) : empty;
    };
    {
        detail::Section s(sec("mppi"), "mppi");
        s.read("K", c.mppi.num_candidates);
        s.read("H", c.mppi.horizon);
        s.read("N_p", c.mppi.num_particles);
        s.read("lambda", c.mppi.lambda);
        s.read("sigma", c.sigma);
        s.read("workers", c.mppi.workers);
        s.finish();
    }
    {
        detail::Section s(sec("risk"), "risk");
        double bc = c.mppi.beta_c.value();
        double bs = c.mppi.beta_s.value();
        s.read("beta_c", bc);
        s.read("beta_s", bs);
        c.mppi.beta_c = ConfidenceLevel(bc);
        c.mppi.beta_s = ConfidenceLevel(bs);
        s.read("lambda_r", c.mppi.lambda_r);
        s.read("mu", c.mppi.mu);
        s.finish();
    }
    {
        detail::Section s(sec("chance"), "chance");
        s.read("delta_H", c.chance.delta_h);
        s.read("mu_cc", c.chance.mu_cc);
        s.read("mean_theta", c.chance.mean_theta);
        s.finish();
    }
    {
        detail::Section s(sec("task"), "task");
        s.read("d_min", c.task.d_min);
        s.read("eps_p", c.task.eps_p);
        s.read("f_env_max", c.task.f_env_max);
        s.read("f_grasp_max", c.task.f_grasp_max);
        s.read("dt", c.task.dt);
        s.read("sigma_w", c.task.sigma_w);
        s.read("u_max", c.task.u_max);
        s.read("k_contact", c.task.k_contact);
        s.read("grasp_gain", c.task.grasp_gain);
        s.read("q_pos", c.task.q_pos);
        s.read("r_u", c.task.r_u);
        s.read("q_terminal", c.task.q_terminal);
        s.read("y_align", c.task.y_align);
        s.read("w_floor", c.task.w_floor);
        s.finish();
    }
    {
        auto& g = c.task.geometry;
        detail::Section s(sec("geometry"), "geometry");
        s.read("depth", g.depth);
        s.read("r_obj", g.object_half);
        s.read("w_slot", g.nominal_half_width);
        s.read("stored_block", g.stored_block);
        s.read("w_env", g.block_width);
        s.read("h_env", g.block_height);
        s.finish();
    }
    {
        detail::Section s(sec("filter"), "filter");
        s.read("N_filter", c.n_filter);
        s.read("sigma_v", c.task.sigma_v);
        s.read("sigma_p", c.sigma_p);
        s.read("sigma_w_slot", c.sigma_w_slot);
        s.read("N_thr", c.n_thr);
        s.finish();
    }
    {
        detail::Section s(sec("episode"), "episode");
        s.read("start_height", c.start_height);
        s.read("start_lateral_std", c.start_lateral_std);
        s.read("nominal_center", c.nominal_center);
        s.read("abort_force_factor", c.abort_force_factor);
        s.read("savgol_window", c.savgol_window);
        s.read("savgol_degree", c.savgol_degree);
        s.finish();
    }
    {
        detail::Section s(sec("experiment"), "experiment");
        s.read("trials", c.trials);
        s.read("T", c.max_steps);
        s.read("seed", c.seed);
        std::string variant = to_string(c.variant);
        s.read("variant", variant);
        c.variant = parse_variant(variant);
        s.read("beta_s", c.beta_s_list);
        s.read("beta_c", c.beta_c_list);
        s.read("lambda_r", c.lambda_r_list);
        s.read("out", c.out_dir);
        s.finish();
    }
    c.mppi.sigma = Covariance<2>::Identity() * c.sigma * c.sigma;
    return c;
}

inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config file '" + path + "': " + e.what());
    }
    return from_json(j);
}

/// 16 hex digits identifying the configuration content. The output directory
/// is not part of the content.
inline std::string config_hash(const ExperimentConfig& c)
{
    json j = to_json(c);
    j["experiment"].erase("out");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

}  // namespace rsmppi::harness
