// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 on failure.
//
//   acceptance <1..8 | all> [--workdir DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "rsmppi/belief.hpp"
#include "rsmppi/controller.hpp"
#include "rsmppi/harness/config.hpp"
#include "rsmppi/harness/episode.hpp"
#include "rsmppi/harness/trials.hpp"
#include "rsmppi/harness/verify.hpp"
#include "rsmppi/random.hpp"
#include "rsmppi/risk.hpp"
#include "rsmppi/slot2d.hpp"

#ifndef RSMPPI_CLI
#define RSMPPI_CLI "rsmppi"
#endif

namespace fs = std::filesystem;
using namespace rsmppi;
using namespace rsmppi::harness;

namespace {

struct Outcome
{
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[1024];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Sorted-descending mean of the k largest values.
double top_k_mean(std::vector<double> v, std::size_t k)
{
    std::sort(v.begin(), v.end(), std::greater<>());
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += v[i];
    return s / static_cast<double>(k);
}

// ---------------------------------------------------------------------------

Outcome risk_oracle()
{
    const std::vector<double> betas{0.5, 0.7, 0.9, 0.95, 0.99};
    Stream rng(20240601);
    std::size_t mismatches = 0, order_violations = 0, monotone_violations = 0;
    double worst = 0.0;
    const std::size_t n_sets = 1000;
    for (std::size_t s = 0; s < n_sets; ++s) {
        Stream r = rng.split(s);
        // N a multiple of 100 makes (1 - beta) N an integer for every listed beta.
        const std::size_t n = 100 * (1 + static_cast<std::size_t>(r.uniform() * 5));
        std::vector<double> v(n);
        const double scale = std::exp(3.0 * r.normal());
        const bool heavy = r.uniform() < 0.3;
        for (double& x : v) {
            x = scale * r.normal();
            if (heavy) x = std::exp(x / std::max(scale, 1.0));
        }
        // A weighted copy exercises the general Rockafellar-Uryasev path.
        std::vector<double> w(n);
        double tot = 0.0;
        for (double& x : w) tot += (x = r.uniform() + 0.05);
        for (double& x : w) x /= tot;
        const SampleSet uni = SampleSet::uniform(v);
        const SampleSet weighted(v, w);
        double prev_u = -INFINITY, prev_w = -INFINITY;
        for (const double b : betas) {
            const ConfidenceLevel beta(b);
            const std::size_t k = static_cast<std::size_t>(std::llround((1.0 - b) * static_cast<double>(n)));
            const double oracle = top_k_mean(v, k);
            const double tail = cvar_tail_average(v, beta);
            const double ru = cvar_ru(uni, beta);
            const double tol = 1e-9 * std::max(1.0, std::abs(oracle));
            const double err = std::max(std::abs(tail - ru), std::abs(ru - oracle));
            worst = std::max(worst, err / std::max(1.0, std::abs(oracle)));
            mismatches += err > tol ? 1 : 0;
            for (const SampleSet* set : {&uni, &weighted}) {
                const double c = cvar_ru(*set, beta);
                if (value_at_risk(*set, beta) > c + 1e-12 * std::max(1.0, std::abs(c))) ++order_violations;
                double& prev = set == &uni ? prev_u : prev_w;
                if (c < prev - 1e-12 * std::max(1.0, std::abs(c))) ++monotone_violations;
                prev = c;
            }
        }
    }
    Outcome o;
    o.pass = mismatches == 0 && order_violations == 0 && monotone_violations == 0;
    o.detail = fmt("%zu sets, tail-average vs RU mismatches %zu (worst rel err %.2e), VaR>CVaR %zu, "
                   "non-monotone %zu",
                   n_sets, mismatches, worst, order_violations, monotone_violations);
    return o;
}

Outcome thm1(const ExperimentConfig& cfg)
{
    Outcome o;
    o.pass = true;
    for (const double b : {0.9, 0.95}) {
        const Thm1Report r = verify_thm1(cfg, b, 10000, cfg.seed);
        const bool ok = !r.vacuous && r.pass;
        o.pass = o.pass && ok;
        o.detail += fmt("beta_s=%.2f: P(M>=0)=%.4f vs %.4f%s; ", b, r.prob_safe, r.threshold,
                        r.vacuous ? " (vacuous)" : "");
    }
    return o;
}

Outcome thm2(const ExperimentConfig& cfg)
{
    const std::vector<double> lambdas{0.5, 0.1, 0.01, 0.001, 1e-4, 1e-5, 1e-6, 1e-9};
    const Thm2Report cross = verify_thm2(crossover_batch(), lambdas, ConfidenceLevel(0.5), ConfidenceLevel(0.95));
    const bool cross_switches = cross.argmin_per_lambda.front() != cross.argmin_per_lambda.back();
    std::size_t evaluated = 1, passed = cross.pass ? 1 : 0, empty = 0;
    const Stream root(cfg.seed + 2);
    for (std::size_t b = 1; b < 100; ++b) {
        const Thm2Report r =
            verify_thm2(testbed_batch(cfg, root.split(b)()), lambdas, cfg.mppi.beta_c, cfg.mppi.beta_s);
        if (r.empty_feasible) {
            ++empty;
            continue;
        }
        ++evaluated;
        passed += r.pass ? 1 : 0;
    }
    Outcome o;
    o.pass = cross.pass && cross_switches && passed == evaluated;
    o.detail = fmt("100 batches: %zu/%zu converge to the risk-neutral argmin (%zu with empty feasible set); "
                   "crossover argmin %zu -> %zu",
                   passed, evaluated, empty, cross.argmin_per_lambda.front(), cross.argmin_per_lambda.back());
    return o;
}

Outcome thm3(ExperimentConfig cfg)
{
    cfg.mppi.beta_s = ConfidenceLevel(0.95);
    cfg.mppi.beta_c = ConfidenceLevel(0.95);
    const Thm3Report r = verify_thm3(cfg, 5, 400);
    Outcome o;
    o.pass = r.pass;
    o.detail = fmt("joint safety %.4f over %zu feasible episodes (%zu excluded), bound %.4f, threshold %.4f, "
                   "slack %+.4f",
                   r.joint_safe, r.included, r.excluded, r.bound, r.threshold, r.slack);
    return o;
}

Outcome table_trend(const ExperimentConfig& base)
{
    ExperimentConfig cfg = base;
    cfg.sigma_p = 12.0;
    std::vector<MetricsRow> rows;
    for (const double b : {0.5, 0.9, 0.95}) {
        rows.push_back(run_trials(cfg, Cell{Variant::Cvar, b, b, cfg.mppi.lambda_r}, 50).metrics);
    }
    const double c50 = rows[0].contact_rate, c90 = rows[1].contact_rate, c95 = rows[2].contact_rate;
    const double s50 = rows[0].success_rate / 100.0, s95 = rows[2].success_rate / 100.0;
    const double n50 = static_cast<double>(rows[0].completed), n95 = static_cast<double>(rows[2].completed);
    const double se = std::sqrt(s50 * (1 - s50) / n50 + s95 * (1 - s95) / n95);
    const bool trend = c50 > c90 && c50 > c95;
    const bool low = c90 <= 5.0 && c95 <= 5.0;
    const bool success = (s95 - s50) >= -1.645 * se;
    const bool complete = rows[0].failed == 0 && rows[1].failed == 0 && rows[2].failed == 0;
    Outcome o;
    o.pass = trend && low && success && complete;
    o.detail = fmt("contact %% 0.5/0.9/0.95 = %.0f/%.0f/%.0f, success %% = %.0f/%.0f/%.0f "
                   "(trend %s, <=5%% %s, success non-inferior %s)",
                   c50, c90, c95, rows[0].success_rate, rows[1].success_rate, rows[2].success_rate,
                   trend ? "ok" : "no", low ? "ok" : "no", success ? "ok" : "no");
    return o;
}

Outcome score_sensitivity(const ExperimentConfig& cfg)
{
    MppiConfig<2> m = cfg.mppi;
    m.beta_s = ConfidenceLevel(0.95);
    const ChanceConfig cc = cfg.chance;
    Stream rng(606);
    std::size_t cvar_ok = 0, cc_ok = 0;
    const std::size_t n_batches = 1000;
    for (std::size_t b = 0; b < n_batches; ++b) {
        Stream r = rng.split(b);
        const std::size_t np = 8 + static_cast<std::size_t>(r.uniform() * 57);
        std::vector<double> costs(np), margins(np);
        for (double& c : costs) c = 10.0 * r.uniform();
        for (double& x : margins) x = 0.2 * r.uniform() + 1e-6;
        const std::size_t bad = static_cast<std::size_t>(r.uniform() * static_cast<double>(np));
        std::vector<double> s_cvar, s_cc, pen_cc;
        for (const double viol : {-1.0, -10.0, -100.0}) {
            margins[bad] = viol;
            s_cvar.push_back(score(costs, margins, m).score);
            const CandidateScore c = cc_score(costs, margins, m, cc);
            s_cc.push_back(c.score);
            pen_cc.push_back(c.score - c.mean_cost);
            // Independent check of the CVaR term itself.
            std::vector<double> neg(np);
            for (std::size_t i = 0; i < np; ++i) neg[i] = -margins[i];
            const double expect = top_k_mean(neg, static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(np) - 1e-9)));
            if (std::abs(score(costs, margins, m).cvar_violation - expect) > 1e-12) s_cvar.back() = NAN;
        }
        cvar_ok += (s_cvar[0] < s_cvar[1] && s_cvar[1] < s_cvar[2]) ? 1 : 0;
        cc_ok += (pen_cc[0] == pen_cc[1] && pen_cc[1] == pen_cc[2]) ? 1 : 0;
    }
    Outcome o;
    o.pass = cvar_ok == n_batches && cc_ok == n_batches;
    o.detail = fmt("%zu batches: CVaR score strictly increasing in %zu, P_viol penalty constant in %zu",
                   n_batches, cvar_ok, cc_ok);
    return o;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Outcome determinism(const fs::path& workdir)
{
    const fs::path a = workdir / "det_a", b = workdir / "det_b";
    fs::remove_all(a);
    fs::remove_all(b);
    fs::create_directories(workdir);
    const auto run = [&](const fs::path& out) {
        const std::string cmd = std::string("\"") + RSMPPI_CLI + "\" run --trials 10 --seed 42 --out \"" +
                                out.string() + "\" > \"" + (workdir / (out.filename().string() + ".log")).string() +
                                "\" 2>&1";
        return std::system(cmd.c_str());
    };
    const int ra = run(a), rb = run(b);
    Outcome o;
    if (ra != 0 || rb != 0) {
        o.detail = fmt("CLI exit codes %d, %d", ra, rb);
        return o;
    }
    std::string diff;
    for (const char* f : {"metrics.csv", "episodes.jsonl", "traces.csv"}) {
        const std::string x = slurp(a / f), y = slurp(b / f);
        if (x.empty() || x != y) diff += std::string(diff.empty() ? "" : ",") + f;
    }
    o.pass = diff.empty();
    o.detail = diff.empty() ? fmt("metrics.csv, episodes.jsonl, traces.csv identical (%zu bytes of JSONL)",
                                  slurp(a / "episodes.jsonl").size())
                            : "differing or empty: " + diff;
    return o;
}

Outcome posterior_consistency(const ExperimentConfig& cfg)
{
    const slot2d::Model model(cfg.task);
    const double tol = 3.0 * cfg.task.sigma_v / std::sqrt(50.0);
    std::size_t within = 0;
    double worst = 0.0;
    const std::size_t runs = 200;
    for (std::size_t k = 0; k < runs; ++k) {
        const Stream root(trial_seed(cfg.seed + 8, k));
        const TrialSetup setup = draw_trial(cfg, root.split(1));
        Belief b = initial_belief(cfg, model, setup.theta_hat, root.split(2));
        slot2d::State x;
        for (std::size_t t = 0; t < 50; ++t) {
            Stream obs = root.split(3, t);
            const double z = model.observe(setup.theta_true, x, obs);
            Stream res = root.split(4, t);
            b = filter_step(b, [&](const Param& th) { return model.observe_likelihood(z, th, x); },
                            cfg.ess_threshold(), res)
                    .belief;
        }
        const double err = std::abs(posterior_mean(b)[0] - setup.theta_true[0]);
        worst = std::max(worst, err);
        within += err <= tol ? 1 : 0;
    }
    Outcome o;
    const double frac = static_cast<double>(within) / static_cast<double>(runs);
    o.pass = frac >= 0.95;
    o.detail = fmt("%zu/%zu runs within %.2f mm (%.1f%%), worst error %.2f mm", within, runs, tol, 100.0 * frac, worst);
    return o;
}

struct Criterion
{
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv)
{
    std::string which = "all";
    fs::path workdir = fs::temp_directory_path() / "rsmppi_acceptance";
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--workdir" && i + 1 < argc) {
            workdir = argv[++i];
        } else {
            which = a;
        }
    }
    const ExperimentConfig cfg;
    const std::vector<Criterion> all{
        {1, "risk oracle equivalence", 5.0, [] { return risk_oracle(); }},
        {2, "single-solve safety certificate", 120.0, [&] { return thm1(cfg); }},
        {3, "risk-neutral limit on frozen batches", 10.0, [&] { return thm2(cfg); }},
        {4, "receding-horizon joint safety", 1800.0, [&] { return thm3(cfg); }},
        {5, "contact/success trend over beta_s", 3600.0, [&] { return table_trend(cfg); }},
        {6, "CVaR vs chance-constraint sensitivity to violation depth", 10.0, [&] { return score_sensitivity(cfg); }},
        {7, "byte-identical reruns", 600.0, [&] { return determinism(workdir); }},
        {8, "posterior consistency of the slot center", 60.0, [&] { return posterior_consistency(cfg); }},
    };
    bool ok = true;
    bool ran = false;
    for (const auto& c : all) {
        if (which != "all" && which != std::to_string(c.id)) continue;
        ran = true;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_s;
        const bool pass = o.pass && in_time;
        std::printf("[%s] criterion %d: %s: %s; %.1f s (budget %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                    o.detail.c_str(), secs, c.budget_s);
        std::fflush(stdout);
        ok = ok && pass;
    }
    if (!ran) {
        std::fprintf(stderr, "unknown criterion '%s'\n", which.c_str());
        return 2;
    }
    return ok ? 0 : 1;
}
