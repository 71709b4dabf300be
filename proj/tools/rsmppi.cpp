// Command-line driver: trial sweeps, theorem checks, metric tables.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rsmppi/harness/config.hpp"
#include "rsmppi/harness/io.hpp"
#include "rsmppi/harness/trials.hpp"
#include "rsmppi/harness/verify.hpp"

namespace fs = std::filesystem;
using namespace rsmppi;
using namespace rsmppi::harness;

namespace {

struct CommonFlags
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trials;
    std::optional<std::string> variant;
    std::vector<double> beta_s;
    std::vector<double> beta_c;
    std::vector<double> lambda_r;
    std::optional<std::string> out;
};

void add_common(CLI::App* app, CommonFlags& f)
{
    app->add_option("--config", f.config, "JSON configuration file")->check(CLI::ExistingFile);
    app->add_option("--seed", f.seed, "root seed");
    app->add_option("--trials", f.trials, "trials per cell (episodes for thm3)");
    app->add_option("--variant", f.variant, "controller variant")
        ->check(CLI::IsMember({"cvar", "cc", "neutral"}));
    app->add_option("--beta-s", f.beta_s, "safety confidence level(s)")->delimiter(',');
    app->add_option("--beta-c", f.beta_c, "cost confidence level(s)")->delimiter(',');
    app->add_option("--lambda-r", f.lambda_r, "risk weight(s)")->delimiter(',');
    app->add_option("--out", f.out, "output directory");
}

ExperimentConfig resolve(const CommonFlags& f)
{
    ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
    if (f.seed) cfg.seed = *f.seed;
    if (f.trials) cfg.trials = *f.trials;
    if (f.variant) cfg.variant = parse_variant(*f.variant);
    if (!f.beta_s.empty()) cfg.beta_s_list = f.beta_s;
    if (!f.beta_c.empty()) cfg.beta_c_list = f.beta_c;
    if (!f.lambda_r.empty()) cfg.lambda_r_list = f.lambda_r;
    if (f.out) cfg.out_dir = *f.out;
    cfg.validate();
    return cfg;
}

int cmd_run(const ExperimentConfig& cfg)
{
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    const std::string hash = config_hash(cfg);
    write_text_file(dir / "config.json", to_json(cfg).dump(2) + "\n");

    std::ofstream jsonl(dir / "episodes.jsonl", std::ios::binary);
    std::ofstream traces(dir / "traces.csv", std::ios::binary);
    if (!jsonl || !traces) throw std::runtime_error("cannot write outputs under '" + dir.string() + "'");
    write_run_header(jsonl, hash, cfg.seed);
    traces << "# config_hash=" << hash << " root_seed=" << cfg.seed << '\n';
    write_traces_header(traces);

    std::vector<MetricsRow> rows;
    for (const Cell& cell : sweep_cells(cfg)) {
        std::cerr << "[run] " << cell.label() << ": " << cfg.trials << " trials\n";
        const TrialsResult res = run_trials(cfg, cell, cfg.trials);
        for (const auto& e : res.errors) std::cerr << "[run] " << cell.label() << " " << e << '\n';
        for (const auto& r : res.records) {
            write_episode_jsonl(jsonl, r, hash);
            write_traces(traces, r);
        }
        rows.push_back(res.metrics);
    }
    std::ostringstream metrics;
    write_metrics_csv(metrics, rows, hash, cfg.seed);
    write_text_file(dir / "metrics.csv", metrics.str());
    std::ostringstream timing;
    write_timing_csv(timing, rows);
    write_text_file(dir / "timing.csv", timing.str());
    std::cout << format_table(rows);
    std::cout << "wrote " << (dir / "metrics.csv").string() << ", episodes.jsonl, traces.csv, timing.csv\n";
    return 0;
}

int cmd_thm1(const ExperimentConfig& cfg, const std::vector<double>& levels, std::size_t n)
{
    bool ok = true;
    for (const double b : levels) {
        const Thm1Report r = verify_thm1(cfg, b, n, cfg.seed);
        if (r.vacuous) {
            std::printf("thm1 beta_s=%g: vacuous (validation CVaR of the solved sequence %.4f > 0)\n", b,
                        r.validation_cvar);
            ok = false;
            continue;
        }
        std::printf("thm1 beta_s=%g n=%zu: Pr(M_H>=0)=%.4f threshold=%.4f validation CVaR=%.4f "
                    "bias=%.3f mm/s -> %s\n",
                    b, n, r.prob_safe, r.threshold, r.validation_cvar, r.lateral_bias, r.pass ? "PASS" : "FAIL");
        ok = ok && r.pass;
    }
    return ok ? 0 : 1;
}

int cmd_thm2(const ExperimentConfig& cfg, std::size_t batches)
{
    const std::vector<double> lambdas{0.5, 0.1, 0.01, 0.001, 1e-4, 1e-5, 1e-6, 1e-9};
    std::size_t passed = 0, empty = 0, switched = 0;
    const auto report = [&](const Thm2Report& r) {
        if (r.empty_feasible) {
            ++empty;
            return;
        }
        passed += r.pass ? 1 : 0;
        switched += r.argmin_per_lambda.front() != r.argmin_per_lambda.back() ? 1 : 0;
    };
    const Thm2Report cross =
        verify_thm2(crossover_batch(), lambdas, ConfidenceLevel(0.5), ConfidenceLevel(0.95));
    report(cross);
    std::printf("thm2 crossover batch: argmin %zu at lambda_r=0.5, %zu at lambda_r=%g, converged from "
                "lambda_r=%g -> %s\n",
                cross.argmin_per_lambda.front(), cross.argmin_per_lambda.back(), lambdas.back(),
                cross.converged_from ? lambdas[*cross.converged_from] : -1.0, cross.pass ? "PASS" : "FAIL");
    Stream root(cfg.seed);
    for (std::size_t b = 0; b + 1 < batches; ++b) {
        report(verify_thm2(testbed_batch(cfg, root.split(b)()), lambdas, cfg.mppi.beta_c, cfg.mppi.beta_s));
    }
    const std::size_t evaluated = batches - empty;
    std::printf("thm2: %zu/%zu batches converged (%zu with an argmin switch, %zu with empty feasible set)"
                " -> %s\n",
                passed, evaluated, switched, empty, passed == evaluated && evaluated > 0 ? "PASS" : "FAIL");
    return passed == evaluated && evaluated > 0 ? 0 : 1;
}

int cmd_thm3(const ExperimentConfig& cfg, std::size_t T, std::size_t runs)
{
    const Thm3Report r = verify_thm3(cfg, T, runs);
    std::printf("thm3 beta_s=%g T=%zu: joint safety %.4f over %zu included episodes (%zu excluded as "
                "infeasible, %zu run); bound %.4f, threshold %.4f, slack %+.4f; realized-step joint "
                "safety %.4f -> %s\n",
                r.beta_s, r.horizon_solves, r.joint_safe, r.included, r.excluded, r.episodes_run, r.bound,
                r.threshold, r.slack, r.realized_safe, r.pass ? "PASS" : "FAIL");
    return r.pass ? 0 : 1;
}

int cmd_table(const std::string& path)
{
    fs::path p(path);
    if (fs::is_directory(p)) p /= "episodes.jsonl";
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open '" + p.string() + "'");
    const auto eps = read_episodes_jsonl(in);
    std::cout << format_table(metrics_from_episodes(eps));
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Risk-sensitive belief-space MPPI: experiments and checks"};
    app.require_subcommand(1);

    CommonFlags run_f;
    auto* run = app.add_subcommand("run", "run a trial sweep and write metrics, episodes and traces");
    add_common(run, run_f);

    CommonFlags ver_f;
    std::string which;
    std::size_t n_validation = 10000;
    std::size_t batches = 100;
    std::size_t solves = 5;
    auto* verify = app.add_subcommand("verify", "check a theorem numerically");
    verify->add_option("theorem", which, "thm1 | thm2 | thm3")
        ->required()
        ->check(CLI::IsMember({"thm1", "thm2", "thm3"}));
    add_common(verify, ver_f);
    verify->add_option("--n-validation", n_validation, "validation draws (thm1)");
    verify->add_option("--batches", batches, "frozen batches (thm2)");
    verify->add_option("--solves", solves, "receding-horizon solves per episode (thm3)");

    std::string table_path = "out";
    CommonFlags tab_f;
    auto* table = app.add_subcommand("table", "print the metrics table from an episodes JSONL file or run directory");
    table->add_option("path", table_path, "episodes.jsonl or a run directory");
    add_common(table, tab_f);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(resolve(run_f));
        if (*verify) {
            ExperimentConfig cfg = resolve(ver_f);
            if (which == "thm1") {
                const std::vector<double> levels = ver_f.beta_s.empty() ? std::vector<double>{0.9, 0.95} : ver_f.beta_s;
                return cmd_thm1(cfg, levels, n_validation);
            }
            if (!ver_f.beta_s.empty()) cfg.mppi.beta_s = ConfidenceLevel(ver_f.beta_s.front());
            if (!ver_f.beta_c.empty()) cfg.mppi.beta_c = ConfidenceLevel(ver_f.beta_c.front());
            if (!ver_f.lambda_r.empty()) cfg.mppi.lambda_r = ver_f.lambda_r.front();
            if (which == "thm2") return cmd_thm2(cfg, batches);
            return cmd_thm3(cfg, solves, ver_f.trials.value_or(400));
        }
        if (*table) {
            const std::string path = tab_f.out ? *tab_f.out : table_path;
            return cmd_table(path);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
