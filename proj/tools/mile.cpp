// mile: estimate on user data, run simulation designs, run the self-check.
// Exit codes: 0 success, 2 usage or input error, 3 numerical failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include "mile/io.hpp"
#include "mile/selfcheck.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

constexpr Eigen::Index kDefaultRankDraws = 2000;

struct Config {
    std::string model;
    std::string input;
    std::string config;
    std::string design;
    std::string output;
    std::string format = "csv";
    std::optional<std::uint64_t> seed;
    std::optional<int> reps;
    std::optional<Eigen::Index> draws;
    unsigned threads = 0;
};

void write_output(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw mile::InputError(path + ": cannot open for writing");
    out << text;
    if (!out) throw mile::InputError(path + ": write failed");
}

nlohmann::json estimate(const Config& cfg)
{
    using namespace mile;
    const CsvTable csv = read_csv(cfg.input);
    const nlohmann::json side = cfg.config.empty() ? nlohmann::json::object() : read_json(cfg.config);

    if (cfg.model == "iv") {
        if (cfg.config.empty()) throw InputError("--model iv needs --config with \"sigma\" (2 x 2 reduced-form covariance)");
        const IVData data = iv_from_csv(csv, sigma_from_json(side, cfg.config));
        return report_json(mile_iv(wishart_stat_iv(data), data.sigma));
    }

    const LongPanel panel = long_panel_from_csv(csv);
    if (cfg.model == "dyn") {
        if (!panel.x.empty()) throw InputError(cfg.input + ":1: the dyn model takes no regressors (header must be i,t,y)");
        return report_json(mile_dyn(DynPanelData{panel.y}));
    }
    if (cfg.model == "static") {
        return report_json(estimate_static(StaticPanelData{panel.y, panel.x}));
    }
    // rank
    Eigen::Index draws = kDefaultRankDraws;
    if (side.contains("draws")) {
        if (!side.at("draws").is_number_integer() || side.at("draws").get<long long>() < 1) {
            throw InputError(cfg.config + ": \"draws\" must be a positive integer");
        }
        draws = side.at("draws").get<Eigen::Index>();
    }
    if (cfg.draws) draws = *cfg.draws;
    std::mt19937_64 rng(cfg.seed.value_or(1));
    nlohmann::json j = report_json(estimate_rank(RankData{panel.y, panel.x}, draws, rng));
    j["draws"] = draws;
    j["seed"] = cfg.seed.value_or(1);
    return j;
}

int cmd_estimate(const Config& cfg)
{
    write_output(cfg.output, estimate(cfg).dump(2) + "\n");
    return kExitOk;
}

int cmd_simulate(const Config& cfg)
{
    using namespace mile;
    const TableFormat format = parse_table_format(cfg.format);
    McDesign design = design_from_json(read_json(cfg.design), cfg.design);
    if (cfg.seed) design.master_seed = *cfg.seed;
    if (cfg.reps) {
        if (*cfg.reps < 1) throw InputError("--reps must be >= 1");
        design.reps = *cfg.reps;
    }
    const auto start = std::chrono::steady_clock::now();
    const auto results = run_design(design, cfg.threads);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_output(cfg.output, render_table(results, design.estimators, format));

    for (const auto& cell : results) {
        for (const auto& s : cell.stats) {
            if (s.flagged()) {
                std::cerr << "warning: " << estimator_name(s.estimator) << " failed in " << s.n_failed << " of " << s.reps
                          << " replications at T=" << cell.t << ", N=" << cell.n << '\n';
            }
        }
    }
    std::cerr << results.size() << " cells, " << design.reps << " replications each, " << format_number(elapsed) << " s\n";
    return kExitOk;
}

int cmd_check(const Config& cfg)
{
    const bool ok = mile::print_selfcheck(mile::run_selfcheck(cfg.seed.value_or(20240601)), std::cout);
    return ok ? kExitOk : 1;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Maximum invariant likelihood estimation for incidental-parameter models"};
    app.require_subcommand(1);
    Config cfg;

    auto* est = app.add_subcommand("estimate", "Estimate a model from a CSV file and print a JSON report");
    est->add_option("--model", cfg.model, "static | rank | iv | dyn")
        ->required()
        ->check(CLI::IsMember({"static", "rank", "iv", "dyn"}));
    est->add_option("--input", cfg.input, "Data CSV: long i,t,y[,x..] for panels, wide y1,y2,z.. for iv")
        ->required()
        ->check(CLI::ExistingFile);
    est->add_option("--config", cfg.config, "JSON sidecar: {\"sigma\": [[..],[..]]} for iv, {\"draws\": R} for rank")
        ->check(CLI::ExistingFile);
    est->add_option("--output,-o", cfg.output, "Report path (default stdout)");
    est->add_option("--seed", cfg.seed, "Seed for the rank model's simulation draws (default 1)");
    est->add_option("--draws", cfg.draws, "Simulation draws for the rank model (default 2000)")->check(CLI::PositiveNumber);

    auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo design and print a table");
    sim->add_option("--design", cfg.design, "Design JSON")->required()->check(CLI::ExistingFile);
    sim->add_option("--output,-o", cfg.output, "Table path (default stdout)");
    sim->add_option("--format", cfg.format, "csv | markdown");
    sim->add_option("--seed", cfg.seed, "Override the design's master seed");
    sim->add_option("--reps", cfg.reps, "Override the design's replication count");
    sim->add_option("--threads", cfg.threads, "Worker threads (default: all cores)");

    auto* chk = app.add_subcommand("check", "Run the fast invariant suite");
    chk->add_option("--seed", cfg.seed, "Seed for the random instances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (est->parsed()) return cmd_estimate(cfg);
        if (sim->parsed()) return cmd_simulate(cfg);
        return cmd_check(cfg);
    } catch (const mile::InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const mile::DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const mile::NumericError& e) {
        std::cerr << "estimation failed: " << e.what() << '\n';
        return kExitNumeric;
    }
}
