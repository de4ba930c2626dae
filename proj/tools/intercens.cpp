// intercens: command-line front end for interval-censored survival analysis.
//
//   intercens intervalize --input raw.csv --window 3 --output out/
//   intercens fit em|aft|bayes --input data.csv --covariates age,rx=2 --output out/
//   intercens loo --input data.csv --covariates age,rx=2 --output out/
//   intercens sim --config sim.json --output out/
//   intercens report --input out/ --output out/

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "intercens/workflow.hpp"

namespace {

using intercens::RunConfig;

struct Flags {
    std::string input, output, config, family, covariates, cells;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::size_t chains = 4, bootstrap = 0, grid_points = 200, replicates = 5;
    int warmup = 1000, iters = 1000;
    double window = 3.0;
    bool bayes = false;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void add_common(CLI::App* app, Flags& f) {
    app->add_option("--input", f.input, "input CSV (or results directory for report)");
    app->add_option("--output", f.output, "output directory");
    app->add_option("--seed", f.seed, "random seed");
    app->add_option("--config", f.config, "JSON config file; flags override it");
    app->add_option("--workers", f.workers, "worker threads (does not change results)");
}

void add_model(CLI::App* app, Flags& f) {
    app->add_option("--family", f.family, "weibull or lognormal");
    app->add_option("--covariates", f.covariates, "comma-separated covariate columns; name=level makes an indicator");
    app->add_option("--chains", f.chains, "MCMC chains");
    app->add_option("--warmup", f.warmup, "warmup iterations per chain");
    app->add_option("--iters", f.iters, "kept iterations per chain");
    app->add_option("--bootstrap", f.bootstrap, "bootstrap replicates for EM bands (0 = none)");
    app->add_option("--grid-points", f.grid_points, "points on output time grids");
    app->add_option("--window", f.window, "assessment window in months");
}

/// Config file first, then every flag the user actually passed.
RunConfig resolve(const CLI::App* app, const Flags& f) {
    RunConfig cfg;
    if (!f.config.empty()) cfg = RunConfig::from_file(f.config);
    auto given = [&](const char* name) {
        const auto* o = app->get_option_no_throw(name);
        return o && o->count() > 0;
    };
    if (given("--input")) cfg.input = f.input;
    if (given("--output")) cfg.output = f.output;
    if (given("--seed")) cfg.seed = f.seed;
    if (given("--workers")) cfg.workers = f.workers;
    if (given("--family")) {
        const auto fam = intercens::parse_family(f.family);
        if (!fam) throw intercens::ParseError("unknown family '" + f.family + "'");
        cfg.family = *fam;
    }
    if (given("--covariates")) cfg.covariates = split_list(f.covariates);
    if (given("--chains")) cfg.chains = f.chains;
    if (given("--warmup")) cfg.warmup = f.warmup;
    if (given("--iters")) cfg.iters = f.iters;
    if (given("--bootstrap")) cfg.bootstrap = f.bootstrap;
    if (given("--grid-points")) cfg.grid_points = f.grid_points;
    if (given("--window")) cfg.window = f.window;
    if (given("--cells")) cfg.sim.cells = split_list(f.cells);
    if (given("--replicates")) cfg.sim.replicates = f.replicates;
    if (given("--bayes")) cfg.sim.bayes = f.bayes;
    return cfg;
}

void finish(const std::string& command, const RunConfig& cfg, intercens::Outputs outputs, bool input_is_file = true) {
    std::vector<std::filesystem::path> inputs;
    if (input_is_file && !cfg.input.empty()) inputs.emplace_back(cfg.input);
    std::string tag = command;
    for (auto& c : tag) {
        if (c == ' ') c = '_';
    }
    outputs["manifest_" + tag + ".json"] = intercens::make_manifest(command, cfg, outputs, inputs);
    intercens::write_outputs(cfg.output, outputs);
    for (const auto& [name, content] : outputs) std::cout << (std::filesystem::path(cfg.output) / name).string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interval-censored survival analysis: Turnbull EM, AFT maximum likelihood, Bayesian AFT"};
    app.require_subcommand(1);
    Flags f;

    auto* sim = app.add_subcommand("sim", "simulate scenario cells and score the estimators");
    add_common(sim, f);
    sim->add_option("--cells", f.cells, "comma-separated scenario ids (default: whole grid)");
    sim->add_option("--replicates", f.replicates, "replicates per cell");
    sim->add_flag("--bayes", f.bayes, "also fit the Bayesian AFT and score band coverage");

    auto* fit = app.add_subcommand("fit", "fit a model to an interval-censored dataset");
    fit->require_subcommand(1);
    CLI::App* fits[3] = {fit->add_subcommand("em", "Turnbull NPMLE"), fit->add_subcommand("aft", "parametric AFT"),
                         fit->add_subcommand("bayes", "Bayesian AFT")};
    for (auto* s : fits) {
        add_common(s, f);
        add_model(s, f);
    }

    auto* loo = app.add_subcommand("loo", "PSIS-LOO comparison of Weibull and log-normal AFT");
    add_common(loo, f);
    add_model(loo, f);

    auto* iv = app.add_subcommand("intervalize", "turn right-censored follow-up into assessment windows");
    add_common(iv, f);
    iv->add_option("--window", f.window, "assessment window in months");

    auto* report = app.add_subcommand("report", "summarize a results directory");
    add_common(report, f);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            const auto cfg = resolve(sim, f);
            finish("sim", cfg, intercens::run_sim(cfg), false);
        } else if (fits[0]->parsed()) {
            const auto cfg = resolve(fits[0], f);
            finish("fit em", cfg, intercens::run_fit_em(cfg));
        } else if (fits[1]->parsed()) {
            const auto cfg = resolve(fits[1], f);
            finish("fit aft", cfg, intercens::run_fit_aft(cfg));
        } else if (fits[2]->parsed()) {
            const auto cfg = resolve(fits[2], f);
            finish("fit bayes", cfg, intercens::run_fit_bayes(cfg));
        } else if (loo->parsed()) {
            const auto cfg = resolve(loo, f);
            finish("loo", cfg, intercens::run_loo(cfg));
        } else if (iv->parsed()) {
            const auto cfg = resolve(iv, f);
            finish("intervalize", cfg, intercens::run_intervalize(cfg));
        } else if (report->parsed()) {
            auto cfg = resolve(report, f);
            if (cfg.input.empty()) cfg.input = cfg.output;
            auto outputs = intercens::emit_report(cfg.input);
            intercens::write_outputs(cfg.output, outputs);
            for (const auto& [name, content] : outputs) std::cout << (std::filesystem::path(cfg.output) / name).string() << "\n";
        }
    } catch (const intercens::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
