#pragma once

// Command implementations shared by the CLI and the tests. Every runner
// returns its files as (name -> content) so callers decide where they land;
// nothing here reads the clock, so a fixed seed gives identical bytes.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "intercens/aft.hpp"
#include "intercens/bayes.hpp"
#include "intercens/csv.hpp"
#include "intercens/metrics.hpp"
#include "intercens/psis.hpp"
#include "intercens/simgen.hpp"
#include "intercens/turnbull.hpp"

namespace intercens {

inline constexpr const char* kVersion = "0.1.0";

using Json = nlohmann::json;
using Outputs = std::map<std::string, std::string>;

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

/// One subject of a right-censored study; time in days.
struct RawSurvivalRecord {
    double time_days = 0.0;
    int status = 0;
    std::vector<double> covariates;
};

struct RawTable {
    std::vector<RawSurvivalRecord> records;
    std::vector<std::string> covariate_names;
};

/// Reads time (column time_days or futime), status (status or fustat) and
/// the remaining numeric columns as covariates.
inline RawTable read_raw_records(const csv::Table& t) {
    auto pick = [&](std::initializer_list<const char*> names) -> std::optional<std::size_t> {
        for (auto n : names) {
            if (auto c = t.column(n)) return c;
        }
        return std::nullopt;
    };
    const auto tc = pick({"time_days", "futime", "time"});
    const auto sc = pick({"status", "fustat", "event"});
    if (!tc || !sc) throw ParseError("raw data needs time_days and status columns");
    RawTable out;
    std::vector<std::size_t> cov_cols;
    for (std::size_t j = 0; j < t.header.size(); ++j) {
        if (j == *tc || j == *sc) continue;
        cov_cols.push_back(j);
        out.covariate_names.push_back(t.header[j]);
    }
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto line = t.line_numbers[r];
        RawSurvivalRecord rec;
        rec.time_days = csv::require_number(t.rows[r][*tc], line, t.header[*tc]);
        const double st = csv::require_number(t.rows[r][*sc], line, t.header[*sc]);
        if (st != 0.0 && st != 1.0) throw ParseError("status must be 0 or 1", line);
        rec.status = static_cast<int>(st);
        for (auto c : cov_cols) rec.covariates.push_back(csv::require_number(t.rows[r][c], line, t.header[c]));
        out.records.push_back(std::move(rec));
    }
    return out;
}

/// Imposes assessment visits every `window` months on right-censored data.
/// Events are placed in the window (v_k, v_{k+1}] that contains the event
/// time (left-censored (0, window] for the first); censored subjects are
/// known event-free up to the last visit before their censoring time.
inline Dataset intervalize_right_censored(const std::vector<RawSurvivalRecord>& records, double window,
                                          std::vector<std::string> covariate_names = {}) {
    if (!(window > 0.0)) throw DomainError("window must be positive");
    std::vector<Observation> obs;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!(r.time_days > 0.0)) {
            throw ParseError("record " + std::to_string(i + 1) + ": time must be positive", i + 2);
        }
        const double t = r.time_days / kDaysPerMonth;
        if (r.status == 1) {
            const double k = std::ceil(t / window);
            if (k <= 1.0) {
                obs.push_back(Observation{0.0, window, r.covariates, CensorKind::LeftCensored});
            } else {
                obs.push_back(Observation{(k - 1.0) * window, k * window, r.covariates, CensorKind::Interval});
            }
        } else {
            const double l = std::floor(t / window) * window;
            obs.push_back(Observation{l, kInfinity, r.covariates, CensorKind::RightCensored});
        }
    }
    if (covariate_names.empty() && !records.empty()) {
        for (std::size_t j = 0; j < records.front().covariates.size(); ++j) covariate_names.push_back("x" + std::to_string(j + 1));
    }
    return Dataset(std::move(obs), std::move(covariate_names));
}

struct SimSettings {
    std::vector<std::string> cells;  // scenario ids; empty selects the whole grid
    std::size_t replicates = 5;
    std::uint64_t base_seed = 2024;
    bool bayes = false;
    std::size_t chains = 2;
    int warmup = 500;
    int iters = 500;
};

/// Everything that determines a run's outputs. The worker count and output
/// directory are deliberately excluded from the serialized form.
struct RunConfig {
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::string input;
    std::string output = "out";
    FamilyKind family = FamilyKind::Weibull;
    std::vector<std::string> covariates;
    PriorSpec priors;
    std::size_t chains = 4;
    int warmup = 1000;
    int iters = 1000;
    std::size_t bootstrap = 0;
    double level = 0.95;
    std::size_t grid_points = 200;
    double window = 3.0;
    std::size_t ppc_reps = 200;
    SimSettings sim;

    Json to_json() const {
        Json j;
        j["seed"] = seed;
        j["input"] = input;
        j["family"] = std::string(to_string(family));
        j["covariates"] = covariates;
        j["priors"] = {{"sigma_mu", priors.sigma_mu}, {"sigma_beta", priors.sigma_beta},
                       {"a_kappa", priors.a_kappa}, {"b_kappa", priors.b_kappa}};
        j["chains"] = chains;
        j["warmup"] = warmup;
        j["iters"] = iters;
        j["bootstrap"] = bootstrap;
        j["level"] = level;
        j["grid_points"] = grid_points;
        j["window"] = window;
        j["ppc_reps"] = ppc_reps;
        j["sim"] = {{"cells", sim.cells}, {"replicates", sim.replicates}, {"base_seed", sim.base_seed},
                    {"bayes", sim.bayes}, {"chains", sim.chains}, {"warmup", sim.warmup}, {"iters", sim.iters}};
        return j;
    }

    /// Overlays the keys present in `j` onto this config.
    void merge_json(const Json& j) {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("seed", seed);
        get("workers", workers);
        get("input", input);
        get("output", output);
        if (j.contains("family")) {
            const auto f = parse_family(j.at("family").get<std::string>());
            if (!f) throw ParseError("config: unknown family");
            family = *f;
        }
        get("covariates", covariates);
        if (j.contains("priors")) {
            const auto& p = j.at("priors");
            if (p.contains("sigma_mu")) priors.sigma_mu = p.at("sigma_mu").get<double>();
            if (p.contains("sigma_beta")) priors.sigma_beta = p.at("sigma_beta").get<double>();
            if (p.contains("a_kappa")) priors.a_kappa = p.at("a_kappa").get<double>();
            if (p.contains("b_kappa")) priors.b_kappa = p.at("b_kappa").get<double>();
        }
        get("chains", chains);
        get("warmup", warmup);
        get("iters", iters);
        get("bootstrap", bootstrap);
        get("level", level);
        get("grid_points", grid_points);
        get("window", window);
        get("ppc_reps", ppc_reps);
        if (j.contains("sim")) {
            const auto& s = j.at("sim");
            if (s.contains("cells")) sim.cells = s.at("cells").get<std::vector<std::string>>();
            if (s.contains("replicates")) sim.replicates = s.at("replicates").get<std::size_t>();
            if (s.contains("base_seed")) sim.base_seed = s.at("base_seed").get<std::uint64_t>();
            if (s.contains("bayes")) sim.bayes = s.at("bayes").get<bool>();
            if (s.contains("chains")) sim.chains = s.at("chains").get<std::size_t>();
            if (s.contains("warmup")) sim.warmup = s.at("warmup").get<int>();
            if (s.contains("iters")) sim.iters = s.at("iters").get<int>();
        }
        priors.validate();
        if (!(level > 0.0 && level < 1.0)) throw ParseError("config: level must lie in (0, 1)");
    }

    static RunConfig from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ParseError("cannot open config " + path.string());
        RunConfig c;
        try {
            c.merge_json(Json::parse(in));
        } catch (const Json::exception& e) {
            throw ParseError(std::string("config: ") + e.what());
        }
        return c;
    }

    std::string hash() const { return hex64(fnv1a(to_json().dump())); }
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ParseError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Manifest listing the command, config, config hash and a content hash of
/// every input and output. No timestamps, so reruns are byte-identical.
inline std::string make_manifest(const std::string& command, const RunConfig& cfg, const Outputs& outputs,
                                 const std::vector<std::filesystem::path>& inputs = {}) {
    Json m;
    m["tool"] = "intercens";
    m["version"] = kVersion;
    m["command"] = command;
    m["seed"] = cfg.seed;
    m["config"] = cfg.to_json();
    m["config_hash"] = cfg.hash();
    Json in = Json::object();
    for (const auto& p : inputs) in[p.string()] = hex64(fnv1a(read_file(p)));
    m["inputs"] = in;
    Json out = Json::object();
    for (const auto& [name, content] : outputs) out[name] = hex64(fnv1a(content));
    m["outputs"] = out;
    return m.dump(2) + "\n";
}

inline void write_outputs(const std::filesystem::path& dir, const Outputs& outputs) {
    for (const auto& [name, content] : outputs) csv::write_file_atomic(dir / name, content);
}

namespace detail {

inline std::string num(double v) { return csv::format_number(v); }

inline std::string curve_csv(const StepSurvival& c) {
    csv::Writer w({"time", "survival"});
    w.row({"0", "1"});
    for (std::size_t k = 0; k < c.knots().size(); ++k) w.row({num(c.knots()[k]), num(c.values()[k])});
    return w.str();
}

inline std::string key_value_csv(const std::vector<std::pair<std::string, std::string>>& kv) {
    csv::Writer w({"key", "value"});
    for (const auto& [k, v] : kv) w.row({k, v});
    return w.str();
}

inline std::string band_csv(const SurvivalBand& b) {
    csv::Writer w({"time", "median", "lower", "upper"});
    for (std::size_t g = 0; g < b.grid.size(); ++g) w.row({num(b.grid[g]), num(b.median[g]), num(b.lower[g]), num(b.upper[g])});
    return w.str();
}

inline std::vector<double> column_means(const Dataset& d) {
    std::vector<double> m(d.dimension(), 0.0);
    for (const auto& o : d.observations) {
        for (std::size_t j = 0; j < m.size(); ++j) m[j] += o.covariates[j] / static_cast<double>(d.size());
    }
    return m;
}

}  // namespace detail

/// Loads a dataset using the configured covariate selection. With no
/// selection a file holding only left, right and cens yields no covariates.
inline Dataset load_dataset(const RunConfig& cfg) {
    if (cfg.input.empty()) throw ParseError("no input dataset given");
    const auto table = csv::read_table(std::filesystem::path(cfg.input));
    return csv::dataset_from_table(table, cfg.covariates, cfg.covariates.empty());
}

inline Outputs run_intervalize(const RunConfig& cfg) {
    const auto raw = read_raw_records(csv::read_table(std::filesystem::path(cfg.input)));
    const auto d = intervalize_right_censored(raw.records, cfg.window, raw.covariate_names);
    Outputs out;
    out["dataset.csv"] = csv::write_dataset(d);
    return out;
}

inline Outputs run_fit_em(const RunConfig& cfg) {
    const auto data = load_dataset(cfg);
    const auto fit = fit_npmle(data);
    Outputs out;
    out["em_curve.csv"] = detail::curve_csv(fit.curve);
    csv::Writer masses({"a_lo", "a_hi", "p"});
    for (std::size_t j = 0; j < fit.support.size(); ++j) {
        masses.row({detail::num(fit.support.intervals[j].first), detail::num(fit.support.intervals[j].second),
                    detail::num(fit.masses[j])});
    }
    out["em_masses.csv"] = masses.str();
    out["em_summary.csv"] = detail::key_value_csv({{"n", std::to_string(data.size())},
                                                   {"support_intervals", std::to_string(fit.support.size())},
                                                   {"iterations", std::to_string(fit.iterations)},
                                                   {"converged", fit.converged ? "true" : "false"},
                                                   {"loglik", detail::num(fit.loglik_trace.back())},
                                                   {"convention", "drop at right endpoint of each support interval"}});
    if (cfg.bootstrap > 0) {
        const auto grid = math::linspace(0.0, max_finite_endpoint(data), cfg.grid_points);
        const auto band = bootstrap_bands(data, cfg.bootstrap, cfg.level, cfg.seed, grid, cfg.workers);
        csv::Writer w({"time", "estimate", "lower", "upper"});
        for (std::size_t g = 0; g < band.grid.size(); ++g) {
            w.row({detail::num(band.grid[g]), detail::num(band.estimate[g]), detail::num(band.lower[g]), detail::num(band.upper[g])});
        }
        out["em_band.csv"] = w.str();
    }
    return out;
}

inline std::string coefficient_csv(const AftFit& fit, double level) {
    csv::Writer w({"term", "estimate", "se", "tr", "lo", "hi"});
    const double z = math::normal_quantile(1.0 - (1.0 - level) / 2.0);
    const auto na = std::string("NA");
    auto se_of = [&](std::size_t j) { return fit.covariance_available ? detail::num(fit.standard_error(j)) : na; };
    w.row({"(Intercept)", detail::num(fit.params.mu), se_of(0), na, na, na});
    for (std::size_t j = 0; j < fit.params.beta.size(); ++j) {
        const double b = fit.params.beta[j];
        const double se = fit.standard_error(j + 1);
        const bool ok = fit.covariance_available;
        w.row({fit.covariate_names[j], detail::num(b), se_of(j + 1), detail::num(std::exp(b)),
               ok ? detail::num(std::exp(b - z * se)) : na, ok ? detail::num(std::exp(b + z * se)) : na});
    }
    const std::size_t last = fit.params.beta.size() + 1;
    w.row({fit.family == FamilyKind::Weibull ? "log(kappa)" : "log(sigma)", detail::num(fit.params.log_shape), se_of(last), na, na, na});
    return w.str();
}

inline Outputs run_fit_aft(const RunConfig& cfg) {
    const auto data = load_dataset(cfg);
    const auto fit = fit_aft_mle(data, cfg.family);
    Outputs out;
    out["aft_coefficients.csv"] = coefficient_csv(fit, cfg.level);
    out["aft_summary.csv"] = detail::key_value_csv({{"family", std::string(to_string(fit.family))},
                                                    {"n", std::to_string(data.size())},
                                                    {"loglik", detail::num(fit.loglik)},
                                                    {"converged", fit.converged ? "true" : "false"},
                                                    {"iterations", std::to_string(fit.n_iter)},
                                                    {"covariance_available", fit.covariance_available ? "true" : "false"}});
    const auto grid = math::linspace(0.0, std::max(1.0, max_finite_endpoint(data)), cfg.grid_points);
    const auto s = predict_survival(fit, detail::column_means(data), grid);
    csv::Writer w({"time", "survival"});
    for (std::size_t g = 0; g < grid.size(); ++g) w.row({detail::num(grid[g]), detail::num(s[g])});
    out["aft_prediction_mean_covariates.csv"] = w.str();
    return out;
}

inline SampleOptions sample_options(const RunConfig& cfg) {
    SampleOptions o;
    o.chains = cfg.chains;
    o.warmup = cfg.warmup;
    o.iters = cfg.iters;
    o.seed = cfg.seed;
    o.workers = cfg.workers;
    return o;
}

inline std::string draws_csv(const PosteriorDraws& d) {
    std::vector<std::string> header{"chain", "iter"};
    for (const auto& n : d.parameter_names()) header.push_back(n);
    csv::Writer w(header);
    for (std::size_t c = 0; c < d.num_chains(); ++c) {
        for (Eigen::Index t = 0; t < d.chains[c].rows(); ++t) {
            std::vector<std::string> f{std::to_string(c + 1), std::to_string(t + 1)};
            for (Eigen::Index j = 0; j < d.chains[c].cols(); ++j) f.push_back(detail::num(d.chains[c](t, j)));
            w.row(f);
        }
    }
    return w.str();
}

inline std::string posterior_summary_csv(const PosteriorDraws& d) {
    csv::Writer w({"term", "Median", "Est.Error", "2.5%", "97.5%", "Rhat", "ESS_bulk", "ESS_tail"});
    for (const auto& r : posterior_summary(d)) {
        w.row({r.term, detail::num(r.median), detail::num(r.est_error), detail::num(r.q025), detail::num(r.q975),
               detail::num(r.diag.rhat), detail::num(std::round(r.diag.ess_bulk)), detail::num(std::round(r.diag.ess_tail))});
    }
    return w.str();
}

inline Outputs run_fit_bayes(const RunConfig& cfg) {
    const auto data = load_dataset(cfg);
    const auto draws = sample_posterior(data, cfg.priors, cfg.family, sample_options(cfg));
    Outputs out;
    out["bayes_draws.csv"] = draws_csv(draws);
    out["bayes_summary.csv"] = posterior_summary_csv(draws);

    const auto em = fit_npmle(data);
    const auto grid = math::linspace(0.0, max_finite_endpoint(data), cfg.grid_points);
    const auto band = marginal_survival_band(draws, data, grid, cfg.level);
    out["bayes_band.csv"] = detail::band_csv(band);
    csv::Writer ov({"time", "em", "median", "lower", "upper"});
    for (std::size_t g = 0; g < grid.size(); ++g) {
        ov.row({detail::num(grid[g]), detail::num(em.curve(grid[g])), detail::num(band.median[g]), detail::num(band.lower[g]),
                detail::num(band.upper[g])});
    }
    out["overlay.csv"] = ov.str();

    const auto ppc = posterior_predictive_check(draws, data, cfg.ppc_reps, derive_seed(cfg.seed, {0x33}));
    csv::Writer pw({"obs", "left", "right", "capture", "model_prob"});
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& o = data.observations[i];
        pw.row({std::to_string(i + 1), detail::num(o.effective_left()), detail::num(o.right), detail::num(ppc.capture[i]),
                detail::num(ppc.model_prob[i])});
    }
    out["ppc.csv"] = pw.str();

    csv::Writer sw({"chain", "step_size", "mean_accept"});
    for (std::size_t c = 0; c < draws.num_chains(); ++c) {
        sw.row({std::to_string(c + 1), detail::num(draws.step_sizes[c]), detail::num(draws.mean_accept[c])});
    }
    out["bayes_sampler.csv"] = sw.str();
    out["bayes_meta.csv"] = detail::key_value_csv({
        {"family", std::string(to_string(cfg.family))},
        {"chains", std::to_string(cfg.chains)},
        {"warmup", std::to_string(cfg.warmup)},
        {"iters", std::to_string(cfg.iters)},
        {"divergent", std::to_string(draws.divergent)},
        {"divergence_warning", draws.divergence_warning ? "true" : "false"},
        {"divergence_threshold", detail::num(hmc::kDivergenceThreshold)},
        {"max_leapfrog_steps", std::to_string(hmc::kMaxLeapfrogSteps)},
        {"overlay_coverage", detail::num(band_coverage_vs_em(band, em))},
        {"ppc_mean_capture", detail::num(ppc.mean_capture)},
        {"ppc_mean_model_prob", detail::num(ppc.mean_model_prob)},
        {"ppc_mc_se", detail::num(ppc.mc_se)},
        {"ppc_flagged", ppc.flagged ? "true" : "false"},
    });
    return out;
}

inline Outputs run_loo(const RunConfig& cfg) {
    const auto data = load_dataset(cfg);
    std::vector<std::pair<FamilyKind, LooResult>> results;
    Outputs out;
    csv::Writer lw({"model", "elpd_loo", "se", "n_high_k", "excluded"});
    for (FamilyKind f : {FamilyKind::Weibull, FamilyKind::LogNormal}) {
        const auto draws = sample_posterior(data, cfg.priors, f, sample_options(cfg));
        const auto loo = loo_elpd(pointwise_loglik(draws, data), cfg.workers);
        lw.row({std::string(to_string(f)), detail::num(loo.elpd), detail::num(loo.se), std::to_string(loo.high_k.size()),
                std::to_string(loo.excluded_observations.size())});
        results.emplace_back(f, loo);
    }
    out["loo.csv"] = lw.str();
    csv::Writer cw({"model", "elpd_diff", "se_diff"});
    for (const auto& [f, r] : results) {
        const auto c = compare_models(results.front().second, r);
        cw.row({std::string(to_string(f)), detail::num(c.elpd_diff), detail::num(c.se_diff)});
    }
    out["loo_compare.csv"] = cw.str();
    csv::Writer pw({"obs", "elpd_weibull", "k_weibull", "elpd_lognormal", "k_lognormal"});
    for (std::size_t i = 0; i < results.front().second.pointwise.size(); ++i) {
        pw.row({std::to_string(i + 1), detail::num(results[0].second.pointwise[i]), detail::num(results[0].second.pareto_k[i]),
                detail::num(results[1].second.pointwise[i]), detail::num(results[1].second.pareto_k[i])});
    }
    out["loo_pointwise.csv"] = pw.str();
    return out;
}

/// Metrics of one simulated replicate.
struct ReplicateMetrics {
    double ise_em = math::kNaN;
    double ise_km = math::kNaN;
    double ibs_aft_weibull = math::kNaN;
    double ibs_aft_lognormal = math::kNaN;
    double ibs_aft_weibull_nocov = math::kNaN;
    double ibs_aft_lognormal_nocov = math::kNaN;
    double ibs_km = math::kNaN;
    double ibs_em = math::kNaN;
    double ibs_oracle = math::kNaN;
};

/// EM, KM-pseudo and both AFT families (with and without covariates) on one
/// dataset.
/// ISE is taken against the population survival curve, IBS against the
/// recorded event times, both on [0, tau].
inline ReplicateMetrics evaluate_replicate(const SimulatedDataset& sim, std::size_t grid_points = kDefaultGridPoints) {
    const double tau = sim.config.tau;
    const auto& data = sim.dataset;
    const auto& truths = sim.true_times;
    auto truth = [&](double t) { return marginal_true_survival(sim.config, t); };
    ReplicateMetrics m;
    const auto em = fit_npmle(data.without_covariates());
    m.ise_em = ise([&](double t) { return em.curve(t); }, truth, tau, grid_points).raw;
    m.ibs_em = ibs([&](std::size_t, double t) { return em.curve(t); }, truths, tau, grid_points);
    const auto km = km_pseudo_right(data);
    m.ise_km = ise([&](double t) { return km(t); }, truth, tau, grid_points).raw;
    m.ibs_km = ibs([&](std::size_t, double t) { return km(t); }, truths, tau, grid_points);
    m.ibs_oracle = ibs([&](std::size_t i, double t) { return sim.true_survival(i, t); }, truths, tau, grid_points);
    for (FamilyKind f : {FamilyKind::Weibull, FamilyKind::LogNormal}) {
        const auto fit = fit_aft_mle(data, f);
        std::vector<double> eta(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) eta[i] = fit.params.linear_predictor(data.observations[i].covariates);
        const double v = ibs([&](std::size_t i, double t) { return family_survival(f, t, eta[i], fit.params.log_shape); },
                             truths, tau, grid_points);
        (f == FamilyKind::Weibull ? m.ibs_aft_weibull : m.ibs_aft_lognormal) = v;
        const auto plain = fit_aft_mle(data.without_covariates(), f);
        const double w = ibs([&](std::size_t, double t) { return family_survival(f, t, plain.params.mu, plain.params.log_shape); },
                             truths, tau, grid_points);
        (f == FamilyKind::Weibull ? m.ibs_aft_weibull_nocov : m.ibs_aft_lognormal_nocov) = w;
    }
    return m;
}

/// Posterior bands at covariate profiles for one simulated replicate.
inline std::vector<SurvivalBand> replicate_profile_bands(const SimulatedDataset& sim, FamilyKind family,
                                                         const std::vector<std::vector<double>>& profiles,
                                                         const std::vector<double>& grid, const SampleOptions& opts,
                                                         const PriorSpec& priors = {}) {
    const auto draws = sample_posterior(sim.dataset, priors, family, opts);
    std::vector<SurvivalBand> bands;
    for (const auto& x : profiles) bands.push_back(posterior_survival_band(draws, x, grid, 0.95));
    return bands;
}

/// PSIS-LOO comparison of the two families on one replicate, log-normal minus Weibull.
inline LooComparison replicate_loo_comparison(const SimulatedDataset& sim, const SampleOptions& opts,
                                              const PriorSpec& priors = {}) {
    LooResult res[2];
    int k = 0;
    for (FamilyKind f : {FamilyKind::Weibull, FamilyKind::LogNormal}) {
        res[k++] = loo_elpd(pointwise_loglik(sample_posterior(sim.dataset, priors, f, opts), sim.dataset));
    }
    return compare_models(res[0], res[1]);
}

inline ScenarioConfig replicate_config(const ScenarioConfig& cell, std::size_t r) {
    ScenarioConfig c = cell;
    c.seed = derive_seed(cell.seed, {static_cast<std::uint64_t>(r)});
    return c;
}

/// Profiles used for Bayesian coverage: (x1, x2) = (0, 0) and (1, 1).
inline const std::vector<std::vector<double>>& coverage_profiles() {
    static const std::vector<std::vector<double>> p{{0.0, 0.0}, {1.0, 1.0}};
    return p;
}

inline std::vector<double> coverage_grid(double tau) { return math::linspace(tau / 15.0, tau, 15); }

inline Outputs run_sim(const RunConfig& cfg) {
    auto grid = scenario_grid(cfg.sim.base_seed);
    std::vector<ScenarioConfig> cells;
    if (cfg.sim.cells.empty()) {
        cells = grid;
    } else {
        for (const auto& id : cfg.sim.cells) {
            const auto it = std::find_if(grid.begin(), grid.end(), [&](const auto& c) { return c.id == id; });
            if (it == grid.end()) throw ParseError("unknown scenario '" + id + "'");
            cells.push_back(*it);
        }
    }
    const std::size_t reps = cfg.sim.replicates;
    struct Slot {
        bool ok = false;
        std::string error;
        ReplicateMetrics m;
        CensoringSummary cens;
        std::vector<CoverageValue> cov;  // per profile, this replicate only
        std::vector<std::vector<int>> hits;
        LooComparison loo;
    };
    std::vector<Slot> slots(cells.size() * reps);
    parallel_for(slots.size(), cfg.workers, [&](std::size_t k) {
        const auto& cell = cells[k / reps];
        const std::size_t r = k % reps;
        auto& slot = slots[k];
        try {
            const auto sim = generate_dataset(replicate_config(cell, r));
            slot.cens = sim.censoring;
            slot.m = evaluate_replicate(sim);
            if (cfg.sim.bayes) {
                SampleOptions o;
                o.chains = cfg.sim.chains;
                o.warmup = cfg.sim.warmup;
                o.iters = cfg.sim.iters;
                o.seed = derive_seed(cell.seed, {static_cast<std::uint64_t>(r), 0xba7e5});
                const auto g = coverage_grid(cell.tau);
                const auto bands = replicate_profile_bands(sim, cell.family, coverage_profiles(), g, o, cfg.priors);
                for (std::size_t p = 0; p < bands.size(); ++p) {
                    std::vector<int> h;
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        const double s = family_survival(cell.family, g[i], cell.true_params().linear_predictor(coverage_profiles()[p]),
                                                         cell.true_params().log_shape);
                        h.push_back(bands[p].lower[i] <= s && s <= bands[p].upper[i]);
                    }
                    slot.hits.push_back(h);
                }
                o.seed = derive_seed(cell.seed, {static_cast<std::uint64_t>(r), 0x100});
                slot.loo = replicate_loo_comparison(sim, o, cfg.priors);
            }
            slot.ok = true;
        } catch (const std::exception& e) {
            slot.error = e.what();
        }
    });

    Outputs out;
    csv::Writer lw({"scenario", "replicate", "estimator", "metric", "value"});
    csv::Writer sw({"scenario", "estimator", "metric", "mean", "q025", "q975", "replicates", "failures"});
    csv::Writer cw({"scenario", "interval", "left", "right", "uninformative"});
    csv::Writer bw({"scenario", "profile", "pointwise", "simultaneous", "replicates"});
    csv::Writer fw({"scenario", "replicate", "error"});
    csv::Writer ow({"scenario", "model", "elpd_diff", "se_diff", "negligible_share", "replicates"});
    double pooled_diff = 0.0, pooled_se = 0.0, pooled_share = 0.0, pooled_cells = 0.0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto& id = cells[c].id;
        struct Series {
            const char* estimator;
            const char* metric;
            double ReplicateMetrics::*field;
        };
        const Series series[] = {
            {"em", "ise", &ReplicateMetrics::ise_em},
            {"km_pseudo", "ise", &ReplicateMetrics::ise_km},
            {"em", "ibs", &ReplicateMetrics::ibs_em},
            {"km_pseudo", "ibs", &ReplicateMetrics::ibs_km},
            {"aft_weibull", "ibs", &ReplicateMetrics::ibs_aft_weibull},
            {"aft_lognormal", "ibs", &ReplicateMetrics::ibs_aft_lognormal},
            {"aft_weibull_nocov", "ibs", &ReplicateMetrics::ibs_aft_weibull_nocov},
            {"aft_lognormal_nocov", "ibs", &ReplicateMetrics::ibs_aft_lognormal_nocov},
            {"oracle", "ibs", &ReplicateMetrics::ibs_oracle},
        };
        std::size_t failures = 0;
        CensoringSummary cs;
        for (std::size_t r = 0; r < reps; ++r) {
            const auto& s = slots[c * reps + r];
            if (!s.ok) {
                ++failures;
                fw.row({id, std::to_string(r), "\"" + s.error + "\""});
                continue;
            }
            cs.interval += s.cens.interval;
            cs.left += s.cens.left;
            cs.right += s.cens.right;
            cs.uninformative += s.cens.uninformative;
            for (const auto& se : series) lw.row({id, std::to_string(r), se.estimator, se.metric, detail::num(s.m.*se.field)});
        }
        const double ok = static_cast<double>(reps - failures);
        if (ok > 0) {
            cw.row({id, detail::num(cs.interval / ok), detail::num(cs.left / ok), detail::num(cs.right / ok), detail::num(cs.uninformative / ok)});
        }
        for (const auto& se : series) {
            std::vector<double> v;
            for (std::size_t r = 0; r < reps; ++r) {
                if (slots[c * reps + r].ok) v.push_back(slots[c * reps + r].m.*se.field);
            }
            if (v.empty()) continue;
            std::sort(v.begin(), v.end());
            sw.row({id, se.estimator, se.metric, detail::num(math::mean(v)), detail::num(math::quantile_sorted(v, 0.025)),
                    detail::num(math::quantile_sorted(v, 0.975)), std::to_string(v.size()), std::to_string(failures)});
        }
        if (cfg.sim.bayes) {
            for (std::size_t p = 0; p < coverage_profiles().size(); ++p) {
                double pts = 0, hit = 0, whole = 0, n = 0;
                for (std::size_t r = 0; r < reps; ++r) {
                    const auto& s = slots[c * reps + r];
                    if (!s.ok) continue;
                    bool all = true;
                    for (int h : s.hits[p]) {
                        hit += h;
                        pts += 1;
                        all = all && h;
                    }
                    whole += all;
                    n += 1;
                }
                const auto& x = coverage_profiles()[p];
                bw.row({id, "(" + detail::num(x[0]) + ";" + detail::num(x[1]) + ")", detail::num(pts > 0 ? hit / pts : 0.0),
                        detail::num(n > 0 ? whole / n : 0.0), detail::num(n)});
            }
            // Per-scenario means of the paired comparison; the last row of the
            // table is the unweighted mean over scenarios.
            double diff = 0.0, se = 0.0, small = 0.0, n = 0.0;
            for (std::size_t r = 0; r < reps; ++r) {
                const auto& s = slots[c * reps + r];
                if (!s.ok) continue;
                diff += s.loo.elpd_diff;
                se += s.loo.se_diff;
                small += std::abs(s.loo.elpd_diff) < 2.0 * s.loo.se_diff;
                n += 1;
            }
            if (n > 0) {
                ow.row({id, "lognormal", detail::num(diff / n), detail::num(se / n), detail::num(small / n), detail::num(n)});
                pooled_diff += diff / n;
                pooled_se += se / n;
                pooled_share += small / n;
                pooled_cells += 1;
            }
        }
    }
    out["sim_metrics_long.csv"] = lw.str();
    out["sim_summary.csv"] = sw.str();
    out["sim_censoring.csv"] = cw.str();
    out["sim_failures.csv"] = fw.str();
    if (cfg.sim.bayes) {
        out["sim_coverage.csv"] = bw.str();
        if (pooled_cells > 0) {
            ow.row({"all (unweighted mean)", "lognormal", detail::num(pooled_diff / pooled_cells), detail::num(pooled_se / pooled_cells),
                    detail::num(pooled_share / pooled_cells), detail::num(pooled_cells)});
        }
        out["sim_loo.csv"] = ow.str();
    }

    csv::Writer gw({"scenario", "n", "family", "shape", "sigma", "mu", "beta1", "beta2", "schedule", "tau", "seed"});
    for (const auto& c : cells) {
        gw.row({c.id, std::to_string(c.n), std::string(to_string(c.family)), detail::num(c.shape), detail::num(c.sigma),
                detail::num(c.mu), detail::num(c.beta[0]), detail::num(c.beta[1]), c.schedule.label(), detail::num(c.tau),
                std::to_string(c.seed)});
    }
    out["sim_scenarios.csv"] = gw.str();

    // Example dataset and truths of replicate 0 of the first cell.
    if (!cells.empty()) {
        const auto sim = generate_dataset(replicate_config(cells.front(), 0));
        out["sim_example_dataset.csv"] = csv::write_dataset(sim.dataset);
        csv::Writer tw({"i", "T_true"});
        for (std::size_t i = 0; i < sim.true_times.size(); ++i) tw.row({std::to_string(i + 1), detail::num(sim.true_times[i])});
        out["sim_example_truths.csv"] = tw.str();
    }
    return out;
}

/// Human-readable summary of whatever result files exist in `dir`.
inline Outputs emit_report(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    auto has = [&](const char* f) { return fs::exists(dir / f); };
    auto table = [&](const char* f) {
        std::string s = read_file(dir / f);
        std::string md;
        std::istringstream in(s);
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            std::string row = "|";
            for (const auto& cell : csv::split_line(line)) row += " " + cell + " |";
            md += row + "\n";
            if (first) {
                std::string sep = "|";
                for (std::size_t k = 0; k < csv::split_line(line).size(); ++k) sep += "---|";
                md += sep + "\n";
                first = false;
            }
        }
        return md;
    };
    std::ostringstream r;
    r << "# intercens report\n\n";
    const std::pair<const char*, std::vector<const char*>> sections[] = {
        {"Turnbull NPMLE", {"em_summary.csv"}},
        {"Parametric AFT", {"aft_coefficients.csv", "aft_summary.csv"}},
        {"Bayesian AFT", {"bayes_summary.csv", "bayes_meta.csv"}},
        {"PSIS-LOO", {"loo.csv", "loo_compare.csv"}},
        {"Simulation", {"sim_summary.csv", "sim_coverage.csv", "sim_loo.csv", "sim_censoring.csv"}},
    };
    Json manifest;
    manifest["tool"] = "intercens";
    manifest["version"] = kVersion;
    Json files = Json::object();
    for (const auto& [title, names] : sections) {
        r << "## " << title << "\n\n";
        bool any = false;
        for (const char* f : names) {
            if (!has(f)) continue;
            any = true;
            r << "`" << f << "`\n\n" << table(f) << "\n";
            files[f] = hex64(fnv1a(read_file(dir / f)));
        }
        if (!any) r << "not run\n\n";
    }
    Json runs = Json::array();
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("manifest_", 0) == 0 && entry.path().extension() == ".json") runs.push_back(name);
    }
    std::sort(runs.begin(), runs.end());
    manifest["runs"] = runs;
    manifest["files"] = files;
    Outputs out;
    out["report.md"] = r.str();
    out["report_manifest.json"] = manifest.dump(2) + "\n";
    return out;
}

}  // namespace intercens
