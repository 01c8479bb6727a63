#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "corrstress/common.hpp"
#include "corrstress/corrmodel.hpp"
#include "corrstress/distfit.hpp"
#include "corrstress/factorselect.hpp"
#include "corrstress/ingest.hpp"
#include "corrstress/io.hpp"
#include "corrstress/plots.hpp"
#include "corrstress/stress.hpp"

namespace corrstress {

struct RunConfig {
    std::string prices_path;
    std::string manifest_path;
    std::string out_dir = "out";
    int window = kDefaultWindow;
    int selection_window = kDefaultSelectionWindow;
    double target_model_size = 6.0;
    double hdr_q = kDefaultHdrQ;
    double var_alpha = kDefaultVarAlpha;
    long mc_samples = 100000;
    long long seed = -1;  // mandatory: every stochastic stage derives from it
    int thin_stride = 0;  // 0 = auto (10 for histories above 2000 rows, else 1)
    int mcmc_iterations = kDefaultMcmcIterations;
    double portfolio_value = 1e6;
    std::vector<double> portfolio_weights;  // empty = equal weight
    double clamp = kCorrelationClamp;

    void validate() const {
        if (prices_path.empty() || manifest_path.empty()) {
            throw ValidationError("config: prices and manifest paths are required");
        }
        if (window < kMinWindow) throw ValidationError("config: window must be >= 30");
        if (selection_window < 2 || selection_window > window) {
            throw ValidationError("config: selection_window must lie in [2, window]");
        }
        if (!(target_model_size > 0.0)) {
            throw ValidationError("config: target_model_size must be positive");
        }
        if (!(hdr_q > 0.0 && hdr_q < 1.0)) throw ValidationError("config: hdr_q must lie in (0,1)");
        if (!(var_alpha > 0.5 && var_alpha < 1.0)) {
            throw ValidationError("config: var_alpha must lie in (0.5,1)");
        }
        if (mc_samples < 100) throw ValidationError("config: mc_samples must be >= 100");
        if (seed < 0) throw ValidationError("config: a non-negative seed is mandatory");
        if (thin_stride < 0) throw ValidationError("config: thin_stride must be >= 0");
        if (mcmc_iterations < 100) throw ValidationError("config: mcmc_iterations must be >= 100");
        if (!(portfolio_value > 0.0)) throw ValidationError("config: portfolio_value must be > 0");
        if (!(clamp > 0.0 && clamp < 1.0)) throw ValidationError("config: clamp must lie in (0,1)");
    }

    static RunConfig from_json(const json& j, const std::string& base_dir = "") {
        RunConfig cfg;
        auto resolve = [&](const std::string& p) {
            if (p.empty() || base_dir.empty()) return p;
            const std::filesystem::path fp(p);
            return fp.is_absolute() ? p : (std::filesystem::path(base_dir) / fp).string();
        };
        try {
            cfg.prices_path = resolve(j.at("prices").get<std::string>());
            cfg.manifest_path = resolve(j.at("manifest").get<std::string>());
            if (j.contains("out_dir")) cfg.out_dir = resolve(j.at("out_dir").get<std::string>());
            if (j.contains("window")) cfg.window = j.at("window").get<int>();
            if (j.contains("selection_window")) {
                cfg.selection_window = j.at("selection_window").get<int>();
            }
            if (j.contains("target_model_size")) {
                cfg.target_model_size = j.at("target_model_size").get<double>();
            }
            if (j.contains("hdr_q")) cfg.hdr_q = j.at("hdr_q").get<double>();
            if (j.contains("var_alpha")) cfg.var_alpha = j.at("var_alpha").get<double>();
            if (j.contains("mc_samples")) cfg.mc_samples = j.at("mc_samples").get<long>();
            if (j.contains("seed")) cfg.seed = j.at("seed").get<long long>();
            if (j.contains("thin_stride")) cfg.thin_stride = j.at("thin_stride").get<int>();
            if (j.contains("mcmc_iterations")) {
                cfg.mcmc_iterations = j.at("mcmc_iterations").get<int>();
            }
            if (j.contains("portfolio_value")) {
                cfg.portfolio_value = j.at("portfolio_value").get<double>();
            }
            if (j.contains("portfolio_weights")) {
                cfg.portfolio_weights = j.at("portfolio_weights").get<std::vector<double>>();
            }
            if (j.contains("clamp")) cfg.clamp = j.at("clamp").get<double>();
        } catch (const json::exception& e) {
            throw ValidationError(std::string("config JSON malformed: ") + e.what());
        }
        return cfg;
    }

    static RunConfig from_file(const std::string& path) {
        const std::string dir = std::filesystem::path(path).parent_path().string();
        return from_json(load_json_file(path), dir);
    }

    json to_json() const {
        json j;
        j["prices"] = prices_path;
        j["manifest"] = manifest_path;
        j["out_dir"] = out_dir;
        j["window"] = window;
        j["selection_window"] = selection_window;
        j["target_model_size"] = target_model_size;
        j["hdr_q"] = hdr_q;
        j["var_alpha"] = var_alpha;
        j["mc_samples"] = mc_samples;
        j["seed"] = seed;
        j["thin_stride"] = thin_stride;
        j["mcmc_iterations"] = mcmc_iterations;
        j["portfolio_value"] = portfolio_value;
        j["portfolio_weights"] = portfolio_weights;
        j["clamp"] = clamp;
        return j;
    }
};

inline Manifest load_manifest(const std::string& path) {
    const json j = load_json_file(path);
    Manifest manifest;
    try {
        for (const auto& [col, role] : j.at("columns").items()) {
            manifest.column_roles[col] = role.get<std::string>();
        }
        if (j.contains("forced_priors")) {
            const std::filesystem::path base = std::filesystem::path(path).parent_path();
            manifest.forced = load_forced_priors_csv(
                (base / j.at("forced_priors").get<std::string>()).string());
        } else if (j.contains("forced")) {
            for (const auto& [asset, fj] : j.at("forced").items()) {
                manifest.forced[asset] = {fj.value("country", ""), fj.value("industry", "")};
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("manifest JSON malformed: ") + e.what());
    }
    return manifest;
}

struct CalibrationRecord {
    Date date;
    CalibrationResult result;
};

struct RunArtifacts {
    ReturnPanel panel;
    Schedule schedule;
    AssignmentSchedule assignments;
    std::vector<std::vector<PIPResult>> pip_history;  // aligned with selection dates
    std::vector<CalibrationRecord> calibrations;
    std::vector<CorrelationParams> beta_history;
    int thin_stride_used = 1;
    BetaLayout layout;
    NIGParams nig;
    FitDiagnostics nig_diag;
    PortfolioSpec portfolio_at_end;
    StressResult stress_mc;
    StressResult stress_hist;
    std::vector<VarPoint> var_series;
};

namespace detail {

inline Eigen::VectorXd resolve_weights(const RunConfig& config, int p) {
    if (config.portfolio_weights.empty()) {
        return Eigen::VectorXd::Constant(p, 1.0 / static_cast<double>(p));
    }
    if (static_cast<int>(config.portfolio_weights.size()) != p) {
        throw ValidationError("config: portfolio_weights length != number of assets");
    }
    Eigen::VectorXd w(p);
    for (int i = 0; i < p; ++i) w[i] = config.portfolio_weights[static_cast<std::size_t>(i)];
    return w;
}

inline std::vector<std::set<int>> forced_indices(const Manifest& manifest,
                                                 const std::vector<std::string>& asset_labels,
                                                 const std::vector<std::string>& factor_labels) {
    std::map<std::string, int> factor_index;
    for (std::size_t k = 0; k < factor_labels.size(); ++k) {
        factor_index[factor_labels[k]] = static_cast<int>(k);
    }
    std::vector<std::set<int>> forced(asset_labels.size());
    for (std::size_t i = 0; i < asset_labels.size(); ++i) {
        const auto it = manifest.forced.find(asset_labels[i]);
        if (it == manifest.forced.end()) continue;
        for (const std::string& name : {it->second.first, it->second.second}) {
            if (name.empty()) continue;
            const auto fit = factor_index.find(name);
            if (fit == factor_index.end()) {
                throw ValidationError("forced factor '" + name + "' for asset '" +
                                      asset_labels[i] + "' is not in the factor universe");
            }
            forced[i].insert(fit->second);
        }
    }
    return forced;
}

inline PortfolioSpec portfolio_at(const RunConfig& config, const ReturnPanel& panel,
                                  const Date& date) {
    const ReturnPanel slice = window_slice(panel, date, config.window);
    PortfolioSpec portfolio;
    portfolio.weights = resolve_weights(config, panel.n_assets());
    portfolio.value_v0 = config.portfolio_value;
    portfolio.vol.resize(panel.n_assets());
    const Eigen::MatrixXd centered =
        slice.asset_returns.rowwise() - slice.asset_returns.colwise().mean();
    for (int c = 0; c < panel.n_assets(); ++c) {
        portfolio.vol[c] =
            std::sqrt(centered.col(c).squaredNorm() / double(slice.size() - 1));
    }
    return portfolio;
}

}  // namespace detail

// ---- stages -----------------------------------------------------------------

inline std::pair<AssignmentSchedule, std::vector<std::vector<PIPResult>>> run_factor_selection(
    const RunConfig& config, const ReturnPanel& panel, const Manifest& manifest,
    const Schedule& schedule) {
    const auto forced = detail::forced_indices(manifest, panel.asset_labels, panel.factor_labels);

    AssignmentSchedule assignments;
    std::vector<std::vector<PIPResult>> pip_history;
    std::optional<std::vector<PIPResult>> previous;
    for (std::size_t qi = 0; qi < schedule.selection_dates.size(); ++qi) {
        const Date& date = schedule.selection_dates[qi];
        const ReturnPanel window = window_slice(panel, date, config.selection_window);
        SelectionResult sel = select_and_propagate(
            previous, forced, window.asset_returns, window.factor_returns, panel.asset_labels,
            panel.factor_labels, config.target_model_size, config.mcmc_iterations,
            rng_stream(static_cast<std::uint64_t>(config.seed), rng_stage::factor_selection,
                       1000000 + qi)());
        previous = sel.pips;
        assignments.effective_from.push_back(date);
        assignments.assignments.push_back(std::move(sel.assignment));
        pip_history.push_back(std::move(sel.pips));
    }
    return {std::move(assignments), std::move(pip_history)};
}

inline std::vector<CalibrationRecord> run_daily_calibration(const RunConfig& config,
                                                            const ReturnPanel& panel,
                                                            const Schedule& schedule,
                                                            const AssignmentSchedule& assignments) {
    std::vector<CalibrationRecord> records;
    records.reserve(schedule.calibration_dates.size());
    for (const Date& date : schedule.calibration_dates) {
        const ReturnPanel window = window_slice(panel, date, config.window);
        const CorrelationMatrix empirical = empirical_correlation(window.asset_returns);
        CalibrationRecord record;
        record.date = date;
        record.result = calibrate(empirical, assignments.at(date), config.clamp);
        record.result.params.timestamp = date;
        records.push_back(std::move(record));
    }
    if (records.empty()) throw ValidationError("calibration produced no records");
    return records;
}

inline int resolve_thin_stride(const RunConfig& config, std::size_t history_size) {
    if (config.thin_stride > 0) return config.thin_stride;
    return history_size > 2000 ? 10 : 1;
}

struct DistFitStage {
    BetaLayout layout;
    NIGParams params;
    FitDiagnostics diagnostics;
    int stride_used = 1;
};

inline DistFitStage run_dist_fit(const RunConfig& config,
                                 const std::vector<CorrelationParams>& beta_history,
                                 const std::vector<std::string>& factor_names) {
    DistFitStage stage;
    stage.stride_used = resolve_thin_stride(config, beta_history.size());
    const std::vector<CorrelationParams> thinned = thin(beta_history, stage.stride_used);
    stage.layout = BetaLayout::from_history(thinned, factor_names);
    Eigen::MatrixXd data(static_cast<long>(thinned.size()), stage.layout.active_dim());
    for (std::size_t i = 0; i < thinned.size(); ++i) {
        data.row(static_cast<long>(i)) = stage.layout.to_active(thinned[i]).transpose();
    }
    auto [params, diag] = fit_em(data);
    stage.params = std::move(params);
    stage.diagnostics = std::move(diag);
    return stage;
}

// ---- full pipeline ------------------------------------------------------------

inline RunArtifacts run_pipeline(const RunConfig& config) {
    config.validate();
    RunArtifacts art;

    const Manifest manifest = load_manifest(config.manifest_path);
    art.panel = load_prices(config.prices_path, manifest);
    art.schedule = build_schedule(art.panel.dates, config.window, config.selection_window);

    std::tie(art.assignments, art.pip_history) =
        run_factor_selection(config, art.panel, manifest, art.schedule);

    art.calibrations = run_daily_calibration(config, art.panel, art.schedule, art.assignments);
    art.beta_history.reserve(art.calibrations.size());
    for (const auto& record : art.calibrations) art.beta_history.push_back(record.result.params);

    DistFitStage fit = run_dist_fit(config, art.beta_history, art.panel.factor_labels);
    art.layout = std::move(fit.layout);
    art.nig = std::move(fit.params);
    art.nig_diag = std::move(fit.diagnostics);
    art.thin_stride_used = fit.stride_used;

    const Date last_date = art.calibrations.back().date;
    art.portfolio_at_end = detail::portfolio_at(config, art.panel, last_date);
    const FactorAssignment& final_assignment = art.assignments.at(last_date);

    art.stress_mc = reverse_stress_mc(art.nig, art.layout, final_assignment,
                                      art.portfolio_at_end, config.hdr_q, config.mc_samples,
                                      static_cast<std::uint64_t>(config.seed), config.var_alpha);
    art.stress_mc.beta_star.timestamp = last_date;
    art.stress_hist = reverse_stress_historical(
        art.beta_history, art.nig, art.layout, final_assignment, art.portfolio_at_end,
        config.hdr_q, static_cast<std::uint64_t>(config.seed), config.var_alpha);

    art.var_series = stressed_var_series(art.panel, art.assignments, art.stress_mc.beta_star,
                                         config.portfolio_value,
                                         detail::resolve_weights(config, art.panel.n_assets()),
                                         config.var_alpha, config.window);
    return art;
}

// ---- artifact emission ----------------------------------------------------------

inline void write_assignments(const RunConfig& config, const AssignmentSchedule& assignments) {
    for (std::size_t i = 0; i < assignments.assignments.size(); ++i) {
        const std::string path = config.out_dir + "/assignments/assignment_" +
                                 assignments.effective_from[i].to_string() + ".json";
        write_text_file(path, assignment_to_json(assignments.assignments[i]).dump(2) + "\n");
    }
}

inline void write_pip_history(const RunConfig& config, const AssignmentSchedule& assignments,
                              const std::vector<std::vector<PIPResult>>& pip_history,
                              const std::vector<std::string>& asset_labels,
                              const std::vector<std::string>& factor_labels) {
    std::string csv = "quarter,asset_id,factor,pip\n";
    for (std::size_t qi = 0; qi < pip_history.size(); ++qi) {
        append_pip_rows(csv, assignments.effective_from[qi], asset_labels, factor_labels,
                        pip_history[qi]);
    }
    write_text_file(config.out_dir + "/pip_history.csv", csv);
}

inline void write_calibrations(const RunConfig& config,
                               const std::vector<CalibrationRecord>& records,
                               const std::vector<std::string>& factor_names) {
    std::vector<CorrelationParams> history;
    history.reserve(records.size());
    for (const auto& r : records) history.push_back(r.result.params);
    write_params_csv(config.out_dir + "/params.csv", history, factor_names);

    std::string diag = "date,rss,r_squared,eta_omitted,gram_condition,pruned_columns\n";
    for (const auto& r : records) {
        std::string pruned;
        for (std::size_t i = 0; i < r.result.pruned_columns.size(); ++i) {
            pruned += (i ? ";" : "") + r.result.pruned_columns[i];
        }
        diag += r.date.to_string() + "," + format_double(r.result.rss, 10) + "," +
                format_double(r.result.r_squared, 10) + "," +
                (r.result.eta_omitted ? "1" : "0") + "," +
                format_double(r.result.gram_condition, 6) + "," + pruned + "\n";
    }
    write_text_file(config.out_dir + "/calibration_diagnostics.csv", diag);
}

inline void write_dist_fit(const RunConfig& config, const BetaLayout& layout,
                           const NIGParams& nig, const FitDiagnostics& diag, int stride) {
    write_text_file(config.out_dir + "/nig_params.json",
                    nig_to_json(nig, layout.active_names()).dump(2) + "\n");
    json j;
    j["n_iter"] = diag.n_iter;
    j["converged"] = diag.converged;
    j["thin_stride"] = stride;
    j["loglik_first"] = diag.loglik_trace.empty() ? 0.0 : diag.loglik_trace.front();
    j["loglik_last"] = diag.loglik_trace.empty() ? 0.0 : diag.loglik_trace.back();
    std::vector<double> ks(diag.ks_pvalues.data(),
                           diag.ks_pvalues.data() + diag.ks_pvalues.size());
    j["ks_pvalues"] = ks;
    j["labels"] = layout.active_names();
    write_text_file(config.out_dir + "/fit_diagnostics.json", j.dump(2) + "\n");
}

inline void write_plots(const RunConfig& config, const RunArtifacts& art) {
    // Active coefficient paths over the calibration history.
    std::vector<Date> dates;
    dates.reserve(art.calibrations.size());
    for (const auto& r : art.calibrations) dates.push_back(r.date);
    std::vector<LineSeries> series;
    const auto names = art.layout.active_names();
    for (int a = 0; a < art.layout.active_dim(); ++a) {
        LineSeries s;
        s.name = names[static_cast<std::size_t>(a)];
        s.values.reserve(art.beta_history.size());
        for (const auto& params : art.beta_history) {
            s.values.push_back(art.layout.to_active(params)[a]);
        }
        series.push_back(std::move(s));
    }
    write_line_chart_svg(config.out_dir + "/plots/params_timeseries.svg",
                         "Calibrated correlation coefficients", dates, series);

    // Pre-stress empirical vs post-stress scenario correlation heatmaps.
    const Date last_date = art.calibrations.back().date;
    const ReturnPanel window = window_slice(art.panel, last_date, config.window);
    const CorrelationMatrix empirical = empirical_correlation(window.asset_returns);
    CorrelationMatrix stressed =
        ensure_psd(model_correlation(art.stress_mc.beta_star, art.assignments.at(last_date)));
    write_heatmap_pair_svg(config.out_dir + "/plots/corr_heatmap_pre_post.svg",
                           "Empirical (" + last_date.to_string() + ")", empirical.values,
                           "Stress scenario", stressed.values, art.panel.asset_labels);

    std::vector<Date> var_dates;
    LineSeries baseline{"VaR", {}};
    LineSeries stressed_series{"stressed VaR", {}};
    for (const auto& point : art.var_series) {
        var_dates.push_back(point.date);
        baseline.values.push_back(point.var_baseline);
        stressed_series.values.push_back(point.var_stressed);
    }
    if (!var_dates.empty()) {
        write_line_chart_svg(config.out_dir + "/plots/var_series.svg",
                             "Baseline vs stressed VaR", var_dates,
                             {baseline, stressed_series});
    }
}

inline void write_artifacts(const RunConfig& config, const RunArtifacts& art) {
    write_text_file(config.out_dir + "/run_config.json", config.to_json().dump(2) + "\n");
    write_assignments(config, art.assignments);
    write_pip_history(config, art.assignments, art.pip_history, art.panel.asset_labels,
                      art.panel.factor_labels);
    write_calibrations(config, art.calibrations, art.panel.factor_labels);
    write_dist_fit(config, art.layout, art.nig, art.nig_diag, art.thin_stride_used);
    write_text_file(config.out_dir + "/stress_mc.json",
                    stress_result_to_json(art.stress_mc, art.panel.factor_labels).dump(2) + "\n");
    write_text_file(
        config.out_dir + "/stress_historical.json",
        stress_result_to_json(art.stress_hist, art.panel.factor_labels).dump(2) + "\n");
    write_var_series_csv(config.out_dir + "/var_series.csv", art.var_series);
    write_plots(config, art);
}

// Full pipeline with per-stage failure markers: on error, a FAILED_<stage>
// file with the message lands in the output directory and the exception
// propagates to the caller.
inline RunArtifacts cmd_run(const RunConfig& config) {
    config.validate();
    std::filesystem::create_directories(config.out_dir);
    std::string stage = "ingest";
    try {
        const Manifest manifest = load_manifest(config.manifest_path);
        RunArtifacts art;
        art.panel = load_prices(config.prices_path, manifest);
        art.schedule = build_schedule(art.panel.dates, config.window, config.selection_window);

        stage = "select-factors";
        std::tie(art.assignments, art.pip_history) =
            run_factor_selection(config, art.panel, manifest, art.schedule);
        write_assignments(config, art.assignments);
        write_pip_history(config, art.assignments, art.pip_history, art.panel.asset_labels,
                          art.panel.factor_labels);

        stage = "calibrate";
        art.calibrations = run_daily_calibration(config, art.panel, art.schedule, art.assignments);
        for (const auto& r : art.calibrations) art.beta_history.push_back(r.result.params);
        write_calibrations(config, art.calibrations, art.panel.factor_labels);

        stage = "fit-dist";
        DistFitStage fit = run_dist_fit(config, art.beta_history, art.panel.factor_labels);
        art.layout = std::move(fit.layout);
        art.nig = std::move(fit.params);
        art.nig_diag = std::move(fit.diagnostics);
        art.thin_stride_used = fit.stride_used;
        write_dist_fit(config, art.layout, art.nig, art.nig_diag, art.thin_stride_used);

        stage = "reverse-stress";
        const Date last_date = art.calibrations.back().date;
        art.portfolio_at_end = detail::portfolio_at(config, art.panel, last_date);
        const FactorAssignment& final_assignment = art.assignments.at(last_date);
        art.stress_mc =
            reverse_stress_mc(art.nig, art.layout, final_assignment, art.portfolio_at_end,
                              config.hdr_q, config.mc_samples,
                              static_cast<std::uint64_t>(config.seed), config.var_alpha);
        art.stress_mc.beta_star.timestamp = last_date;
        art.stress_hist = reverse_stress_historical(
            art.beta_history, art.nig, art.layout, final_assignment, art.portfolio_at_end,
            config.hdr_q, static_cast<std::uint64_t>(config.seed), config.var_alpha);
        write_text_file(
            config.out_dir + "/stress_mc.json",
            stress_result_to_json(art.stress_mc, art.panel.factor_labels).dump(2) + "\n");
        write_text_file(
            config.out_dir + "/stress_historical.json",
            stress_result_to_json(art.stress_hist, art.panel.factor_labels).dump(2) + "\n");

        stage = "report";
        art.var_series = stressed_var_series(
            art.panel, art.assignments, art.stress_mc.beta_star, config.portfolio_value,
            detail::resolve_weights(config, art.panel.n_assets()), config.var_alpha,
            config.window);
        write_var_series_csv(config.out_dir + "/var_series.csv", art.var_series);
        write_text_file(config.out_dir + "/run_config.json", config.to_json().dump(2) + "\n");
        write_plots(config, art);
        return art;
    } catch (const std::exception& e) {
        write_text_file(config.out_dir + "/FAILED_" + stage, std::string(e.what()) + "\n");
        throw;
    }
}

// ---- staged commands -------------------------------------------------------------

inline void cmd_select_factors(const RunConfig& config) {
    config.validate();
    const Manifest manifest = load_manifest(config.manifest_path);
    const ReturnPanel panel = load_prices(config.prices_path, manifest);
    const Schedule schedule = build_schedule(panel.dates, config.window, config.selection_window);
    auto [assignments, pips] = run_factor_selection(config, panel, manifest, schedule);
    write_assignments(config, assignments);
    write_pip_history(config, assignments, pips, panel.asset_labels, panel.factor_labels);
}

inline void cmd_calibrate(const RunConfig& config) {
    config.validate();
    const Manifest manifest = load_manifest(config.manifest_path);
    const ReturnPanel panel = load_prices(config.prices_path, manifest);
    const Schedule schedule = build_schedule(panel.dates, config.window, config.selection_window);
    auto [assignments, pips] = run_factor_selection(config, panel, manifest, schedule);
    write_assignments(config, assignments);
    write_pip_history(config, assignments, pips, panel.asset_labels, panel.factor_labels);
    const auto records = run_daily_calibration(config, panel, schedule, assignments);
    write_calibrations(config, records, panel.factor_labels);
}

inline ParamsHistory require_params(const RunConfig& config) {
    const std::string path = config.out_dir + "/params.csv";
    if (!std::filesystem::exists(path)) {
        throw IoError("missing " + path + "; run the calibrate stage first");
    }
    return read_params_csv(path);
}

inline void cmd_fit_dist(const RunConfig& config) {
    config.validate();
    const ParamsHistory params = require_params(config);
    DistFitStage fit = run_dist_fit(config, params.history, params.factor_names);
    write_dist_fit(config, fit.layout, fit.params, fit.diagnostics, fit.stride_used);
}

inline FactorAssignment require_assignment(const RunConfig& config, const Date& date) {
    const std::string dir = config.out_dir + "/assignments";
    if (!std::filesystem::exists(dir)) {
        throw IoError("missing " + dir + "; run the select-factors stage first");
    }
    std::vector<std::pair<Date, std::string>> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("assignment_", 0) == 0 && name.size() >= 26) {
            files.emplace_back(parse_date(name.substr(11, 10)), entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    std::string chosen;
    for (const auto& [d, path] : files) {
        if (d <= date) chosen = path;
    }
    if (chosen.empty()) {
        throw IoError("no assignment effective at " + date.to_string() + " under " + dir);
    }
    return assignment_from_json(load_json_file(chosen));
}

// Baseline VaR at a date from the trailing empirical window.
inline double cmd_var(const RunConfig& config, std::optional<Date> date) {
    config.validate();
    const Manifest manifest = load_manifest(config.manifest_path);
    const ReturnPanel panel = load_prices(config.prices_path, manifest);
    const Date at = date.value_or(panel.dates.back());
    const ReturnPanel window = window_slice(panel, at, config.window);
    PortfolioSpec portfolio = detail::portfolio_at(config, panel, at);
    const CorrelationMatrix empirical = ensure_psd(empirical_correlation(window.asset_returns));
    return var_gaussian(portfolio, empirical, config.var_alpha);
}

struct ScenarioReport {
    std::string label;
    Date date;
    double var_baseline = 0.0;
    double var_stressed = 0.0;
    double delta = 0.0;
};

// Forward stress: apply additive coefficient shifts to the calibrated params
// of the evaluation date, repair, and compare VaR against the unshifted
// model correlation with the same vols.
inline std::vector<ScenarioReport> cmd_stress(const RunConfig& config,
                                              const std::string& scenario_path,
                                              std::optional<Date> date) {
    config.validate();
    const ParamsHistory params_history = require_params(config);
    if (params_history.history.empty()) throw ValidationError("params history is empty");
    const Date at = date.value_or(params_history.history.back().timestamp);
    const CorrelationParams* baseline_params = nullptr;
    for (const auto& p : params_history.history) {
        if (p.timestamp == at) baseline_params = &p;
    }
    if (!baseline_params) {
        throw ValidationError("no calibrated params for date " + at.to_string());
    }
    const FactorAssignment assignment = require_assignment(config, at);
    const Manifest manifest = load_manifest(config.manifest_path);
    const ReturnPanel panel = load_prices(config.prices_path, manifest);
    PortfolioSpec portfolio = detail::portfolio_at(config, panel, at);

    const CorrelationMatrix base_corr =
        ensure_psd(model_correlation(*baseline_params, assignment));
    const double var_base = var_gaussian(portfolio, base_corr, config.var_alpha);

    std::vector<ScenarioReport> reports;
    json out = json::array();
    for (const ScenarioShifts& scenario : read_scenario_csv(scenario_path)) {
        const CorrelationParams shifted =
            apply_scenario(*baseline_params, scenario.shifts, assignment.factor_names);
        CorrelationMatrix stressed = ensure_psd(model_correlation(shifted, assignment));
        stressed.source = CorrSource::stressed;
        ScenarioReport report;
        report.label = scenario.label;
        report.date = at;
        report.var_baseline = var_base;
        report.var_stressed = var_gaussian(portfolio, stressed, config.var_alpha);
        report.delta = report.var_stressed - report.var_baseline;
        json jr;
        jr["label"] = report.label;
        jr["date"] = report.date.to_string();
        jr["var_baseline"] = report.var_baseline;
        jr["var_stressed"] = report.var_stressed;
        jr["delta_var"] = report.delta;
        out.push_back(std::move(jr));
        reports.push_back(std::move(report));
    }
    write_text_file(config.out_dir + "/stress_report.json", out.dump(2) + "\n");
    return reports;
}

inline AssignmentSchedule require_assignment_schedule(const RunConfig& config) {
    const std::string dir = config.out_dir + "/assignments";
    if (!std::filesystem::exists(dir)) {
        throw IoError("missing " + dir + "; run the select-factors stage first");
    }
    std::vector<std::pair<Date, std::string>> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("assignment_", 0) == 0 && name.size() >= 26) {
            files.emplace_back(parse_date(name.substr(11, 10)), entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    AssignmentSchedule schedule;
    for (const auto& [d, path] : files) {
        schedule.effective_from.push_back(d);
        schedule.assignments.push_back(assignment_from_json(load_json_file(path)));
    }
    if (schedule.assignments.empty()) throw IoError("no assignment files under " + dir);
    return schedule;
}

// Stressed VaR series and plots from previously written artifacts.
inline std::vector<VarPoint> cmd_report(const RunConfig& config) {
    config.validate();
    const ParamsHistory params_history = require_params(config);
    const AssignmentSchedule assignments = require_assignment_schedule(config);
    const std::string stress_path = config.out_dir + "/stress_mc.json";
    if (!std::filesystem::exists(stress_path)) {
        throw IoError("missing " + stress_path + "; run the reverse-stress stage first");
    }
    const CorrelationParams scenario =
        beta_star_from_stress_json(load_json_file(stress_path), params_history.factor_names);

    const Manifest manifest = load_manifest(config.manifest_path);
    const ReturnPanel panel = load_prices(config.prices_path, manifest);
    const std::vector<VarPoint> series = stressed_var_series(
        panel, assignments, scenario, config.portfolio_value,
        detail::resolve_weights(config, panel.n_assets()), config.var_alpha, config.window);
    write_var_series_csv(config.out_dir + "/var_series.csv", series);

    std::vector<Date> dates;
    std::vector<LineSeries> coeff_series;
    const BetaLayout layout =
        BetaLayout::from_history(params_history.history, params_history.factor_names);
    const auto names = layout.active_names();
    for (int a = 0; a < layout.active_dim(); ++a) {
        coeff_series.push_back({names[static_cast<std::size_t>(a)], {}});
    }
    for (const auto& p : params_history.history) {
        dates.push_back(p.timestamp);
        const Eigen::VectorXd v = layout.to_active(p);
        for (int a = 0; a < layout.active_dim(); ++a) {
            coeff_series[static_cast<std::size_t>(a)].values.push_back(v[a]);
        }
    }
    write_line_chart_svg(config.out_dir + "/plots/params_timeseries.svg",
                         "Calibrated correlation coefficients", dates, coeff_series);

    const Date last = params_history.history.back().timestamp;
    const ReturnPanel window = window_slice(panel, last, config.window);
    const CorrelationMatrix empirical = empirical_correlation(window.asset_returns);
    const CorrelationMatrix stressed =
        ensure_psd(model_correlation(scenario, assignments.at(last)));
    write_heatmap_pair_svg(config.out_dir + "/plots/corr_heatmap_pre_post.svg",
                           "Empirical (" + last.to_string() + ")", empirical.values,
                           "Stress scenario", stressed.values, panel.asset_labels);

    if (!series.empty()) {
        std::vector<Date> var_dates;
        LineSeries baseline{"VaR", {}};
        LineSeries stressed_line{"stressed VaR", {}};
        for (const auto& point : series) {
            var_dates.push_back(point.date);
            baseline.values.push_back(point.var_baseline);
            stressed_line.values.push_back(point.var_stressed);
        }
        write_line_chart_svg(config.out_dir + "/plots/var_series.svg",
                             "Baseline vs stressed VaR", var_dates, {baseline, stressed_line});
    }
    return series;
}

inline std::pair<StressResult, StressResult> cmd_reverse_stress(const RunConfig& config) {
    config.validate();
    const ParamsHistory params_history = require_params(config);
    DistFitStage fit = run_dist_fit(config, params_history.history, params_history.factor_names);
    write_dist_fit(config, fit.layout, fit.params, fit.diagnostics, fit.stride_used);

    const Date last = params_history.history.back().timestamp;
    const FactorAssignment assignment = require_assignment(config, last);
    const Manifest manifest = load_manifest(config.manifest_path);
    const ReturnPanel panel = load_prices(config.prices_path, manifest);
    PortfolioSpec portfolio = detail::portfolio_at(config, panel, last);

    StressResult mc = reverse_stress_mc(fit.params, fit.layout, assignment, portfolio,
                                        config.hdr_q, config.mc_samples,
                                        static_cast<std::uint64_t>(config.seed),
                                        config.var_alpha);
    mc.beta_star.timestamp = last;
    StressResult hist = reverse_stress_historical(
        params_history.history, fit.params, fit.layout, assignment, portfolio, config.hdr_q,
        static_cast<std::uint64_t>(config.seed), config.var_alpha);
    write_text_file(config.out_dir + "/stress_mc.json",
                    stress_result_to_json(mc, params_history.factor_names).dump(2) + "\n");
    write_text_file(config.out_dir + "/stress_historical.json",
                    stress_result_to_json(hist, params_history.factor_names).dump(2) + "\n");
    return {std::move(mc), std::move(hist)};
}

}  // namespace corrstress
