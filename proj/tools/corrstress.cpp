// Command-line driver: wires ingest -> factor selection -> calibration ->
// distribution fit -> stress testing and emits the CSV/JSON/SVG reports.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "corrstress/corrstress.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct CommonFlags {
    std::string config_path;
    std::optional<long long> seed;
    std::optional<std::string> out;
    std::optional<std::string> date;
    std::optional<double> q;
    std::optional<double> alpha;
    std::optional<int> window;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "run configuration JSON")->required();
    cmd->add_option("--seed", flags.seed, "override the master seed");
    cmd->add_option("--out", flags.out, "override the output directory");
    cmd->add_option("--q", flags.q, "override the HDR tail level q");
    cmd->add_option("--alpha", flags.alpha, "override the VaR confidence level");
    cmd->add_option("--window", flags.window, "override the calibration window length");
}

corrstress::RunConfig resolve_config(const CommonFlags& flags) {
    corrstress::RunConfig config = corrstress::RunConfig::from_file(flags.config_path);
    if (flags.seed) config.seed = *flags.seed;
    if (flags.out) config.out_dir = *flags.out;
    if (flags.q) config.hdr_q = *flags.q;
    if (flags.alpha) config.var_alpha = *flags.alpha;
    if (flags.window) config.window = *flags.window;
    config.validate();
    return config;
}

std::optional<corrstress::Date> parse_optional_date(const std::optional<std::string>& s) {
    if (!s) return std::nullopt;
    return corrstress::parse_date(*s);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"correlation stress testing toolkit"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string scenario_path;

    CLI::App* run = app.add_subcommand("run", "full pipeline: select, calibrate, fit, stress");
    add_common(run, flags);

    CLI::App* select = app.add_subcommand("select-factors", "quarterly Bayesian factor selection");
    add_common(select, flags);

    CLI::App* calibrate = app.add_subcommand("calibrate", "daily coefficient calibration");
    add_common(calibrate, flags);

    CLI::App* fitdist = app.add_subcommand("fit-dist", "fit the coefficient distribution");
    add_common(fitdist, flags);

    CLI::App* var = app.add_subcommand("var", "baseline VaR from the trailing window");
    add_common(var, flags);
    var->add_option("--date", flags.date, "evaluation date (default: last panel date)");

    CLI::App* stress = app.add_subcommand("stress", "forward stress from a scenario file");
    add_common(stress, flags);
    stress->add_option("--scenario", scenario_path, "scenario shift CSV")->required();
    stress->add_option("--date", flags.date, "evaluation date (default: last calibrated)");

    CLI::App* reverse = app.add_subcommand("reverse-stress", "worst in-region scenario");
    add_common(reverse, flags);

    CLI::App* report = app.add_subcommand("report", "stressed VaR series and plots");
    add_common(report, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        const corrstress::RunConfig config = resolve_config(flags);
        if (run->parsed()) {
            corrstress::cmd_run(config);
            std::cout << "run complete; artifacts in " << config.out_dir << "\n";
        } else if (select->parsed()) {
            corrstress::cmd_select_factors(config);
            std::cout << "assignments written to " << config.out_dir << "/assignments\n";
        } else if (calibrate->parsed()) {
            corrstress::cmd_calibrate(config);
            std::cout << "params written to " << config.out_dir << "/params.csv\n";
        } else if (fitdist->parsed()) {
            corrstress::cmd_fit_dist(config);
            std::cout << "distribution written to " << config.out_dir << "/nig_params.json\n";
        } else if (var->parsed()) {
            const double v = corrstress::cmd_var(config, parse_optional_date(flags.date));
            std::printf("var,%.*g\n", 12, v);
        } else if (stress->parsed()) {
            const auto reports =
                corrstress::cmd_stress(config, scenario_path, parse_optional_date(flags.date));
            for (const auto& r : reports) {
                std::printf("%s,%s,var=%.6g,stressed=%.6g,delta=%.6g\n", r.label.c_str(),
                            r.date.to_string().c_str(), r.var_baseline, r.var_stressed, r.delta);
            }
        } else if (reverse->parsed()) {
            const auto [mc, hist] = corrstress::cmd_reverse_stress(config);
            std::printf("monte_carlo,var=%.6g,variance=%.6g\n", mc.var_alpha_value, mc.variance);
            std::printf("historical,var=%.6g,variance=%.6g\n", hist.var_alpha_value,
                        hist.variance);
        } else if (report->parsed()) {
            const auto series = corrstress::cmd_report(config);
            std::cout << "report written: " << config.out_dir << "/var_series.csv ("
                      << series.size() << " rows)\n";
        }
        return kExitOk;
    } catch (const corrstress::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const corrstress::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const corrstress::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
}
