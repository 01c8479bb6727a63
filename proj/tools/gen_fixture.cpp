// Generates the synthetic end-to-end fixture under data/fixture/: three
// assets driven by two observable factor indices (a market factor every
// asset loads on and a tech factor two assets share), with a mid-sample
// volatility regime shift so the calibrated coefficients move over time.
//
//   assets:  AAA, BBB load on AMER and TECH; CCC loads on AMER only
//   forced:  country AMER for all; industry TECH for AAA and BBB
//
// Usage: gen_fixture [output_dir] (default data/fixture)

#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "corrstress/common.hpp"
#include "corrstress/dates.hpp"
#include "corrstress/io.hpp"

int main(int argc, char** argv) {
    const std::string out_dir = argc > 1 ? argv[1] : "data/fixture";
    const int n_days = 821;  // 820 return observations
    const std::uint64_t seed = 20240901;

    std::mt19937_64 rng = corrstress::rng_stream(seed, 99);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double amer_vol_calm = 0.009;
    const double amer_vol_stressed = 0.014;
    const double tech_vol = 0.008;
    const double idio_vol = 0.006;
    // loadings on (AMER, TECH)
    const double load[3][2] = {{0.9, 0.8}, {1.0, 0.9}, {1.1, 0.0}};

    std::vector<corrstress::Date> dates;
    corrstress::Date day{2018, 1, 1};
    while (static_cast<int>(dates.size()) < n_days) {
        day = corrstress::next_business_day(day);
        dates.push_back(day);
    }

    std::vector<double> p_amer{1000.0}, p_tech{1000.0};
    std::vector<std::vector<double>> p_asset(3, std::vector<double>{100.0});
    for (int t = 1; t < n_days; ++t) {
        const double amer_vol = t < n_days / 2 ? amer_vol_calm : amer_vol_stressed;
        const double r_amer = amer_vol * normal(rng);
        const double r_tech = tech_vol * normal(rng);
        p_amer.push_back(p_amer.back() * std::exp(r_amer));
        p_tech.push_back(p_tech.back() * std::exp(r_tech));
        for (int i = 0; i < 3; ++i) {
            const double r = load[i][0] * r_amer + load[i][1] * r_tech + idio_vol * normal(rng);
            p_asset[i].push_back(p_asset[i].back() * std::exp(r));
        }
    }

    std::string prices = "date,AAA,BBB,CCC,AMER,TECH\n";
    for (int t = 0; t < n_days; ++t) {
        prices += dates[static_cast<std::size_t>(t)].to_string();
        for (int i = 0; i < 3; ++i) {
            prices += "," + corrstress::format_double(p_asset[i][static_cast<std::size_t>(t)], 10);
        }
        prices += "," + corrstress::format_double(p_amer[static_cast<std::size_t>(t)], 10);
        prices += "," + corrstress::format_double(p_tech[static_cast<std::size_t>(t)], 10);
        prices += "\n";
    }
    corrstress::write_text_file(out_dir + "/prices.csv", prices);

    corrstress::write_text_file(out_dir + "/forced.csv",
                                "asset_id,country_factor,industry_factor\n"
                                "AAA,AMER,TECH\n"
                                "BBB,AMER,TECH\n"
                                "CCC,AMER,\n");

    corrstress::json manifest;
    manifest["columns"] = {{"AAA", "asset"},  {"BBB", "asset"},  {"CCC", "asset"},
                           {"AMER", "factor"}, {"TECH", "factor"}};
    manifest["forced_priors"] = "forced.csv";
    corrstress::write_text_file(out_dir + "/manifest.json", manifest.dump(2) + "\n");

    corrstress::json config;
    config["prices"] = "prices.csv";
    config["manifest"] = "manifest.json";
    config["out_dir"] = "out";
    config["window"] = 250;
    config["selection_window"] = 63;
    config["target_model_size"] = 1.0;
    config["hdr_q"] = 0.05;
    config["var_alpha"] = 0.99;
    config["mc_samples"] = 100000;
    config["seed"] = 42;
    config["thin_stride"] = 0;
    config["mcmc_iterations"] = 50000;
    config["portfolio_value"] = 1000000.0;
    corrstress::write_text_file(out_dir + "/config.json", config.dump(2) + "\n");

    std::printf("fixture written to %s (%d price rows)\n", out_dir.c_str(), n_days);
    return 0;
}
