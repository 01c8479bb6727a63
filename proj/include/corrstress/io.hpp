#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corrstress/common.hpp"
#include "corrstress/corrmodel.hpp"
#include "corrstress/distfit.hpp"
#include "corrstress/factorselect.hpp"
#include "corrstress/ingest.hpp"
#include "corrstress/stress.hpp"

namespace corrstress {

using nlohmann::json;

inline void write_text_file(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    out << content;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json load_json_file(const std::string& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError("invalid JSON in " + path + ": " + e.what());
    }
}

// ---- factor assignment: {"assets":[...], "factors":[...], "indicators":[[0|1,...],...]}

inline json assignment_to_json(const FactorAssignment& assignment) {
    json j;
    j["assets"] = assignment.asset_ids;
    j["factors"] = assignment.factor_names;
    json rows = json::array();
    for (int i = 0; i < assignment.n_assets(); ++i) {
        json row = json::array();
        for (int k = 0; k < assignment.n_factors(); ++k) row.push_back(assignment.indicators(i, k));
        rows.push_back(std::move(row));
    }
    j["indicators"] = std::move(rows);
    return j;
}

inline FactorAssignment assignment_from_json(const json& j) {
    FactorAssignment assignment;
    try {
        assignment.asset_ids = j.at("assets").get<std::vector<std::string>>();
        assignment.factor_names = j.at("factors").get<std::vector<std::string>>();
        const auto& rows = j.at("indicators");
        assignment.indicators.resize(static_cast<int>(assignment.asset_ids.size()),
                                     static_cast<int>(assignment.factor_names.size()));
        for (int i = 0; i < assignment.n_assets(); ++i) {
            for (int k = 0; k < assignment.n_factors(); ++k) {
                assignment.indicators(i, k) = rows.at(i).at(k).get<int>();
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("assignment JSON malformed: ") + e.what());
    }
    assignment.validate();
    return assignment;
}

// ---- params CSV: date, eta (empty if omitted), lambda_*, nu_* -------------

inline std::string params_csv_header(const std::vector<std::string>& factor_names) {
    std::string header = "date,eta";
    for (const auto& f : factor_names) header += ",lambda_" + f;
    for (const auto& f : factor_names) header += ",nu_" + f;
    return header;
}

inline std::string params_csv_row(const CorrelationParams& params) {
    std::string row = params.timestamp.to_string();
    row += ",";
    if (params.eta) row += format_double(*params.eta);
    for (int k = 0; k < params.lambda.size(); ++k) row += "," + format_double(params.lambda[k]);
    for (int k = 0; k < params.nu.size(); ++k) row += "," + format_double(params.nu[k]);
    return row;
}

inline void write_params_csv(const std::string& path,
                             const std::vector<CorrelationParams>& history,
                             const std::vector<std::string>& factor_names) {
    std::string out = params_csv_header(factor_names) + "\n";
    for (const auto& p : history) out += params_csv_row(p) + "\n";
    write_text_file(path, out);
}

struct ParamsHistory {
    std::vector<CorrelationParams> history;
    std::vector<std::string> factor_names;
};

inline ParamsHistory read_params_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open params file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("params file empty: " + path);
    const auto header = detail::split_csv_line(line);
    if (header.size() < 2 || header[0] != "date" || header[1] != "eta") {
        throw ValidationError("params file header must start with date,eta: " + path);
    }
    ParamsHistory out;
    const std::size_t d2 = header.size() - 2;
    if (d2 % 2 != 0) throw ValidationError("params file: unbalanced lambda/nu columns");
    const std::size_t d = d2 / 2;
    for (std::size_t k = 0; k < d; ++k) {
        const std::string& name = header[2 + k];
        if (name.rfind("lambda_", 0) != 0) {
            throw ValidationError("params file: expected lambda_* column, got " + name);
        }
        out.factor_names.push_back(name.substr(7));
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ValidationError("params file: row width mismatch in " + path);
        }
        CorrelationParams p;
        p.timestamp = parse_date(cells[0]);
        if (!cells[1].empty()) p.eta = std::stod(cells[1]);
        p.lambda.resize(static_cast<int>(d));
        p.nu.resize(static_cast<int>(d));
        for (std::size_t k = 0; k < d; ++k) {
            p.lambda[static_cast<int>(k)] = std::stod(cells[2 + k]);
            p.nu[static_cast<int>(k)] = std::stod(cells[2 + d + k]);
        }
        out.history.push_back(std::move(p));
    }
    return out;
}

// ---- fitted distribution JSON ---------------------------------------------

inline json nig_to_json(const NIGParams& params, const std::vector<std::string>& labels) {
    json j;
    j["dim"] = params.dim();
    j["chi"] = params.chi;
    j["psi"] = params.psi;
    j["mu"] = std::vector<double>(params.mu.data(), params.mu.data() + params.dim());
    j["gamma"] = std::vector<double>(params.gamma_skew.data(),
                                     params.gamma_skew.data() + params.dim());
    json sigma = json::array();
    for (int i = 0; i < params.dim(); ++i) {
        json row = json::array();
        for (int k = 0; k < params.dim(); ++k) row.push_back(params.sigma(i, k));
        sigma.push_back(std::move(row));
    }
    j["sigma"] = std::move(sigma);
    j["labels"] = labels;
    return j;
}

inline std::pair<NIGParams, std::vector<std::string>> nig_from_json(const json& j) {
    NIGParams params;
    std::vector<std::string> labels;
    try {
        const int dim = j.at("dim").get<int>();
        params.chi = j.at("chi").get<double>();
        params.psi = j.at("psi").get<double>();
        params.mu.resize(dim);
        params.gamma_skew.resize(dim);
        params.sigma.resize(dim, dim);
        for (int i = 0; i < dim; ++i) {
            params.mu[i] = j.at("mu").at(i).get<double>();
            params.gamma_skew[i] = j.at("gamma").at(i).get<double>();
            for (int k = 0; k < dim; ++k) params.sigma(i, k) = j.at("sigma").at(i).at(k).get<double>();
        }
        if (j.contains("labels")) labels = j.at("labels").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("distribution JSON malformed: ") + e.what());
    }
    params.validate();
    return {params, labels};
}

// ---- stress results --------------------------------------------------------

inline json stress_result_to_json(const StressResult& result,
                                  const std::vector<std::string>& factor_names) {
    json beta;
    beta["eta"] = result.beta_star.eta ? json(*result.beta_star.eta) : json(nullptr);
    json lambda, nu;
    for (std::size_t k = 0; k < factor_names.size(); ++k) {
        lambda[factor_names[k]] = result.beta_star.lambda[static_cast<int>(k)];
        nu[factor_names[k]] = result.beta_star.nu[static_cast<int>(k)];
    }
    beta["lambda"] = std::move(lambda);
    beta["nu"] = std::move(nu);

    json j;
    j["method"] = to_string(result.method);
    j["beta_star"] = std::move(beta);
    j["density"] = result.density_at_star;
    j["f_q"] = result.region.f_q;
    j["level_q"] = result.region.level_q;
    j["n_samples"] = result.region.n_samples_used;
    j["in_region"] = result.in_region;
    j["variance"] = result.variance;
    j["var"] = result.var_alpha_value;
    j["scenario_index"] = result.scenario_index;
    return j;
}

inline CorrelationParams beta_star_from_stress_json(const json& j,
                                                    const std::vector<std::string>& factor_names) {
    CorrelationParams params;
    try {
        const json& beta = j.at("beta_star");
        if (!beta.at("eta").is_null()) params.eta = beta.at("eta").get<double>();
        params.lambda.resize(static_cast<int>(factor_names.size()));
        params.nu.resize(static_cast<int>(factor_names.size()));
        for (std::size_t k = 0; k < factor_names.size(); ++k) {
            params.lambda[static_cast<int>(k)] = beta.at("lambda").at(factor_names[k]).get<double>();
            params.nu[static_cast<int>(k)] = beta.at("nu").at(factor_names[k]).get<double>();
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("stress JSON malformed: ") + e.what());
    }
    return params;
}

// ---- scenario file: params CSV row format plus a label ---------------------
// Values are additive shifts on the named coefficients; empty cells shift by 0.

struct ScenarioShifts {
    std::string label;
    std::map<std::string, double> shifts;
};

inline std::vector<ScenarioShifts> read_scenario_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("scenario file empty: " + path);
    const auto header = detail::split_csv_line(line);
    if (header.size() < 2 || header[0] != "label") {
        throw ValidationError("scenario file header must be label,<coefficient columns>");
    }
    std::vector<ScenarioShifts> scenarios;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ValidationError("scenario file: row width mismatch");
        }
        ScenarioShifts s;
        s.label = cells[0];
        for (std::size_t c = 1; c < cells.size(); ++c) {
            if (cells[c].empty()) continue;
            s.shifts[header[c]] = std::stod(cells[c]);
        }
        scenarios.push_back(std::move(s));
    }
    if (scenarios.empty()) throw ValidationError("scenario file has no scenario rows");
    return scenarios;
}

// ---- PIP history: quarter, asset_id, factor, pip ----------------------------

inline void append_pip_rows(std::string& csv, const Date& quarter,
                            const std::vector<std::string>& asset_ids,
                            const std::vector<std::string>& factor_names,
                            const std::vector<PIPResult>& pips) {
    for (std::size_t i = 0; i < asset_ids.size(); ++i) {
        for (std::size_t k = 0; k < factor_names.size(); ++k) {
            csv += quarter.to_string() + "," + asset_ids[i] + "," + factor_names[k] + "," +
                   format_double(pips[i].pip[static_cast<int>(k)], 10) + "\n";
        }
    }
}

// ---- VaR series CSV ---------------------------------------------------------

inline void write_var_series_csv(const std::string& path, const std::vector<VarPoint>& series) {
    std::string out = "date,var,stressed_var\n";
    for (const auto& point : series) {
        out += point.date.to_string() + "," + format_double(point.var_baseline, 12) + "," +
               format_double(point.var_stressed, 12) + "\n";
    }
    write_text_file(path, out);
}

}  // namespace corrstress
