#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "corrstress/common.hpp"
#include "corrstress/dates.hpp"

namespace corrstress {

inline constexpr int kDefaultWindow = 250;
inline constexpr int kDefaultSelectionWindow = 63;
inline constexpr int kMinWindow = 30;

// Aligned daily log-return panel for assets and factor indices.
struct ReturnPanel {
    std::vector<Date> dates;  // strictly increasing
    Eigen::MatrixXd asset_returns;   // T x p
    Eigen::MatrixXd factor_returns;  // T x d
    std::vector<std::string> asset_labels;
    std::vector<std::string> factor_labels;
    int dropped_rows = 0;
    std::vector<std::string> warnings;

    int size() const { return static_cast<int>(dates.size()); }
    int n_assets() const { return static_cast<int>(asset_labels.size()); }
    int n_factors() const { return static_cast<int>(factor_labels.size()); }

    void validate() const {
        if (asset_returns.rows() != size() || factor_returns.rows() != size() ||
            asset_returns.cols() != n_assets() || factor_returns.cols() != n_factors()) {
            throw ValidationError("ReturnPanel: shape mismatch");
        }
        for (std::size_t i = 1; i < dates.size(); ++i) {
            if (!(dates[i - 1] < dates[i])) {
                throw ValidationError("ReturnPanel: dates not strictly increasing at row " +
                                      std::to_string(i));
            }
        }
    }
};

// Column-role map plus per-asset forced country/industry factors.
struct Manifest {
    std::map<std::string, std::string> column_roles;  // column -> "asset" | "factor"
    // asset -> (country factor, industry factor; either may be empty)
    std::map<std::string, std::pair<std::string, std::string>> forced;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        std::size_t start = 0;
        while (start < cell.size() && cell[start] == ' ') ++start;
        cells.push_back(cell.substr(start));
    }
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

}  // namespace detail

// Forced-prior file: CSV asset_id, country_factor, industry_factor (the
// industry cell may be empty).
inline std::map<std::string, std::pair<std::string, std::string>> load_forced_priors_csv(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open forced-prior file: " + path);
    std::map<std::string, std::pair<std::string, std::string>> forced;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (header) {
            header = false;
            if (!cells.empty() && cells[0] == "asset_id") continue;  // header row present
        }
        if (cells.size() < 2) {
            throw ValidationError("forced-prior file: row needs asset_id, country[, industry]");
        }
        const std::string industry = cells.size() > 2 ? cells[2] : "";
        forced[cells[0]] = {cells[1], industry};
    }
    return forced;
}

// Prices CSV (header: date, ticker columns) -> log-returns r_t = ln(P_t / P_{t-1}).
// Rows with any missing cell or non-positive price are dropped with a
// diagnostic; returns are then taken between consecutive surviving rows.
inline ReturnPanel load_prices(const std::string& csv_path, const Manifest& manifest) {
    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot open price file: " + csv_path);

    std::string line;
    if (!std::getline(in, line)) throw ValidationError("price file empty: " + csv_path);
    const auto header = detail::split_csv_line(line);
    if (header.size() < 2 || header[0] != "date") {
        throw ValidationError("price file must start with a 'date' column: " + csv_path);
    }

    ReturnPanel panel;
    std::vector<int> asset_cols, factor_cols;
    for (std::size_t c = 1; c < header.size(); ++c) {
        const auto it = manifest.column_roles.find(header[c]);
        if (it == manifest.column_roles.end()) {
            throw ValidationError("price column '" + header[c] + "' missing from manifest");
        }
        if (it->second == "asset") {
            asset_cols.push_back(static_cast<int>(c));
            panel.asset_labels.push_back(header[c]);
        } else if (it->second == "factor") {
            factor_cols.push_back(static_cast<int>(c));
            panel.factor_labels.push_back(header[c]);
        } else {
            throw ValidationError("manifest role for '" + header[c] +
                                  "' must be 'asset' or 'factor'");
        }
    }

    std::vector<Date> price_dates;
    std::vector<Eigen::VectorXd> price_rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            ++panel.dropped_rows;
            panel.warnings.push_back("line " + std::to_string(line_no) + ": cell count mismatch");
            continue;
        }
        const Date date = parse_date(cells[0]);  // unparseable date rejects the file
        bool ok = true;
        Eigen::VectorXd row(static_cast<int>(header.size()) - 1);
        for (std::size_t c = 1; c < cells.size(); ++c) {
            if (cells[c].empty()) {
                ok = false;
                panel.warnings.push_back("line " + std::to_string(line_no) + ": missing '" +
                                         header[c] + "'");
                break;
            }
            char* end = nullptr;
            const double v = std::strtod(cells[c].c_str(), &end);
            if (end == cells[c].c_str() || !std::isfinite(v)) {
                ok = false;
                panel.warnings.push_back("line " + std::to_string(line_no) +
                                         ": unparseable price '" + cells[c] + "'");
                break;
            }
            if (!(v > 0.0)) {
                ok = false;
                panel.warnings.push_back("line " + std::to_string(line_no) +
                                         ": non-positive price in '" + header[c] + "'");
                break;
            }
            row[static_cast<int>(c) - 1] = v;
        }
        if (!ok) {
            ++panel.dropped_rows;
            continue;
        }
        if (!price_dates.empty() && !(price_dates.back() < date)) {
            throw ValidationError("price file dates not strictly increasing at line " +
                                  std::to_string(line_no));
        }
        price_dates.push_back(date);
        price_rows.push_back(std::move(row));
    }

    const int t_prices = static_cast<int>(price_dates.size());
    if (t_prices < 2) throw ValidationError("price file has fewer than 2 usable rows");
    const int t_returns = t_prices - 1;
    panel.asset_returns.resize(t_returns, static_cast<int>(asset_cols.size()));
    panel.factor_returns.resize(t_returns, static_cast<int>(factor_cols.size()));
    panel.dates.reserve(static_cast<std::size_t>(t_returns));
    for (int t = 1; t < t_prices; ++t) {
        panel.dates.push_back(price_dates[static_cast<std::size_t>(t)]);
        for (std::size_t c = 0; c < asset_cols.size(); ++c) {
            const int col = asset_cols[c] - 1;
            panel.asset_returns(t - 1, static_cast<int>(c)) =
                std::log(price_rows[static_cast<std::size_t>(t)][col] /
                         price_rows[static_cast<std::size_t>(t - 1)][col]);
        }
        for (std::size_t c = 0; c < factor_cols.size(); ++c) {
            const int col = factor_cols[c] - 1;
            panel.factor_returns(t - 1, static_cast<int>(c)) =
                std::log(price_rows[static_cast<std::size_t>(t)][col] /
                         price_rows[static_cast<std::size_t>(t - 1)][col]);
        }
    }
    panel.validate();
    return panel;
}

// Exactly `length` rows ending at the last date strictly before end_date.
inline ReturnPanel window_slice(const ReturnPanel& panel, const Date& end_date, int length) {
    if (length < 1) throw ValidationError("window_slice: length must be >= 1");
    int end = 0;  // one past the last usable row
    for (int t = 0; t < panel.size(); ++t) {
        if (panel.dates[static_cast<std::size_t>(t)] < end_date) end = t + 1;
    }
    if (end < length) {
        const int missing = length - end;
        throw ValidationError("window_slice: only " + std::to_string(end) + " rows before " +
                              end_date.to_string() + "; need " + std::to_string(length) +
                              " (start " + std::to_string(missing) + " rows earlier)");
    }
    ReturnPanel out;
    out.dates.assign(panel.dates.begin() + (end - length), panel.dates.begin() + end);
    out.asset_returns = panel.asset_returns.middleRows(end - length, length);
    out.factor_returns = panel.factor_returns.middleRows(end - length, length);
    out.asset_labels = panel.asset_labels;
    out.factor_labels = panel.factor_labels;
    return out;
}

// Keep indices 0, stride, 2*stride, ...
template <typename T>
std::vector<T> thin(const std::vector<T>& series, int stride) {
    if (stride < 1) throw ValidationError("thin: stride must be >= 1");
    std::vector<T> out;
    out.reserve(series.size() / static_cast<std::size_t>(stride) + 1);
    for (std::size_t i = 0; i < series.size(); i += static_cast<std::size_t>(stride)) {
        out.push_back(series[i]);
    }
    return out;
}

inline Eigen::MatrixXd thin_rows(const Eigen::MatrixXd& m, int stride) {
    if (stride < 1) throw ValidationError("thin: stride must be >= 1");
    const long n = (m.rows() + stride - 1) / stride;
    Eigen::MatrixXd out(n, m.cols());
    for (long i = 0; i < n; ++i) out.row(i) = m.row(i * stride);
    return out;
}

// Daily calibration dates (every date with a full trailing window) and
// quarterly selection dates (the first calibration date of each calendar
// quarter).
struct Schedule {
    std::vector<Date> calibration_dates;
    std::vector<Date> selection_dates;
    int window = kDefaultWindow;
    int selection_window = kDefaultSelectionWindow;
};

inline Schedule build_schedule(const std::vector<Date>& return_dates, int window = kDefaultWindow,
                               int selection_window = kDefaultSelectionWindow) {
    if (window < kMinWindow) {
        throw ValidationError("build_schedule: window must be >= " + std::to_string(kMinWindow));
    }
    if (selection_window < 2 || selection_window > window) {
        throw ValidationError("build_schedule: selection window must lie in [2, window]");
    }
    Schedule schedule;
    schedule.window = window;
    schedule.selection_window = selection_window;
    int last_quarter = -1;
    for (std::size_t t = static_cast<std::size_t>(window); t < return_dates.size(); ++t) {
        schedule.calibration_dates.push_back(return_dates[t]);
        const int qk = return_dates[t].quarter_key();
        if (qk != last_quarter) {
            schedule.selection_dates.push_back(return_dates[t]);
            last_quarter = qk;
        }
    }
    if (schedule.calibration_dates.empty()) {
        throw ValidationError("build_schedule: panel shorter than the calibration window");
    }
    return schedule;
}

}  // namespace corrstress
