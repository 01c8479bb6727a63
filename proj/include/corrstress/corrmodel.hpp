#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "corrstress/common.hpp"
#include "corrstress/dates.hpp"

namespace corrstress {

inline constexpr double kCorrelationClamp = 1.0 - 1e-7;
inline constexpr double kPsdTolerance = 1e-10;
inline constexpr double kBlendEpsilon = 1e-8;
inline constexpr double kGramConditionLimit = 1e10;
inline constexpr double kNearestCorrTol = 1e-8;
inline constexpr int kNearestCorrMaxIter = 200;

// Binary asset x factor exposure map. Row i lists the correlation risk
// factors asset i is linked to.
struct FactorAssignment {
    std::vector<std::string> asset_ids;
    std::vector<std::string> factor_names;
    Eigen::MatrixXi indicators;  // n_assets x n_factors, entries in {0,1}

    int n_assets() const { return static_cast<int>(asset_ids.size()); }
    int n_factors() const { return static_cast<int>(factor_names.size()); }

    void validate() const {
        if (indicators.rows() != n_assets() || indicators.cols() != n_factors()) {
            throw ValidationError("FactorAssignment: indicator shape does not match labels");
        }
        std::set<std::string> seen_assets(asset_ids.begin(), asset_ids.end());
        std::set<std::string> seen_factors(factor_names.begin(), factor_names.end());
        if (seen_assets.size() != asset_ids.size() ||
            seen_factors.size() != factor_names.size()) {
            throw ValidationError("FactorAssignment: duplicate asset or factor labels");
        }
        for (int i = 0; i < indicators.rows(); ++i) {
            int row_sum = 0;
            for (int k = 0; k < indicators.cols(); ++k) {
                const int v = indicators(i, k);
                if (v != 0 && v != 1) {
                    throw ValidationError("FactorAssignment: indicators must be 0 or 1");
                }
                row_sum += v;
            }
            if (row_sum < 1) {
                throw ValidationError("FactorAssignment: asset '" + asset_ids[i] +
                                      "' carries no factor");
            }
        }
    }
};

// Coefficient vector of the correlation surface. eta is absent when the
// calibration dropped the constant for multicollinearity.
struct CorrelationParams {
    std::optional<double> eta;
    Eigen::VectorXd lambda;  // inter-factor coefficients, length d
    Eigen::VectorXd nu;      // intra-factor coefficients, length d
    Date timestamp{};

    int n_factors() const { return static_cast<int>(lambda.size()); }
    double eta_or_zero() const { return eta.value_or(0.0); }

    void validate(const FactorAssignment& assignment) const {
        if (lambda.size() != assignment.n_factors() || nu.size() != assignment.n_factors()) {
            throw ValidationError("CorrelationParams: coefficient length != n_factors");
        }
        auto finite = [](const Eigen::VectorXd& v) { return v.allFinite(); };
        if (!finite(lambda) || !finite(nu) || (eta && !std::isfinite(*eta))) {
            throw ValidationError("CorrelationParams: non-finite coefficient");
        }
    }
};

enum class CorrSource { empirical, model, repaired, stressed };

inline const char* to_string(CorrSource s) {
    switch (s) {
        case CorrSource::empirical: return "empirical";
        case CorrSource::model: return "model";
        case CorrSource::repaired: return "repaired";
        case CorrSource::stressed: return "stressed";
    }
    return "?";
}

struct CorrelationMatrix {
    Eigen::MatrixXd values;
    bool is_psd = false;
    CorrSource source = CorrSource::empirical;

    int dim() const { return static_cast<int>(values.rows()); }

    void validate() const {
        const auto& m = values;
        if (m.rows() != m.cols() || m.rows() < 1) {
            throw ValidationError("CorrelationMatrix: not square");
        }
        for (int i = 0; i < m.rows(); ++i) {
            if (m(i, i) != 1.0) {
                throw ValidationError("CorrelationMatrix: diagonal entry != 1");
            }
            for (int j = i + 1; j < m.cols(); ++j) {
                if (std::fabs(m(i, j) - m(j, i)) > 1e-12) {
                    throw ValidationError("CorrelationMatrix: asymmetric beyond 1e-12");
                }
                if (!(m(i, j) >= -1.0 && m(i, j) <= 1.0)) {
                    throw ValidationError("CorrelationMatrix: off-diagonal outside [-1,1]");
                }
            }
        }
    }
};

inline double min_eigenvalue(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// c_ij = tanh(eta + sum_k lambda_k |1_{k,i} - 1_{k,j}| + sum_k nu_k 1_{k,i} 1_{k,j}).
inline CorrelationMatrix model_correlation(const CorrelationParams& params,
                                           const FactorAssignment& assignment) {
    assignment.validate();
    params.validate(assignment);
    const int p = assignment.n_assets();
    const int d = assignment.n_factors();
    Eigen::MatrixXd c = Eigen::MatrixXd::Identity(p, p);
    for (int i = 0; i < p; ++i) {
        for (int j = i + 1; j < p; ++j) {
            double z = params.eta_or_zero();
            for (int k = 0; k < d; ++k) {
                const int a = assignment.indicators(i, k);
                const int b = assignment.indicators(j, k);
                z += params.lambda[k] * std::abs(a - b);
                z += params.nu[k] * (a * b);
            }
            c(i, j) = c(j, i) = std::tanh(z);
        }
    }
    CorrelationMatrix out;
    out.values = std::move(c);
    out.source = CorrSource::model;
    out.is_psd = min_eigenvalue(out.values) >= -kPsdTolerance;
    return out;
}

// Regression design over unordered asset pairs (i<j, row-major pair order).
// Columns: constant, d inter columns, d intra columns; response is
// arctanh of the clamped empirical correlation.
struct PairDesign {
    Eigen::MatrixXd X;
    Eigen::VectorXd response;
    std::vector<std::string> column_names;      // "eta", "lambda_<f>", "nu_<f>"
    std::vector<std::pair<int, int>> pairs;
};

inline PairDesign build_pair_design(const FactorAssignment& assignment,
                                    const CorrelationMatrix& empirical,
                                    double clamp = kCorrelationClamp) {
    assignment.validate();
    empirical.validate();
    if (!(clamp > 0.0 && clamp < 1.0)) {
        throw ValidationError("build_pair_design: clamp must lie in (0,1)");
    }
    const int p = assignment.n_assets();
    if (empirical.dim() != p) {
        throw ValidationError("build_pair_design: matrix dimension != n_assets");
    }
    const int d = assignment.n_factors();
    const int n_pairs = p * (p - 1) / 2;

    PairDesign design;
    design.X.resize(n_pairs, 1 + 2 * d);
    design.response.resize(n_pairs);
    design.column_names.reserve(1 + 2 * d);
    design.column_names.push_back("eta");
    for (int k = 0; k < d; ++k) design.column_names.push_back("lambda_" + assignment.factor_names[k]);
    for (int k = 0; k < d; ++k) design.column_names.push_back("nu_" + assignment.factor_names[k]);

    int r = 0;
    for (int i = 0; i < p; ++i) {
        for (int j = i + 1; j < p; ++j, ++r) {
            design.pairs.emplace_back(i, j);
            design.X(r, 0) = 1.0;
            for (int k = 0; k < d; ++k) {
                const int a = assignment.indicators(i, k);
                const int b = assignment.indicators(j, k);
                design.X(r, 1 + k) = std::abs(a - b);
                design.X(r, 1 + d + k) = a * b;
            }
            const double c = std::clamp(empirical.values(i, j), -clamp, clamp);
            design.response[r] = std::atanh(c);
        }
    }
    return design;
}

struct CalibrationResult {
    CorrelationParams params;
    bool eta_omitted = false;
    double rss = 0.0;
    double r_squared = 0.0;
    double gram_condition = 0.0;                // with the constant included
    std::vector<std::string> pruned_columns;    // in pruning order
};

namespace detail {

inline bool gram_rank_deficient(const Eigen::MatrixXd& cols, double* condition = nullptr) {
    if (cols.cols() == 0) return false;
    const Eigen::MatrixXd gram = cols.transpose() * cols;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    const double cond = (lo > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
    if (condition) *condition = cond;
    return lo <= hi * 1e-14 || cond > kGramConditionLimit;
}

}  // namespace detail

// Least squares on the pair design. Collinearity ladder: all-zero columns
// (factors no pair shares or splits) carry no information and are removed up
// front, so an unused factor in the universe cannot knock out the constant.
// Then, if the Gram with the constant is rank-deficient or its condition
// number exceeds kGramConditionLimit, the constant is dropped and eta
// reported absent. If the design is still deficient, remaining zero-variance
// columns are pruned, keeping the first all-ones column as the level term
// standing in for the dropped constant.
inline CalibrationResult calibrate(const CorrelationMatrix& empirical,
                                   const FactorAssignment& assignment,
                                   double clamp = kCorrelationClamp) {
    const PairDesign design = build_pair_design(assignment, empirical, clamp);
    const int d = assignment.n_factors();
    const int n_rows = static_cast<int>(design.X.rows());
    const int n_cols = static_cast<int>(design.X.cols());

    CalibrationResult result;
    std::vector<int> retained;
    retained.push_back(0);
    for (int c = 1; c < n_cols; ++c) {
        if (design.X.col(c).maxCoeff() == 0.0 && design.X.col(c).minCoeff() == 0.0) {
            result.pruned_columns.push_back(design.column_names[static_cast<std::size_t>(c)]);
        } else {
            retained.push_back(c);
        }
    }

    auto subset = [&](const std::vector<int>& cols) {
        Eigen::MatrixXd sub(n_rows, static_cast<int>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<int>(c)) = design.X.col(cols[c]);
        return sub;
    };

    if (detail::gram_rank_deficient(subset(retained), &result.gram_condition)) {
        result.eta_omitted = true;
        result.pruned_columns.push_back("eta");
        retained.erase(retained.begin());

        if (detail::gram_rank_deficient(subset(retained))) {
            std::vector<int> kept;
            bool have_level = false;
            for (int c : retained) {
                const Eigen::VectorXd col = design.X.col(c);
                const bool zero_variance = (col.maxCoeff() - col.minCoeff()) == 0.0;
                if (!zero_variance) {
                    kept.push_back(c);
                } else if (!have_level) {
                    kept.push_back(c);  // level term standing in for the constant
                    have_level = true;
                } else {
                    result.pruned_columns.push_back(design.column_names[static_cast<std::size_t>(c)]);
                }
            }
            retained = std::move(kept);
        }
    }

    if (static_cast<int>(retained.size()) > n_rows) {
        throw ValidationError("calibrate: " + std::to_string(retained.size()) +
                              " design columns retained but only " + std::to_string(n_rows) +
                              " asset pairs available");
    }

    Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(n_cols);
    double rss = design.response.squaredNorm();
    if (!retained.empty()) {
        const Eigen::MatrixXd X = subset(retained);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        if (qr.rank() < X.cols()) {
            std::string msg = "calibrate: design rank-deficient after pruning [";
            for (std::size_t i = 0; i < result.pruned_columns.size(); ++i) {
                msg += (i ? ", " : "") + result.pruned_columns[i];
            }
            msg += "]";
            throw ValidationError(msg);
        }
        const Eigen::VectorXd beta = qr.solve(design.response);
        for (std::size_t c = 0; c < retained.size(); ++c) {
            coeffs[retained[c]] = beta[static_cast<int>(c)];
        }
        rss = (design.response - X * beta).squaredNorm();
    }

    const double mean_z = design.response.mean();
    const double tss = (design.response.array() - mean_z).square().sum();
    result.rss = rss;
    result.r_squared = tss > 1e-30 ? 1.0 - rss / tss : (rss < 1e-30 ? 1.0 : 0.0);

    result.params.eta = result.eta_omitted ? std::nullopt : std::optional<double>(coeffs[0]);
    result.params.lambda = coeffs.segment(1, d);
    result.params.nu = coeffs.segment(1 + d, d);
    return result;
}

// (1-eps) C + eps I; shifts every eigenvalue to (1-eps) lambda + eps.
inline CorrelationMatrix epsilon_blend(const Eigen::MatrixXd& input, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw ValidationError("epsilon_blend: epsilon must lie in (0,1)");
    }
    if (input.rows() != input.cols()) throw ValidationError("epsilon_blend: not square");
    CorrelationMatrix out;
    out.values = (1.0 - epsilon) * input +
                 epsilon * Eigen::MatrixXd::Identity(input.rows(), input.cols());
    for (int i = 0; i < out.values.rows(); ++i) out.values(i, i) = 1.0;
    out.source = CorrSource::repaired;
    out.is_psd = min_eigenvalue(out.values) >= -kPsdTolerance;
    return out;
}

struct NearestCorrelationResult {
    CorrelationMatrix matrix;
    bool converged = false;
    int iterations = 0;
    double distance = 0.0;  // Frobenius distance to the (symmetrized) input
};

// Alternating projections between the PSD cone and the unit-diagonal affine
// set with Dykstra's correction. Inputs are symmetrized and the diagonal
// reset before iterating. The returned matrix gets a final eigenvalue clip +
// congruence rescale so the PSD guarantee holds to machine precision rather
// than only to the iteration tolerance.
inline NearestCorrelationResult nearest_correlation(Eigen::MatrixXd input,
                                                    double tol = kNearestCorrTol,
                                                    int max_iter = kNearestCorrMaxIter) {
    if (input.rows() != input.cols() || input.rows() < 1) {
        throw ValidationError("nearest_correlation: not square");
    }
    const int p = static_cast<int>(input.rows());
    input = 0.5 * (input + input.transpose()).eval();
    for (int i = 0; i < p; ++i) input(i, i) = 1.0;

    Eigen::MatrixXd y = input;
    Eigen::MatrixXd dykstra = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd x(p, p);

    NearestCorrelationResult res;
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::MatrixXd r = y - dykstra;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
        const Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
        x = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
        x = 0.5 * (x + x.transpose()).eval();
        dykstra = x - r;
        const Eigen::MatrixXd y_prev = y;
        y = x;
        for (int i = 0; i < p; ++i) y(i, i) = 1.0;
        res.iterations = it + 1;
        if ((y - y_prev).norm() <= tol) {
            res.converged = true;
            break;
        }
    }

    // Final polish: clip, rescale to exact unit diagonal (congruence keeps PSD).
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(y);
    const Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd c = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    Eigen::VectorXd scale = c.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    c = (scale.asDiagonal() * c * scale.asDiagonal()).eval();
    c = 0.5 * (c + c.transpose()).eval();
    for (int i = 0; i < p; ++i) {
        c(i, i) = 1.0;
        for (int j = 0; j < p; ++j) c(i, j) = std::clamp(c(i, j), -1.0, 1.0);
    }

    res.matrix.values = std::move(c);
    res.matrix.source = CorrSource::repaired;
    res.matrix.is_psd = min_eigenvalue(res.matrix.values) >= -kPsdTolerance;
    res.distance = (res.matrix.values - input).norm();
    return res;
}

// PSD policy: eigenvalues in [-kPsdTolerance, 0) are treated as computational
// noise and lifted by the identity blend; anything more negative goes through
// the full nearest-correlation repair.
inline CorrelationMatrix ensure_psd(const CorrelationMatrix& corr) {
    const double min_eig = min_eigenvalue(corr.values);
    if (min_eig >= 0.0) {
        CorrelationMatrix out = corr;
        out.is_psd = true;
        return out;
    }
    if (min_eig >= -kPsdTolerance) {
        return epsilon_blend(corr.values, kBlendEpsilon);
    }
    return nearest_correlation(corr.values).matrix;
}

// Additive shifts on named coefficients ("eta", "lambda_<f>", "nu_<f>").
inline CorrelationParams apply_scenario(const CorrelationParams& params,
                                        const std::map<std::string, double>& shifts,
                                        const std::vector<std::string>& factor_names) {
    if (static_cast<int>(factor_names.size()) != params.n_factors()) {
        throw ValidationError("apply_scenario: factor name count != n_factors");
    }
    CorrelationParams out = params;
    std::vector<std::string> unknown;
    for (const auto& [key, delta] : shifts) {
        if (key == "eta") {
            out.eta = out.eta_or_zero() + delta;
            continue;
        }
        bool found = false;
        for (std::size_t k = 0; k < factor_names.size(); ++k) {
            if (key == "lambda_" + factor_names[k]) {
                out.lambda[static_cast<int>(k)] += delta;
                found = true;
                break;
            }
            if (key == "nu_" + factor_names[k]) {
                out.nu[static_cast<int>(k)] += delta;
                found = true;
                break;
            }
        }
        if (!found) unknown.push_back(key);
    }
    if (!unknown.empty()) {
        std::string msg = "apply_scenario: unknown coefficients [";
        for (std::size_t i = 0; i < unknown.size(); ++i) msg += (i ? ", " : "") + unknown[i];
        throw ValidationError(msg + "]");
    }
    return out;
}

// Sample Pearson correlation matrix of the columns of a T x p return window.
inline CorrelationMatrix empirical_correlation(const Eigen::MatrixXd& returns) {
    const int t = static_cast<int>(returns.rows());
    const int p = static_cast<int>(returns.cols());
    if (t < 2) throw ValidationError("empirical_correlation: needs >= 2 rows");
    Eigen::MatrixXd centered = returns.rowwise() - returns.colwise().mean();
    Eigen::MatrixXd cov = centered.transpose() * centered / double(t - 1);
    Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
    for (int i = 0; i < p; ++i) {
        if (!(sd[i] > 0.0)) {
            throw ValidationError("empirical_correlation: zero-variance column " + std::to_string(i));
        }
    }
    CorrelationMatrix out;
    out.values = cov.array() / (sd * sd.transpose()).array();
    for (int i = 0; i < p; ++i) {
        out.values(i, i) = 1.0;
        for (int j = 0; j < p; ++j) {
            out.values(i, j) = std::clamp(out.values(i, j), -1.0, 1.0);
        }
    }
    out.values = (0.5 * (out.values + out.values.transpose())).eval();
    for (int i = 0; i < p; ++i) out.values(i, i) = 1.0;
    out.source = CorrSource::empirical;
    out.is_psd = min_eigenvalue(out.values) >= -kPsdTolerance;
    return out;
}

// Quarterly assignment history; at(date) resolves the assignment in force.
struct AssignmentSchedule {
    std::vector<Date> effective_from;        // ascending
    std::vector<FactorAssignment> assignments;

    const FactorAssignment& at(const Date& date) const {
        if (assignments.empty()) throw ValidationError("AssignmentSchedule: empty");
        int best = -1;
        for (std::size_t i = 0; i < effective_from.size(); ++i) {
            if (effective_from[i] <= date) best = static_cast<int>(i);
        }
        if (best < 0) {
            throw ValidationError("AssignmentSchedule: no assignment effective at " +
                                  date.to_string());
        }
        return assignments[static_cast<std::size_t>(best)];
    }
};

}  // namespace corrstress
