#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "corrstress/common.hpp"
#include "corrstress/corrmodel.hpp"
#include "corrstress/distfit.hpp"
#include "corrstress/ingest.hpp"
#include "corrstress/math.hpp"

namespace corrstress {

inline constexpr double kDefaultHdrQ = 0.05;
inline constexpr double kDefaultVarAlpha = 0.99;
inline constexpr long kHistoricalFqSamples = 100000;

struct PortfolioSpec {
    Eigen::VectorXd weights;
    double value_v0 = 0.0;
    Eigen::VectorXd vol;  // per-asset daily return standard deviation

    void validate() const {
        if (weights.size() < 1 || weights.size() != vol.size()) {
            throw ValidationError("PortfolioSpec: weight/vol length mismatch");
        }
        if (std::fabs(weights.sum() - 1.0) >= 1e-12) {
            throw ValidationError("PortfolioSpec: weights must sum to 1");
        }
        if (vol.minCoeff() < 0.0) throw ValidationError("PortfolioSpec: negative vol");
        if (!(value_v0 > 0.0)) throw ValidationError("PortfolioSpec: value must be positive");
    }
};

// Variance-covariance VaR with zero expected return, reported as a positive
// loss amount: VaR = -N_{1-alpha} V0 sqrt(w' Sigma w), Sigma = D C D.
inline double var_gaussian(const PortfolioSpec& portfolio, const CorrelationMatrix& corr,
                           double alpha) {
    portfolio.validate();
    if (!(alpha > 0.5 && alpha < 1.0)) {
        throw ValidationError("var_gaussian: alpha must lie in (0.5, 1)");
    }
    if (!corr.is_psd) {
        throw ValidationError("var_gaussian: correlation matrix is not PSD; repair first");
    }
    if (corr.dim() != portfolio.weights.size()) {
        throw ValidationError("var_gaussian: dimension mismatch");
    }
    const Eigen::VectorXd u = portfolio.weights.cwiseProduct(portfolio.vol);
    const double variance = u.dot(corr.values * u);
    return -norm_quantile(1.0 - alpha) * portfolio.value_v0 *
           std::sqrt(std::max(0.0, variance));
}

// D = sqrt((x-mu)' Sigma^-1 (x-mu)); defined as the square root so that
// D^2 ~ chi^2(n) holds literally for multivariate normal inputs.
inline double mahalanobis(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                          const Eigen::MatrixXd& sigma) {
    if (x.size() != mu.size() || sigma.rows() != x.size() || sigma.cols() != x.size()) {
        throw ValidationError("mahalanobis: dimension mismatch");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
        throw ValidationError("mahalanobis: covariance not positive definite");
    }
    const Eigen::VectorXd diff = x - mu;
    return std::sqrt(std::max(0.0, diff.dot(llt.solve(diff))));
}

struct HDRegion {
    double level_q = 0.0;
    double f_q = 0.0;
    long n_samples_used = 0;
};

// f_q is the empirical q-quantile (lower interpolation) of density values
// evaluated on a sample of the distribution itself, so that the fraction of
// the sample with f(x) >= f_q is approximately 1 - q.
inline HDRegion hdr_threshold(const std::vector<double>& density_values, double q) {
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("hdr_threshold: q must lie in (0,1)");
    if (density_values.size() < 100) {
        throw ValidationError("hdr_threshold: needs >= 100 samples for a usable quantile");
    }
    std::vector<double> sorted = density_values;
    std::sort(sorted.begin(), sorted.end());
    const auto n = sorted.size();
    const auto idx = static_cast<std::size_t>(q * static_cast<double>(n - 1));
    HDRegion region;
    region.level_q = q;
    region.f_q = sorted[idx];
    region.n_samples_used = static_cast<long>(n);
    return region;
}

// Mapping between the coefficient vector beta = (eta, lambda_1..d, nu_1..d)
// and the subspace the scenario distribution lives on. Coordinates that were
// constant over the calibration history (pruned columns, permanently-zero
// factors) are inactive: the distribution is fitted on the active
// coordinates and scenarios re-embed them at their historical values.
struct BetaLayout {
    bool has_eta = true;
    int n_factors = 0;
    std::vector<int> active;            // indices into the full beta vector
    Eigen::VectorXd baseline_full;      // values used for inactive coordinates
    std::vector<std::string> names;     // full coordinate names

    int full_dim() const { return 2 * n_factors + (has_eta ? 1 : 0); }
    int active_dim() const { return static_cast<int>(active.size()); }

    std::vector<std::string> active_names() const {
        std::vector<std::string> out;
        out.reserve(active.size());
        for (int idx : active) out.push_back(names[static_cast<std::size_t>(idx)]);
        return out;
    }

    Eigen::VectorXd to_full(const CorrelationParams& params) const {
        if (params.n_factors() != n_factors) {
            throw ValidationError("BetaLayout: params factor count mismatch");
        }
        Eigen::VectorXd full(full_dim());
        int pos = 0;
        if (has_eta) full[pos++] = params.eta_or_zero();
        full.segment(pos, n_factors) = params.lambda;
        full.segment(pos + n_factors, n_factors) = params.nu;
        return full;
    }

    Eigen::VectorXd to_active(const CorrelationParams& params) const {
        const Eigen::VectorXd full = to_full(params);
        Eigen::VectorXd out(active_dim());
        for (int i = 0; i < active_dim(); ++i) out[i] = full[active[static_cast<std::size_t>(i)]];
        return out;
    }

    CorrelationParams to_params(const Eigen::VectorXd& active_values) const {
        if (active_values.size() != active_dim()) {
            throw ValidationError("BetaLayout: active vector length mismatch");
        }
        Eigen::VectorXd full = baseline_full;
        for (int i = 0; i < active_dim(); ++i) {
            full[active[static_cast<std::size_t>(i)]] = active_values[i];
        }
        CorrelationParams params;
        int pos = 0;
        if (has_eta) params.eta = full[pos++];
        params.lambda = full.segment(pos, n_factors);
        params.nu = full.segment(pos + n_factors, n_factors);
        return params;
    }

    static BetaLayout full_layout(const std::vector<std::string>& factor_names, bool with_eta) {
        BetaLayout layout;
        layout.has_eta = with_eta;
        layout.n_factors = static_cast<int>(factor_names.size());
        layout.baseline_full = Eigen::VectorXd::Zero(layout.full_dim());
        if (with_eta) layout.names.push_back("eta");
        for (const auto& f : factor_names) layout.names.push_back("lambda_" + f);
        for (const auto& f : factor_names) layout.names.push_back("nu_" + f);
        for (int i = 0; i < layout.full_dim(); ++i) layout.active.push_back(i);
        return layout;
    }

    // Active = coordinates that actually moved over the history.
    static BetaLayout from_history(const std::vector<CorrelationParams>& history,
                                   const std::vector<std::string>& factor_names) {
        if (history.empty()) throw ValidationError("BetaLayout: empty history");
        bool any_eta = false;
        for (const auto& h : history) any_eta = any_eta || h.eta.has_value();
        BetaLayout layout = full_layout(factor_names, any_eta);
        Eigen::VectorXd lo = layout.to_full(history.front());
        Eigen::VectorXd hi = lo;
        for (const auto& h : history) {
            const Eigen::VectorXd v = layout.to_full(h);
            lo = lo.cwiseMin(v);
            hi = hi.cwiseMax(v);
        }
        layout.active.clear();
        layout.baseline_full = layout.to_full(history.front());
        for (int i = 0; i < layout.full_dim(); ++i) {
            if (hi[i] - lo[i] > 1e-12) layout.active.push_back(i);
        }
        if (layout.active.empty()) {
            throw ValidationError("BetaLayout: no coordinate varies over the history");
        }
        return layout;
    }
};

enum class StressMethod { monte_carlo, historical };

inline const char* to_string(StressMethod m) {
    return m == StressMethod::monte_carlo ? "monte_carlo" : "historical";
}

struct StressResult {
    CorrelationParams beta_star;
    double var_alpha_value = 0.0;
    double variance = 0.0;
    StressMethod method = StressMethod::monte_carlo;
    bool in_region = false;
    double density_at_star = 0.0;
    HDRegion region;
    long scenario_index = -1;
};

namespace detail {

struct ScenarioEvaluator {
    const FactorAssignment& assignment;
    Eigen::VectorXd u;  // weights .* vols

    ScenarioEvaluator(const FactorAssignment& a, const PortfolioSpec& portfolio)
        : assignment(a), u(portfolio.weights.cwiseProduct(portfolio.vol)) {
        portfolio.validate();
        if (portfolio.weights.size() != a.n_assets()) {
            throw ValidationError("reverse stress: portfolio size != n_assets");
        }
    }

    // Scenario correlation matrices are PSD-repaired before use.
    std::pair<double, CorrelationMatrix> variance_of(const CorrelationParams& params) const {
        CorrelationMatrix corr = ensure_psd(model_correlation(params, assignment));
        corr.source = CorrSource::stressed;
        const double variance = u.dot(corr.values * u);
        return {variance, std::move(corr)};
    }
};

}  // namespace detail

// Worst scenario inside the (1-q) highest density region of the coefficient
// distribution, by Monte Carlo: f_q comes from the sample's own densities,
// and among in-region draws the one maximizing portfolio variance wins
// (the VaR and expected-shortfall argmaxes coincide with the variance
// argmax, so alpha only scales the reported VaR). Ties break to the lowest
// sample index.
inline StressResult reverse_stress_mc(const NIGParams& dist, const BetaLayout& layout,
                                      const FactorAssignment& assignment,
                                      const PortfolioSpec& portfolio, double q,
                                      long n_samples, std::uint64_t seed,
                                      double alpha = kDefaultVarAlpha) {
    if (dist.dim() != layout.active_dim()) {
        throw ValidationError("reverse_stress_mc: distribution dimension != active beta length");
    }
    const Eigen::MatrixXd draws =
        sample_nig(dist, n_samples, rng_stream(seed, rng_stage::reverse_stress_mc)());
    const NigDensity density(dist);
    std::vector<double> dens(static_cast<std::size_t>(n_samples));
    for (long i = 0; i < n_samples; ++i) {
        dens[static_cast<std::size_t>(i)] = std::exp(density.logdensity(draws.row(i).transpose()));
    }
    const HDRegion region = hdr_threshold(dens, q);

    const detail::ScenarioEvaluator eval(assignment, portfolio);
    long best = -1;
    double best_variance = -1.0;
    CorrelationParams best_params;
    CorrelationMatrix best_corr;
    for (long i = 0; i < n_samples; ++i) {
        if (dens[static_cast<std::size_t>(i)] < region.f_q) continue;
        const CorrelationParams params = layout.to_params(draws.row(i).transpose());
        auto [variance, corr] = eval.variance_of(params);
        if (variance > best_variance) {
            best_variance = variance;
            best = i;
            best_params = params;
            best_corr = std::move(corr);
        }
    }
    if (best < 0) {
        throw NumericalError("reverse_stress_mc: empty region (invariant violation)");
    }

    StressResult result;
    result.beta_star = best_params;
    result.variance = best_variance;
    result.method = StressMethod::monte_carlo;
    result.density_at_star = dens[static_cast<std::size_t>(best)];
    result.in_region = result.density_at_star >= region.f_q;
    result.region = region;
    result.scenario_index = best;
    PortfolioSpec p = portfolio;
    result.var_alpha_value = var_gaussian(p, best_corr, alpha);
    return result;
}

// Reverse stress over the observed coefficient history: the density
// threshold comes from a fresh Monte Carlo sample of the fitted distribution
// (the history is short and autocorrelated), then the in-region historical
// point with maximal variance wins.
inline StressResult reverse_stress_historical(const std::vector<CorrelationParams>& history,
                                              const NIGParams& dist, const BetaLayout& layout,
                                              const FactorAssignment& assignment,
                                              const PortfolioSpec& portfolio, double q,
                                              std::uint64_t seed,
                                              double alpha = kDefaultVarAlpha,
                                              long fq_samples = kHistoricalFqSamples) {
    if (history.empty()) throw ValidationError("reverse_stress_historical: empty history");
    if (dist.dim() != layout.active_dim()) {
        throw ValidationError("reverse_stress_historical: distribution dimension mismatch");
    }
    const Eigen::MatrixXd draws =
        sample_nig(dist, fq_samples, rng_stream(seed, rng_stage::reverse_stress_hdr)());
    const NigDensity density(dist);
    std::vector<double> dens(static_cast<std::size_t>(fq_samples));
    for (long i = 0; i < fq_samples; ++i) {
        dens[static_cast<std::size_t>(i)] = std::exp(density.logdensity(draws.row(i).transpose()));
    }
    const HDRegion region = hdr_threshold(dens, q);

    const detail::ScenarioEvaluator eval(assignment, portfolio);
    long best = -1;
    double best_variance = -1.0;
    double best_density = 0.0;
    CorrelationMatrix best_corr;
    for (std::size_t i = 0; i < history.size(); ++i) {
        const double f = std::exp(density.logdensity(layout.to_active(history[i])));
        if (f < region.f_q) continue;
        auto [variance, corr] = eval.variance_of(history[i]);
        if (variance > best_variance) {
            best_variance = variance;
            best = static_cast<long>(i);
            best_density = f;
            best_corr = std::move(corr);
        }
    }
    if (best < 0) {
        throw ValidationError(
            "reverse_stress_historical: no historical scenario lies inside the region; "
            "increase q");
    }

    StressResult result;
    result.beta_star = history[static_cast<std::size_t>(best)];
    result.variance = best_variance;
    result.method = StressMethod::historical;
    result.density_at_star = best_density;
    result.in_region = true;
    result.region = region;
    result.scenario_index = best;
    result.var_alpha_value = var_gaussian(portfolio, best_corr, alpha);
    return result;
}

struct VarPoint {
    Date date;
    double var_baseline = 0.0;
    double var_stressed = 0.0;
};

// Rolling baseline vs scenario VaR. Per date: vols and empirical correlation
// from the trailing window drive the baseline; the stressed figure swaps in
// the fixed scenario's model correlation under the assignment in force that
// day, keeping the same vols.
inline std::vector<VarPoint> stressed_var_series(const ReturnPanel& panel,
                                                 const AssignmentSchedule& schedule,
                                                 const CorrelationParams& scenario,
                                                 double portfolio_value,
                                                 const Eigen::VectorXd& weights, double alpha,
                                                 int window = 250) {
    if (window < 2) throw ValidationError("stressed_var_series: window too small");
    const int t_total = static_cast<int>(panel.dates.size());
    const int p = static_cast<int>(panel.asset_returns.cols());
    if (weights.size() != p) throw ValidationError("stressed_var_series: weight length mismatch");

    std::vector<VarPoint> series;
    for (int t = window; t < t_total; ++t) {
        const Eigen::MatrixXd slice = panel.asset_returns.middleRows(t - window, window);
        PortfolioSpec portfolio;
        portfolio.weights = weights;
        portfolio.value_v0 = portfolio_value;
        portfolio.vol.resize(p);
        const Eigen::MatrixXd centered = slice.rowwise() - slice.colwise().mean();
        for (int c = 0; c < p; ++c) {
            portfolio.vol[c] = std::sqrt(centered.col(c).squaredNorm() / double(window - 1));
        }

        const CorrelationMatrix empirical = ensure_psd(empirical_correlation(slice));
        const FactorAssignment& assignment = schedule.at(panel.dates[static_cast<std::size_t>(t)]);
        CorrelationMatrix stressed = ensure_psd(model_correlation(scenario, assignment));
        stressed.source = CorrSource::stressed;

        VarPoint point;
        point.date = panel.dates[static_cast<std::size_t>(t)];
        point.var_baseline = var_gaussian(portfolio, empirical, alpha);
        point.var_stressed = var_gaussian(portfolio, stressed, alpha);
        series.push_back(point);
    }
    return series;
}

}  // namespace corrstress
