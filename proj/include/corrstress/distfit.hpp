#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "corrstress/common.hpp"
#include "corrstress/math.hpp"

namespace corrstress {

inline constexpr double kEmLoglikSlack = 1e-8;
inline constexpr double kGigScaleMin = 1e-6;
inline constexpr double kGigScaleMax = 1e6;

// Multivariate normal-inverse-Gaussian parameters: the generalized
// hyperbolic family with the mixing index fixed at -1/2, so
//   X = mu + W gamma + sqrt(W) A Z,   W ~ GIG(-1/2, chi, psi),  Sigma = AA'.
// Fits produced by fit_em carry chi == psi (the E[W] = 1 normalization that
// removes the family's scaling degeneracy); densities and samplers accept
// general chi, psi.
struct NIGParams {
    double chi = 1.0;
    double psi = 1.0;
    Eigen::VectorXd mu;
    Eigen::VectorXd gamma_skew;
    Eigen::MatrixXd sigma;

    static constexpr double lambda_gh = -0.5;

    int dim() const { return static_cast<int>(mu.size()); }

    void validate() const {
        if (!(chi > 0.0) || !(psi > 0.0)) {
            throw ValidationError("NIGParams: chi and psi must be positive");
        }
        if (gamma_skew.size() != mu.size() || sigma.rows() != mu.size() ||
            sigma.cols() != mu.size() || mu.size() < 1) {
            throw ValidationError("NIGParams: dimension mismatch");
        }
        if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
            throw ValidationError("NIGParams: sigma not symmetric");
        }
        Eigen::LLT<Eigen::MatrixXd> llt(sigma);
        if (llt.info() != Eigen::Success) {
            throw ValidationError("NIGParams: sigma not positive definite");
        }
    }
};

struct FitDiagnostics {
    std::vector<double> loglik_trace;
    int n_iter = 0;
    bool converged = false;
    Eigen::VectorXd ks_pvalues;
};

// E[W^alpha] for W ~ GIG(lambda, chi, psi), via log-Bessel ratios.
inline double gig_moment(double alpha, double chi, double psi, double lambda = -0.5) {
    const double z = std::sqrt(chi * psi);
    return std::pow(chi / psi, 0.5 * alpha) *
           std::exp(log_bessel_k(lambda + alpha, z) - log_bessel_k(lambda, z));
}

inline Eigen::VectorXd nig_mean(const NIGParams& p) {
    return p.mu + gig_moment(1.0, p.chi, p.psi) * p.gamma_skew;
}

inline Eigen::MatrixXd nig_covariance(const NIGParams& p) {
    const double ew = gig_moment(1.0, p.chi, p.psi);
    const double vw = gig_moment(2.0, p.chi, p.psi) - ew * ew;
    return ew * p.sigma + vw * p.gamma_skew * p.gamma_skew.transpose();
}

// Density evaluator with the x-independent pieces precomputed, for bulk
// evaluation over Monte Carlo scenario sets.
class NigDensity {
  public:
    explicit NigDensity(const NIGParams& params) : p_(params) {
        p_.validate();
        const int d = p_.dim();
        llt_.compute(p_.sigma);
        double logdet_sigma = 0.0;
        for (int i = 0; i < d; ++i) logdet_sigma += 2.0 * std::log(llt_.matrixL()(i, i));
        sig_inv_gamma_ = llt_.solve(p_.gamma_skew);
        g2_ = p_.gamma_skew.dot(sig_inv_gamma_);
        b_ = p_.psi + g2_;
        order_ = NIGParams::lambda_gh - 0.5 * d;
        const double z0 = std::sqrt(p_.chi * p_.psi);
        log_c_ = -NIGParams::lambda_gh * std::log(z0) +
                 NIGParams::lambda_gh * std::log(p_.psi) - order_ * std::log(b_) -
                 0.5 * d * std::log(2.0 * kPi) - 0.5 * logdet_sigma -
                 log_bessel_k(NIGParams::lambda_gh, z0);
    }

    const NIGParams& params() const { return p_; }

    double quad(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd diff = x - p_.mu;
        return diff.dot(llt_.solve(diff));
    }

    double logdensity(const Eigen::VectorXd& x) const {
        if (x.size() != p_.dim()) throw ValidationError("nig_logdensity: dimension mismatch");
        const Eigen::VectorXd diff = x - p_.mu;
        const double q = diff.dot(llt_.solve(diff));
        const double s = std::sqrt((p_.chi + q) * b_);
        const double lf = log_c_ + log_bessel_k(order_, s) + diff.dot(sig_inv_gamma_) +
                          order_ * std::log(s);
        return std::isnan(lf) ? -std::numeric_limits<double>::infinity() : lf;
    }

    // Conditional mixing moments given an observation:
    // W | X = x ~ GIG(lambda - d/2, chi + Q(x), psi + g2).
    void conditional_mixing_moments(const Eigen::VectorXd& x, double* e_w,
                                    double* e_winv) const {
        const double a = p_.chi + quad(x);
        const double s = std::sqrt(a * b_);
        const double lk = log_bessel_k(order_, s);
        *e_w = std::sqrt(a / b_) * std::exp(log_bessel_k(order_ + 1.0, s) - lk);
        *e_winv = std::sqrt(b_ / a) * std::exp(log_bessel_k(order_ - 1.0, s) - lk);
    }

  private:
    NIGParams p_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd sig_inv_gamma_;
    double g2_ = 0.0, b_ = 0.0, order_ = 0.0, log_c_ = 0.0;
};

inline double nig_logdensity(const Eigen::VectorXd& x, const NIGParams& params) {
    return NigDensity(params).logdensity(x);
}

// Rows are draws. W comes from the inverse-Gaussian law GIG(-1/2, chi, psi)
// via the Michael-Schucany-Haas transform; X = mu + W gamma + sqrt(W) A Z.
inline Eigen::MatrixXd sample_nig(const NIGParams& params, long n_samples,
                                  std::uint64_t seed) {
    params.validate();
    if (n_samples < 1) throw ValidationError("sample_nig: n_samples must be >= 1");
    const int d = params.dim();
    Eigen::LLT<Eigen::MatrixXd> llt(params.sigma);
    const Eigen::MatrixXd a_factor = llt.matrixL();

    const double ig_mean = std::sqrt(params.chi / params.psi);
    const double ig_shape = params.chi;

    std::mt19937_64 rng = rng_stream(seed, rng_stage::nig_sampling);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Eigen::MatrixXd out(n_samples, d);
    Eigen::VectorXd z(d);
    for (long i = 0; i < n_samples; ++i) {
        const double nu = normal(rng);
        const double v = nu * nu;
        const double w1 = ig_mean + 0.5 * ig_mean * ig_mean * v / ig_shape -
                          0.5 * ig_mean / ig_shape *
                              std::sqrt(4.0 * ig_mean * ig_shape * v +
                                        ig_mean * ig_mean * v * v);
        const double w = (unif(rng) <= ig_mean / (ig_mean + w1))
                             ? w1
                             : ig_mean * ig_mean / w1;
        for (int k = 0; k < d; ++k) z[k] = normal(rng);
        out.row(i) = (params.mu + w * params.gamma_skew +
                      std::sqrt(w) * (a_factor * z))
                         .transpose();
    }
    return out;
}

// Parameters of w'X: linear combinations stay in the family with the same
// mixing law.
inline NIGParams marginal_params(const NIGParams& params, const Eigen::VectorXd& weights) {
    params.validate();
    if (weights.size() != params.dim()) {
        throw ValidationError("marginal_params: weight length mismatch");
    }
    if (weights.isZero(0.0)) {
        throw ValidationError("marginal_params: zero weight vector");
    }
    NIGParams out;
    out.chi = params.chi;
    out.psi = params.psi;
    out.mu = Eigen::VectorXd::Constant(1, weights.dot(params.mu));
    out.gamma_skew = Eigen::VectorXd::Constant(1, weights.dot(params.gamma_skew));
    out.sigma = Eigen::MatrixXd::Constant(1, 1, weights.dot(params.sigma * weights));
    return out;
}

// One-sample Kolmogorov-Smirnov test with the asymptotic p-value
// (Stephens' small-sample argument correction).
inline double ks_statistic(std::vector<double> samples,
                           const std::function<double(double)>& cdf) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d_stat = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = std::clamp(cdf(samples[i]), 0.0, 1.0);
        d_stat = std::max(d_stat, (static_cast<double>(i) + 1.0) / n - f);
        d_stat = std::max(d_stat, f - static_cast<double>(i) / n);
    }
    return d_stat;
}

inline double ks_pvalue_asymptotic(double d_stat, double n) {
    const double lam = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d_stat;
    double p = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 101; ++j) {
        const double term = sign * std::exp(-2.0 * j * j * lam * lam);
        p += term;
        if (std::fabs(term) < 1e-16) break;
        sign = -sign;
    }
    return std::clamp(2.0 * p, 0.0, 1.0);
}

inline double ks_test(const std::vector<double>& samples,
                      const std::function<double(double)>& cdf) {
    if (samples.size() < 20) throw ValidationError("ks_test: needs >= 20 samples");
    const double d_stat = ks_statistic(samples, cdf);
    return ks_pvalue_asymptotic(d_stat, static_cast<double>(samples.size()));
}

namespace detail {

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double fa, double fm, double fb, double whole, double tol,
                               int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * tol) {
        return left + right + (left + right - whole) / 15.0;
    }
    return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-10, int depth = 40) {
    if (a == b) return 0.0;
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, depth);
}

}  // namespace detail

// CDF of a 1-dimensional NIG by incremental quadrature of the density.
// Monotone calls (as produced by sorted KS samples) reuse the accumulated
// integral instead of restarting from the lower tail anchor.
class Nig1DCdf {
  public:
    explicit Nig1DCdf(const NIGParams& params) : density_(params) {
        if (params.dim() != 1) throw ValidationError("Nig1DCdf: params must be 1-dimensional");
        const double mean = nig_mean(params)[0];
        const double sd = std::sqrt(nig_covariance(params)(0, 0));
        anchor_ = mean - 12.0 * sd;
        Eigen::VectorXd x(1);
        for (int i = 0; i < 60; ++i) {
            x[0] = anchor_;
            if (density_.logdensity(x) < -45.0) break;
            anchor_ -= 4.0 * sd;
        }
        cursor_ = anchor_;
        cum_ = 0.0;
    }

    double operator()(double x) const {
        if (x <= anchor_) return 0.0;
        if (x < cursor_) {
            cursor_ = anchor_;
            cum_ = 0.0;
        }
        auto f = [this](double t) {
            Eigen::VectorXd v(1);
            v[0] = t;
            return std::exp(density_.logdensity(v));
        };
        cum_ += detail::integrate(f, cursor_, x, 1e-11);
        cursor_ = x;
        return std::clamp(cum_, 0.0, 1.0);
    }

  private:
    NigDensity density_;
    double anchor_ = 0.0;
    mutable double cursor_ = 0.0;
    mutable double cum_ = 0.0;
};

// MCECM calibration with the mixing index fixed at -1/2 and chi = psi = alpha
// (E[W] = 1). Each iteration: E-step, closed-form update of (mu, gamma,
// Sigma), fresh E-step, then a bracketed one-dimensional search for alpha on
// the expected GIG log-likelihood profile. Both conditional steps can only
// increase the objective, so the observed log-likelihood trace is
// non-decreasing up to numerical slack.
inline std::pair<NIGParams, FitDiagnostics> fit_em(const Eigen::MatrixXd& samples,
                                                   double tol = 1e-8, int max_iter = 500,
                                                   bool ks_diagnostics = true) {
    const long n = samples.rows();
    const int d = static_cast<int>(samples.cols());
    if (d < 1 || n < 10 * d) {
        throw ValidationError("fit_em: needs at least 10 * dim samples");
    }
    const Eigen::VectorXd mean = samples.colwise().mean();
    const Eigen::MatrixXd centered = samples.rowwise() - mean.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / double(n - 1);
    {
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("fit_em: sample covariance singular (degenerate column?)");
        }
    }

    NIGParams params;
    params.mu = mean;
    params.gamma_skew = Eigen::VectorXd::Zero(d);
    params.sigma = cov;
    params.chi = params.psi = 1.0;

    FitDiagnostics diag;
    diag.converged = false;

    auto loglik = [&](const NIGParams& p) {
        const NigDensity dens(p);
        long double acc = 0.0L;
        for (long i = 0; i < n; ++i) {
            acc += dens.logdensity(samples.row(i).transpose());
        }
        return static_cast<double>(acc);
    };

    auto e_step = [&](const NIGParams& p, Eigen::VectorXd& delta, Eigen::VectorXd& eta) {
        const NigDensity dens(p);
        delta.resize(n);
        eta.resize(n);
        for (long i = 0; i < n; ++i) {
            double ew, ewinv;
            dens.conditional_mixing_moments(samples.row(i).transpose(), &ew, &ewinv);
            eta[i] = ew;
            delta[i] = ewinv;
        }
    };

    double ll_prev = loglik(params);
    diag.loglik_trace.push_back(ll_prev);

    Eigen::VectorXd delta(n), eta(n);
    for (int it = 1; it <= max_iter; ++it) {
        // CM step 1: location, skew, scale matrix.
        e_step(params, delta, eta);
        const double delta_bar = delta.mean();
        const double eta_bar = eta.mean();
        const Eigen::VectorXd delta_x = (samples.transpose() * delta) / double(n);

        const double denom = delta_bar * eta_bar - 1.0;
        Eigen::VectorXd gamma_new = params.gamma_skew;
        if (denom > 1e-12) {
            gamma_new = (delta_bar * mean - delta_x) / denom;
        }
        const Eigen::VectorXd mu_new = (delta_x - gamma_new) / delta_bar;

        Eigen::MatrixXd sigma_new = Eigen::MatrixXd::Zero(d, d);
        for (long i = 0; i < n; ++i) {
            const Eigen::VectorXd diff = samples.row(i).transpose() - mu_new;
            sigma_new.noalias() += delta[i] * diff * diff.transpose();
        }
        sigma_new /= double(n);
        const Eigen::VectorXd mean_diff = mean - mu_new;
        sigma_new -= mean_diff * gamma_new.transpose();
        sigma_new -= gamma_new * mean_diff.transpose();
        sigma_new += eta_bar * gamma_new * gamma_new.transpose();
        sigma_new = (0.5 * (sigma_new + sigma_new.transpose())).eval();
        {
            Eigen::LLT<Eigen::MatrixXd> llt(sigma_new);
            if (llt.info() != Eigen::Success) {
                throw NumericalError("fit_em: weighted covariance update singular at iteration " +
                                     std::to_string(it));
            }
        }
        params.mu = mu_new;
        params.gamma_skew = gamma_new;
        params.sigma = sigma_new;

        // CM step 2: mixing scale, profiled on the expected GIG log-likelihood.
        e_step(params, delta, eta);
        const double weight_sum = delta.sum() + eta.sum();
        auto gig_profile = [&](double alpha) {
            return double(n) * (0.5 * std::log(alpha) + alpha) - 0.5 * alpha * weight_sum;
        };
        const double t_star = maximize_scalar(
            [&](double t) { return gig_profile(std::exp(t)); }, std::log(kGigScaleMin),
            std::log(kGigScaleMax), 1e-10);
        const double alpha_new = std::exp(t_star);
        if (gig_profile(alpha_new) >= gig_profile(params.chi)) {
            params.chi = params.psi = alpha_new;
        }

        const double ll = loglik(params);
        diag.loglik_trace.push_back(ll);
        diag.n_iter = it;
        if (ll < ll_prev - kEmLoglikSlack) {
            diag.converged = false;
            break;
        }
        if (std::fabs(ll - ll_prev) < tol * (1.0 + std::fabs(ll_prev))) {
            diag.converged = true;
            break;
        }
        ll_prev = ll;
    }

    if (ks_diagnostics) {
        diag.ks_pvalues.resize(d);
        for (int k = 0; k < d; ++k) {
            Eigen::VectorXd basis = Eigen::VectorXd::Zero(d);
            basis[k] = 1.0;
            const Nig1DCdf cdf(marginal_params(params, basis));
            std::vector<double> col(samples.col(k).data(), samples.col(k).data() + n);
            diag.ks_pvalues[k] = ks_test(col, [&](double x) { return cdf(x); });
        }
    }
    return {params, diag};
}

}  // namespace corrstress
