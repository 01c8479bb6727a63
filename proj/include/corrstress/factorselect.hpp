#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "corrstress/common.hpp"
#include "corrstress/corrmodel.hpp"
#include "corrstress/math.hpp"

namespace corrstress {

inline constexpr double kDefaultInvGammaA = 0.01;
inline constexpr double kDefaultInvGammaB = 0.01;
inline constexpr int kDefaultMcmcIterations = 50000;
inline constexpr double kPipClipLow = 0.01;
inline constexpr double kPipClipHigh = 0.99;

// Normal-inverse-gamma prior: beta | sigma^2 ~ N(m, sigma^2 M), sigma^2 ~ IG(a, b).
struct BayesLinearPrior {
    Eigen::VectorXd m;
    Eigen::MatrixXd M;
    double a = kDefaultInvGammaA;
    double b = kDefaultInvGammaB;

    void validate() const {
        if (M.rows() != M.cols() || M.rows() != m.size()) {
            throw ValidationError("BayesLinearPrior: dimension mismatch");
        }
        if (!(a > 0.0) || !(b > 0.0)) {
            throw ValidationError("BayesLinearPrior: a, b must be positive");
        }
        if (m.size() > 0 && (M - M.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
            throw ValidationError("BayesLinearPrior: M not symmetric");
        }
    }
};

struct BayesLinearPosterior {
    Eigen::VectorXd m_tilde;
    Eigen::MatrixXd M_tilde;
    double a_tilde = 0.0;
    double b_tilde = 0.0;
};

// Conjugate update:
//   M~ = (X'X + M^-1)^-1,  m~ = M~ (M^-1 m + X'y),
//   a~ = a + n/2,          b~ = b + (y'y + m'M^-1 m - m~'M~^-1 m~)/2.
inline BayesLinearPosterior posterior_update(const BayesLinearPrior& prior,
                                             const Eigen::MatrixXd& X,
                                             const Eigen::VectorXd& y) {
    prior.validate();
    const auto q = prior.m.size();
    if (X.cols() != q || X.rows() != y.size()) {
        throw ValidationError("posterior_update: dimension mismatch");
    }
    const double n = static_cast<double>(y.size());

    BayesLinearPosterior post;
    post.a_tilde = prior.a + 0.5 * n;
    if (q == 0) {
        post.b_tilde = prior.b + 0.5 * y.squaredNorm();
        return post;
    }

    Eigen::LDLT<Eigen::MatrixXd> prior_ldlt(prior.M);
    if (prior_ldlt.info() != Eigen::Success || !prior_ldlt.isPositive() ||
        prior_ldlt.vectorD().minCoeff() <= 0.0) {
        throw ValidationError("posterior_update: singular prior scale M");
    }
    const Eigen::MatrixXd M_inv =
        prior_ldlt.solve(Eigen::MatrixXd::Identity(q, q));

    const Eigen::MatrixXd precision = X.transpose() * X + M_inv;
    Eigen::LDLT<Eigen::MatrixXd> post_ldlt(precision);
    if (post_ldlt.info() != Eigen::Success) {
        throw NumericalError("posterior_update: posterior precision not factorizable");
    }
    post.M_tilde = post_ldlt.solve(Eigen::MatrixXd::Identity(q, q));
    post.M_tilde = (0.5 * (post.M_tilde + post.M_tilde.transpose())).eval();
    const Eigen::VectorXd rhs = M_inv * prior.m + X.transpose() * y;
    post.m_tilde = post_ldlt.solve(rhs);
    post.b_tilde = prior.b + 0.5 * (y.squaredNorm() + prior.m.dot(M_inv * prior.m) -
                                    post.m_tilde.dot(precision * post.m_tilde));
    return post;
}

struct ModelIndicator {
    std::vector<std::uint8_t> gamma;

    int size() const { return static_cast<int>(gamma.size()); }
    int count() const {
        int c = 0;
        for (auto g : gamma) c += (g != 0);
        return c;
    }
    std::uint64_t mask() const {
        std::uint64_t m = 0;
        for (std::size_t k = 0; k < gamma.size(); ++k) {
            if (gamma[k]) m |= (std::uint64_t{1} << k);
        }
        return m;
    }
};

using PriorBuilder = std::function<BayesLinearPrior(const Eigen::MatrixXd& X_selected)>;

// Unit-information g-prior on the selected columns: m = 0, M = n (X'X)^-1.
inline BayesLinearPrior unit_information_prior(const Eigen::MatrixXd& X_selected,
                                               double a = kDefaultInvGammaA,
                                               double b = kDefaultInvGammaB) {
    BayesLinearPrior prior;
    const auto q = X_selected.cols();
    prior.m = Eigen::VectorXd::Zero(q);
    prior.a = a;
    prior.b = b;
    if (q > 0) {
        const Eigen::MatrixXd gram = X_selected.transpose() * X_selected;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
        if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0) {
            throw NumericalError("unit_information_prior: singular X'X");
        }
        prior.M = static_cast<double>(X_selected.rows()) *
                  ldlt.solve(Eigen::MatrixXd::Identity(q, q));
        prior.M = (0.5 * (prior.M + prior.M.transpose())).eval();
    } else {
        prior.M.resize(0, 0);
    }
    return prior;
}

namespace detail {

inline double log_normal_inv_gamma_density(const Eigen::VectorXd& beta, double sigma2,
                                           const BayesLinearPrior& p,
                                           const Eigen::LDLT<Eigen::MatrixXd>& M_ldlt) {
    const auto q = beta.size();
    double logdet_M = 0.0;
    for (int i = 0; i < q; ++i) logdet_M += std::log(M_ldlt.vectorD()[i]);
    const Eigen::VectorXd diff = beta - p.m;
    const double quad = diff.dot(M_ldlt.solve(diff));
    const double log_norm = -0.5 * q * std::log(2.0 * kPi * sigma2) - 0.5 * logdet_M -
                            0.5 * quad / sigma2;
    const double log_ig = p.a * std::log(p.b) - std::lgamma(p.a) -
                          (p.a + 1.0) * std::log(sigma2) - p.b / sigma2;
    return log_norm + log_ig;
}

}  // namespace detail

// log p(y | model) from the conjugate identity
//   p(y) = p(y | beta, sigma^2) p(beta, sigma^2) / p(beta, sigma^2 | y),
// evaluated at (beta, sigma^2) = (m~, b~/a~). Log-determinants come from LDLT
// factors. Returns -inf when the selected design cannot be evaluated.
inline double log_marginal_likelihood(const ModelIndicator& gamma,
                                      const Eigen::MatrixXd& X_full,
                                      const Eigen::VectorXd& y,
                                      const PriorBuilder& prior_builder) {
    if (gamma.size() != X_full.cols()) {
        throw ValidationError("log_marginal_likelihood: gamma length != n_columns");
    }
    const double n = static_cast<double>(y.size());
    std::vector<int> cols;
    for (int k = 0; k < gamma.size(); ++k) {
        if (gamma.gamma[static_cast<std::size_t>(k)]) cols.push_back(k);
    }
    Eigen::MatrixXd X(y.size(), static_cast<int>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) X.col(static_cast<int>(c)) = X_full.col(cols[c]);

    try {
        const BayesLinearPrior prior = prior_builder(X);
        const BayesLinearPosterior post = posterior_update(prior, X, y);
        const double sigma2 = post.b_tilde / post.a_tilde;
        if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
            return -std::numeric_limits<double>::infinity();
        }

        if (cols.empty()) {
            const double log_lik = -0.5 * n * std::log(2.0 * kPi * sigma2) -
                                   0.5 * y.squaredNorm() / sigma2;
            const double log_prior = prior.a * std::log(prior.b) - std::lgamma(prior.a) -
                                     (prior.a + 1.0) * std::log(sigma2) - prior.b / sigma2;
            const double log_post = post.a_tilde * std::log(post.b_tilde) -
                                    std::lgamma(post.a_tilde) -
                                    (post.a_tilde + 1.0) * std::log(sigma2) -
                                    post.b_tilde / sigma2;
            const double lml = log_lik + log_prior - log_post;
            return std::isfinite(lml) ? lml : -std::numeric_limits<double>::infinity();
        }

        const Eigen::VectorXd beta = post.m_tilde;
        const Eigen::VectorXd resid = y - X * beta;
        const double log_lik =
            -0.5 * n * std::log(2.0 * kPi * sigma2) - 0.5 * resid.squaredNorm() / sigma2;

        Eigen::LDLT<Eigen::MatrixXd> prior_M(prior.M);
        Eigen::LDLT<Eigen::MatrixXd> post_M(post.M_tilde);
        if (prior_M.info() != Eigen::Success || post_M.info() != Eigen::Success ||
            prior_M.vectorD().minCoeff() <= 0.0 || post_M.vectorD().minCoeff() <= 0.0) {
            return -std::numeric_limits<double>::infinity();
        }
        const double log_prior = detail::log_normal_inv_gamma_density(
            beta, sigma2, prior, prior_M);
        BayesLinearPrior post_as_prior{post.m_tilde, post.M_tilde, post.a_tilde, post.b_tilde};
        const double log_post = detail::log_normal_inv_gamma_density(
            beta, sigma2, post_as_prior, post_M);
        const double lml = log_lik + log_prior - log_post;
        return std::isfinite(lml) ? lml : -std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
        return -std::numeric_limits<double>::infinity();
    } catch (const ValidationError&) {
        return -std::numeric_limits<double>::infinity();
    }
}

// Prior inclusion weights; forced factors have w_k = 1 and stay in every model.
struct InclusionPrior {
    Eigen::VectorXd w;
    std::set<int> forced;

    void validate() const {
        for (int k = 0; k < w.size(); ++k) {
            if (!(w[k] >= 0.0 && w[k] <= 1.0)) {
                throw ValidationError("InclusionPrior: w outside [0,1]");
            }
        }
        for (int k : forced) {
            if (k < 0 || k >= w.size() || w[k] != 1.0) {
                throw ValidationError("InclusionPrior: forced factor must have w = 1");
            }
        }
    }
};

inline double log_prior_model_prob(const ModelIndicator& gamma, const InclusionPrior& prior) {
    if (gamma.size() != prior.w.size()) {
        throw ValidationError("prior_model_prob: length mismatch");
    }
    double lp = 0.0;
    for (int k = 0; k < gamma.size(); ++k) {
        const double w = prior.w[k];
        if (gamma.gamma[static_cast<std::size_t>(k)]) {
            if (w <= 0.0) return -std::numeric_limits<double>::infinity();
            lp += std::log(w);
        } else {
            if (w >= 1.0) return -std::numeric_limits<double>::infinity();
            lp += std::log1p(-w);
        }
    }
    return lp;
}

// p(M) = prod_k w_k^{gamma_k} (1 - w_k)^{1 - gamma_k}; zero when a forced
// factor is excluded.
inline double prior_model_prob(const ModelIndicator& gamma, const InclusionPrior& prior) {
    const double lp = log_prior_model_prob(gamma, prior);
    return std::isfinite(lp) ? std::exp(lp) : 0.0;
}

// theta = E[S]/d, the common inclusion weight hitting a target expected model
// size under S ~ Binomial(d, theta).
inline double expected_size_weight(double target_size, int d) {
    if (d < 1) throw ValidationError("expected_size_weight: d must be >= 1");
    if (!(target_size > 0.0) || target_size > static_cast<double>(d)) {
        throw ValidationError("expected_size_weight: target size must lie in (0, d]");
    }
    return target_size / static_cast<double>(d);
}

struct PIPResult {
    Eigen::VectorXd pip;
    std::vector<std::uint8_t> selected;  // pip > 1/2
    long n_models_visited = 0;
    double mcmc_acceptance_rate = 0.0;
    bool all_rejected = false;
};

namespace detail {

// Marginal-likelihood evaluator for the unit-information g-prior, working
// entirely off the precomputed Gram so one model evaluation costs O(q^3)
// regardless of n. Algebraically identical to log_marginal_likelihood with
// unit_information_prior:
//   log p(y|M) = c_n - (q/2) log(n+1) - a~ log b~,   c_n collecting constants,
//   b~ = b + (y'y - n/(n+1) * y'X (X'X)^-1 X'y)/2.
class GPriorMarginal {
  public:
    GPriorMarginal(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   double a = kDefaultInvGammaA, double b = kDefaultInvGammaB)
        : gram_(X.transpose() * X),
          xty_(X.transpose() * y),
          yty_(y.squaredNorm()),
          n_(static_cast<double>(y.size())),
          a_(a),
          b_(b) {
        a_tilde_ = a_ + 0.5 * n_;
        const_n_ = -0.5 * n_ * std::log(2.0 * kPi) + a_ * std::log(b_) +
                   std::lgamma(a_tilde_) - std::lgamma(a_);
    }

    double operator()(const ModelIndicator& gamma) const {
        std::vector<int> cols;
        for (int k = 0; k < gamma.size(); ++k) {
            if (gamma.gamma[static_cast<std::size_t>(k)]) cols.push_back(k);
        }
        const int q = static_cast<int>(cols.size());
        double fit = 0.0;
        if (q > 0) {
            Eigen::MatrixXd g(q, q);
            Eigen::VectorXd v(q);
            for (int i = 0; i < q; ++i) {
                v[i] = xty_[cols[static_cast<std::size_t>(i)]];
                for (int j = 0; j < q; ++j) {
                    g(i, j) = gram_(cols[static_cast<std::size_t>(i)],
                                    cols[static_cast<std::size_t>(j)]);
                }
            }
            Eigen::LLT<Eigen::MatrixXd> llt(g);
            if (llt.info() != Eigen::Success) {
                return -std::numeric_limits<double>::infinity();
            }
            fit = n_ / (n_ + 1.0) * v.dot(llt.solve(v));
        }
        const double b_tilde = b_ + 0.5 * (yty_ - fit);
        if (!(b_tilde > 0.0)) return -std::numeric_limits<double>::infinity();
        const double lml =
            const_n_ - 0.5 * q * std::log(n_ + 1.0) - a_tilde_ * std::log(b_tilde);
        return std::isfinite(lml) ? lml : -std::numeric_limits<double>::infinity();
    }

  private:
    Eigen::MatrixXd gram_;
    Eigen::VectorXd xty_;
    double yty_, n_, a_, b_, a_tilde_, const_n_;
};

}  // namespace detail

// Metropolis-Hastings over model space with uniform single-coordinate flips
// on the non-forced factors (a flip either adds or deletes, so the proposal
// is symmetric). PIPs are post-burn-in visit frequencies.
inline PIPResult mcmc_model_search(const Eigen::MatrixXd& X_full, const Eigen::VectorXd& y,
                                   const InclusionPrior& prior,
                                   int n_iter = kDefaultMcmcIterations, int burn_in = -1,
                                   std::uint64_t seed = 0) {
    prior.validate();
    const int d = static_cast<int>(X_full.cols());
    if (prior.w.size() != d) throw ValidationError("mcmc_model_search: prior length mismatch");
    if (d > 63) throw ValidationError("mcmc_model_search: more than 63 factors unsupported");
    if (burn_in < 0) burn_in = n_iter / 5;
    if (n_iter <= burn_in) throw ValidationError("mcmc_model_search: n_iter must exceed burn_in");

    const detail::GPriorMarginal marginal(X_full, y);
    std::vector<int> free_coords;
    for (int k = 0; k < d; ++k) {
        if (!prior.forced.count(k)) free_coords.push_back(k);
    }

    ModelIndicator current;
    current.gamma.assign(static_cast<std::size_t>(d), 0);
    for (int k = 0; k < d; ++k) {
        if (prior.forced.count(k) || prior.w[k] > 0.5) {
            current.gamma[static_cast<std::size_t>(k)] = 1;
        }
    }
    double current_lp = marginal(current) + log_prior_model_prob(current, prior);
    if (!std::isfinite(current_lp)) {
        for (int k = 0; k < d; ++k) {
            current.gamma[static_cast<std::size_t>(k)] = prior.forced.count(k) ? 1 : 0;
        }
        current_lp = marginal(current) + log_prior_model_prob(current, prior);
    }
    if (!std::isfinite(current_lp)) {
        throw NumericalError("mcmc_model_search: no valid starting model");
    }

    std::mt19937_64 rng = rng_stream(seed, rng_stage::factor_selection);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Eigen::VectorXd visits = Eigen::VectorXd::Zero(d);
    long kept = 0;
    long accepted = 0;
    long proposed = 0;
    std::set<std::uint64_t> distinct;
    distinct.insert(current.mask());

    for (int it = 0; it < n_iter; ++it) {
        if (!free_coords.empty()) {
            const std::size_t pick = static_cast<std::size_t>(
                std::min<double>(unif(rng) * static_cast<double>(free_coords.size()),
                                 static_cast<double>(free_coords.size()) - 1.0));
            const int k = free_coords[pick];
            ModelIndicator proposal = current;
            proposal.gamma[static_cast<std::size_t>(k)] ^= 1;
            ++proposed;
            const double prop_lp = marginal(proposal) + log_prior_model_prob(proposal, prior);
            if (std::isfinite(prop_lp) &&
                std::log(unif(rng) + 1e-300) < prop_lp - current_lp) {
                current = std::move(proposal);
                current_lp = prop_lp;
                ++accepted;
                distinct.insert(current.mask());
            }
        }
        if (it >= burn_in) {
            ++kept;
            for (int k = 0; k < d; ++k) {
                visits[k] += current.gamma[static_cast<std::size_t>(k)];
            }
        }
    }

    PIPResult result;
    result.pip = visits / static_cast<double>(kept);
    for (int k : prior.forced) result.pip[k] = 1.0;
    result.selected.resize(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
        result.selected[static_cast<std::size_t>(k)] = result.pip[k] > 0.5 ? 1 : 0;
    }
    result.n_models_visited = static_cast<long>(distinct.size());
    result.mcmc_acceptance_rate =
        proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
    result.all_rejected = proposed > 0 && accepted == 0;
    return result;
}

// Per-asset selection inputs: y is the asset's return window (demeaned), X
// the standardized factor returns over the same dates.
struct SelectionInputs {
    Eigen::MatrixXd factor_returns;  // T x d
    Eigen::MatrixXd asset_returns;   // T x p
};

namespace detail {

inline Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out = m.rowwise() - m.colwise().mean();
    for (int c = 0; c < out.cols(); ++c) {
        const double sd = std::sqrt(out.col(c).squaredNorm() /
                                    std::max<double>(1.0, double(out.rows() - 1)));
        if (!(sd > 0.0)) {
            throw ValidationError("standardize_columns: zero-variance factor column " +
                                  std::to_string(c));
        }
        out.col(c) /= sd;
    }
    return out;
}

}  // namespace detail

struct SelectionResult {
    FactorAssignment assignment;
    std::vector<PIPResult> pips;  // one per asset
};

// One selection round across all assets. On the initial run the prior puts
// w = 1 on each asset's forced factors and theta = target_size/d elsewhere;
// on subsequent runs the previous PIPs, clipped into [kPipClipLow,
// kPipClipHigh], become the new prior weights and nothing stays forced.
inline SelectionResult select_and_propagate(
    const std::optional<std::vector<PIPResult>>& previous,
    const std::vector<std::set<int>>& initial_forced, const Eigen::MatrixXd& asset_returns,
    const Eigen::MatrixXd& factor_returns, const std::vector<std::string>& asset_ids,
    const std::vector<std::string>& factor_names, double target_size,
    int n_iter = kDefaultMcmcIterations, std::uint64_t seed = 0) {
    const int p = static_cast<int>(asset_returns.cols());
    const int d = static_cast<int>(factor_returns.cols());
    if (asset_returns.rows() != factor_returns.rows() || asset_returns.rows() < 2) {
        throw ValidationError("select_and_propagate: empty or misaligned windows");
    }
    if (static_cast<int>(asset_ids.size()) != p ||
        static_cast<int>(factor_names.size()) != d ||
        static_cast<int>(initial_forced.size()) != p) {
        throw ValidationError("select_and_propagate: label/forced set shape mismatch");
    }
    if (previous && static_cast<int>(previous->size()) != p) {
        throw ValidationError("select_and_propagate: previous PIP count != n_assets");
    }
    const double theta = expected_size_weight(target_size, d);
    const Eigen::MatrixXd X = detail::standardize_columns(factor_returns);

    SelectionResult out;
    out.assignment.asset_ids = asset_ids;
    out.assignment.factor_names = factor_names;
    out.assignment.indicators.setZero(p, d);
    out.pips.reserve(static_cast<std::size_t>(p));

    for (int i = 0; i < p; ++i) {
        Eigen::VectorXd y = asset_returns.col(i);
        y.array() -= y.mean();

        InclusionPrior prior;
        prior.w.resize(d);
        if (previous) {
            for (int k = 0; k < d; ++k) {
                prior.w[k] = std::clamp((*previous)[static_cast<std::size_t>(i)].pip[k],
                                        kPipClipLow, kPipClipHigh);
            }
        } else {
            for (int k = 0; k < d; ++k) prior.w[k] = theta;
            for (int k : initial_forced[static_cast<std::size_t>(i)]) {
                if (k < 0 || k >= d) {
                    throw ValidationError("select_and_propagate: forced index out of range");
                }
                prior.w[k] = 1.0;
                prior.forced.insert(k);
            }
        }

        PIPResult pip = mcmc_model_search(X, y, prior, n_iter, n_iter / 5,
                                          rng_stream(seed, rng_stage::factor_selection,
                                                     static_cast<std::uint64_t>(i))());
        for (int k = 0; k < d; ++k) {
            out.assignment.indicators(i, k) = pip.selected[static_cast<std::size_t>(k)] ? 1 : 0;
        }
        out.pips.push_back(std::move(pip));
    }
    out.assignment.validate();
    return out;
}

}  // namespace corrstress
