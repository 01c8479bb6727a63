#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/bessel.hpp>

#include "corrstress/common.hpp"

namespace corrstress {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

inline double logsumexp(const std::vector<double>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// log K_{n+1/2}(x) for integer n >= 0, x > 0.
//
// Half-integer orders admit the exact finite-sum form
//   K_{n+1/2}(x) = sqrt(pi/(2x)) e^{-x} sum_{k=0}^{n} (n+k)! / (k! (n-k)! (2x)^k),
// which this evaluates entirely in log space, so it neither under- nor
// overflows at extreme arguments. All Bessel orders appearing in the
// inverse-Gaussian mixing case are half-integers, so this covers every call
// the library makes.
inline double log_bessel_k_half(int n, double x) {
    if (n < 0) n = -n - 1;  // K_{-v} = K_v, and -(n+1/2) = (-n-1)+1/2
    if (!(x > 0.0)) throw NumericalError("log_bessel_k_half: requires x > 0");
    const double l2x = std::log(2.0 * x);
    std::vector<double> terms(static_cast<std::size_t>(n) + 1);
    for (int k = 0; k <= n; ++k) {
        terms[static_cast<std::size_t>(k)] = std::lgamma(n + k + 1.0) -
                                             std::lgamma(k + 1.0) -
                                             std::lgamma(n - k + 1.0) - k * l2x;
    }
    return 0.5 * std::log(kPi / (2.0 * x)) - x + logsumexp(terms);
}

namespace detail {

// log of the large-argument expansion K_v(x) ~ sqrt(pi/(2x)) e^{-x} sum_k a_k(v)/x^k.
// Accurate to full double precision for x >= ~500 at the small orders used here.
inline double log_bessel_k_asymptotic(double v, double x) {
    double series = 1.0;
    double term = 1.0;
    const double mu = 4.0 * v * v;
    for (int k = 1; k <= 14; ++k) {
        term *= (mu - (2.0 * k - 1.0) * (2.0 * k - 1.0)) / (8.0 * k * x);
        series += term;
        if (std::fabs(term) < 1e-18 * std::fabs(series)) break;
    }
    return 0.5 * std::log(kPi / (2.0 * x)) - x + std::log(series);
}

}  // namespace detail

// log K_v(x) for integer or half-integer order v, x > 0, without under- or
// overflow at extreme arguments. Half-integer orders use the exact closed
// form; integer orders use boost for moderate x, the asymptotic expansion
// for large x, and the upward recurrence
//   K_{n+1}(x) = K_{n-1}(x) + (2n/x) K_n(x)
// in log space to climb from orders 0 and 1.
inline double log_bessel_k(double v, double x) {
    v = std::fabs(v);
    if (!(x > 0.0)) throw NumericalError("log_bessel_k: requires x > 0");
    const double twice = 2.0 * v;
    const long r = std::lround(twice);
    if (std::fabs(twice - static_cast<double>(r)) > 1e-9) {
        throw NumericalError("log_bessel_k: order must be integer or half-integer");
    }
    if (r % 2 == 1) {
        return log_bessel_k_half(static_cast<int>((r - 1) / 2), x);
    }
    const int n = static_cast<int>(r / 2);
    double lk0, lk1;
    if (x < 500.0) {
        lk0 = std::log(boost::math::cyl_bessel_k(0.0, x));
        lk1 = std::log(boost::math::cyl_bessel_k(1.0, x));
    } else {
        lk0 = detail::log_bessel_k_asymptotic(0.0, x);
        lk1 = detail::log_bessel_k_asymptotic(1.0, x);
    }
    if (n == 0) return lk0;
    double lo = lk0, hi = lk1;
    for (int m = 1; m < n; ++m) {
        // log K_{m+1} = logsumexp(log K_{m-1}, log(2m/x) + log K_m)
        const double a = lo;
        const double b = std::log(2.0 * m / x) + hi;
        const double mx = std::max(a, b);
        const double next = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
        lo = hi;
        hi = next;
    }
    return hi;
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ValidationError("norm_quantile: p must lie in (0,1)");
    }
    static const boost::math::normal_distribution<double> unit(0.0, 1.0);
    return boost::math::quantile(unit, p);
}

// Golden-section maximizer on [lo, hi] for a unimodal objective. The EM
// profile step only needs modest accuracy on the argument; tol is relative.
inline double maximize_scalar(const std::function<double(double)>& f, double lo,
                              double hi, double tol = 1e-10, int max_iter = 300) {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < max_iter && (b - a) > tol * (std::fabs(a) + std::fabs(b) + 1e-300);
         ++it) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace corrstress
