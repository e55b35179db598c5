#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "traitmix/error.hpp"

namespace traitmix {

inline double sample_mean(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Unbiased (n-1) sample variance.
inline double sample_variance(std::span<const double> xs) {
    if (xs.size() < 2) fail(ErrorKind::statistics, "stats", "variance needs at least 2 samples");
    const double m = sample_mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

inline double sample_stddev(std::span<const double> xs) { return std::sqrt(sample_variance(xs)); }

namespace detail {

// Continued-fraction evaluation for the regularized incomplete beta function
// (Lentz's algorithm).
inline double betacf(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = 3e-16;
    constexpr double fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) return h;
    }
    fail(ErrorKind::statistics, "stats", "incomplete beta did not converge");
}

} // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double reg_incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) fail(ErrorKind::statistics, "stats", "incomplete beta argument outside [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                            b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
    return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};

// Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom; the
// p-value comes from the regularized incomplete beta. Two constant, equal
// samples give p = 1 by convention; zero variance with distinct means is an
// undefined statistic.
inline WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) fail(ErrorKind::statistics, "stats", "welch_t needs >= 2 samples per side");
    const double ma = sample_mean(a), mb = sample_mean(b);
    const double va = sample_variance(a), vb = sample_variance(b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double se2 = va / na + vb / nb;
    if (se2 == 0.0) {
        if (ma == mb) return {0.0, na + nb - 2.0, 1.0};
        fail(ErrorKind::statistics, "stats", "zero variance with distinct means: t undefined");
    }
    WelchResult r;
    r.t = (ma - mb) / std::sqrt(se2);
    const double term_a = (va / na) * (va / na) / (na - 1.0);
    const double term_b = (vb / nb) * (vb / nb) / (nb - 1.0);
    r.df = se2 * se2 / (term_a + term_b);
    r.p = reg_incomplete_beta(r.df / 2.0, 0.5, r.df / (r.df + r.t * r.t));
    return r;
}

inline double welch_p(std::span<const double> a, std::span<const double> b) { return welch_t(a, b).p; }

} // namespace traitmix
