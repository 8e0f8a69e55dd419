#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace annak::statkit {

// Regularized incomplete beta I_x(a, b) via Lentz's continued fraction.
inline double beta_inc(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;

    const bool flip = x > (a + 1.0) / (a + b + 2.0);
    if (flip) {
        std::swap(a, b);
        x = 1.0 - x;
    }

    const double front =
        std::exp(a * std::log(x) + b * std::log1p(-x) + std::lgamma(a + b) -
                 std::lgamma(a) - std::lgamma(b)) / a;

    constexpr double kTiny = 1e-300;
    constexpr double kEps = 1e-15;
    constexpr int kMaxIter = 500;

    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;

    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + num * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;

        num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + num * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps) break;
    }
    const double result = front * h;
    return flip ? 1.0 - result : result;
}

// Two-sided p-value for a t statistic: P(|T_df| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2).
inline double t_two_sided_p(double t, double df) {
    if (df <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(t)) return std::isnan(t) ? t : 0.0;
    return beta_inc(df / 2.0, 0.5, df / (df + t * t));
}

// One-sided upper-tail p-value: P(T_df >= t).
inline double t_upper_p(double t, double df) {
    const double two = t_two_sided_p(t, df);
    return t >= 0.0 ? two / 2.0 : 1.0 - two / 2.0;
}

// Kolmogorov distribution survival function Q(lambda) = 2 sum (-1)^{j-1} exp(-2 j^2 lambda^2).
inline double kolmogorov_q(double lambda) {
    if (lambda < 1e-8) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 200; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += sign * term;
        if (term < 1e-16) break;
        sign = -sign;
    }
    const double q = 2.0 * sum;
    return std::min(1.0, std::max(0.0, q));
}

// One-sample KS test of values against Uniform(0, 1); returns the asymptotic p.
inline double ks_uniform_p(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double cdf = values[i];
        const double upper = static_cast<double>(i + 1) / n - cdf;
        const double lower = cdf - static_cast<double>(i) / n;
        d = std::max({d, upper, lower});
    }
    const double sn = std::sqrt(static_cast<double>(n));
    return kolmogorov_q((sn + 0.12 + 0.11 / sn) * d);
}

}  // namespace annak::statkit
