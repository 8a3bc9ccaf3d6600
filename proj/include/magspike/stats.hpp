#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "magspike/errors.hpp"

namespace magspike::stats {

inline double mean(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

inline double sample_std(std::span<const double> xs) {
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

inline double standard_error(std::span<const double> xs) {
    return sample_std(xs) / std::sqrt(static_cast<double>(xs.size()));
}

struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    double rms_residual = 0.0;
    double r_squared = 0.0;
};

// Ordinary least squares y = intercept + slope * x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw InvalidInput("fit_line: need >= 2 paired points");
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw InvalidInput("fit_line: degenerate abscissa");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - (f.intercept + f.slope * x[i]);
        ss_res += r * r;
    }
    f.rms_residual = std::sqrt(ss_res / static_cast<double>(n));
    f.r_squared = (syy > 0.0) ? 1.0 - ss_res / syy : 1.0;
    return f;
}

struct PlaneFit {
    double c0 = 0.0; // intercept
    double cu = 0.0; // coefficient of u
    double cv = 0.0; // coefficient of v
    double rms_residual = 0.0;
};

// Least squares y = c0 + cu*u + cv*v via 3x3 normal equations.
inline PlaneFit fit_plane(std::span<const double> u, std::span<const double> v,
                          std::span<const double> y) {
    const std::size_t n = u.size();
    if (n < 3 || v.size() != n || y.size() != n)
        throw InvalidInput("fit_plane: need >= 3 paired points");
    double a[3][3] = {};
    double b[3] = {};
    for (std::size_t i = 0; i < n; ++i) {
        const double row[3] = {1.0, u[i], v[i]};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) a[r][c] += row[r] * row[c];
            b[r] += row[r] * y[i];
        }
    }
    // Gaussian elimination with partial pivoting.
    int idx[3] = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::fabs(a[idx[r]][col]) > std::fabs(a[idx[piv]][col])) piv = r;
        std::swap(idx[col], idx[piv]);
        const double d = a[idx[col]][col];
        if (std::fabs(d) < 1e-300) throw InvalidInput("fit_plane: singular design matrix");
        for (int r = col + 1; r < 3; ++r) {
            const double f = a[idx[r]][col] / d;
            for (int c = col; c < 3; ++c) a[idx[r]][c] -= f * a[idx[col]][c];
            b[idx[r]] -= f * b[idx[col]];
        }
    }
    double sol[3];
    for (int r = 2; r >= 0; --r) {
        double s = b[idx[r]];
        for (int c = r + 1; c < 3; ++c) s -= a[idx[r]][c] * sol[c];
        sol[r] = s / a[idx[r]][r];
    }
    PlaneFit f{sol[0], sol[1], sol[2], 0.0};
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - (f.c0 + f.cu * u[i] + f.cv * v[i]);
        ss += r * r;
    }
    f.rms_residual = std::sqrt(ss / static_cast<double>(n));
    return f;
}

// One-sample Kolmogorov-Smirnov statistic against the exponential CDF with
// the given mean.
inline double ks_statistic_exponential(std::vector<double> samples, double mean_value) {
    if (samples.empty() || !(mean_value > 0.0))
        throw InvalidInput("ks_statistic_exponential: empty sample or bad mean");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double cdf = 1.0 - std::exp(-samples[i] / mean_value);
        const double lo = static_cast<double>(i) / n;
        const double hi = static_cast<double>(i + 1) / n;
        d = std::max(d, std::max(cdf - lo, hi - cdf));
    }
    return d;
}

// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{j-1} exp(-2 j^2 lambda^2),
// with Stephens' small-sample correction applied to the argument.
inline double ks_p_value(double d_statistic, std::size_t n) {
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * d_statistic;
    double q = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        q += sign * term;
        sign = -sign;
        if (term < 1e-12) break;
    }
    return std::clamp(2.0 * q, 0.0, 1.0);
}

} // namespace magspike::stats
