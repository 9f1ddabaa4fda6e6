#include "sten/stats.hpp"

#include "sten/tensor.hpp" // Error

#include <algorithm>
#include <cmath>

namespace sten {

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) throw Error("mean_of: empty sample");
    double s = 0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double sample_variance(const std::vector<double>& xs) {
    if (xs.size() < 2) throw Error("sample_variance: need at least 2 samples");
    const double m = mean_of(xs);
    double s = 0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

double ks_statistic_exp1(std::vector<double> xs) {
    if (xs.empty()) throw Error("ks_statistic_exp1: empty sample");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double F = 1.0 - std::exp(-xs[i]);
        d = std::max(d, std::abs(F - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - F));
    }
    return d;
}

double ks_critical(std::size_t n, double alpha) {
    // c(alpha)/sqrt(n) with the standard asymptotic coefficients
    double c;
    if (alpha <= 0.01) c = 1.628;
    else if (alpha <= 0.05) c = 1.358;
    else c = 1.224;
    return c / std::sqrt(static_cast<double>(n));
}

namespace {

// Student-t two-sided tail probability via numerical integration of the
// density; df is small in our use so plain Simpson on [|t|, |t|+50] suffices.
double t_density(double x, double df) {
    // log-gamma based normalization
    const double a = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) -
                     0.5 * std::log(df * M_PI);
    return std::exp(a - ((df + 1.0) / 2.0) * std::log1p(x * x / df));
}

} // namespace

double paired_t_test_p(const std::vector<double>& diffs) {
    const std::size_t n = diffs.size();
    if (n < 2) throw Error("paired_t_test_p: need at least 2 pairs");
    const double m = mean_of(diffs);
    const double v = sample_variance(diffs);
    if (v == 0.0) return m == 0.0 ? 1.0 : 0.0;
    const double t = m / std::sqrt(v / static_cast<double>(n));
    const double df = static_cast<double>(n - 1);
    const double lo = std::abs(t), hi = lo + 50.0;
    const int steps = 20000;
    const double h = (hi - lo) / steps;
    double tail = 0.0;
    for (int i = 0; i < steps; ++i) {
        const double x0 = lo + i * h, x1 = x0 + h;
        tail += (h / 6.0) * (t_density(x0, df) + 4.0 * t_density(0.5 * (x0 + x1), df) +
                             t_density(x1, df));
    }
    return std::min(1.0, 2.0 * tail);
}

} // namespace sten
