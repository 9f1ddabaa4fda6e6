#pragma once

// Small statistics helpers shared by the simulator oracles and the ablation
// suite: KS test against Exp(1) and a paired two-sided t-test.

#include <vector>

namespace sten {

double mean_of(const std::vector<double>& xs);
double sample_variance(const std::vector<double>& xs);

// One-sample Kolmogorov-Smirnov statistic of xs against Exp(1).
double ks_statistic_exp1(std::vector<double> xs);
// Asymptotic critical value at the given significance (supports 0.01, 0.05).
double ks_critical(std::size_t n, double alpha);

// Two-sided p-value of a paired t-test on the differences.
double paired_t_test_p(const std::vector<double>& diffs);

} // namespace sten
