#pragma once

#include <span>
#include <vector>

namespace mml::stats {

double mean(std::span<const double> x);
/// Population standard deviation.
double stddev(std::span<const double> x);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

/// Asymptotic critical value of the two-sample KS statistic at level alpha.
double ks_critical_value(std::size_t n, std::size_t m, double alpha);

}  // namespace mml::stats
