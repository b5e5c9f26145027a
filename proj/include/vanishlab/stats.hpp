#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "vanishlab/rng.hpp"

namespace vanishlab {

// Location/scale summary of a scalar observable across seeds.  The 95% CI is
// a percentile bootstrap of the mean (1000 resamples, seeded), chosen over a
// normal approximation because chain observables are extremely heavy-tailed.
struct StatSummary {
    double mean = 0.0;
    double median = 0.0;
    double stddev = 0.0;
    double ci95_low = 0.0;
    double ci95_high = 0.0;
    std::size_t n = 0;
};

StatSummary summarize(std::span<const double> samples, std::uint64_t bootstrap_seed);

double mean_of(std::span<const double> xs);
double median_of(std::vector<double> xs);  // by value: selects in place

// q-quantile (0 <= q <= 1) with linear interpolation between order statistics.
double quantile_of(std::vector<double> xs, double q);

// Median of ln|x|; entries with |x| = 0 are mapped to -inf and participate
// in the order statistics.
double median_log_abs(std::vector<double> xs);

// Kolmogorov-Smirnov distance between the empirical CDF of the samples and
// a reference CDF.
double ks_distance(std::vector<double> samples, const std::function<double(double)>& cdf);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};
LineFit fit_line(std::span<const double> xs, std::span<const double> ys);

// Distribution-free CI for the sample median from binomial order statistics:
// ranks n/2 -+ z*sqrt(n)/2, clamped to the sample.
std::pair<double, double> median_ci(std::vector<double> samples, double z);

}  // namespace vanishlab
