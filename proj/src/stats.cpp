#include "vanishlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vanishlab {

double mean_of(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("mean_of: empty sample");
    double acc = 0.0;
    for (double x : xs) acc += x;
    return acc / static_cast<double>(xs.size());
}

double median_of(std::vector<double> xs) {
    if (xs.empty()) throw std::invalid_argument("median_of: empty sample");
    const std::size_t n = xs.size();
    const std::size_t mid = n / 2;
    std::nth_element(xs.begin(), xs.begin() + mid, xs.end());
    double hi = xs[mid];
    if (n % 2 == 1) return hi;
    double lo = *std::max_element(xs.begin(), xs.begin() + mid);
    return 0.5 * (lo + hi);
}

double quantile_of(std::vector<double> xs, double q) {
    if (xs.empty()) throw std::invalid_argument("quantile_of: empty sample");
    if (q < 0 || q > 1) throw std::invalid_argument("quantile_of: q must be in [0, 1]");
    std::sort(xs.begin(), xs.end());
    const double pos = q * static_cast<double>(xs.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= xs.size()) return xs.back();
    const double frac = pos - static_cast<double>(lo);
    return xs[lo] * (1.0 - frac) + xs[lo + 1] * frac;
}

double median_log_abs(std::vector<double> xs) {
    for (double& x : xs)
        x = (x == 0.0) ? -std::numeric_limits<double>::infinity() : std::log(std::abs(x));
    return median_of(std::move(xs));
}

StatSummary summarize(std::span<const double> samples, std::uint64_t bootstrap_seed) {
    if (samples.empty()) throw std::invalid_argument("summarize: empty sample");
    StatSummary s;
    s.n = samples.size();
    s.mean = mean_of(samples);
    s.median = median_of(std::vector<double>(samples.begin(), samples.end()));

    double ss = 0.0;
    for (double x : samples) {
        const double d = x - s.mean;
        ss += d * d;
    }
    s.stddev = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1)) : 0.0;

    if (s.n == 1) {
        s.ci95_low = s.ci95_high = s.mean;
        return s;
    }

    constexpr int kResamples = 1000;
    std::vector<double> boot(kResamples);
    Rng rng(bootstrap_seed);
    const std::uint64_t n = samples.size();
    for (int b = 0; b < kResamples; ++b) {
        double acc = 0.0;
        for (std::uint64_t i = 0; i < n; ++i) acc += samples[rng.next_u64() % n];
        boot[b] = acc / static_cast<double>(n);
    }
    s.ci95_low = quantile_of(boot, 0.025);
    s.ci95_high = quantile_of(std::move(boot), 0.975);
    return s;
}

double ks_distance(std::vector<double> samples, const std::function<double(double)>& cdf) {
    if (samples.empty()) throw std::invalid_argument("ks_distance: empty sample");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    }
    return d;
}

LineFit fit_line(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("fit_line: need at least two matching points");
    const double mx = mean_of(xs), my = mean_of(ys);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0) throw std::invalid_argument("fit_line: degenerate x values");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    return f;
}

std::pair<double, double> median_ci(std::vector<double> samples, double z) {
    if (samples.empty()) throw std::invalid_argument("median_ci: empty sample");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    const double half_width = 0.5 * z * std::sqrt(n);
    const auto clamp = [&](double r) {
        return static_cast<std::size_t>(std::clamp(r, 0.0, n - 1.0));
    };
    const std::size_t lo = clamp(0.5 * n - half_width);
    const std::size_t hi = clamp(0.5 * n + half_width);
    return {samples[lo], samples[hi]};
}

}  // namespace vanishlab
