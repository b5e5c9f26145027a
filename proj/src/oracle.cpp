#include "vanishlab/oracle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace vanishlab {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

SignedLog SignedLog::from(double x) {
    if (x == 0.0) return {-kInf, 0};
    return {std::log(std::abs(x)), x > 0 ? 1 : -1};
}

double SignedLog::value() const {
    if (sign == 0) return 0.0;
    return sign * std::exp(log_abs);
}

SignedLog SignedLog::operator*(const SignedLog& o) const {
    if (sign == 0 || o.sign == 0) return {-kInf, 0};
    return {log_abs + o.log_abs, sign * o.sign};
}

SignedLog SignedLog::operator+(const SignedLog& o) const {
    if (sign == 0) return o;
    if (o.sign == 0) return *this;
    const double hi = std::max(log_abs, o.log_abs);
    const double lo = std::min(log_abs, o.log_abs);
    if (sign == o.sign) return {hi + std::log1p(std::exp(lo - hi)), sign};
    // Opposite signs: cancellation, possibly exact.
    if (log_abs == o.log_abs) return {-kInf, 0};
    const int s = (log_abs > o.log_abs) ? sign : o.sign;
    return {hi + std::log1p(-std::exp(lo - hi)), s};
}

// ---------------------------------------------------------------------------
// Chain results
// ---------------------------------------------------------------------------

double chain_moment(double tau, int depth, int order) {
    if (tau <= 0) throw std::invalid_argument("chain_moment: tau must be > 0");
    if (depth < 1) throw std::invalid_argument("chain_moment: depth must be >= 1");
    if (order < 1 || order > 3)
        throw std::invalid_argument("chain_moment: unsupported order (must be 1, 2 or 3)");
    // (tau^m / (m+1))^L in log space.
    const double per_layer = order * std::log(tau) - std::log(order + 1.0);
    return std::exp(depth * per_layer);
}

double chain_log_cdf(double tau, int depth, double zeta) {
    if (tau <= 0) throw std::invalid_argument("chain_log_cdf: tau must be > 0");
    if (depth < 1) throw std::invalid_argument("chain_log_cdf: depth must be >= 1");
    const double xi = zeta + depth * std::log(tau);
    if (xi <= 0) return 0.0;

    if (xi < depth) {
        // Lower tail: 1 - e^{-xi} sum_{k<L} xi^k/k! cancels catastrophically,
        // so evaluate the equivalent lower series
        //   P = xi^L e^{-xi}/L! * sum_{n>=0} xi^n / ((L+1)...(L+n)),
        // whose terms are positive and contract by xi/(L+n) < 1.
        double term = 1.0, sum = 1.0;
        for (int n = 1; n < 100000; ++n) {
            term *= xi / (depth + n);
            sum += term;
            if (term < sum * 1e-17) break;
        }
        const double log_p =
            depth * std::log(xi) - xi - std::lgamma(depth + 1.0) + std::log(sum);
        const double cdf = std::exp(log_p);
        return cdf > 1 ? 1.0 : cdf;
    }

    if (xi <= 700.0) {
        // Partial sum via the multiplicative term recurrence.
        double term = 1.0, sum = 1.0;
        for (int k = 1; k < depth; ++k) {
            term *= xi / k;
            sum += term;
        }
        const double cdf = 1.0 - std::exp(-xi) * sum;
        return cdf < 0 ? 0.0 : (cdf > 1 ? 1.0 : cdf);
    }

    // xi^k/k! overflows; accumulate the partial sum in log space.
    double max_log = -kInf;
    std::vector<double> logs(static_cast<std::size_t>(depth));
    for (int k = 0; k < depth; ++k) {
        logs[k] = k * std::log(xi) - std::lgamma(k + 1.0);
        max_log = std::max(max_log, logs[k]);
    }
    double acc = 0.0;
    for (int k = 0; k < depth; ++k) acc += std::exp(logs[k] - max_log);
    const double log_sum = max_log + std::log(acc);
    const double cdf = -std::expm1(log_sum - xi);
    return cdf < 0 ? 0.0 : (cdf > 1 ? 1.0 : cdf);
}

std::pair<double, double> chain_median_bounds(double tau, int depth) {
    if (tau <= 0) throw std::invalid_argument("chain_median_bounds: tau must be > 0");
    if (depth < 1) throw std::invalid_argument("chain_median_bounds: depth must be >= 1");
    const double l_log_tau = depth * std::log(tau);
    const double lower = std::exp(l_log_tau - (depth - 1.0 + std::log(2.0)));
    const double upper = std::exp(l_log_tau - (depth - 1.0 / 3.0));
    return {lower, upper};
}

double chain_median(double tau, int depth) {
    // Solve chain_log_cdf(tau, L, zeta) = 1/2 by bisection in zeta, then
    // median[v] = e^{-zeta}.  The Erlang median lies within [L-1/3, L-1+ln2],
    // so bracket generously around it.
    const double l_log_tau = depth * std::log(tau);
    double lo = depth - 2.0 - l_log_tau;
    double hi = depth + 2.0 - l_log_tau;
    while (chain_log_cdf(tau, depth, lo) > 0.5) lo -= 1.0;
    while (chain_log_cdf(tau, depth, hi) < 0.5) hi += 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (chain_log_cdf(tau, depth, mid) < 0.5) lo = mid;
        else hi = mid;
        if (hi - lo < 1e-13 * (1.0 + std::abs(hi))) break;
    }
    return std::exp(-0.5 * (lo + hi));
}

double chain_derivative_rate(double tau, int depth, DerivativeKind kind) {
    if (tau <= 0) throw std::invalid_argument("chain_derivative_rate: tau must be > 0");
    if (depth < 2) throw std::invalid_argument("chain_derivative_rate: depth must be >= 2");
    const double base = -(depth - 1.0) * (1.0 - std::log(tau));
    return kind == DerivativeKind::HessianDiag ? 2.0 * base : base;
}

// ---------------------------------------------------------------------------
// Wide-network recursion
// ---------------------------------------------------------------------------

Eigen::Matrix2d q_matrix(int width, double kappa, double p) {
    if (width < 1) throw std::invalid_argument("q_matrix: width must be >= 1");
    if (kappa < 1) throw std::invalid_argument("q_matrix: kurtosis must be >= 1");
    if (p <= 0 || p > 1) throw std::invalid_argument("q_matrix: p must be in (0, 1]");
    const double d = width;
    Eigen::Matrix2d q;
    q << d + 2.0, (kappa - 3.0 + (1.0 - p) * (d + 2.0)) / p,
         3.0,     (kappa - 3.0 * p) / p;
    return q;
}

MomentState forward_moments(int width, double sigma2, double kappa, double p, int layers,
                            const MomentState& input) {
    if (layers < 0) throw std::invalid_argument("forward_moments: layers must be >= 0");
    if (!input.valid()) throw std::invalid_argument("forward_moments: invalid input state");
    const Eigen::Matrix2d q = q_matrix(width, kappa, p);
    const double m2_factor = width * sigma2 * p;
    const double m4_scale = p * p * width * sigma2 * sigma2;

    MomentState s = input;
    for (int k = 0; k < layers; ++k) {
        s.m2 *= m2_factor;
        const double a = s.m4_2, b = s.m4_4;
        s.m4_2 = m4_scale * (q(0, 0) * a + q(0, 1) * b);
        s.m4_4 = m4_scale * (q(1, 0) * a + q(1, 1) * b);
    }
    return s;
}

LogMomentState forward_moments_log(int width, double sigma2, double kappa, double p, int layers,
                                   const LogMomentState& input) {
    if (layers < 0) throw std::invalid_argument("forward_moments_log: layers must be >= 0");
    const Eigen::Matrix2d q = q_matrix(width, kappa, p);
    const SignedLog log_m2_factor = SignedLog::from(width * sigma2 * p);
    const SignedLog log_m4_scale = SignedLog::from(p * p * width * sigma2 * sigma2);
    const SignedLog q00 = SignedLog::from(q(0, 0)), q01 = SignedLog::from(q(0, 1));
    const SignedLog q10 = SignedLog::from(q(1, 0)), q11 = SignedLog::from(q(1, 1));

    LogMomentState s = input;
    for (int k = 0; k < layers; ++k) {
        s.m2 = s.m2 * log_m2_factor;
        const SignedLog a = s.m4_2, b = s.m4_4;
        s.m4_2 = log_m4_scale * (q00 * a + q01 * b);
        s.m4_4 = log_m4_scale * (q10 * a + q11 * b);
    }
    return s;
}

MomentState one_layer_activation_step(double p, const MomentState& s) {
    if (!s.valid()) throw std::invalid_argument("one_layer_activation_step: invalid state");
    MomentState out;
    out.m2 = p * s.m2;
    out.m4_2 = p * p * s.m4_2 + (p - p * p) * s.m4_4;
    out.m4_4 = p * s.m4_4;
    return out;
}

MomentState one_layer_matrix_step(int width, double sigma2, double kappa,
                                  const MomentState& s) {
    if (width < 1) throw std::invalid_argument("one_layer_matrix_step: width must be >= 1");
    if (!s.valid()) throw std::invalid_argument("one_layer_matrix_step: invalid state");
    const double d = width;
    const double s4 = sigma2 * sigma2;
    MomentState out;
    out.m2 = d * sigma2 * s.m2;
    out.m4_2 = d * (d + 2.0) * s4 * s.m4_2 + (kappa - 3.0) * d * s4 * s.m4_4;
    out.m4_4 = 3.0 * d * s4 * s.m4_2 + (kappa - 3.0) * d * s4 * s.m4_4;
    return out;
}

double frobenius_propagation(int width, double sigma2, double kappa, double p, int span,
                             int moment) {
    if (span < 0) throw std::invalid_argument("frobenius_propagation: span must be >= 0");
    const double d = width;
    if (moment == 2) return d * std::exp(span * std::log(d * sigma2 * p));
    if (moment == 4) {
        // Canonical vector e1 has unit 2- and 4-norms.
        const MomentState e1{1.0, 1.0, 1.0};
        return d * d * forward_moments(width, sigma2, kappa, p, span, e1).m4_2;
    }
    throw std::invalid_argument("frobenius_propagation: moment must be 2 or 4");
}

int min_width_for_median(double alpha, int depth) {
    if (alpha <= 0 || alpha > 1)
        throw std::domain_error("min_width_for_median: alpha must be in (0, 1]");
    if (depth < 1) throw std::invalid_argument("min_width_for_median: depth must be >= 1");
    const double root = std::pow(alpha * alpha + 1.0, 1.0 / depth) - 1.0;
    const double raw = 2.0 / root;
    // Exact-integer ties stay put; guard against one-ulp noise below them.
    return static_cast<int>(std::ceil(raw * (1.0 - 1e-12)));
}

ScalingReport grad_hessian_scaling(int width, double sigma2, double p, int depth,
                                   double prefactor) {
    if (depth < 2) throw std::invalid_argument("grad_hessian_scaling: depth must be >= 2");
    const double b = width * sigma2 * p;
    const double log_b = std::log(b);
    ScalingReport r;
    r.grad_exponent = 0.5 * depth * log_b;
    r.offdiag_exponent = 0.5 * depth * log_b;
    r.diag_exponent = depth * log_b;
    r.eig_bound = depth * width * prefactor * std::exp(0.5 * depth * log_b);
    return r;
}

// ---------------------------------------------------------------------------
// Gradient-flow envelope
// ---------------------------------------------------------------------------

double FlowBound::operator()(double t) const {
    return gradient_flow_bound(w0, depth, y, t);
}

double gradient_flow_bound(double w0, int depth, double y, double t) {
    if (depth < 3)
        throw std::invalid_argument("gradient_flow_bound: depth must be >= 3 (exponent singular)");
    if (w0 <= 0) throw std::invalid_argument("gradient_flow_bound: w0 must be > 0");
    if (y <= 0) throw std::invalid_argument("gradient_flow_bound: y must be > 0");
    const double lm2 = depth - 2.0;
    const double t_e = std::pow(w0, -lm2) / lm2;
    if (t < 0 || t >= t_e)
        throw std::domain_error("gradient_flow_bound: t must lie in [0, t_e)");
    return std::pow(lm2 * (t_e - y * t), -1.0 / lm2);
}

FlowBound blowup(double w0, int depth, double y) {
    if (depth < 3)
        throw std::invalid_argument("blowup: depth must be >= 3 (exponent singular)");
    if (w0 <= 0) throw std::invalid_argument("blowup: w0 must be > 0");
    if (y <= 0) throw std::invalid_argument("blowup: y must be > 0");
    const double lm2 = depth - 2.0;
    FlowBound f;
    f.t_e = std::pow(w0, -lm2) / lm2;
    f.t_star = f.t_e - 1.0 / lm2;
    f.depth = depth;
    f.y = y;
    f.w0 = w0;
    return f;
}

}  // namespace vanishlab
