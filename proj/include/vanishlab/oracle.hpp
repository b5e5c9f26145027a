#pragma once

#include <Eigen/Dense>
#include <limits>
#include <utility>

namespace vanishlab {

// Population norms propagated through random layers:
//   m2 = E|.|_2^2,  m4_2 = E|.|_2^4,  m4_4 = E|.|_4^4.
struct MomentState {
    double m2 = 1.0;
    double m4_2 = 1.0;
    double m4_4 = 1.0;
    bool valid() const {
        return m2 >= 0 && m4_2 >= 0 && m4_4 >= 0 && m4_4 <= m4_2 * (1 + 1e-12);
    }
};

// Log-magnitude with explicit sign, for recursions whose coefficients can be
// negative (kurtosis below 3) while magnitudes span thousands of orders.
struct SignedLog {
    double log_abs = -std::numeric_limits<double>::infinity();
    int sign = 0;  // -1, 0, +1

    static SignedLog from(double x);
    double value() const;
    SignedLog operator*(const SignedLog& o) const;
    SignedLog operator+(const SignedLog& o) const;
};

struct LogMomentState {
    SignedLog m2, m4_2, m4_4;
    static LogMomentState from(const MomentState& s) {
        return {SignedLog::from(s.m2), SignedLog::from(s.m4_2), SignedLog::from(s.m4_4)};
    }
    MomentState exp() const { return {m2.value(), m4_2.value(), m4_4.value()}; }
};

// ---------------------------------------------------------------------------
// Scalar chain results
// ---------------------------------------------------------------------------

// E[v^m] for the product v of L factors tau*U(0,1]: (tau^m/(m+1))^L,
// evaluated in log space.  Orders 1, 2, 3 only.
double chain_moment(double tau, int depth, int order);

// P(-ln v <= zeta).  -ln v = z - L ln(tau) with z Erlang(L, 1), so this is
// the Erlang CDF at xi = zeta + L ln(tau); 0 for xi <= 0.
double chain_log_cdf(double tau, int depth, double zeta);

// Bracket for median[v]: [e^{L ln tau - (L-1+ln 2)}, e^{L ln tau - (L-1/3)}].
std::pair<double, double> chain_median_bounds(double tau, int depth);

// Median of v obtained by bisecting chain_log_cdf; used to cross-check the
// closed-form bracket.
double chain_median(double tau, int depth);

enum class DerivativeKind { Gradient, HessianOffdiag, HessianDiag };

// Natural-log rate of the asymptotic envelope of chain derivatives:
// -(L-1)(1-ln tau) for gradient/off-diagonal, doubled for the diagonal.
double chain_derivative_rate(double tau, int depth, DerivativeKind kind);

// ---------------------------------------------------------------------------
// Wide-network moment recursion
// ---------------------------------------------------------------------------

// Fourth-moment recursion matrix
//   Q = [[d+2, (kappa-3+(1-p)(d+2))/p], [3, (kappa-3p)/p]].
Eigen::Matrix2d q_matrix(int width, double kappa, double p);

// k-layer propagation: m2 picks up (d sigma^2 p) per layer and the pair
// (m4_2, m4_4) is advanced by (p^2 d sigma^4) Q per layer, as k explicit
// matrix-vector steps.  Composing two calls is bit-identical to one call on
// the summed depth.
MomentState forward_moments(int width, double sigma2, double kappa, double p, int layers,
                            const MomentState& input);

// Same recursion carried in signed-log arithmetic; stays finite for depths
// up to 1e4 where the linear version would over- or underflow.
LogMomentState forward_moments_log(int width, double sigma2, double kappa, double p, int layers,
                                   const LogMomentState& input);

// One activation gate: m2 *= p, m4_2 <- p^2 m4_2 + (p - p^2) m4_4, m4_4 *= p.
MomentState one_layer_activation_step(double p, const MomentState& s);

// One random-matrix multiply:
//   m2 <- d sigma^2 m2
//   m4_2 <- d(d+2) sigma^4 m4_2 + (kappa-3) d sigma^4 m4_4
//   m4_4 <- 3 d sigma^4 m4_2 + (kappa-3) d sigma^4 m4_4.
MomentState one_layer_matrix_step(int width, double sigma2, double kappa, const MomentState& s);

// Expected Frobenius moments of a layer-span product: d (d sigma^2 p)^span
// for moment 2, and d^2 times the canonical-vector fourth moment for
// moment 4 (which needs the entry kurtosis).
double frobenius_propagation(int width, double sigma2, double kappa, double p, int span,
                             int moment);

// Smallest width guaranteeing median[|forward|^2] in [1-alpha, 1+alpha]:
// ceil(2 / ((alpha^2+1)^{1/L} - 1)).
int min_width_for_median(double alpha, int depth);

// Log-scale envelope exponents of gradient/Hessian norms and the Gershgorin
// eigenvalue bound L*d*C*b^{L/2}, b = d sigma^2 p.
struct ScalingReport {
    double grad_exponent = 0.0;
    double offdiag_exponent = 0.0;
    double diag_exponent = 0.0;
    double eig_bound = 0.0;
};
ScalingReport grad_hessian_scaling(int width, double sigma2, double p, int depth,
                                   double prefactor = 1.0);

// ---------------------------------------------------------------------------
// Gradient-flow envelope on the symmetric chain
// ---------------------------------------------------------------------------

// Upper envelope of the symmetric chain flow and its blow-up time
//   t_e = w0^{2-L} / (L-2);  bound(t) = [(L-2)(t_e - y t)]^{-1/(L-2)}.
// t_star is the time the envelope reaches w = 1 (the x = y case).
struct FlowBound {
    double t_e = 0.0;
    double t_star = 0.0;
    int depth = 0;
    double y = 0.0;
    double w0 = 0.0;
    double operator()(double t) const;
};

double gradient_flow_bound(double w0, int depth, double y, double t);
FlowBound blowup(double w0, int depth, double y);

}  // namespace vanishlab
