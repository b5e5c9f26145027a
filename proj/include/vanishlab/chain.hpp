#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "vanishlab/rng.hpp"

namespace vanishlab {

// A width-one linear network: L scalar weights fit to scalar data pairs via
// the halved mean squared error of the product w_L ... w_1 x.
struct ChainParams {
    std::vector<double> weights;
    std::vector<std::array<double, 2>> data;  // (x, y) pairs
    void validate() const;
};

double chain_loss(const ChainParams& p);

// Analytic gradient.  Skip-products are assembled from prefix/suffix arrays,
// never by dividing out w_k, so entries are exact even at zero weights.
std::vector<double> chain_gradient(const ChainParams& p);

// Full symmetric L x L Hessian:
//   H_kk = avg x^2 P_k^2,
//   H_kl = avg [x^2 P_k P_l + (P x - y) x P_kl],
// with P the full product, P_k the skip-product and P_kl the double skip.
Eigen::MatrixXd chain_hessian(const ChainParams& p);

// One draw of the product of L factors tau * U(0,1], kept in log scale.
struct ChainSample {
    double log_value = 0.0;
    double value() const { return std::exp(log_value); }
};
ChainSample sample_forward(double tau, int depth, Rng& rng);

enum class OptMethod { GD, PerturbedGD, SGD, RMSprop, Adam };
enum class LrDecay { None, InvSqrt };

struct OptimizerSpec {
    OptMethod method = OptMethod::GD;
    double lr = 1e-3;
    double noise_std = 0.0;  // PerturbedGD: std of the Gaussian added to the update
    double beta1 = 0.9;      // Adam first-moment factor
    double beta2 = 0.9;      // RMSprop/Adam second-moment factor
    double eps = 1e-8;
    LrDecay decay = LrDecay::None;

    static OptimizerSpec gd(double lr) { return {OptMethod::GD, lr, 0, 0.9, 0.9, 1e-8, LrDecay::None}; }
    static OptimizerSpec perturbed_gd(double lr, double noise_std) {
        return {OptMethod::PerturbedGD, lr, noise_std, 0.9, 0.9, 1e-8, LrDecay::None};
    }
    static OptimizerSpec sgd(double lr) { return {OptMethod::SGD, lr, 0, 0.9, 0.9, 1e-8, LrDecay::None}; }
    static OptimizerSpec rmsprop(double lr, double beta2 = 0.9, LrDecay decay = LrDecay::None) {
        return {OptMethod::RMSprop, lr, 0, 0.9, beta2, 1e-8, decay};
    }
    static OptimizerSpec adam(double lr, double beta1 = 0.9, double beta2 = 0.999) {
        return {OptMethod::Adam, lr, 0, beta1, beta2, 1e-8, LrDecay::None};
    }
    void validate() const;
};

struct TrajectoryPoint {
    double loss = 0.0;
    double grad_inf_norm = 0.0;
};

// Per-step records including the initial state (points.size() == steps + 1
// unless the run was truncated by divergence).
struct Trajectory {
    std::vector<TrajectoryPoint> points;
    std::vector<std::vector<double>> weights;  // filled only when recorded
    bool diverged = false;
    std::size_t steps() const { return points.empty() ? 0 : points.size() - 1; }
};

Trajectory run_optimizer(const ChainParams& start, const OptimizerSpec& spec, int steps,
                         Rng& rng, bool record_weights = false);

// First step index whose loss is below the threshold, if any.
std::optional<long> escape_time(const Trajectory& t, double loss_threshold);

enum class OdeMethod { Euler, RK4 };

// Integration of the symmetric-chain flow dw/dt = -w^{2L-1} x + w^{L-1} y.
struct FlowTrajectory {
    std::vector<double> times;
    std::vector<double> values;
    bool truncated = false;
};
FlowTrajectory integrate_flow(double w0, int depth, double x, double y, double dt,
                              double t_max, OdeMethod method = OdeMethod::Euler);

}  // namespace vanishlab
