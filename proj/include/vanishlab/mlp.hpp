#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "vanishlab/init.hpp"
#include "vanishlab/observation.hpp"
#include "vanishlab/rng.hpp"

namespace vanishlab {

struct MlpConfig {
    int depth = 1;   // number of hidden d x d matrices
    int width = 1;   // d
    int d_in = 1;
    int d_out = 1;
    Activation activation = Activation::Linear;
    InitScheme init;
    void validate() const;
};

// Width schedules used by depth sweeps; widths are quantized with ceil and
// floored at 1.
struct WidthRule {
    enum class Kind { Constant, SqrtDepth, Linear } kind = Kind::Constant;
    double param = 1.0;
    int width_for(int depth) const;
    static WidthRule constant(double c) { return {Kind::Constant, c}; }
    static WidthRule sqrt_depth() { return {Kind::SqrtDepth, 1.0}; }
    static WidthRule linear(double alpha) { return {Kind::Linear, alpha}; }
    static WidthRule parse(const std::string& kind, double param);
};

// Cached forward pass for a batch (columns are samples).  pre[k] holds the
// preactivation after k weight matrices (pre[0] = A X); gate[k] holds the 0/1
// activation gates computed from pre[k].  A ReLU gate opens only on strictly
// positive preactivations.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> pre;
    std::vector<Eigen::ArrayXXd> gate;
    std::uint64_t input_hash = 0;
    bool valid = false;
};

struct MlpState {
    MlpConfig config;
    Eigen::MatrixXd A;               // d x d_in
    Eigen::MatrixXd B;               // d_out x d
    std::vector<Eigen::MatrixXd> W;  // depth matrices, d x d
    ForwardCache cache;
};

// Samples A, B and every W from the scheme.  A and B use their own fan-in;
// they are boundary maps and never appear as differentiated parameters.
MlpState make_mlp(const MlpConfig& config, Rng& rng);

std::uint64_t hash_matrix(const Eigen::MatrixXd& m);

// Forward pass B D^L W^{L:1}_phi A X; fills the cache.
Eigen::MatrixXd forward(MlpState& state, const Eigen::MatrixXd& X);

// L2 loss |Y - forward(X)|_F^2 / (2n); refreshes the cache via forward().
double mlp_loss(MlpState& state, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

// Analytic gradients d loss / d W^k for k = 1..L, with gates frozen from the
// cached forward pass.  Throws if the cache does not match X.
std::vector<Eigen::MatrixXd> mlp_gradient(const MlpState& state, const Eigen::MatrixXd& X,
                                          const Eigen::MatrixXd& Y);

enum class HessianMethod { Analytic, FiniteDifference };

// Dense Hessian over the L*d^2 weight parameters (A, B excluded), ordered by
// layer then column-major within each W.  The analytic path assembles the
// per-block Kronecker structure; the finite-difference path central-differences
// the analytic gradient and serves as its oracle.
Eigen::MatrixXd mlp_hessian(MlpState& state, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                            HessianMethod method, int dense_cap = 4096);

// Full spectrum of a symmetric matrix, descending.  The input is symmetrized
// as (H + H^T)/2 first; non-finite entries are rejected.
Eigen::VectorXd eigenspectrum(const Eigen::MatrixXd& h);

// mean |diagonal-block entry| / mean |off-diagonal-block entry| for an
// L x L grid of blocks of size block_dim; +inf when the off-diagonal mean
// vanishes.
double hollowness(const Eigen::MatrixXd& h, int block_dim);

// Every eigenvalue must lie in some Gershgorin disc of h.
bool gershgorin_contains(const Eigen::MatrixXd& h, const Eigen::VectorXd& eigenvalues,
                         double tol = 1e-9);

// Synthetic regression data: standard normal inputs, targets from a fresh
// one-hidden-layer teacher of the same width/init/activation.
struct Dataset {
    Eigen::MatrixXd X;  // d_in x n
    Eigen::MatrixXd Y;  // d_out x n
};
Dataset make_teacher_dataset(const MlpConfig& config, int samples, Rng& rng);

struct NormScanConfig {
    Activation activation = Activation::Linear;
    InitScheme init;
    WidthRule width_rule;
    std::vector<int> depths;
    int trials = 2;
    int samples = 16;
    int d_in = 0;   // 0: match width
    int d_out = 0;  // 0: match width
    std::uint64_t master_seed = 0;
    int threads = 1;
    bool with_hessian = false;
    int dense_cap = 4096;
    int fd_probe_entries = 256;  // Hessian entries probed by FD above the cap
};

// Per depth and seed: forward norms, per-layer gradient Frobenius norms and
// (optionally) Hessian block statistics.
std::vector<ScanObservation> norm_scan(const NormScanConfig& config);

}  // namespace vanishlab
