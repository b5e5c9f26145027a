#include "vanishlab/chain.hpp"

#include <cmath>
#include <stdexcept>

namespace vanishlab {

namespace {

// prefix[i] = w_0 ... w_{i-1}, suffix[i] = w_i ... w_{L-1}.
void skip_products(const std::vector<double>& w, std::vector<double>& prefix,
                   std::vector<double>& suffix) {
    const std::size_t n = w.size();
    prefix.assign(n + 1, 1.0);
    suffix.assign(n + 1, 1.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] * w[i];
    for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] * w[i];
}

}  // namespace

void ChainParams::validate() const {
    if (weights.empty()) throw std::invalid_argument("ChainParams: need at least one weight");
    if (data.empty()) throw std::invalid_argument("ChainParams: need at least one data pair");
    for (double w : weights)
        if (!std::isfinite(w)) throw std::invalid_argument("ChainParams: non-finite weight");
    for (const auto& d : data)
        if (!std::isfinite(d[0]) || !std::isfinite(d[1]))
            throw std::invalid_argument("ChainParams: non-finite data");
}

double chain_loss(const ChainParams& p) {
    p.validate();
    double prod = 1.0;
    for (double w : p.weights) prod *= w;
    double acc = 0.0;
    for (const auto& d : p.data) {
        const double r = d[1] - prod * d[0];
        acc += r * r;
    }
    return acc / (2.0 * static_cast<double>(p.data.size()));
}

std::vector<double> chain_gradient(const ChainParams& p) {
    p.validate();
    const std::size_t n = p.weights.size();
    std::vector<double> prefix, suffix;
    skip_products(p.weights, prefix, suffix);
    const double prod = prefix[n];

    // avg over data of (P x - y) x, shared by every coordinate.
    double rx = 0.0;
    for (const auto& d : p.data) rx += (prod * d[0] - d[1]) * d[0];
    rx /= static_cast<double>(p.data.size());

    std::vector<double> g(n);
    for (std::size_t k = 0; k < n; ++k) g[k] = prefix[k] * suffix[k + 1] * rx;
    return g;
}

Eigen::MatrixXd chain_hessian(const ChainParams& p) {
    p.validate();
    const std::size_t n = p.weights.size();
    std::vector<double> prefix, suffix;
    skip_products(p.weights, prefix, suffix);
    const double prod = prefix[n];

    double x2 = 0.0, rx = 0.0;
    for (const auto& d : p.data) {
        x2 += d[0] * d[0];
        rx += (prod * d[0] - d[1]) * d[0];
    }
    const double inv_n = 1.0 / static_cast<double>(p.data.size());
    x2 *= inv_n;
    rx *= inv_n;

    Eigen::MatrixXd h(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const double pk = prefix[k] * suffix[k + 1];
        h(k, k) = x2 * pk * pk;
        // Double-skip products for l > k via a running middle product.
        double mid = 1.0;
        for (std::size_t l = k + 1; l < n; ++l) {
            if (l > k + 1) mid *= p.weights[l - 1];
            const double pl = prefix[l] * suffix[l + 1];
            const double pkl = prefix[k] * mid * suffix[l + 1];
            const double v = x2 * pk * pl + rx * pkl;
            h(k, l) = v;
            h(l, k) = v;
        }
    }
    return h;
}

ChainSample sample_forward(double tau, int depth, Rng& rng) {
    if (tau <= 0) throw std::invalid_argument("sample_forward: tau must be > 0");
    if (depth < 1) throw std::invalid_argument("sample_forward: depth must be >= 1");
    const double log_tau = std::log(tau);
    double acc = 0.0;
    for (int k = 0; k < depth; ++k) acc += log_tau + std::log(rng.uniform01());
    return {acc};
}

void OptimizerSpec::validate() const {
    if (lr <= 0) throw std::invalid_argument("OptimizerSpec: lr must be > 0");
    if (beta1 < 0 || beta1 >= 1) throw std::invalid_argument("OptimizerSpec: beta1 in [0,1)");
    if (beta2 < 0 || beta2 >= 1) throw std::invalid_argument("OptimizerSpec: beta2 in [0,1)");
    if (eps <= 0) throw std::invalid_argument("OptimizerSpec: eps must be > 0");
    if (method == OptMethod::PerturbedGD && noise_std < 0)
        throw std::invalid_argument("OptimizerSpec: noise_std must be >= 0");
}

Trajectory run_optimizer(const ChainParams& start, const OptimizerSpec& spec, int steps,
                         Rng& rng, bool record_weights) {
    start.validate();
    spec.validate();
    if (steps < 1) throw std::invalid_argument("run_optimizer: steps must be >= 1");

    const std::size_t n = start.weights.size();
    ChainParams cur = start;
    std::vector<double> v(n, 0.0), m(n, 0.0);

    Trajectory traj;
    traj.points.reserve(static_cast<std::size_t>(steps) + 1);

    const auto record = [&](const std::vector<double>& grad) {
        TrajectoryPoint pt;
        pt.loss = chain_loss(cur);
        pt.grad_inf_norm = 0.0;
        for (double g : grad) pt.grad_inf_norm = std::max(pt.grad_inf_norm, std::abs(g));
        traj.points.push_back(pt);
        if (record_weights) traj.weights.push_back(cur.weights);
        return std::isfinite(pt.loss);
    };

    if (!record(chain_gradient(cur))) {
        traj.diverged = true;
        return traj;
    }

    ChainParams single = cur;  // scratch for SGD single-sample gradients
    single.data.resize(1);

    for (int step = 0; step < steps; ++step) {
        std::vector<double> grad;
        if (spec.method == OptMethod::SGD) {
            single.weights = cur.weights;
            single.data[0] = cur.data[rng.next_u64() % cur.data.size()];
            grad = chain_gradient(single);
        } else {
            grad = chain_gradient(cur);
        }

        double lr = spec.lr;
        if (spec.decay == LrDecay::InvSqrt) lr /= std::sqrt(static_cast<double>(step + 1));

        switch (spec.method) {
            case OptMethod::GD:
            case OptMethod::SGD:
                for (std::size_t i = 0; i < n; ++i) cur.weights[i] -= lr * grad[i];
                break;
            case OptMethod::PerturbedGD:
                // Isotropic Gaussian noise injected into the update through
                // the step size, the standard perturbed-descent construction.
                for (std::size_t i = 0; i < n; ++i)
                    cur.weights[i] -= lr * (grad[i] + spec.noise_std * rng.gaussian());
                break;
            case OptMethod::RMSprop:
                for (std::size_t i = 0; i < n; ++i) {
                    v[i] = spec.beta2 * v[i] + (1.0 - spec.beta2) * grad[i] * grad[i];
                    cur.weights[i] -= lr * grad[i] / (std::sqrt(v[i]) + spec.eps);
                }
                break;
            case OptMethod::Adam: {
                const double c1 = 1.0 - std::pow(spec.beta1, step + 1);
                const double c2 = 1.0 - std::pow(spec.beta2, step + 1);
                for (std::size_t i = 0; i < n; ++i) {
                    m[i] = spec.beta1 * m[i] + (1.0 - spec.beta1) * grad[i];
                    v[i] = spec.beta2 * v[i] + (1.0 - spec.beta2) * grad[i] * grad[i];
                    cur.weights[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + spec.eps);
                }
                break;
            }
        }

        bool finite = true;
        for (double w : cur.weights) finite = finite && std::isfinite(w);
        if (!finite || !record(finite ? chain_gradient(cur) : std::vector<double>(n, 0.0))) {
            traj.diverged = true;
            break;
        }
    }
    return traj;
}

std::optional<long> escape_time(const Trajectory& t, double loss_threshold) {
    if (loss_threshold <= 0) throw std::invalid_argument("escape_time: threshold must be > 0");
    for (std::size_t i = 0; i < t.points.size(); ++i)
        if (t.points[i].loss < loss_threshold) return static_cast<long>(i);
    return std::nullopt;
}

FlowTrajectory integrate_flow(double w0, int depth, double x, double y, double dt,
                              double t_max, OdeMethod method) {
    if (dt <= 0) throw std::invalid_argument("integrate_flow: dt must be > 0");
    if (depth < 1) throw std::invalid_argument("integrate_flow: depth must be >= 1");
    const auto f = [&](double w) {
        return -std::pow(w, 2 * depth - 1) * x + std::pow(w, depth - 1) * y;
    };

    FlowTrajectory out;
    double w = w0;
    double t = 0.0;
    out.times.push_back(t);
    out.values.push_back(w);
    while (t < t_max - 0.5 * dt) {
        double next;
        if (method == OdeMethod::Euler) {
            next = w + dt * f(w);
        } else {
            const double k1 = f(w);
            const double k2 = f(w + 0.5 * dt * k1);
            const double k3 = f(w + 0.5 * dt * k2);
            const double k4 = f(w + dt * k3);
            next = w + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        }
        if (!std::isfinite(next)) {
            out.truncated = true;
            break;
        }
        w = next;
        t += dt;
        out.times.push_back(t);
        out.values.push_back(w);
    }
    return out;
}

}  // namespace vanishlab
