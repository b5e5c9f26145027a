#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"
#include "vanishlab/chain.hpp"
#include "vanishlab/oracle.hpp"
#include "vanishlab/stats.hpp"

using namespace vanishlab;
using testutil::close;

namespace {

// Independent naive loss: straight product loop, no prefix/suffix machinery.
double naive_loss(const ChainParams& p) {
    double acc = 0.0;
    for (const auto& d : p.data) {
        double prod = d[0];
        for (double w : p.weights) prod *= w;
        acc += (d[1] - prod) * (d[1] - prod);
    }
    return acc / (2.0 * p.data.size());
}

ChainParams generic_params(int depth, Rng& rng) {
    ChainParams p;
    p.data = {{0.8, 1.2}, {-0.5, 0.3}, {1.3, -0.7}};
    p.weights.resize(depth);
    for (auto& w : p.weights) {
        do {
            w = rng.uniform_symmetric(1.6);
        } while (std::abs(w) < 0.05);
    }
    return p;
}

double loss_at(ChainParams p, int k, double w) {
    p.weights[k] = w;
    return chain_loss(p);
}

}  // namespace

TEST_CASE("chain loss") {
    ChainParams p;
    p.weights = {1.0, 1.0, 1.0};
    p.data = {{1.0, 1.0}};
    CHECK(chain_loss(p) == 0.0);
    p.weights = {0.0, 0.0, 0.0};
    CHECK(chain_loss(p) == 0.5);

    Rng rng(42);
    for (int rep = 0; rep < 100; ++rep) {
        const ChainParams q = generic_params(2 + rep % 10, rng);
        CHECK(close(chain_loss(q), naive_loss(q), 1e-15));
    }

    CHECK_THROWS(chain_loss(ChainParams{{}, {{1, 1}}}));
    CHECK_THROWS(chain_loss(ChainParams{{1.0}, {}}));
}

TEST_CASE("chain gradient") {
    ChainParams p;
    p.weights = {1.0, 1.0, 1.0};
    p.data = {{1.0, 1.0}};
    for (double g : chain_gradient(p)) CHECK(g == 0.0);

    // Two or more zero weights: every skip-product contains a zero.
    p.weights = {0.0, 2.0, 0.0, 1.5};
    for (double g : chain_gradient(p)) CHECK(g == 0.0);

    // One zero weight: only that coordinate can be nonzero, exactly.
    p.weights = {0.0, 2.0, 1.0, 1.5};
    const auto g1 = chain_gradient(p);
    CHECK(g1[0] != 0.0);
    CHECK(g1[1] == 0.0);
    CHECK(g1[2] == 0.0);
    CHECK(g1[3] == 0.0);

    // Central differences at 100 generic points per depth.
    Rng rng(7);
    for (int depth = 2; depth <= 12; ++depth) {
        for (int rep = 0; rep < 100; ++rep) {
            const ChainParams q = generic_params(depth, rng);
            const auto g = chain_gradient(q);
            for (int k = 0; k < depth; ++k) {
                const double h = 1e-6 * std::max(1.0, std::abs(q.weights[k]));
                const double fd =
                    (loss_at(q, k, q.weights[k] + h) - loss_at(q, k, q.weights[k] - h)) /
                    (2 * h);
                CHECK(std::abs(g[k] - fd) <= 1e-6 * std::max({1.0, std::abs(g[k]), std::abs(fd)}));
            }
        }
    }
}

TEST_CASE("chain hessian") {
    // The classic two-weight saddle.
    ChainParams p;
    p.weights = {0.0, 0.0};
    p.data = {{1.0, 1.0}};
    const Eigen::MatrixXd h = chain_hessian(p);
    CHECK(h(0, 0) == 0.0);
    CHECK(h(1, 1) == 0.0);
    CHECK(h(0, 1) == -1.0);
    CHECK(h(1, 0) == -1.0);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues();
    CHECK(close(ev(0), -1.0));
    CHECK(close(ev(1), 1.0));

    // Global minimum of the depth-3 chain: the all-ones matrix.
    p.weights = {1.0, 1.0, 1.0};
    const Eigen::MatrixXd h3 = chain_hessian(p);
    CHECK((h3 - Eigen::MatrixXd::Ones(3, 3)).array().abs().maxCoeff() == 0.0);

    // Zero vector at depth >= 3: completely flat.
    p.weights = {0.0, 0.0, 0.0, 0.0};
    CHECK(chain_hessian(p).array().abs().maxCoeff() == 0.0);

    // Central differences of the gradient at generic points.
    Rng rng(11);
    for (int depth : {2, 3, 5, 8, 12}) {
        for (int rep = 0; rep < 20; ++rep) {
            const ChainParams q = generic_params(depth, rng);
            const Eigen::MatrixXd ha = chain_hessian(q);
            CHECK((ha - ha.transpose()).array().abs().maxCoeff() == 0.0);
            for (int k = 0; k < depth; ++k) {
                const double step = 5e-6 * std::max(1.0, std::abs(q.weights[k]));
                ChainParams qp = q, qm = q;
                qp.weights[k] += step;
                qm.weights[k] -= step;
                const auto gp = chain_gradient(qp);
                const auto gm = chain_gradient(qm);
                for (int l = 0; l < depth; ++l) {
                    const double fd = (gp[l] - gm[l]) / (2 * step);
                    CHECK(std::abs(ha(l, k) - fd) <=
                          1e-5 * std::max({1.0, std::abs(ha(l, k)), std::abs(fd)}));
                }
            }
        }
    }
}

TEST_CASE("permutation symmetry") {
    Rng rng(13);
    const ChainParams p = generic_params(6, rng);
    const double loss0 = chain_loss(p);
    auto sorted_abs = [](std::vector<double> v) {
        for (auto& x : v) x = std::abs(x);
        std::sort(v.begin(), v.end());
        return v;
    };
    const auto g0 = sorted_abs(chain_gradient(p));
    Eigen::VectorXd spec0 =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(chain_hessian(p)).eigenvalues();

    ChainParams q = p;
    std::rotate(q.weights.begin(), q.weights.begin() + 2, q.weights.end());
    CHECK(close(chain_loss(q), loss0, 1e-14));
    const auto g1 = sorted_abs(chain_gradient(q));
    for (std::size_t i = 0; i < g0.size(); ++i) CHECK(close(g0[i], g1[i], 1e-12));
    Eigen::VectorXd spec1 =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(chain_hessian(q)).eigenvalues();
    for (int i = 0; i < spec0.size(); ++i) CHECK(close(spec0(i), spec1(i), 1e-10, 1e-12));
}

TEST_CASE("sample_forward") {
    Rng rng(1);
    // Support: tau = 1, L = 1 gives v in (0, 1].
    for (int i = 0; i < 1000; ++i) {
        const double v = sample_forward(1.0, 1, rng).value();
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
    }

    // Determinism.
    Rng a(9), b(9);
    CHECK(sample_forward(2.0, 16, a).log_value == sample_forward(2.0, 16, b).log_value);

    // Heavy-tailed mean: E[v] = 1 for tau = 2; check via mean and a
    // median-of-means pass since single means are unstable.
    const long n = 100000;
    Rng rng2(77);
    std::vector<double> block_means;
    double total = 0.0;
    const long blocks = 50;
    for (long b2 = 0; b2 < blocks; ++b2) {
        double acc = 0.0;
        for (long i = 0; i < n / blocks; ++i) acc += sample_forward(2.0, 10, rng2).value();
        block_means.push_back(acc / (n / blocks));
        total += acc;
    }
    const double mean = total / n;
    CHECK(mean > 0.2);
    CHECK(mean < 5.0);
    CHECK(median_of(block_means) > 0.1);
    CHECK(median_of(block_means) < 3.0);

    // Empirical CDF of -ln v against the closed form at moderate size.
    for (int depth : {1, 8, 64}) {
        std::vector<double> neg_log(20000);
        for (auto& z : neg_log) z = -sample_forward(std::sqrt(3.0), depth, rng2).log_value;
        const double d = ks_distance(
            neg_log, [&](double z) { return chain_log_cdf(std::sqrt(3.0), depth, z); });
        CHECK(d < 0.02);
    }
}

TEST_CASE("optimizer updates match hand-computed steps") {
    ChainParams p;
    p.weights = {2.0};
    p.data = {{1.0, 1.0}};  // loss (1-w)^2/2, gradient w - 1

    SUBCASE("gd") {
        Rng rng(0);
        const Trajectory t = run_optimizer(p, OptimizerSpec::gd(0.5), 3, rng);
        // w: 2 -> 1.5 -> 1.25 -> 1.125
        CHECK(close(t.points[0].loss, 0.5));
        CHECK(close(t.points[3].loss, 0.5 * 0.125 * 0.125));
        CHECK(t.steps() == 3);
        CHECK(!t.diverged);
    }

    SUBCASE("rmsprop") {
        Rng rng(0);
        const OptimizerSpec spec = OptimizerSpec::rmsprop(0.1, 0.9);
        const Trajectory t = run_optimizer(p, spec, 2, rng);
        // Step 1: g = 1, v = 0.1, w = 2 - 0.1/(sqrt(0.1)+1e-8)
        double v = 0.1 * 1.0;
        double w = 2.0 - 0.1 * 1.0 / (std::sqrt(v) + 1e-8);
        double g = w - 1.0;
        v = 0.9 * v + 0.1 * g * g;
        w = w - 0.1 * g / (std::sqrt(v) + 1e-8);
        CHECK(close(t.points[2].loss, 0.5 * (1 - w) * (1 - w), 1e-12));
    }

    SUBCASE("adam bias correction") {
        Rng rng(0);
        const Trajectory t = run_optimizer(p, OptimizerSpec::adam(0.1), 1, rng);
        // First step of Adam moves by exactly lr (up to eps) regardless of g scale.
        const double w1 = 2.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        CHECK(close(t.points[1].loss, 0.5 * (1 - w1) * (1 - w1), 1e-12));
    }

    SUBCASE("inv_sqrt decay") {
        Rng rng(0);
        OptimizerSpec spec = OptimizerSpec::gd(0.5);
        spec.decay = LrDecay::InvSqrt;
        const Trajectory t = run_optimizer(p, spec, 2, rng);
        double w = 2.0 - 0.5 * 1.0;            // step 0: lr/sqrt(1)
        w = w - 0.5 / std::sqrt(2.0) * (w - 1);  // step 1: lr/sqrt(2)
        CHECK(close(t.points[2].loss, 0.5 * (1 - w) * (1 - w), 1e-12));
    }

    SUBCASE("rmsprop flat-region effective step approaches lr") {
        // With constant gradient, v -> g^2, so the step approaches lr*sign(g).
        double v = 0.0;
        const double g = 3.0, lr = 0.01, beta2 = 0.9;
        double step = 0.0;
        for (int i = 0; i < 200; ++i) {
            v = beta2 * v + (1 - beta2) * g * g;
            step = lr * g / (std::sqrt(v) + 1e-8);
        }
        CHECK(close(step, lr, 1e-6));
    }
}

TEST_CASE("trajectories are deterministic and flag divergence") {
    ChainParams p;
    p.weights = {0.1, -0.15, 0.05, 0.2};
    p.data = {{1.0, 1.0}};
    Rng a(3), b(3);
    const Trajectory ta =
        run_optimizer(p, OptimizerSpec::perturbed_gd(1e-3, 0.05), 200, a, true);
    const Trajectory tb =
        run_optimizer(p, OptimizerSpec::perturbed_gd(1e-3, 0.05), 200, b, true);
    REQUIRE(ta.points.size() == tb.points.size());
    for (std::size_t i = 0; i < ta.points.size(); ++i) {
        CHECK(ta.points[i].loss == tb.points[i].loss);
        CHECK(ta.weights[i] == tb.weights[i]);
    }

    // A huge step on a steep polynomial diverges and is truncated.
    ChainParams q;
    q.weights = {2.0, 2.0, 2.0, 2.0, 2.0, 2.0};
    q.data = {{1.0, 0.0}};
    Rng c(1);
    const Trajectory td = run_optimizer(q, OptimizerSpec::gd(10.0), 400, c);
    CHECK(td.diverged);
    CHECK(td.points.size() < 401);
}

TEST_CASE("escape time") {
    Trajectory t;
    t.points = {{0.05, 0}, {0.2, 0}, {0.01, 0}};
    CHECK(escape_time(t, 0.1).value() == 0);  // already below at the start
    t.points = {{0.5, 0}, {0.2, 0}, {0.01, 0}};
    CHECK(escape_time(t, 0.1).value() == 2);
    CHECK(!escape_time(t, 1e-9).has_value());
    CHECK_THROWS(escape_time(t, 0.0));
}

TEST_CASE("flow integration") {
    // The symmetric fixed point w* = (y/x)^{1/L} is stationary.
    const double wstar = std::pow(2.0, 1.0 / 6.0);
    const auto flow = integrate_flow(wstar, 6, 0.5, 1.0, 1e-3, 0.5);
    for (double v : flow.values) CHECK(close(v, wstar, 1e-9));

    // Euler stays below the closed-form envelope before blow-up.
    for (double w0 : {0.3, 0.5}) {
        for (int depth : {4, 6, 10}) {
            const FlowBound fb = blowup(w0, depth, 1.0);
            const auto f = integrate_flow(w0, depth, 1.0, 1.0, fb.t_e / 5000, fb.t_e * 0.999);
            CHECK(!f.truncated);
            for (std::size_t i = 0; i < f.times.size(); ++i)
                CHECK(f.values[i] <= fb(f.times[i]) * (1 + 1e-9));
        }
    }

    // Discrete GD tracks the flow to O(eta): halving the step roughly halves
    // the maximum deviation (within a factor 1.5 of exact halving).
    {
        const int depth = 5;
        const double w0 = 0.5, horizon = 2.0;
        const auto exact = integrate_flow(w0, depth, 1.0, 1.0, 1e-5, horizon, OdeMethod::RK4);
        const auto deviation = [&](double eta) {
            ChainParams p;
            p.weights.assign(depth, w0);
            p.data = {{1.0, 1.0}};
            Rng rng(0);
            const long steps = static_cast<long>(horizon / eta);
            const Trajectory t =
                run_optimizer(p, OptimizerSpec::gd(eta), static_cast<int>(steps), rng, true);
            double worst = 0.0;
            for (long k = 0; k <= steps; ++k) {
                // eta * k is the flow time of GD step k.
                const double tt = eta * k;
                const std::size_t idx =
                    std::min<std::size_t>(exact.values.size() - 1,
                                          static_cast<std::size_t>(tt / 1e-5));
                worst = std::max(worst, std::abs(t.weights[k][0] - exact.values[idx]));
            }
            return worst;
        };
        const double d1 = deviation(2e-3);
        const double d2 = deviation(1e-3);
        CHECK(d2 < d1);
        CHECK(d1 / d2 > 2.0 / 1.5);
        CHECK(d1 / d2 < 2.0 * 1.5);
    }

    CHECK_THROWS(integrate_flow(0.5, 4, 1.0, 1.0, 0.0, 1.0));
}
