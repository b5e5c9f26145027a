#include "vanishlab/mlp.hpp"

#include <cmath>
#include <cstring>
#include <mutex>
#include <stdexcept>

#include "vanishlab/parallel.hpp"

namespace vanishlab {

void MlpConfig::validate() const {
    if (depth < 1) throw std::invalid_argument("MlpConfig: depth must be >= 1");
    if (width < 1 || d_in < 1 || d_out < 1)
        throw std::invalid_argument("MlpConfig: dimensions must be >= 1");
}

int WidthRule::width_for(int depth) const {
    double raw = 0.0;
    switch (kind) {
        case Kind::Constant: raw = param; break;
        case Kind::SqrtDepth: raw = std::sqrt(static_cast<double>(depth)); break;
        case Kind::Linear: raw = param * depth; break;
    }
    const int w = static_cast<int>(std::ceil(raw - 1e-12));
    return w < 1 ? 1 : w;
}

WidthRule WidthRule::parse(const std::string& kind, double param) {
    if (kind == "constant") return constant(param);
    if (kind == "sqrt_depth") return sqrt_depth();
    if (kind == "linear") return linear(param);
    throw std::invalid_argument("WidthRule: unknown kind '" + kind + "'");
}

std::uint64_t hash_matrix(const Eigen::MatrixXd& m) {
    // FNV-1a over the raw entry bytes plus the shape.
    std::uint64_t h = 1469598103934665603ull;
    const auto mix = [&h](const void* p, std::size_t len) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    const std::int64_t rows = m.rows(), cols = m.cols();
    mix(&rows, sizeof rows);
    mix(&cols, sizeof cols);
    mix(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    return h;
}

MlpState make_mlp(const MlpConfig& config, Rng& rng) {
    config.validate();
    MlpState s;
    s.config = config;
    s.A = sample_matrix(config.init, config.width, config.d_in, rng);
    s.W.reserve(config.depth);
    for (int l = 0; l < config.depth; ++l)
        s.W.push_back(sample_matrix(config.init, config.width, config.width, rng));
    s.B = sample_matrix(config.init, config.d_out, config.width, rng);
    return s;
}

namespace {

Eigen::ArrayXXd gates_of(const Eigen::MatrixXd& pre, Activation act) {
    if (act == Activation::Linear) return Eigen::ArrayXXd::Ones(pre.rows(), pre.cols());
    return (pre.array() > 0.0).cast<double>();
}

}  // namespace

Eigen::MatrixXd forward(MlpState& state, const Eigen::MatrixXd& X) {
    const auto& cfg = state.config;
    if (X.rows() != cfg.d_in) throw std::invalid_argument("forward: input dimension mismatch");

    auto& c = state.cache;
    c.pre.assign(cfg.depth + 1, Eigen::MatrixXd());
    c.gate.assign(cfg.depth + 1, Eigen::ArrayXXd());

    c.pre[0] = state.A * X;
    c.gate[0] = gates_of(c.pre[0], cfg.activation);
    for (int l = 0; l < cfg.depth; ++l) {
        const Eigen::MatrixXd h = (c.gate[l] * c.pre[l].array()).matrix();
        c.pre[l + 1] = state.W[l] * h;
        c.gate[l + 1] = gates_of(c.pre[l + 1], cfg.activation);
    }
    c.input_hash = hash_matrix(X);
    c.valid = true;
    return state.B * (c.gate[cfg.depth] * c.pre[cfg.depth].array()).matrix();
}

double mlp_loss(MlpState& state, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    if (Y.cols() != X.cols() || Y.rows() != state.config.d_out)
        throw std::invalid_argument("mlp_loss: target shape mismatch");
    if (X.cols() < 1) throw std::invalid_argument("mlp_loss: empty dataset");
    const Eigen::MatrixXd out = forward(state, X);
    return (Y - out).squaredNorm() / (2.0 * static_cast<double>(X.cols()));
}

namespace {

void require_cache(const MlpState& state, const Eigen::MatrixXd& X) {
    if (!state.cache.valid || state.cache.input_hash != hash_matrix(X))
        throw std::logic_error("mlp: cache is stale for this input; run forward() first");
}

}  // namespace

std::vector<Eigen::MatrixXd> mlp_gradient(const MlpState& state, const Eigen::MatrixXd& X,
                                          const Eigen::MatrixXd& Y) {
    const auto& cfg = state.config;
    const auto& c = state.cache;
    require_cache(state, X);
    const int L = cfg.depth;
    const double n = static_cast<double>(X.cols());

    const Eigen::MatrixXd out = state.B * (c.gate[L] * c.pre[L].array()).matrix();
    const Eigen::MatrixXd scaled_residual = (out - Y) / n;

    std::vector<Eigen::MatrixXd> grads(L);
    // delta = d loss / d pre[l], propagated backwards with frozen gates.
    Eigen::MatrixXd delta =
        (c.gate[L] * (state.B.transpose() * scaled_residual).array()).matrix();
    for (int l = L - 1; l >= 0; --l) {
        const Eigen::MatrixXd h = (c.gate[l] * c.pre[l].array()).matrix();
        grads[l] = delta * h.transpose();
        if (l > 0)
            delta = (c.gate[l].array() *
                     (state.W[l].transpose() * delta).array()).matrix();
    }
    return grads;
}

namespace {

// Flattened parameter order: layer-major, column-major inside each W.
Eigen::VectorXd flatten(const std::vector<Eigen::MatrixXd>& ms) {
    Eigen::Index total = 0;
    for (const auto& m : ms) total += m.size();
    Eigen::VectorXd v(total);
    Eigen::Index at = 0;
    for (const auto& m : ms) {
        std::memcpy(v.data() + at, m.data(), sizeof(double) * m.size());
        at += m.size();
    }
    return v;
}

Eigen::MatrixXd hessian_analytic(MlpState& state, const Eigen::MatrixXd& X,
                                 const Eigen::MatrixXd& Y) {
    const auto& cfg = state.config;
    const int L = cfg.depth;
    const int d = cfg.width;
    const int dim = L * d * d;
    const long n = X.cols();

    forward(state, X);
    const auto& c = state.cache;
    const Eigen::MatrixXd out = state.B * (c.gate[L] * c.pre[L].array()).matrix();

    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    const auto block = [&](int k, int l) { return h.block(k * d * d, l * d * d, d * d, d * d); };

    // Per-sample suffix maps C_k = B D^L W^L ... W^{k+1} D^k (d_out x d) and
    // layer inputs u_k = D^{k-1} pre_{k-1} (the vector W^k multiplies).
    std::vector<Eigen::MatrixXd> suffix(L + 1);
    std::vector<Eigen::VectorXd> u(L + 1);
    for (long s = 0; s < n; ++s) {
        const Eigen::VectorXd r = out.col(s) - Y.col(s);
        suffix[L] = state.B * c.gate[L].col(s).matrix().asDiagonal();
        for (int k = L - 1; k >= 1; --k)
            suffix[k] = suffix[k + 1] * state.W[k] * c.gate[k].col(s).matrix().asDiagonal();
        for (int k = 1; k <= L; ++k)
            u[k] = c.gate[k - 1].col(s) * c.pre[k - 1].col(s).array();

        for (int k = 1; k <= L; ++k) {
            const Eigen::MatrixXd ck_t_ck = suffix[k].transpose() * suffix[k];
            auto bkk = block(k - 1, k - 1);
            for (int j = 0; j < d; ++j)
                for (int jp = 0; jp < d; ++jp)
                    bkk.block(j * d, jp * d, d, d) += u[k](j) * u[k](jp) * ck_t_ck;

            // gate[k] alone is the in-between product for l = k + 1.
            Eigen::MatrixXd gap = Eigen::MatrixXd(c.gate[k].col(s).matrix().asDiagonal());
            for (int l = k + 1; l <= L; ++l) {
                if (l > k + 1)
                    gap = (c.gate[l - 1].col(s).matrix().asDiagonal() * state.W[l - 2] * gap)
                              .eval();
                const Eigen::MatrixXd ck_t_cl = suffix[k].transpose() * suffix[l];
                const Eigen::VectorXd cl_t_r = suffix[l].transpose() * r;

                auto bkl = block(k - 1, l - 1);
                auto blk = block(l - 1, k - 1);
                for (int j = 0; j < d; ++j) {
                    for (int jp = 0; jp < d; ++jp) {
                        // Gauss-Newton part, then the residual part routed
                        // through the transpose permutation.
                        bkl.block(j * d, jp * d, d, d) +=
                            u[k](j) * u[l](jp) * ck_t_cl +
                            u[k](j) * (gap.row(jp).transpose() * cl_t_r.transpose());
                        blk.block(j * d, jp * d, d, d) +=
                            u[l](j) * u[k](jp) * ck_t_cl.transpose() +
                            u[k](jp) * (cl_t_r * gap.row(j));
                    }
                }
            }
        }
    }
    h /= static_cast<double>(n);
    return h;
}

Eigen::MatrixXd hessian_fd(MlpState& state, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    const auto& cfg = state.config;
    const int L = cfg.depth;
    const int d = cfg.width;
    const int dim = L * d * d;

    Eigen::MatrixXd h(dim, dim);
    int col = 0;
    for (int l = 0; l < L; ++l) {
        for (int j = 0; j < d; ++j) {
            for (int i = 0; i < d; ++i, ++col) {
                const double w0 = state.W[l](i, j);
                const double step = 5e-6 * std::max(1.0, std::abs(w0));

                state.W[l](i, j) = w0 + step;
                forward(state, X);
                const Eigen::VectorXd gp = flatten(mlp_gradient(state, X, Y));

                state.W[l](i, j) = w0 - step;
                forward(state, X);
                const Eigen::VectorXd gm = flatten(mlp_gradient(state, X, Y));

                state.W[l](i, j) = w0;
                h.col(col) = (gp - gm) / (2.0 * step);
            }
        }
    }
    forward(state, X);  // leave the cache consistent with the restored weights
    return h;
}

}  // namespace

Eigen::MatrixXd mlp_hessian(MlpState& state, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                            HessianMethod method, int dense_cap) {
    const auto& cfg = state.config;
    const long dim = static_cast<long>(cfg.depth) * cfg.width * cfg.width;
    if (dim > dense_cap)
        throw std::length_error(
            "mlp_hessian: " + std::to_string(dim) + " parameters exceed the dense cap of " +
            std::to_string(dense_cap) + "; probe sampled entries via FD instead");
    if (Y.cols() != X.cols()) throw std::invalid_argument("mlp_hessian: shape mismatch");
    return method == HessianMethod::Analytic ? hessian_analytic(state, X, Y)
                                             : hessian_fd(state, X, Y);
}

Eigen::VectorXd eigenspectrum(const Eigen::MatrixXd& h) {
    if (h.rows() != h.cols()) throw std::invalid_argument("eigenspectrum: matrix must be square");
    if (!h.allFinite()) throw std::invalid_argument("eigenspectrum: non-finite entries");
    const Eigen::MatrixXd sym = 0.5 * (h + h.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("eigenspectrum: eigensolver failed to converge");
    return solver.eigenvalues().reverse();
}

double hollowness(const Eigen::MatrixXd& h, int block_dim) {
    if (block_dim < 1 || h.rows() % block_dim != 0 || h.rows() != h.cols())
        throw std::invalid_argument("hollowness: matrix is not an L x L grid of blocks");
    const int blocks = static_cast<int>(h.rows()) / block_dim;
    double diag_sum = 0.0, off_sum = 0.0;
    long diag_n = 0, off_n = 0;
    for (int bi = 0; bi < blocks; ++bi) {
        for (int bj = 0; bj < blocks; ++bj) {
            const double s = h.block(bi * block_dim, bj * block_dim, block_dim, block_dim)
                                 .array().abs().sum();
            if (bi == bj) {
                diag_sum += s;
                diag_n += block_dim * block_dim;
            } else {
                off_sum += s;
                off_n += block_dim * block_dim;
            }
        }
    }
    if (off_n == 0 || off_sum == 0.0) return std::numeric_limits<double>::infinity();
    return (diag_sum / static_cast<double>(diag_n)) / (off_sum / static_cast<double>(off_n));
}

bool gershgorin_contains(const Eigen::MatrixXd& h, const Eigen::VectorXd& eigenvalues,
                         double tol) {
    const long n = h.rows();
    const double scale = std::max(1.0, h.array().abs().maxCoeff());
    for (long e = 0; e < eigenvalues.size(); ++e) {
        bool inside = false;
        for (long i = 0; i < n && !inside; ++i) {
            const double radius = h.row(i).array().abs().sum() - std::abs(h(i, i));
            inside = std::abs(eigenvalues(e) - h(i, i)) <= radius + tol * scale;
        }
        if (!inside) return false;
    }
    return true;
}

Dataset make_teacher_dataset(const MlpConfig& config, int samples, Rng& rng) {
    if (samples < 1) throw std::invalid_argument("make_teacher_dataset: samples must be >= 1");
    Dataset ds;
    ds.X.resize(config.d_in, samples);
    for (int j = 0; j < samples; ++j)
        for (int i = 0; i < config.d_in; ++i) ds.X(i, j) = rng.gaussian();

    const Eigen::MatrixXd m = sample_matrix(config.init, config.width, config.d_in, rng);
    const Eigen::MatrixXd c = sample_matrix(config.init, config.d_out, config.width, rng);
    Eigen::MatrixXd hidden = m * ds.X;
    if (config.activation == Activation::ReLU)
        hidden = hidden.cwiseMax(0.0);
    ds.Y = c * hidden;
    return ds;
}

std::vector<ScanObservation> norm_scan(const NormScanConfig& config) {
    if (config.trials < 2) throw std::invalid_argument("norm_scan: trials must be >= 2");
    if (config.depths.empty()) throw std::invalid_argument("norm_scan: no depths given");

    struct Job {
        int depth, width;
        long trial;
    };
    std::vector<Job> jobs;
    for (int depth : config.depths) {
        const int width = config.width_rule.width_for(depth);
        for (long t = 0; t < config.trials; ++t) jobs.push_back({depth, width, t});
    }

    std::vector<std::vector<ScanObservation>> results(jobs.size());
    parallel_for(static_cast<long>(jobs.size()), resolve_threads(config.threads), [&](long idx) {
        const Job& job = jobs[idx];
        // Sub-seed depends on (depth, trial) only, so adding depths later
        // leaves earlier rows unchanged.
        const std::uint64_t sub =
            Rng::derive_seed(config.master_seed, (static_cast<std::uint64_t>(job.depth) << 32) |
                                                     static_cast<std::uint64_t>(job.trial));
        Rng rng(sub);

        MlpConfig mc;
        mc.depth = job.depth;
        mc.width = job.width;
        mc.d_in = config.d_in > 0 ? config.d_in : job.width;
        mc.d_out = config.d_out > 0 ? config.d_out : job.width;
        mc.activation = config.activation;
        mc.init = config.init;

        MlpState state = make_mlp(mc, rng);
        const Dataset ds = make_teacher_dataset(mc, config.samples, rng);
        forward(state, ds.X);

        auto& obs = results[idx];
        const auto push = [&](const std::string& name, double value) {
            obs.push_back({job.depth, job.width, job.trial, sub, name, value});
        };

        const auto& final_pre = state.cache.pre[mc.depth];
        const long n = ds.X.cols();
        double m2 = 0, m42 = 0, m44 = 0;
        for (long s = 0; s < n; ++s) {
            const double sq = final_pre.col(s).squaredNorm();
            m2 += sq;
            m42 += sq * sq;
            m44 += final_pre.col(s).array().pow(4).sum();
        }
        push("forward_m2", m2 / n);
        push("forward_m4_2", m42 / n);
        push("forward_m4_4", m44 / n);

        const auto grads = mlp_gradient(state, ds.X, ds.Y);
        double total_sq = 0, layer_sum = 0;
        for (const auto& g : grads) {
            const double sq = g.squaredNorm();
            total_sq += sq;
            layer_sum += std::sqrt(sq);
        }
        push("grad_fro_total", std::sqrt(total_sq));
        push("grad_fro_layer_mean", layer_sum / static_cast<double>(grads.size()));
        push("grad_fro_layer1", grads.front().norm());

        if (config.with_hessian) {
            const long dim = static_cast<long>(mc.depth) * mc.width * mc.width;
            if (dim <= config.dense_cap) {
                const Eigen::MatrixXd h =
                    mlp_hessian(state, ds.X, ds.Y, HessianMethod::Analytic, config.dense_cap);
                const int d2 = mc.width * mc.width;
                double diag_fro = 0, off_fro = 0, diag_abs = 0, off_abs = 0;
                long off_blocks = 0;
                for (int k = 0; k < mc.depth; ++k) {
                    for (int l = 0; l < mc.depth; ++l) {
                        const auto blk = h.block(k * d2, l * d2, d2, d2);
                        if (k == l) {
                            diag_fro += blk.norm();
                            diag_abs += blk.array().abs().mean();
                        } else {
                            off_fro += blk.norm();
                            off_abs += blk.array().abs().mean();
                            ++off_blocks;
                        }
                    }
                }
                push("hess_diag_block_fro_mean", diag_fro / mc.depth);
                push("hess_diag_block_entry_abs_mean", diag_abs / mc.depth);
                if (off_blocks > 0) {
                    push("hess_offdiag_block_fro_mean", off_fro / static_cast<double>(off_blocks));
                    push("hess_offdiag_block_entry_abs_mean",
                         off_abs / static_cast<double>(off_blocks));
                }
                push("hollowness", hollowness(h, d2));
            } else {
                // Probe |H| entrywise by finite differences of the gradient.
                double acc = 0.0;
                Rng probe = rng.fork(0x48455353);
                for (int probe_i = 0; probe_i < config.fd_probe_entries; ++probe_i) {
                    const int l = static_cast<int>(probe.next_u64() % mc.depth);
                    const int i = static_cast<int>(probe.next_u64() % mc.width);
                    const int j = static_cast<int>(probe.next_u64() % mc.width);
                    const int l2 = static_cast<int>(probe.next_u64() % mc.depth);
                    const int i2 = static_cast<int>(probe.next_u64() % mc.width);
                    const int j2 = static_cast<int>(probe.next_u64() % mc.width);
                    const double w0 = state.W[l](i, j);
                    const double step = 5e-6 * std::max(1.0, std::abs(w0));
                    state.W[l](i, j) = w0 + step;
                    forward(state, ds.X);
                    const double gp = mlp_gradient(state, ds.X, ds.Y)[l2](i2, j2);
                    state.W[l](i, j) = w0 - step;
                    forward(state, ds.X);
                    const double gm = mlp_gradient(state, ds.X, ds.Y)[l2](i2, j2);
                    state.W[l](i, j) = w0;
                    acc += std::abs((gp - gm) / (2.0 * step));
                }
                forward(state, ds.X);
                push("hess_fd_entry_abs_mean", acc / config.fd_probe_entries);
            }
        }
    });

    std::vector<ScanObservation> flat;
    for (auto& r : results)
        for (auto& o : r) flat.push_back(std::move(o));
    return flat;
}

}  // namespace vanishlab
