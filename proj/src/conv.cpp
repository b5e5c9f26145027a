#include "vanishlab/conv.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "vanishlab/parallel.hpp"

namespace vanishlab {

void ConvConfig::validate() const {
    if (extent < 1) throw std::invalid_argument("ConvConfig: extent must be >= 1");
    if (channels < 1) throw std::invalid_argument("ConvConfig: channels must be >= 1");
    if (kernel < 1 || kernel % 2 == 0)
        throw std::invalid_argument("ConvConfig: kernel must be odd");
    if (depth < 1) throw std::invalid_argument("ConvConfig: depth must be >= 1");
    if ((kernel - 1) / 2 >= extent)
        throw std::invalid_argument("ConvConfig: kernel reach exceeds the spatial extent");
}

int effective_width(const ConvConfig& config) {
    config.validate();
    const int k = config.kernel;
    return config.grid ? k * k * config.channels : k * config.channels;
}

Eigen::MatrixXd circulant_matrix(const std::vector<double>& h, int n) {
    const int k = static_cast<int>(h.size());
    if (k % 2 == 0) throw std::invalid_argument("circulant_matrix: kernel must have odd length");
    if (n < k) throw std::invalid_argument("circulant_matrix: need n >= kernel length");
    const int c0 = (k - 1) / 2;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int off = -c0; off <= c0; ++off)
            m(i, (i + off % n + n) % n) += h[c0 + off];
    return m;
}

int ConvNet::layer_in_channels(int layer) const {
    return layer == 0 ? config.resolved_in_channels() : config.channels;
}

int ConvNet::layer_out_channels(int layer) const {
    return layer == config.depth - 1 ? config.resolved_out_channels() : config.channels;
}

ConvNet make_conv(const ConvConfig& config, Rng& rng) {
    config.validate();
    ConvNet net;
    net.config = config;
    net.kernels.resize(config.depth);
    const std::size_t taps = net.kernel_taps();
    for (int l = 0; l < config.depth; ++l) {
        const int ci = net.layer_in_channels(l);
        const int co = net.layer_out_channels(l);
        const int fan_in = static_cast<int>(taps) * ci;
        const double sigma2 = variance_for(config.init, fan_in);
        auto& kern = net.kernels[l];
        kern.resize(static_cast<std::size_t>(co) * ci * taps);
        if (config.init.family == Family::Uniform) {
            const double tau = range_for_uniform(sigma2);
            for (auto& w : kern) w = rng.uniform_symmetric(tau);
        } else if (config.init.family == Family::Gaussian) {
            const double sigma = std::sqrt(sigma2);
            for (auto& w : kern) w = sigma * rng.gaussian();
        } else {
            throw std::invalid_argument("make_conv: orthogonal kernels are not supported");
        }
    }
    return net;
}

namespace {

// Correlation of one input tensor with one layer's kernels.
ConvTensor apply_layer(const ConvNet& net, int layer, const ConvTensor& in) {
    const auto& cfg = net.config;
    const int k = cfg.kernel;
    const int c0 = (k - 1) / 2;
    const int ci_n = net.layer_in_channels(layer);
    const int co_n = net.layer_out_channels(layer);
    const int hh = in.h, ww = in.w;
    const auto& kern = net.kernels[layer];
    const int ky_n = cfg.grid ? k : 1;
    const int ky_c0 = cfg.grid ? c0 : 0;

    ConvTensor out(co_n, hh, ww);
    for (int co = 0; co < co_n; ++co) {
        for (int ci = 0; ci < ci_n; ++ci) {
            const double* kbase = &kern[(static_cast<std::size_t>(co) * ci_n + ci) * net.kernel_taps()];
            for (int y = 0; y < hh; ++y) {
                for (int x = 0; x < ww; ++x) {
                    double acc = 0.0;
                    for (int ky = 0; ky < ky_n; ++ky) {
                        int sy = y + ky - ky_c0;
                        if (cfg.padding == Padding::Circular) sy = (sy % hh + hh) % hh;
                        else if (sy < 0 || sy >= hh) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            int sx = x + kx - c0;
                            if (cfg.padding == Padding::Circular) sx = (sx % ww + ww) % ww;
                            else if (sx < 0 || sx >= ww) continue;
                            acc += kbase[ky * k + kx] * in.at(ci, sy, sx);
                        }
                    }
                    out.at(co, y, x) += acc;
                }
            }
        }
    }
    return out;
}

ConvTensor gate_of(const ConvTensor& pre, bool apply_relu) {
    ConvTensor g(pre.c, pre.h, pre.w);
    for (std::size_t i = 0; i < pre.v.size(); ++i)
        g.v[i] = (!apply_relu || pre.v[i] > 0.0) ? 1.0 : 0.0;
    return g;
}

}  // namespace

std::vector<ConvTensor> conv_forward(const ConvNet& net, const std::vector<ConvTensor>& inputs,
                                     ConvCache* cache) {
    const auto& cfg = net.config;
    if (inputs.empty()) throw std::invalid_argument("conv_forward: no inputs");
    for (const auto& in : inputs) {
        if (in.c != cfg.resolved_in_channels() || in.h != (cfg.grid ? cfg.extent : 1) ||
            in.w != cfg.extent)
            throw std::invalid_argument("conv_forward: input shape mismatch");
    }
    if (cache) {
        cache->pre.assign(cfg.depth, {});
        cache->gate.assign(cfg.depth, {});
    }

    std::vector<ConvTensor> current = inputs;
    for (int l = 0; l < cfg.depth; ++l) {
        // ReLU after every conv except the final one.
        const bool relu_here = cfg.activation == Activation::ReLU && l + 1 < cfg.depth;
        for (auto& t : current) {
            ConvTensor pre = apply_layer(net, l, t);
            ConvTensor gate = gate_of(pre, relu_here);
            ConvTensor post = pre;
            if (relu_here)
                for (std::size_t i = 0; i < post.v.size(); ++i) post.v[i] *= gate.v[i];
            if (cache) {
                cache->pre[l].push_back(std::move(pre));
                cache->gate[l].push_back(std::move(gate));
            }
            t = std::move(post);
        }
    }
    return current;
}

double conv_loss(const ConvNet& net, const std::vector<ConvTensor>& inputs,
                 const std::vector<ConvTensor>& targets) {
    if (inputs.size() != targets.size())
        throw std::invalid_argument("conv_loss: input/target count mismatch");
    const auto outs = conv_forward(net, inputs);
    double acc = 0.0;
    for (std::size_t s = 0; s < outs.size(); ++s) {
        if (outs[s].v.size() != targets[s].v.size())
            throw std::invalid_argument("conv_loss: target shape mismatch");
        for (std::size_t i = 0; i < outs[s].v.size(); ++i) {
            const double r = targets[s].v[i] - outs[s].v[i];
            acc += r * r;
        }
    }
    return acc / (2.0 * static_cast<double>(inputs.size()));
}

std::vector<std::vector<double>> conv_gradient(const ConvNet& net,
                                               const std::vector<ConvTensor>& inputs,
                                               const std::vector<ConvTensor>& targets) {
    const auto& cfg = net.config;
    if (inputs.size() != targets.size())
        throw std::invalid_argument("conv_gradient: input/target count mismatch");
    ConvCache cache;
    const auto outs = conv_forward(net, inputs, &cache);

    const int k = cfg.kernel;
    const int c0 = (k - 1) / 2;
    const int ky_n = cfg.grid ? k : 1;
    const int ky_c0 = cfg.grid ? c0 : 0;
    const double inv_n = 1.0 / static_cast<double>(inputs.size());

    std::vector<std::vector<double>> grads(cfg.depth);
    for (int l = 0; l < cfg.depth; ++l) grads[l].assign(net.kernels[l].size(), 0.0);

    for (std::size_t s = 0; s < inputs.size(); ++s) {
        // d loss / d output.
        ConvTensor delta(outs[s].c, outs[s].h, outs[s].w);
        for (std::size_t i = 0; i < delta.v.size(); ++i)
            delta.v[i] = (outs[s].v[i] - targets[s].v[i]) * inv_n;

        for (int l = cfg.depth - 1; l >= 0; --l) {
            const bool relu_here = cfg.activation == Activation::ReLU && l + 1 < cfg.depth;
            if (relu_here)
                for (std::size_t i = 0; i < delta.v.size(); ++i)
                    delta.v[i] *= cache.gate[l][s].v[i];

            const ConvTensor& in =
                l == 0 ? inputs[s]
                       : [&]() -> ConvTensor {
                             ConvTensor post = cache.pre[l - 1][s];
                             const bool prev_relu =
                                 cfg.activation == Activation::ReLU && l < cfg.depth;
                             if (prev_relu)
                                 for (std::size_t i = 0; i < post.v.size(); ++i)
                                     post.v[i] *= cache.gate[l - 1][s].v[i];
                             return post;
                         }();

            const int ci_n = net.layer_in_channels(l);
            const int co_n = net.layer_out_channels(l);
            const int hh = delta.h, ww = delta.w;

            // Kernel gradient: correlate delta with the layer input.
            auto& g = grads[l];
            for (int co = 0; co < co_n; ++co) {
                for (int ci = 0; ci < ci_n; ++ci) {
                    double* gbase = &g[(static_cast<std::size_t>(co) * ci_n + ci) * net.kernel_taps()];
                    for (int ky = 0; ky < ky_n; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            double acc = 0.0;
                            for (int y = 0; y < hh; ++y) {
                                int sy = y + ky - ky_c0;
                                if (cfg.padding == Padding::Circular) sy = (sy % hh + hh) % hh;
                                else if (sy < 0 || sy >= hh) continue;
                                for (int x = 0; x < ww; ++x) {
                                    int sx = x + kx - c0;
                                    if (cfg.padding == Padding::Circular) sx = (sx % ww + ww) % ww;
                                    else if (sx < 0 || sx >= ww) continue;
                                    acc += delta.at(co, y, x) * in.at(ci, sy, sx);
                                }
                            }
                            gbase[ky * k + kx] += acc;
                        }
                    }
                }
            }

            if (l == 0) break;

            // Propagate delta to the layer input.
            ConvTensor prev(ci_n, hh, ww);
            const auto& kern = net.kernels[l];
            for (int co = 0; co < co_n; ++co) {
                for (int ci = 0; ci < ci_n; ++ci) {
                    const double* kbase =
                        &kern[(static_cast<std::size_t>(co) * ci_n + ci) * net.kernel_taps()];
                    for (int y = 0; y < hh; ++y) {
                        for (int x = 0; x < ww; ++x) {
                            const double dv = delta.at(co, y, x);
                            if (dv == 0.0) continue;
                            for (int ky = 0; ky < ky_n; ++ky) {
                                int sy = y + ky - ky_c0;
                                if (cfg.padding == Padding::Circular) sy = (sy % hh + hh) % hh;
                                else if (sy < 0 || sy >= hh) continue;
                                for (int kx = 0; kx < k; ++kx) {
                                    int sx = x + kx - c0;
                                    if (cfg.padding == Padding::Circular)
                                        sx = (sx % ww + ww) % ww;
                                    else if (sx < 0 || sx >= ww) continue;
                                    prev.at(ci, sy, sx) += dv * kbase[ky * k + kx];
                                }
                            }
                        }
                    }
                }
            }
            delta = std::move(prev);
        }
    }
    return grads;
}

std::vector<ConvTensor> make_conv_inputs(const ConvConfig& config, int samples, Rng& rng) {
    if (samples < 1) throw std::invalid_argument("make_conv_inputs: samples must be >= 1");
    std::vector<ConvTensor> out;
    out.reserve(samples);
    const int h = config.grid ? config.extent : 1;
    for (int s = 0; s < samples; ++s) {
        ConvTensor t(config.resolved_in_channels(), h, config.extent);
        for (auto& v : t.v) v = rng.gaussian();
        out.push_back(std::move(t));
    }
    return out;
}

void write_tensor_file(const std::string& path, const std::vector<ConvTensor>& tensors) {
    if (tensors.empty()) throw std::invalid_argument("write_tensor_file: nothing to write");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_tensor_file: cannot open " + path);
    const auto& t0 = tensors[0];
    const std::uint32_t header[4] = {static_cast<std::uint32_t>(tensors.size()),
                                     static_cast<std::uint32_t>(t0.c),
                                     static_cast<std::uint32_t>(t0.h),
                                     static_cast<std::uint32_t>(t0.w)};
    f.write(reinterpret_cast<const char*>(header), sizeof header);
    for (const auto& t : tensors) {
        if (t.c != t0.c || t.h != t0.h || t.w != t0.w)
            throw std::invalid_argument("write_tensor_file: inhomogeneous shapes");
        for (double x : t.v) {
            const float v = static_cast<float>(x);
            f.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
    }
    if (!f) throw std::runtime_error("write_tensor_file: write failed for " + path);
}

std::vector<ConvTensor> read_tensor_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_tensor_file: cannot open " + path);
    std::uint32_t header[4];
    f.read(reinterpret_cast<char*>(header), sizeof header);
    if (!f) throw std::runtime_error("read_tensor_file: truncated header in " + path);
    std::vector<ConvTensor> out;
    out.reserve(header[0]);
    for (std::uint32_t s = 0; s < header[0]; ++s) {
        ConvTensor t(static_cast<int>(header[1]), static_cast<int>(header[2]),
                     static_cast<int>(header[3]));
        for (auto& x : t.v) {
            float v;
            f.read(reinterpret_cast<char*>(&v), sizeof v);
            x = v;
        }
        if (!f) throw std::runtime_error("read_tensor_file: truncated data in " + path);
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<ScanObservation> conv_depth_scan(const ConvScanConfig& config) {
    if (config.trials < 2) throw std::invalid_argument("conv_depth_scan: trials must be >= 2");
    if (config.depths.empty()) throw std::invalid_argument("conv_depth_scan: no depths given");

    std::vector<ConvTensor> file_inputs;
    if (!config.input_file.empty()) file_inputs = read_tensor_file(config.input_file);

    struct Job {
        int depth, channels;
        long trial;
    };
    std::vector<Job> jobs;
    for (int depth : config.depths) {
        int channels = config.base.channels;
        if (config.channel_slope > 0)
            channels = std::max(1, static_cast<int>(std::ceil(config.channel_slope * depth)));
        for (long t = 0; t < config.trials; ++t) jobs.push_back({depth, channels, t});
    }

    std::vector<std::vector<ScanObservation>> results(jobs.size());
    parallel_for(static_cast<long>(jobs.size()), resolve_threads(config.threads), [&](long idx) {
        const Job& job = jobs[idx];
        const std::uint64_t sub =
            Rng::derive_seed(config.master_seed, (static_cast<std::uint64_t>(job.depth) << 32) |
                                                     static_cast<std::uint64_t>(job.trial));
        Rng rng(sub);

        ConvConfig cc = config.base;
        cc.depth = job.depth;
        cc.channels = job.channels;

        ConvNet net = make_conv(cc, rng);
        std::vector<ConvTensor> inputs = file_inputs.empty()
                                             ? make_conv_inputs(cc, config.samples, rng)
                                             : file_inputs;
        const std::vector<ConvTensor>& targets = inputs;  // identity task

        const int width = effective_width(cc);
        auto& obs = results[idx];
        const auto push = [&](const std::string& name, double value) {
            obs.push_back({job.depth, width, job.trial, sub, name, value});
        };

        const auto grads = conv_gradient(net, inputs, targets);
        double total_sq = 0, layer_sum = 0;
        for (const auto& g : grads) {
            double sq = 0;
            for (double x : g) sq += x * x;
            total_sq += sq;
            layer_sum += std::sqrt(sq);
        }
        push("grad_fro_total", std::sqrt(total_sq));
        push("grad_fro_layer_mean", layer_sum / static_cast<double>(grads.size()));
        double first_sq = 0;
        for (double x : grads.front()) first_sq += x * x;
        push("grad_fro_layer1", std::sqrt(first_sq));

        // Hessian entries probed by central differences of the gradient.
        if (config.fd_probe_entries > 0) {
            double acc = 0.0;
            Rng probe = rng.fork(0x48455353);
            ConvNet work = net;
            for (int p = 0; p < config.fd_probe_entries; ++p) {
                const int l = static_cast<int>(probe.next_u64() % cc.depth);
                const std::size_t e = probe.next_u64() % work.kernels[l].size();
                const int l2 = static_cast<int>(probe.next_u64() % cc.depth);
                const std::size_t e2 = probe.next_u64() % work.kernels[l2].size();
                const double w0 = work.kernels[l][e];
                const double step = 5e-6 * std::max(1.0, std::abs(w0));
                work.kernels[l][e] = w0 + step;
                const double gp = conv_gradient(work, inputs, targets)[l2][e2];
                work.kernels[l][e] = w0 - step;
                const double gm = conv_gradient(work, inputs, targets)[l2][e2];
                work.kernels[l][e] = w0;
                acc += std::abs((gp - gm) / (2.0 * step));
            }
            push("hess_fd_entry_abs_mean", acc / config.fd_probe_entries);
        }
    });

    std::vector<ScanObservation> flat;
    for (auto& r : results)
        for (auto& o : r) flat.push_back(std::move(o));
    return flat;
}

}  // namespace vanishlab
