#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "vanishlab/init.hpp"
#include "vanishlab/observation.hpp"
#include "vanishlab/rng.hpp"

namespace vanishlab {

enum class Padding { Zero, Circular };

// Fully convolutional stack at a fixed resolution: kernels are odd, padding
// is (k-1)/2, so the spatial extent never changes over depth.  The first
// layer maps in_channels to c, the last maps c back to out_channels; the
// hidden layers are c -> c.
struct ConvConfig {
    bool grid = false;   // false: 1-D line of length extent; true: extent x extent image
    int extent = 3;
    int channels = 1;    // c
    int kernel = 3;      // k, odd
    Padding padding = Padding::Circular;
    int depth = 1;       // number of conv layers
    Activation activation = Activation::Linear;
    InitScheme init;
    int in_channels = 0;   // 0: 3 for grid data, 1 for line data
    int out_channels = 0;  // 0: same default as in_channels

    int spatial_dims() const { return grid ? 2 : 1; }
    int resolved_in_channels() const { return in_channels > 0 ? in_channels : (grid ? 3 : 1); }
    int resolved_out_channels() const {
        return out_channels > 0 ? out_channels : resolved_in_channels();
    }
    void validate() const;
};

// Per-layer path multiplicity: k^2 c for images, k c for lines.
int effective_width(const ConvConfig& config);

// n x n matrix K with K x equal to the circular correlation of x with the
// odd-length kernel h (centered).  For n = 3, k = 3 the rows are the cyclic
// shifts (h2 h3 h1 / h1 h2 h3 / h3 h1 h2).
Eigen::MatrixXd circulant_matrix(const std::vector<double>& h, int n);

// channels x height x width tensor (height 1 for lines), row-major spatial.
struct ConvTensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;
    ConvTensor() = default;
    ConvTensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}
    double& at(int ch, int y, int x) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    double at(int ch, int y, int x) const { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
};

struct ConvNet {
    ConvConfig config;
    // kernels[l][((co * c_in + ci) * k + ky) * k + kx]; 1-D layers use ky = 0.
    std::vector<std::vector<double>> kernels;
    int layer_in_channels(int layer) const;
    int layer_out_channels(int layer) const;
    std::size_t kernel_taps() const {
        return config.grid ? static_cast<std::size_t>(config.kernel) * config.kernel
                           : static_cast<std::size_t>(config.kernel);
    }
};

// Samples all kernels; the fan-in for the variance rule is k^m * c_in of the
// layer (the effective width seen by each output unit).
ConvNet make_conv(const ConvConfig& config, Rng& rng);

struct ConvCache {
    // pre[l][sample]: preactivation of layer l; gate[l][sample]: its 0/1 gates
    // (all ones where no activation is applied).
    std::vector<std::vector<ConvTensor>> pre;
    std::vector<std::vector<ConvTensor>> gate;
};

std::vector<ConvTensor> conv_forward(const ConvNet& net, const std::vector<ConvTensor>& inputs,
                                     ConvCache* cache = nullptr);

// L2 loss against targets, averaged over samples and halved.
double conv_loss(const ConvNet& net, const std::vector<ConvTensor>& inputs,
                 const std::vector<ConvTensor>& targets);

// Exact per-layer kernel gradients via backprop with frozen gates.
std::vector<std::vector<double>> conv_gradient(const ConvNet& net,
                                               const std::vector<ConvTensor>& inputs,
                                               const std::vector<ConvTensor>& targets);

// Identity-task data: standard normal images, target = input.
std::vector<ConvTensor> make_conv_inputs(const ConvConfig& config, int samples, Rng& rng);

// Raw tensor file exchange: four little-endian u32 (count, channels, height,
// width) then count*channels*height*width little-endian f32 values.
void write_tensor_file(const std::string& path, const std::vector<ConvTensor>& tensors);
std::vector<ConvTensor> read_tensor_file(const std::string& path);

struct ConvScanConfig {
    ConvConfig base;           // depth/channels overridden per sweep point
    std::vector<int> depths;
    double channel_slope = 0;  // > 0: channels = ceil(channel_slope * depth)
    int trials = 2;
    int samples = 4;
    std::uint64_t master_seed = 0;
    int threads = 1;
    int fd_probe_entries = 64;
    std::string input_file;    // optional raw tensor file replacing synthetic inputs
};

// Per depth and seed: per-layer kernel-gradient Frobenius norms plus
// FD-probed Hessian entry magnitudes.
std::vector<ScanObservation> conv_depth_scan(const ConvScanConfig& config);

}  // namespace vanishlab
