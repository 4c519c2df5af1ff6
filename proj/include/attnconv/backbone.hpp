#pragma once

#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "attnconv/tensor.hpp"

namespace attnconv {

class ConfigError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// Named handles to trainable tensors, in a stable order.
using NamedParams = std::vector<std::pair<std::string, Tensor>>;

struct BackboneConfig {
    int input_height = 128;
    int input_width = 128;
    int downsample_factor = 32;
    std::vector<int> channels{8, 16, 32, 64, 64};
    int reduced_dim = 64;

    int stages() const;
    int feature_height() const { return input_height / downsample_factor; }
    int feature_width() const { return input_width / downsample_factor; }
    void validate() const;
};

// Stack of stride-2 3×3 conv + ReLU stages, one per factor of two in the
// downsample factor, followed by a 1×1 reduction to `reduced_dim` channels.
class Backbone {
   public:
    Backbone() = default;
    Backbone(const BackboneConfig& cfg, std::mt19937_64& rng);

    const BackboneConfig& config() const { return cfg_; }

    // image[3×H0×W0] → f[c×H×W]
    Tensor extract_features(const Tensor& image) const;
    // f[c×H×W] → f0[(H·W)×d] via the 1×1 reduction and a row-major flatten.
    Tensor reduce_and_flatten(const Tensor& features) const;
    Tensor forward(const Tensor& image) const { return reduce_and_flatten(extract_features(image)); }

    void collect(NamedParams& out, const std::string& prefix) const;

    std::vector<Tensor>& stage_kernels() { return kernels_; }
    std::vector<Tensor>& stage_biases() { return biases_; }
    Tensor& reduce_kernel() { return reduce_kernel_; }
    Tensor& reduce_bias() { return reduce_bias_; }

   private:
    BackboneConfig cfg_;
    std::vector<Tensor> kernels_;
    std::vector<Tensor> biases_;
    Tensor reduce_kernel_;  // [d×c×1×1]
    Tensor reduce_bias_;    // [d]
};

// Free-function form of the reduction: 1×1 convolution with `kernel`
// [d×c×1×1] and `bias` [d], then flatten to [(H·W)×d] with row index i·W + j.
Tensor reduce_and_flatten(const Tensor& features, const Tensor& kernel, const Tensor& bias);

// [(H·W)×d] → [d×H×W]
Tensor unflatten(const Tensor& seq, int64_t height, int64_t width);

}  // namespace attnconv
