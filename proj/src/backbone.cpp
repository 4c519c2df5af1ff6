#include "attnconv/backbone.hpp"

namespace attnconv {

int BackboneConfig::stages() const {
    int n = 0;
    for (int f = downsample_factor; f > 1; f /= 2) ++n;
    return n;
}

void BackboneConfig::validate() const {
    if (downsample_factor < 1 || (downsample_factor & (downsample_factor - 1)) != 0)
        throw ConfigError("downsample_factor must be a power of two, got " + std::to_string(downsample_factor));
    if (input_height <= 0 || input_width <= 0 || input_height % downsample_factor != 0 ||
        input_width % downsample_factor != 0)
        throw ConfigError("input size " + std::to_string(input_height) + "x" + std::to_string(input_width) +
                          " is not divisible by downsample factor " + std::to_string(downsample_factor));
    if (static_cast<int>(channels.size()) != stages())
        throw ConfigError("backbone needs " + std::to_string(stages()) + " stage channel counts, got " +
                          std::to_string(channels.size()));
    for (int c : channels)
        if (c <= 0) throw ConfigError("stage channel counts must be positive");
    const int c_final = channels.empty() ? 3 : channels.back();
    if (reduced_dim <= 0 || reduced_dim > c_final)
        throw ConfigError("reduced_dim " + std::to_string(reduced_dim) + " must lie in [1, " +
                          std::to_string(c_final) + "]");
}

Backbone::Backbone(const BackboneConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg_.validate();
    int cin = 3;
    for (int cout : cfg_.channels) {
        kernels_.push_back(Tensor::he_uniform({cout, cin, 3, 3}, cin * 9, rng));
        biases_.push_back(Tensor::zeros({cout}, true));
        cin = cout;
    }
    reduce_kernel_ = Tensor::xavier_uniform({cfg_.reduced_dim, cin, 1, 1}, cin, cfg_.reduced_dim, rng);
    reduce_bias_ = Tensor::zeros({cfg_.reduced_dim}, true);
}

Tensor Backbone::extract_features(const Tensor& image) const {
    if (image.ndim() != 3 || image.dim(0) != 3 || image.dim(1) != cfg_.input_height ||
        image.dim(2) != cfg_.input_width)
        throw ConfigError("image " + shape_str(image.shape()) + " does not match backbone input 3x" +
                          std::to_string(cfg_.input_height) + "x" + std::to_string(cfg_.input_width));
    Tensor x = image;
    for (size_t s = 0; s < kernels_.size(); ++s) {
        x = relu(add_channel_bias(conv2d(x, kernels_[s], 2, 1), biases_[s]));
    }
    return x;
}

Tensor Backbone::reduce_and_flatten(const Tensor& features) const {
    return attnconv::reduce_and_flatten(features, reduce_kernel_, reduce_bias_);
}

void Backbone::collect(NamedParams& out, const std::string& prefix) const {
    for (size_t s = 0; s < kernels_.size(); ++s) {
        out.emplace_back(prefix + "stage" + std::to_string(s) + ".kernel", kernels_[s]);
        out.emplace_back(prefix + "stage" + std::to_string(s) + ".bias", biases_[s]);
    }
    out.emplace_back(prefix + "reduce.kernel", reduce_kernel_);
    out.emplace_back(prefix + "reduce.bias", reduce_bias_);
}

Tensor reduce_and_flatten(const Tensor& features, const Tensor& kernel, const Tensor& bias) {
    if (features.ndim() != 3) throw DimensionError("reduce_and_flatten: expected [c×H×W], got " + shape_str(features.shape()));
    if (kernel.ndim() != 4 || kernel.dim(2) != 1 || kernel.dim(3) != 1)
        throw DimensionError("reduce_and_flatten: kernel must be [d×c×1×1], got " + shape_str(kernel.shape()));
    const int64_t c = features.dim(0), h = features.dim(1), w = features.dim(2), d = kernel.dim(0);
    if (d > c) throw ConfigError("reduced dimension " + std::to_string(d) + " exceeds channel count " + std::to_string(c));
    // [d×c]·[c×(H·W)] is the 1×1 conv; transposing yields rows indexed i·W + j.
    Tensor k2 = reshape(kernel, {d, c});
    Tensor f2 = reshape(features, {c, h * w});
    return add_row(transpose(matmul(k2, f2)), bias);
}

Tensor unflatten(const Tensor& seq, int64_t height, int64_t width) {
    if (seq.ndim() != 2 || seq.dim(0) != height * width)
        throw DimensionError("unflatten: sequence " + shape_str(seq.shape()) + " does not hold " +
                             std::to_string(height) + "x" + std::to_string(width) + " positions");
    return reshape(transpose(seq), {seq.dim(1), height, width});
}

}  // namespace attnconv
