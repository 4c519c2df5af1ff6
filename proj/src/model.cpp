#include "attnconv/model.hpp"

namespace attnconv {

namespace {
constexpr double kPixelMean = 0.45;
constexpr double kPixelStd = 0.25;
}  // namespace

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::NoAttn: return "wo_attn";
        case Variant::NoFfn: return "wo_ffn";
        case Variant::EncoderDecoder: return "ed";
    }
    return "full";
}

Variant parse_variant(const std::string& name) {
    if (name == "full") return Variant::Full;
    if (name == "wo_attn" || name == "w/o-Attn" || name == "no_attn") return Variant::NoAttn;
    if (name == "wo_ffn" || name == "w/o-FFN" || name == "no_ffn") return Variant::NoFfn;
    if (name == "ed" || name == "ED") return Variant::EncoderDecoder;
    throw ConfigError("unknown model variant '" + name + "'");
}

void ModelConfig::validate() const {
    backbone.validate();
    cab.validate();
    if (backbone.reduced_dim != cab.d)
        throw ConfigError("backbone reduced_dim " + std::to_string(backbone.reduced_dim) + " differs from CAB d " +
                          std::to_string(cab.d));
    if (n_pred < 1) throw ConfigError("n_pred must be positive");
    if (num_classes < 1) throw ConfigError("num_classes must be positive");
    if (variant == Variant::NoFfn && cab.d < num_classes + 5)
        throw ConfigError("the no-FFN readout needs d >= num_classes + 5");
    if (variant == Variant::EncoderDecoder && encoder_layers < 1)
        throw ConfigError("the encoder-decoder variant needs encoder_layers >= 1");
}

AttnConvNet::AttnConvNet(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    backbone_ = Backbone(cfg_.backbone, rng);
    const int64_t tokens = static_cast<int64_t>(cfg_.backbone.feature_height()) * cfg_.backbone.feature_width();
    pos_rel_ = sinusoidal_embedding(tokens, cfg_.cab.d);
    if (cfg_.variant != Variant::NoAttn) {
        pos_abs_ = init_learned_embedding(cfg_.n_pred, cfg_.cab.d, cfg_.seed ^ 0x9e3779b97f4a7c15ULL);
        if (cfg_.variant == Variant::EncoderDecoder)
            for (int i = 0; i < cfg_.encoder_layers; ++i) encoder_.emplace_back(cfg_.cab, rng);
        cab_ = Cab(cfg_.cab, rng);
    }
    if (cfg_.variant != Variant::NoFfn) {
        class_head_ = ClassHead(cfg_.cab.d, cfg_.num_classes, rng);
        box_head_ = BoxHead(cfg_.cab.d, rng);
    }
}

int AttnConvNet::n_pred() const {
    if (cfg_.variant == Variant::NoAttn) return cfg_.backbone.feature_height() * cfg_.backbone.feature_width();
    return cfg_.n_pred;
}

PredictionSet AttnConvNet::forward(const Tensor& image, Mode mode, std::mt19937_64* rng, AttentionTrace* trace) const {
    // Pixels in [0, 1] are centred and scaled before the first convolution.
    const Tensor x = scale(add(image, Tensor(image.shape(), -kPixelMean)), 1.0 / kPixelStd);
    const Tensor f0 = backbone_.forward(x);
    Tensor h;
    if (cfg_.variant == Variant::NoAttn) {
        h = f0;
    } else {
        Tensor memory = f0;
        for (const auto& enc : encoder_) memory = enc.forward(memory, pos_rel_, cfg_.cab.dropout, rng, mode);
        h = cab_.forward(memory, pos_rel_, pos_abs_, mode, rng, trace);
    }
    PredictionSet out;
    if (cfg_.variant == Variant::NoFfn) {
        const int64_t k1 = cfg_.num_classes + 1;
        out.class_logits = slice_cols(h, 0, k1);
        out.boxes = sigmoid(slice_cols(h, k1, 4));
    } else {
        out.class_logits = class_head_(h);
        out.boxes = box_head_.forward(h, cfg_.cab.dropout, rng, mode);
    }
    return out;
}

PredictionSet AttnConvNet::forward(const Image& image, Mode mode, std::mt19937_64* rng, AttentionTrace* trace) const {
    const auto& bc = cfg_.backbone;
    if (image.height == bc.input_height && image.width == bc.input_width)
        return forward(image.to_tensor(), mode, rng, trace);
    return forward(resize_bilinear(image, bc.input_height, bc.input_width).to_tensor(), mode, rng, trace);
}

NamedParams AttnConvNet::parameters() const {
    NamedParams out;
    backbone_.collect(out, "backbone.");
    if (cfg_.variant != Variant::NoAttn) {
        out.emplace_back("pos_abs", pos_abs_.table);
        for (size_t i = 0; i < encoder_.size(); ++i) encoder_[i].collect(out, "encoder." + std::to_string(i) + ".");
        cab_.collect(out, "cab.");
    }
    if (cfg_.variant != Variant::NoFfn) {
        class_head_.collect(out, "class_head.");
        box_head_.collect(out, "box_head.");
    }
    return out;
}

int64_t AttnConvNet::parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : parameters()) n += t.size();
    return n;
}

AttnConvNet AttnConvNet::snapshot() const {
    AttnConvNet copy(cfg_);
    const NamedParams src = parameters();
    NamedParams dst = copy.parameters();
    for (size_t i = 0; i < src.size(); ++i) {
        auto s = src[i].second.data();
        auto d = dst[i].second.data();
        std::copy(s.begin(), s.end(), d.begin());
    }
    return copy;
}

}  // namespace attnconv
