#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "attnconv/backbone.hpp"
#include "attnconv/cab.hpp"
#include "attnconv/heads.hpp"
#include "attnconv/image.hpp"
#include "attnconv/positional.hpp"

namespace attnconv {

// full: backbone → CAB → class/box heads.
// no_attn: f0 goes straight to the heads; the prediction set has H·W slots.
// no_ffn: no heads; logits and boxes are read from the leading CAB channels.
// encoder_decoder: `encoder_layers` encoder blocks over f0 + pos_rel before the CAB.
enum class Variant { Full, NoAttn, NoFfn, EncoderDecoder };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct ModelConfig {
    BackboneConfig backbone;
    CabConfig cab;
    int n_pred = 50;
    int num_classes = 3;
    Variant variant = Variant::Full;
    int encoder_layers = 0;
    uint64_t seed = 1;

    void validate() const;
};

class AttnConvNet {
   public:
    AttnConvNet() = default;
    explicit AttnConvNet(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }

    // image[3×H0×W0] → prediction set. `rng` drives dropout in Train mode.
    PredictionSet forward(const Tensor& image, Mode mode, std::mt19937_64* rng = nullptr,
                          AttentionTrace* trace = nullptr) const;
    PredictionSet forward(const Image& image, Mode mode, std::mt19937_64* rng = nullptr,
                          AttentionTrace* trace = nullptr) const;

    NamedParams parameters() const;
    int64_t parameter_count() const;

    // Deep copy of every parameter value, detached from any tape.
    AttnConvNet snapshot() const;

    int n_pred() const;

   private:
    ModelConfig cfg_;
    Backbone backbone_;
    PosRelative pos_rel_;
    PosAbs pos_abs_;
    Cab cab_;
    std::vector<EncoderBlock> encoder_;
    ClassHead class_head_;
    BoxHead box_head_;
};

}  // namespace attnconv
