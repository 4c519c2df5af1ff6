#pragma once

#include <random>
#include <vector>

#include "attnconv/backbone.hpp"
#include "attnconv/positional.hpp"
#include "attnconv/tensor.hpp"

namespace attnconv {

enum class Mode { Train, Eval };

// Projection weights of one attention head.
struct HeadParams {
    Tensor w_q;  // [d×d_k]
    Tensor w_k;  // [d×d_k]
    Tensor w_v;  // [d×d_v]
};

struct AttentionParams {
    std::vector<HeadParams> heads;
    Tensor w_o;  // [(h·d_v)×d]

    AttentionParams() = default;
    AttentionParams(int64_t d, int64_t h, std::mt19937_64& rng);

    int64_t num_heads() const { return static_cast<int64_t>(heads.size()); }
    int64_t model_dim() const { return w_o.dim(1); }
    void collect(NamedParams& out, const std::string& prefix) const;
};

// Per-sublayer record of the softmax matrices, one [L_q×L_kv] tensor per head.
struct AttentionTrace {
    std::vector<std::vector<Tensor>> layers;
};

// softmax(Q·Kᵀ/√d_k)·V with Q = query_in·W_Q, K = key_in·W_K, V = value_in·W_V.
Tensor attention_head(const Tensor& query_in, const Tensor& key_in, const Tensor& value_in, const HeadParams& head,
                      Tensor* weights = nullptr);
Tensor single_head_attention(const Tensor& q_in, const Tensor& kv_in, const HeadParams& head, Tensor* weights = nullptr);

// Heads concatenated along columns, then projected by W_O.
Tensor multi_head_attention(const Tensor& query_in, const Tensor& key_in, const Tensor& value_in,
                            const AttentionParams& params, std::vector<Tensor>* weights = nullptr);
Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& params,
                            std::vector<Tensor>* weights = nullptr);

struct CabConfig {
    int n_blocks = 3;
    int d = 64;
    int h = 4;
    int ffn_hidden = 256;
    double dropout = 0.1;

    void validate() const;
};

struct LayerNormParams {
    Tensor gain;
    Tensor bias;

    LayerNormParams() = default;
    explicit LayerNormParams(int64_t d) : gain(Tensor({d}, 1.0, true)), bias(Tensor::zeros({d}, true)) {}
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

struct FeedForwardParams {
    Tensor w1, b1, w2, b2;

    FeedForwardParams() = default;
    FeedForwardParams(int64_t d, int64_t hidden, std::mt19937_64& rng);
    Tensor forward(const Tensor& x, double dropout_rate, std::mt19937_64* rng, Mode mode) const;
};

struct CabBlock {
    AttentionParams self_attn;
    LayerNormParams norm_self;
    AttentionParams cross_attn;
    LayerNormParams norm_cross;
    FeedForwardParams ffn;
    LayerNormParams norm_ffn;
};

// n stacked decoder-style blocks. Positional terms: pos_abs joins the query
// (and self-attention key) input of every sublayer, pos_rel joins the key input
// of every cross-attention; values never carry a positional term. The content
// stream starts at zero, so the first self-attention sees pos_abs alone. No
// projection or softmax follows the last block.
class Cab {
   public:
    Cab() = default;
    Cab(const CabConfig& cfg, std::mt19937_64& rng);

    const CabConfig& config() const { return cfg_; }
    std::vector<CabBlock>& blocks() { return blocks_; }
    const std::vector<CabBlock>& blocks() const { return blocks_; }

    // memory[(H·W)×d] → [N_pred×d]; `rng` is required in Train mode when dropout > 0.
    Tensor forward(const Tensor& memory, const PosRelative& pos_rel, const PosAbs& pos_abs, Mode mode,
                   std::mt19937_64* rng = nullptr, AttentionTrace* trace = nullptr) const;

    void collect(NamedParams& out, const std::string& prefix) const;

   private:
    CabConfig cfg_;
    std::vector<CabBlock> blocks_;
};

Tensor cab_forward(const Cab& cab, const Tensor& memory, const PosRelative& pos_rel, const PosAbs& pos_abs, Mode mode,
                   std::mt19937_64* rng = nullptr, AttentionTrace* trace = nullptr);

// Encoder layer over the backbone sequence, used only by the encoder-decoder
// comparison variant: self-attention (pos_rel on queries and keys) then FFN.
struct EncoderBlock {
    AttentionParams self_attn;
    LayerNormParams norm_self;
    FeedForwardParams ffn;
    LayerNormParams norm_ffn;

    EncoderBlock() = default;
    EncoderBlock(const CabConfig& cfg, std::mt19937_64& rng);
    Tensor forward(const Tensor& memory, const PosRelative& pos_rel, double dropout_rate, std::mt19937_64* rng,
                   Mode mode) const;
    void collect(NamedParams& out, const std::string& prefix) const;
};

}  // namespace attnconv
