#include "attnconv/cab.hpp"

#include <cmath>

namespace attnconv {

AttentionParams::AttentionParams(int64_t d, int64_t h, std::mt19937_64& rng) {
    if (h <= 0 || d % h != 0)
        throw ConfigError("head count " + std::to_string(h) + " must divide model dimension " + std::to_string(d));
    const int64_t dk = d / h;
    heads.reserve(static_cast<size_t>(h));
    for (int64_t i = 0; i < h; ++i) {
        heads.push_back(HeadParams{Tensor::xavier_uniform({d, dk}, d, dk, rng),
                                   Tensor::xavier_uniform({d, dk}, d, dk, rng),
                                   Tensor::xavier_uniform({d, dk}, d, dk, rng)});
    }
    w_o = Tensor::xavier_uniform({h * dk, d}, h * dk, d, rng);
}

void AttentionParams::collect(NamedParams& out, const std::string& prefix) const {
    for (size_t i = 0; i < heads.size(); ++i) {
        const std::string p = prefix + "head" + std::to_string(i) + ".";
        out.emplace_back(p + "w_q", heads[i].w_q);
        out.emplace_back(p + "w_k", heads[i].w_k);
        out.emplace_back(p + "w_v", heads[i].w_v);
    }
    out.emplace_back(prefix + "w_o", w_o);
}

Tensor attention_head(const Tensor& query_in, const Tensor& key_in, const Tensor& value_in, const HeadParams& head,
                      Tensor* weights) {
    if (query_in.ndim() != 2 || key_in.ndim() != 2 || value_in.ndim() != 2)
        throw DimensionError("attention: inputs must be 2-D sequences");
    if (key_in.dim(0) != value_in.dim(0))
        throw DimensionError("attention: key rows " + shape_str(key_in.shape()) + " and value rows " +
                             shape_str(value_in.shape()) + " differ");
    const int64_t d = head.w_q.dim(0);
    for (const Tensor* t : {&query_in, &key_in, &value_in}) {
        if (t->dim(1) != d)
            throw DimensionError("attention: input " + shape_str(t->shape()) + " does not match projection " +
                                 shape_str(head.w_q.shape()));
    }
    const double dk = static_cast<double>(head.w_k.dim(1));
    Tensor q = matmul(query_in, head.w_q);
    Tensor k = matmul(key_in, head.w_k);
    Tensor v = matmul(value_in, head.w_v);
    Tensor a = softmax_lastdim(scale(matmul_nt(q, k), 1.0 / std::sqrt(dk)));
    if (weights) *weights = a;
    return matmul(a, v);
}

Tensor single_head_attention(const Tensor& q_in, const Tensor& kv_in, const HeadParams& head, Tensor* weights) {
    return attention_head(q_in, kv_in, kv_in, head, weights);
}

Tensor multi_head_attention(const Tensor& query_in, const Tensor& key_in, const Tensor& value_in,
                            const AttentionParams& params, std::vector<Tensor>* weights) {
    std::vector<Tensor> outs;
    outs.reserve(params.heads.size());
    if (weights) weights->clear();
    for (const auto& head : params.heads) {
        Tensor w;
        outs.push_back(attention_head(query_in, key_in, value_in, head, weights ? &w : nullptr));
        if (weights) weights->push_back(w);
    }
    Tensor z = outs.size() == 1 ? outs.front() : concat_cols(outs);
    return matmul(z, params.w_o);
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& params,
                            std::vector<Tensor>* weights) {
    return multi_head_attention(q_in, kv_in, kv_in, params, weights);
}

void CabConfig::validate() const {
    if (n_blocks < 1) throw ConfigError("CAB needs at least one block");
    if (d <= 0 || h <= 0 || d % h != 0)
        throw ConfigError("head count " + std::to_string(h) + " must divide d = " + std::to_string(d));
    if (ffn_hidden <= 0) throw ConfigError("ffn_hidden must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

FeedForwardParams::FeedForwardParams(int64_t d, int64_t hidden, std::mt19937_64& rng)
    : w1(Tensor::xavier_uniform({d, hidden}, d, hidden, rng)),
      b1(Tensor::zeros({hidden}, true)),
      w2(Tensor::xavier_uniform({hidden, d}, hidden, d, rng)),
      b2(Tensor::zeros({d}, true)) {}

Tensor FeedForwardParams::forward(const Tensor& x, double dropout_rate, std::mt19937_64* rng, Mode mode) const {
    const bool train = mode == Mode::Train && dropout_rate > 0.0;
    Tensor hdn = relu(add_row(matmul(x, w1), b1));
    if (train) hdn = dropout(hdn, dropout_rate, *rng, true);
    return add_row(matmul(hdn, w2), b2);
}

namespace {

Tensor residual(const Tensor& x, const Tensor& sub, const LayerNormParams& norm, double rate, std::mt19937_64* rng,
                Mode mode) {
    const bool train = mode == Mode::Train && rate > 0.0;
    return norm(add(x, train ? dropout(sub, rate, *rng, true) : sub));
}

void collect_norm(NamedParams& out, const std::string& prefix, const LayerNormParams& n) {
    out.emplace_back(prefix + "gain", n.gain);
    out.emplace_back(prefix + "bias", n.bias);
}

void collect_ffn(NamedParams& out, const std::string& prefix, const FeedForwardParams& f) {
    out.emplace_back(prefix + "w1", f.w1);
    out.emplace_back(prefix + "b1", f.b1);
    out.emplace_back(prefix + "w2", f.w2);
    out.emplace_back(prefix + "b2", f.b2);
}

}  // namespace

Cab::Cab(const CabConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg_.validate();
    for (int b = 0; b < cfg_.n_blocks; ++b) {
        CabBlock blk;
        blk.self_attn = AttentionParams(cfg_.d, cfg_.h, rng);
        blk.norm_self = LayerNormParams(cfg_.d);
        blk.cross_attn = AttentionParams(cfg_.d, cfg_.h, rng);
        blk.norm_cross = LayerNormParams(cfg_.d);
        blk.ffn = FeedForwardParams(cfg_.d, cfg_.ffn_hidden, rng);
        blk.norm_ffn = LayerNormParams(cfg_.d);
        blocks_.push_back(std::move(blk));
    }
}

Tensor Cab::forward(const Tensor& memory, const PosRelative& pos_rel, const PosAbs& pos_abs, Mode mode,
                    std::mt19937_64* rng, AttentionTrace* trace) const {
    if (memory.ndim() != 2 || memory.dim(1) != cfg_.d)
        throw DimensionError("cab: memory " + shape_str(memory.shape()) + " does not have d = " + std::to_string(cfg_.d));
    if (memory.dim(0) != pos_rel.length() || pos_rel.dim() != cfg_.d)
        throw DimensionError("cab: memory " + shape_str(memory.shape()) + " and pos_rel " +
                             shape_str(pos_rel.table.shape()) + " disagree");
    if (pos_abs.dim() != cfg_.d) throw DimensionError("cab: pos_abs " + shape_str(pos_abs.table.shape()) + " has wrong width");
    if (mode == Mode::Train && cfg_.dropout > 0.0 && rng == nullptr)
        throw ContractError("cab: training mode with dropout needs an rng");

    const Tensor keys = add(memory, pos_rel.table);
    // The first self-attention takes pos_abs alone as its input; later ones
    // take the running content, with pos_abs added to the queries only.
    Tensor tgt = pos_abs.table;
    std::vector<Tensor> w;
    std::vector<Tensor>* wp = trace ? &w : nullptr;
    for (size_t b = 0; b < blocks_.size(); ++b) {
        const CabBlock& blk = blocks_[b];
        Tensor q = b == 0 ? tgt : add(tgt, pos_abs.table);
        Tensor sa = multi_head_attention(q, tgt, tgt, blk.self_attn, wp);
        if (trace) trace->layers.push_back(w);
        tgt = residual(tgt, sa, blk.norm_self, cfg_.dropout, rng, mode);

        q = add(tgt, pos_abs.table);
        Tensor ca = multi_head_attention(q, keys, memory, blk.cross_attn, wp);
        if (trace) trace->layers.push_back(w);
        tgt = residual(tgt, ca, blk.norm_cross, cfg_.dropout, rng, mode);

        Tensor ff = blk.ffn.forward(tgt, cfg_.dropout, rng, mode);
        tgt = residual(tgt, ff, blk.norm_ffn, cfg_.dropout, rng, mode);
    }
    return tgt;
}

void Cab::collect(NamedParams& out, const std::string& prefix) const {
    for (size_t b = 0; b < blocks_.size(); ++b) {
        const std::string p = prefix + "block" + std::to_string(b) + ".";
        blocks_[b].self_attn.collect(out, p + "self.");
        collect_norm(out, p + "norm_self.", blocks_[b].norm_self);
        blocks_[b].cross_attn.collect(out, p + "cross.");
        collect_norm(out, p + "norm_cross.", blocks_[b].norm_cross);
        collect_ffn(out, p + "ffn.", blocks_[b].ffn);
        collect_norm(out, p + "norm_ffn.", blocks_[b].norm_ffn);
    }
}

Tensor cab_forward(const Cab& cab, const Tensor& memory, const PosRelative& pos_rel, const PosAbs& pos_abs, Mode mode,
                   std::mt19937_64* rng, AttentionTrace* trace) {
    return cab.forward(memory, pos_rel, pos_abs, mode, rng, trace);
}

EncoderBlock::EncoderBlock(const CabConfig& cfg, std::mt19937_64& rng)
    : self_attn(cfg.d, cfg.h, rng),
      norm_self(cfg.d),
      ffn(cfg.d, cfg.ffn_hidden, rng),
      norm_ffn(cfg.d) {}

Tensor EncoderBlock::forward(const Tensor& memory, const PosRelative& pos_rel, double dropout_rate,
                             std::mt19937_64* rng, Mode mode) const {
    Tensor q = add(memory, pos_rel.table);
    Tensor x = residual(memory, multi_head_attention(q, q, memory, self_attn), norm_self, dropout_rate, rng, mode);
    return residual(x, ffn.forward(x, dropout_rate, rng, mode), norm_ffn, dropout_rate, rng, mode);
}

void EncoderBlock::collect(NamedParams& out, const std::string& prefix) const {
    self_attn.collect(out, prefix + "self.");
    collect_norm(out, prefix + "norm_self.", norm_self);
    collect_ffn(out, prefix + "ffn.", ffn);
    collect_norm(out, prefix + "norm_ffn.", norm_ffn);
}

}  // namespace attnconv
