#pragma once

#include <random>
#include <string>
#include <vector>

#include "attnconv/backbone.hpp"
#include "attnconv/box.hpp"
#include "attnconv/cab.hpp"
#include "attnconv/hungarian.hpp"
#include "attnconv/tensor.hpp"

namespace attnconv {

class CapacityError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// Category ids index the default label set; the no-object class is K.
inline const std::vector<std::string>& default_labels() {
    static const std::vector<std::string> labels{"rail", "clip", "bolt"};
    return labels;
}
enum Category : int { kRail = 0, kClip = 1, kBolt = 2 };

struct Component {
    int category = 0;
    Box box;
};

using GroundTruthSet = std::vector<Component>;

struct PredictionSet {
    Tensor class_logits;  // [N_pred×(K+1)], column K is the no-object class
    Tensor boxes;         // [N_pred×4] sigmoid outputs (cx, cy, w, h)

    int n_pred() const { return static_cast<int>(class_logits.dim(0)); }
    int num_classes() const { return static_cast<int>(class_logits.dim(1)) - 1; }
    Box box(int slot) const;
};

class ClassHead {
   public:
    ClassHead() = default;
    ClassHead(int64_t d, int num_classes, std::mt19937_64& rng);
    Tensor operator()(const Tensor& h) const { return add_row(matmul(h, weight), bias); }
    void collect(NamedParams& out, const std::string& prefix) const;

    Tensor weight;  // [d×(K+1)]
    Tensor bias;    // [K+1]
};

// d → d → d → 4 with ReLU between layers and a terminal sigmoid.
class BoxHead {
   public:
    BoxHead() = default;
    BoxHead(int64_t d, std::mt19937_64& rng);
    Tensor forward(const Tensor& h, double dropout_rate = 0.0, std::mt19937_64* rng = nullptr,
                   Mode mode = Mode::Eval) const;
    Tensor operator()(const Tensor& h) const { return forward(h); }
    void collect(NamedParams& out, const std::string& prefix) const;

    Tensor w1, b1, w2, b2, w3, b3;
};

struct LossWeights {
    double lambda_l1 = 5.0;
    double lambda_giou = 2.0;
    double no_object_weight = 0.1;
};

// cost(i, σ) = −p̂_σ(c_i) + L_box(b_i, b̂_σ), p̂ from the softmax of the logits.
CostMatrix matching_cost(const PredictionSet& preds, const GroundTruthSet& gts, const LossWeights& w);

// Matches gts to prediction slots; the result is a constant for the tape.
Assignment match_predictions(const PredictionSet& preds, const GroundTruthSet& gts, const LossWeights& w);

// Σ_slots weight·(−log p̂(target)) + Σ_matched L_box. Unmatched slots target the
// no-object class at `no_object_weight`. Differentiable in logits and boxes;
// returns +∞ (off the tape) when a target probability underflows to zero.
Tensor total_loss(const PredictionSet& preds, const GroundTruthSet& gts, const Assignment& assignment,
                  const LossWeights& w);

struct Detection {
    int category = 0;
    Box box;
    double confidence = 0.0;
    int slot = 0;
};

// Per slot: argmax of the softmax; kept when it is a real category and its
// probability exceeds `threshold`. No suppression or deduplication.
std::vector<Detection> decode_detections(const PredictionSet& preds, double threshold);

}  // namespace attnconv
