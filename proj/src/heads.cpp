#include "attnconv/heads.hpp"

#include <cmath>
#include <limits>

namespace attnconv {

Box PredictionSet::box(int slot) const {
    auto b = boxes.data();
    const size_t o = static_cast<size_t>(slot) * 4;
    return Box{b[o], b[o + 1], b[o + 2], b[o + 3]};
}

ClassHead::ClassHead(int64_t d, int num_classes, std::mt19937_64& rng)
    : weight(Tensor::xavier_uniform({d, num_classes + 1}, d, num_classes + 1, rng)),
      bias(Tensor::zeros({num_classes + 1}, true)) {}

void ClassHead::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + "weight", weight);
    out.emplace_back(prefix + "bias", bias);
}

BoxHead::BoxHead(int64_t d, std::mt19937_64& rng)
    : w1(Tensor::xavier_uniform({d, d}, d, d, rng)),
      b1(Tensor::zeros({d}, true)),
      w2(Tensor::xavier_uniform({d, d}, d, d, rng)),
      b2(Tensor::zeros({d}, true)),
      w3(Tensor::xavier_uniform({d, 4}, d, 4, rng)),
      b3(Tensor::zeros({4}, true)) {}

Tensor BoxHead::forward(const Tensor& h, double dropout_rate, std::mt19937_64* rng, Mode mode) const {
    const bool train = mode == Mode::Train && dropout_rate > 0.0 && rng != nullptr;
    Tensor x = relu(add_row(matmul(h, w1), b1));
    if (train) x = dropout(x, dropout_rate, *rng, true);
    x = relu(add_row(matmul(x, w2), b2));
    if (train) x = dropout(x, dropout_rate, *rng, true);
    return sigmoid(add_row(matmul(x, w3), b3));
}

void BoxHead::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + "w1", w1);
    out.emplace_back(prefix + "b1", b1);
    out.emplace_back(prefix + "w2", w2);
    out.emplace_back(prefix + "b2", b2);
    out.emplace_back(prefix + "w3", w3);
    out.emplace_back(prefix + "b3", b3);
}

namespace {

std::vector<double> softmax_rows(const Tensor& logits) {
    const int64_t n = logits.dim(1);
    const int64_t rows = logits.dim(0);
    std::vector<double> p(logits.data().begin(), logits.data().end());
    for (int64_t r = 0; r < rows; ++r) {
        double* row = p.data() + r * n;
        double mx = row[0];
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            z += row[j];
        }
        for (int64_t j = 0; j < n; ++j) row[j] /= z;
    }
    return p;
}

void check_prediction_set(const PredictionSet& preds) {
    if (preds.class_logits.ndim() != 2 || preds.boxes.ndim() != 2 || preds.boxes.dim(1) != 4 ||
        preds.boxes.dim(0) != preds.class_logits.dim(0))
        throw DimensionError("prediction set: logits " + shape_str(preds.class_logits.shape()) + " and boxes " +
                             shape_str(preds.boxes.shape()) + " disagree");
}

void check_gts(const PredictionSet& preds, const GroundTruthSet& gts) {
    if (static_cast<int>(gts.size()) > preds.n_pred())
        throw CapacityError(std::to_string(gts.size()) + " ground truths exceed " + std::to_string(preds.n_pred()) +
                            " prediction slots");
    for (const auto& g : gts)
        if (g.category < 0 || g.category >= preds.num_classes())
            throw ContractError("ground-truth category " + std::to_string(g.category) + " out of range");
}

}  // namespace

CostMatrix matching_cost(const PredictionSet& preds, const GroundTruthSet& gts, const LossWeights& w) {
    check_prediction_set(preds);
    check_gts(preds, gts);
    const int n = preds.n_pred();
    const int kk = preds.num_classes() + 1;
    const auto prob = softmax_rows(preds.class_logits);
    CostMatrix cost(static_cast<int>(gts.size()), n);
    for (int i = 0; i < cost.rows; ++i) {
        const auto& g = gts[static_cast<size_t>(i)];
        for (int s = 0; s < n; ++s) {
            cost(i, s) = -prob[static_cast<size_t>(s) * kk + g.category] +
                         box_loss(g.box, preds.box(s), w.lambda_l1, w.lambda_giou);
        }
    }
    return cost;
}

Assignment match_predictions(const PredictionSet& preds, const GroundTruthSet& gts, const LossWeights& w) {
    return hungarian_assign(matching_cost(preds, gts, w));
}

Tensor total_loss(const PredictionSet& preds, const GroundTruthSet& gts, const Assignment& assignment,
                  const LossWeights& w) {
    check_prediction_set(preds);
    check_gts(preds, gts);
    if (assignment.size() != gts.size()) throw ContractError("total_loss: assignment does not cover every ground truth");
    const int n = preds.n_pred();
    const int k = preds.num_classes();
    const int kk = k + 1;
    const auto slot_gt = assignment.gt_for_pred(n);

    auto targets = std::make_shared<std::vector<int>>(static_cast<size_t>(n), k);
    auto weights = std::make_shared<std::vector<double>>(static_cast<size_t>(n), w.no_object_weight);
    for (int s = 0; s < n; ++s) {
        if (slot_gt[s] >= 0) {
            (*targets)[s] = gts[static_cast<size_t>(slot_gt[s])].category;
            (*weights)[s] = 1.0;
        }
    }

    auto prob = std::make_shared<std::vector<double>>(softmax_rows(preds.class_logits));
    for (int s = 0; s < n; ++s) {
        if ((*prob)[static_cast<size_t>(s) * kk + (*targets)[s]] <= 0.0)
            return Tensor::scalar(std::numeric_limits<double>::infinity());
    }

    // −Σ w_s log p̂_s(t_s), from log-sum-exp for accuracy.
    auto logits = preds.class_logits.data();
    double class_term = 0.0;
    for (int s = 0; s < n; ++s) {
        const double* row = logits.data() + static_cast<size_t>(s) * kk;
        double mx = row[0];
        for (int j = 1; j < kk; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < kk; ++j) z += std::exp(row[j] - mx);
        class_term += (*weights)[s] * (mx + std::log(z) - row[(*targets)[s]]);
    }
    Tensor cls = Tensor::from_op({1}, {class_term}, {preds.class_logits}, [=](detail::Node& self) {
        auto& gl = self.parents[0]->grad;
        const double g = self.grad[0];
        for (int s = 0; s < n; ++s) {
            for (int j = 0; j < kk; ++j) {
                const double onehot = j == (*targets)[s] ? 1.0 : 0.0;
                gl[static_cast<size_t>(s) * kk + j] += g * (*weights)[s] * ((*prob)[static_cast<size_t>(s) * kk + j] - onehot);
            }
        }
    });

    // Box term over matched slots; 4-component duals give exact partials.
    auto box_grad = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * 4, 0.0);
    double box_term = 0.0;
    for (size_t g = 0; g < gts.size(); ++g) {
        const int s = assignment.pred_for_gt[g];
        const Box pb = preds.box(s);
        using D = Dual<4>;
        const BoxT<D> pred{D::variable(pb.cx, 0), D::variable(pb.cy, 1), D::variable(pb.w, 2), D::variable(pb.h, 3)};
        const BoxT<D> gt{gts[g].box.cx, gts[g].box.cy, gts[g].box.w, gts[g].box.h};
        const D l = box_loss_t(gt, pred, w.lambda_l1, w.lambda_giou);
        box_term += l.v;
        for (int c = 0; c < 4; ++c) (*box_grad)[static_cast<size_t>(s) * 4 + c] += l.d[c];
    }
    Tensor box = Tensor::from_op({1}, {box_term}, {preds.boxes}, [box_grad](detail::Node& self) {
        auto& gb = self.parents[0]->grad;
        for (size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[0] * (*box_grad)[i];
    });
    return add(cls, box);
}

std::vector<Detection> decode_detections(const PredictionSet& preds, double threshold) {
    check_prediction_set(preds);
    const int n = preds.n_pred();
    const int k = preds.num_classes();
    const auto prob = softmax_rows(preds.class_logits);
    std::vector<Detection> out;
    for (int s = 0; s < n; ++s) {
        const double* row = prob.data() + static_cast<size_t>(s) * (k + 1);
        int best = 0;
        for (int j = 1; j <= k; ++j)
            if (row[j] > row[best]) best = j;
        if (best == k || !(row[best] > threshold)) continue;
        out.push_back(Detection{best, preds.box(s), row[best], s});
    }
    return out;
}

}  // namespace attnconv
