#pragma once

#include <cstddef>
#include <vector>

namespace attnconv {

// Dense row-major cost matrix, rows = ground truths, cols = predictions.
struct CostMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    CostMatrix() = default;
    CostMatrix(int r, int c, double fill = 0.0) : rows(r), cols(c), values(static_cast<size_t>(r) * c, fill) {}
    double& operator()(int r, int c) { return values[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
};

// Injective map gt index → prediction index.
struct Assignment {
    std::vector<int> pred_for_gt;

    size_t size() const { return pred_for_gt.size(); }
    // Inverse view: gt index per prediction slot, -1 when unmatched.
    std::vector<int> gt_for_pred(int n_pred) const;
    double total_cost(const CostMatrix& cost) const;
};

// Minimum-cost injective assignment of every row to a distinct column
// (rows ≤ cols), shortest-augmenting-path Kuhn–Munkres in O(rows²·cols).
// Among equal-cost choices the scan prefers lower column indices.
Assignment hungarian_assign(const CostMatrix& cost);

}  // namespace attnconv
