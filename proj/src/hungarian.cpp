#include "attnconv/hungarian.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "attnconv/tensor.hpp"

namespace attnconv {

std::vector<int> Assignment::gt_for_pred(int n_pred) const {
    std::vector<int> inv(static_cast<size_t>(n_pred), -1);
    for (size_t g = 0; g < pred_for_gt.size(); ++g) inv.at(static_cast<size_t>(pred_for_gt[g])) = static_cast<int>(g);
    return inv;
}

double Assignment::total_cost(const CostMatrix& cost) const {
    double s = 0.0;
    for (size_t g = 0; g < pred_for_gt.size(); ++g) s += cost(static_cast<int>(g), pred_for_gt[g]);
    return s;
}

Assignment hungarian_assign(const CostMatrix& cost) {
    const int m = cost.rows, n = cost.cols;
    if (m > n)
        throw ContractError("hungarian_assign: " + std::to_string(m) + " rows exceed " + std::to_string(n) + " columns");
    for (double c : cost.values)
        if (!std::isfinite(c)) throw ContractError("hungarian_assign: non-finite cost entry");
    Assignment result;
    if (m == 0) return result;

    const double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials; column 0 is the virtual source.
    std::vector<double> u(m + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> owner(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= m; ++i) {
        owner[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = owner[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (owner[j0] != 0);
        do {
            const int j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    result.pred_for_gt.assign(static_cast<size_t>(m), -1);
    for (int j = 1; j <= n; ++j)
        if (owner[j] != 0) result.pred_for_gt[owner[j] - 1] = j - 1;
    return result;
}

}  // namespace attnconv
