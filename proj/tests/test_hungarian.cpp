#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "attnconv/hungarian.hpp"
#include "attnconv/tensor.hpp"
#include "oracles.hpp"

using namespace attnconv;

TEST_CASE("hungarian examples") {
    CostMatrix one(1, 1, 3.5);
    const Assignment a1 = hungarian_assign(one);
    CHECK(a1.pred_for_gt == std::vector<int>{0});

    CostMatrix c(2, 2);
    c(0, 0) = 1, c(0, 1) = 2, c(1, 0) = 3, c(1, 1) = 0;
    const Assignment a = hungarian_assign(c);
    CHECK(a.pred_for_gt == std::vector<int>{0, 1});
    CHECK(a.total_cost(c) == 1.0);

    CHECK(hungarian_assign(CostMatrix(0, 5)).size() == 0);
}

TEST_CASE("hungarian errors") {
    CHECK_THROWS_AS(hungarian_assign(CostMatrix(3, 2)), ContractError);
    CostMatrix c(2, 3, 1.0);
    c(1, 2) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(hungarian_assign(c), ContractError);
    c(1, 2) = std::nan("");
    CHECK_THROWS_AS(hungarian_assign(c), ContractError);
}

TEST_CASE("ties go to the lowest prediction index") {
    CostMatrix c(2, 5, 1.0);
    const Assignment a = hungarian_assign(c);
    CHECK(a.pred_for_gt == std::vector<int>{0, 1});
    CostMatrix d(1, 4, 2.0);
    CHECK(hungarian_assign(d).pred_for_gt == std::vector<int>{0});
}

TEST_CASE("optimal and injective against exhaustive search") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> um(1, 7);
    std::uniform_real_distribution<double> uc(-3.0, 10.0);
    for (int t = 0; t < 300; ++t) {
        const int m = um(rng);
        const int n = std::uniform_int_distribution<int>(m, m + 4)(rng);
        CostMatrix c(m, n);
        // Integer costs on half the cases to provoke ties.
        for (auto& v : c.values) v = t % 2 ? uc(rng) : std::floor(uc(rng) / 3);
        const Assignment a = hungarian_assign(c);
        REQUIRE(a.size() == static_cast<size_t>(m));
        std::set<int> used(a.pred_for_gt.begin(), a.pred_for_gt.end());
        CHECK(used.size() == static_cast<size_t>(m));
        for (int p : a.pred_for_gt) CHECK((p >= 0 && p < n));
        CHECK(std::abs(a.total_cost(c) - oracle::min_assignment_cost_full(c)) < 1e-9);
        CHECK(std::abs(oracle::min_assignment_cost(c) - oracle::min_assignment_cost_full(c)) < 1e-9);
        const auto inv = a.gt_for_pred(n);
        for (int g = 0; g < m; ++g) CHECK(inv[a.pred_for_gt[g]] == g);
    }
}
