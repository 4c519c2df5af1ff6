#include <doctest.h>

#include <cmath>
#include <random>

#include "attnconv/box.hpp"
#include "oracles.hpp"

using namespace attnconv;

namespace {

Box random_box(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 0.95), s(0.01, 0.5);
    return Box{u(rng), u(rng), s(rng), s(rng)};
}

}  // namespace

TEST_CASE("giou examples") {
    const Box a{0.3, 0.4, 0.2, 0.1};
    CHECK(giou(a, a) == 1.0);
    const Box l{0.25, 0.5, 0.1, 0.1}, r{0.75, 0.5, 0.1, 0.1};
    CHECK(std::abs(giou(l, r) - (-2.0 / 3.0)) < 1e-12);
    CHECK(iou(l, r) == 0.0);
    const Box z{0.5, 0.5, 0.0, 0.0};
    CHECK(giou(z, z) == 1.0);
}

TEST_CASE("giou properties on random boxes") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 2000; ++t) {
        const Box a = random_box(rng), b = random_box(rng);
        const double g = giou(a, b), i = iou(a, b);
        CHECK(g <= i + 1e-15);
        CHECK(g > -1.0);
        CHECK(g <= 1.0);
        CHECK(std::abs(g - giou(b, a)) < 1e-12);
        CHECK(std::abs(g - oracle::giou_scalar(a.cx, a.cy, a.w, a.h, b.cx, b.cy, b.w, b.h)) < 1e-12);
    }
    // Equality exactly when the enclosing box is the union: nested boxes.
    const Box outer{0.5, 0.5, 0.4, 0.4}, inner{0.5, 0.5, 0.2, 0.2};
    CHECK(std::abs(giou(outer, inner) - iou(outer, inner)) < 1e-15);
}

TEST_CASE("iou threshold case is exact") {
    const Box gt{0.5, 0.5, 0.5, 0.5}, det{0.625, 0.5, 0.5, 0.5};
    CHECK(iou(gt, det) == 0.6);
}

TEST_CASE("box_loss examples") {
    const Box a{0.4, 0.5, 0.2, 0.3};
    CHECK(box_loss(a, a, 5.0, 2.0) == 0.0);
    const Box b{0.5, 0.5, 0.2, 0.3};
    CHECK(std::abs(box_loss(a, b, 1.0, 0.0) - 0.1) < 1e-15);

    std::mt19937_64 rng(2);
    for (int t = 0; t < 200; ++t) {
        const Box g = random_box(rng), p = random_box(rng);
        const double l1 = std::abs(g.cx - p.cx) + std::abs(g.cy - p.cy) + std::abs(g.w - p.w) + std::abs(g.h - p.h);
        const double expected = 5.0 * l1 + 2.0 * (1.0 - oracle::giou_scalar(g.cx, g.cy, g.w, g.h, p.cx, p.cy, p.w, p.h));
        CHECK(std::abs(box_loss(g, p, 5.0, 2.0) - expected) < 1e-12);
        CHECK(box_loss(g, p, 5.0, 2.0) >= 0.0);
    }
}

TEST_CASE("dual-number partials match finite differences") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        const Box g = random_box(rng), p = random_box(rng);
        using D = Dual<4>;
        const BoxT<D> pd{D::variable(p.cx, 0), D::variable(p.cy, 1), D::variable(p.w, 2), D::variable(p.h, 3)};
        const BoxT<D> gd{g.cx, g.cy, g.w, g.h};
        const D l = box_loss_t(gd, pd, 5.0, 2.0);
        for (int k = 0; k < 4; ++k) {
            Box hi = p, lo = p;
            double* fields_hi[4] = {&hi.cx, &hi.cy, &hi.w, &hi.h};
            double* fields_lo[4] = {&lo.cx, &lo.cy, &lo.w, &lo.h};
            *fields_hi[k] += 1e-6;
            *fields_lo[k] -= 1e-6;
            const double fd = (box_loss(g, hi, 5.0, 2.0) - box_loss(g, lo, 5.0, 2.0)) / 2e-6;
            const double right = (box_loss(g, hi, 5.0, 2.0) - l.v) / 1e-6, left = (l.v - box_loss(g, lo, 5.0, 2.0)) / 1e-6;
            if (std::abs(right - left) > 1e-3) continue;  // straddles a kink of |·| or max/min
            CHECK(std::abs(fd - l.d[k]) < 1e-5 * std::max(1.0, std::abs(fd)));
        }
    }
}
