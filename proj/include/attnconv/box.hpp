#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace attnconv {

// Axis-aligned box in normalized center form.
template <typename T>
struct BoxT {
    T cx{}, cy{}, w{}, h{};

    T x0() const { return cx - w / 2; }
    T x1() const { return cx + w / 2; }
    T y0() const { return cy - h / 2; }
    T y1() const { return cy + h / 2; }
    T area() const { return w * h; }
};

using Box = BoxT<double>;

inline bool operator==(const Box& a, const Box& b) {
    return a.cx == b.cx && a.cy == b.cy && a.w == b.w && a.h == b.h;
}

// Forward-mode dual number carrying N partial derivatives.
template <int N>
struct Dual {
    double v = 0.0;
    std::array<double, N> d{};

    Dual() = default;
    Dual(double value) : v(value) {}  // NOLINT: implicit lift of constants
    static Dual variable(double value, int index) {
        Dual x(value);
        x.d[index] = 1.0;
        return x;
    }

    friend Dual operator+(Dual a, const Dual& b) {
        a.v += b.v;
        for (int i = 0; i < N; ++i) a.d[i] += b.d[i];
        return a;
    }
    friend Dual operator-(Dual a, const Dual& b) {
        a.v -= b.v;
        for (int i = 0; i < N; ++i) a.d[i] -= b.d[i];
        return a;
    }
    friend Dual operator-(Dual a) {
        a.v = -a.v;
        for (auto& x : a.d) x = -x;
        return a;
    }
    friend Dual operator*(const Dual& a, const Dual& b) {
        Dual r(a.v * b.v);
        for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
        return r;
    }
    friend Dual operator/(const Dual& a, const Dual& b) {
        Dual r(a.v / b.v);
        const double inv = 1.0 / (b.v * b.v);
        for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) * inv;
        return r;
    }
    friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
    friend bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
    friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
    friend bool operator==(const Dual& a, const Dual& b) { return a.v == b.v; }
};

inline double value_of(double x) { return x; }
template <int N>
double value_of(const Dual<N>& x) {
    return x.v;
}

template <int N>
Dual<N> abs(const Dual<N>& x) {
    return x.v < 0.0 ? -x : x;
}
using std::abs;

template <typename T>
T min_of(const T& a, const T& b) {
    return b < a ? b : a;
}
template <typename T>
T max_of(const T& a, const T& b) {
    return a < b ? b : a;
}

template <typename T>
T intersection_area(const BoxT<T>& a, const BoxT<T>& b) {
    T iw = min_of(a.x1(), b.x1()) - max_of(a.x0(), b.x0());
    T ih = min_of(a.y1(), b.y1()) - max_of(a.y0(), b.y0());
    if (value_of(iw) <= 0.0 || value_of(ih) <= 0.0) return T(0.0);
    return iw * ih;
}

template <typename T>
T iou_t(const BoxT<T>& a, const BoxT<T>& b) {
    T inter = intersection_area(a, b);
    T uni = a.area() + b.area() - inter;
    if (value_of(uni) <= 0.0) return T(0.0);
    return inter / uni;
}

// IoU minus the share of the enclosing box not covered by the union.
// Two identical zero-area boxes score 1.
template <typename T>
T giou_t(const BoxT<T>& a, const BoxT<T>& b) {
    T inter = intersection_area(a, b);
    T uni = a.area() + b.area() - inter;
    T cw = max_of(a.x1(), b.x1()) - min_of(a.x0(), b.x0());
    T ch = max_of(a.y1(), b.y1()) - min_of(a.y0(), b.y0());
    T enclose = cw * ch;
    if (value_of(uni) <= 0.0) {
        const bool same = value_of(a.cx) == value_of(b.cx) && value_of(a.cy) == value_of(b.cy) &&
                          value_of(a.w) == value_of(b.w) && value_of(a.h) == value_of(b.h);
        if (same) return T(1.0);
        if (value_of(enclose) <= 0.0) return T(0.0);
        return T(-1.0);
    }
    T iou = inter / uni;
    if (value_of(enclose) <= 0.0) return iou;
    return iou - (enclose - uni) / enclose;
}

// λ_l1·‖b − b̂‖₁ + λ_giou·(1 − giou(b, b̂))
template <typename T>
T box_loss_t(const BoxT<T>& gt, const BoxT<T>& pred, double lambda_l1, double lambda_giou) {
    T l1 = abs(gt.cx - pred.cx) + abs(gt.cy - pred.cy) + abs(gt.w - pred.w) + abs(gt.h - pred.h);
    return T(lambda_l1) * l1 + T(lambda_giou) * (T(1.0) - giou_t(gt, pred));
}

inline double iou(const Box& a, const Box& b) { return iou_t(a, b); }
inline double giou(const Box& a, const Box& b) { return giou_t(a, b); }
inline double box_loss(const Box& gt, const Box& pred, double lambda_l1, double lambda_giou) {
    return box_loss_t(gt, pred, lambda_l1, lambda_giou);
}

inline bool box_in_unit_square(const Box& b) {
    return b.cx >= 0.0 && b.cx <= 1.0 && b.cy >= 0.0 && b.cy <= 1.0 && b.w >= 0.0 && b.w <= 1.0 && b.h >= 0.0 &&
           b.h <= 1.0;
}

}  // namespace attnconv
