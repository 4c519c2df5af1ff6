#include "attnconv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace attnconv {

using detail::Node;

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

namespace {

void check_shape(const Shape& shape) {
    for (auto d : shape) {
        if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(shape));
    }
}

void require_2d(const Tensor& t, const char* op) {
    if (t.ndim() != 2) throw DimensionError(std::string(op) + ": expected 2-D tensor, got " + shape_str(t.shape()));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

// c[m×n] += a[m×k] · b[k×n]
void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b + p * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// c[m×n] += a[m×k] · b[n×k]ᵀ
void gemm_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        for (int64_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double s = 0.0;
            for (int64_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            c[i * n + j] += s;
        }
    }
}

// c[k×n] += a[m×k]ᵀ · b[m×n]
void gemm_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            double* cp = c + p * n;
            for (int64_t j = 0; j < n; ++j) cp[j] += av * bi[j];
        }
    }
}

Node& parent(Node& self, size_t i) { return *self.parents[i]; }

}  // namespace

// --- Tensor ----------------------------------------------------------------

Tensor::Tensor() : node_(std::make_shared<Node>()) {
    node_->shape = {1};
    node_->data = {0.0};
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) : node_(std::make_shared<Node>()) {
    check_shape(shape);
    node_->data.assign(static_cast<size_t>(numel(shape)), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) : node_(std::make_shared<Node>()) {
    check_shape(shape);
    if (numel(shape) != static_cast<int64_t>(data.size()))
        throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                             shape_str(shape));
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::randn(Shape shape, double stddev, std::mt19937_64& rng, bool requires_grad) {
    Tensor t(std::move(shape), 0.0, requires_grad);
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.node_->data) v = dist(rng);
    return t;
}

Tensor Tensor::xavier_uniform(Shape shape, int64_t fan_in, int64_t fan_out, std::mt19937_64& rng) {
    Tensor t(std::move(shape), 0.0, true);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.node_->data) v = dist(rng);
    return t;
}

Tensor Tensor::he_uniform(Shape shape, int64_t fan_in, std::mt19937_64& rng) {
    Tensor t(std::move(shape), 0.0, true);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.node_->data) v = dist(rng);
    return t;
}

Tensor Tensor::from_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                       std::function<void(Node&)> backward) {
    Tensor out(std::move(shape), std::move(data));
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
        out.node_->requires_grad = true;
        out.node_->parents.reserve(parents.size());
        for (auto& p : parents) out.node_->parents.push_back(p.node_);
        out.node_->backward_fn = std::move(backward);
    }
    return out;
}

double Tensor::item() const {
    if (node_->data.size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(node_->shape));
    return node_->data[0];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
    if (idx.size() != node_->shape.size()) throw DimensionError("index rank mismatch for " + shape_str(shape()));
    int64_t off = 0;
    size_t a = 0;
    for (auto i : idx) {
        if (i < 0 || i >= node_->shape[a]) throw DimensionError("index out of range for " + shape_str(shape()));
        off = off * node_->shape[a] + i;
        ++a;
    }
    return node_->data[static_cast<size_t>(off)];
}

std::vector<double> Tensor::grad() const {
    if (node_->grad.empty()) return std::vector<double>(node_->data.size(), 0.0);
    return node_->grad;
}

std::span<double> Tensor::grad_mut() {
    node_->ensure_grad();
    return node_->grad;
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

// --- backward --------------------------------------------------------------

void backward(const Tensor& loss) {
    if (loss.size() != 1) throw ContractError("backward() requires a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw ContractError("backward() on a tensor that is not on the tape");

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    seen.insert(loss.node());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (Node* n : order) {
        if (!n->parents.empty()) n->grad.assign(n->data.size(), 0.0);
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->backward_fn) continue;
        for (auto& p : n->parents) {
            if (p->requires_grad) p->ensure_grad();
        }
        n->backward_fn(*n);
    }
}

// --- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " · " +
                             shape_str(b.shape()));
    std::vector<double> out(static_cast<size_t>(m * n), 0.0);
    gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
    return Tensor::from_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) gemm_nt(self.grad.data(), pb.data.data(), pa.grad.data(), m, n, k);
        if (pb.requires_grad) gemm_tn(pa.data.data(), self.grad.data(), pb.grad.data(), m, k, n);
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_nt");
    require_2d(b, "matmul_nt");
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k)
        throw DimensionError("matmul_nt: inner dimensions disagree: " + shape_str(a.shape()) + " · " +
                             shape_str(b.shape()) + "ᵀ");
    std::vector<double> out(static_cast<size_t>(m * n), 0.0);
    gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
    return Tensor::from_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        // ga[m×k] += g[m×n]·b[n×k]; gb[n×k] += gᵀ·a
        if (pa.requires_grad) gemm_nn(self.grad.data(), pb.data.data(), pa.grad.data(), m, n, k);
        if (pb.requires_grad) gemm_tn(self.grad.data(), pa.data.data(), pb.grad.data(), m, n, k);
    });
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    const int64_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(static_cast<size_t>(m * n));
    auto src = a.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];
    return Tensor::from_op({n, m}, std::move(out), {a}, [m, n](Node& self) {
        Node& pa = parent(self, 0);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) pa.grad[i * n + j] += self.grad[j * m + i];
    });
}

// --- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same(a, b, "add");
    std::vector<double> out(a.data().begin(), a.data().end());
    auto bd = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
        for (size_t p = 0; p < 2; ++p) {
            Node& pn = parent(self, p);
            if (!pn.requires_grad) continue;
            for (size_t i = 0; i < self.grad.size(); ++i) pn.grad[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same(a, b, "sub");
    std::vector<double> out(a.data().begin(), a.data().end());
    auto bd = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        for (size_t i = 0; i < self.grad.size(); ++i) {
            if (pa.requires_grad) pa.grad[i] += self.grad[i];
            if (pb.requires_grad) pb.grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mul");
    std::vector<double> out(a.data().begin(), a.data().end());
    auto bd = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
    return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        for (size_t i = 0; i < self.grad.size(); ++i) {
            if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.data[i];
            if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.data[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= s;
    return Tensor::from_op(a.shape(), std::move(out), {a}, [s](Node& self) {
        Node& pa = parent(self, 0);
        for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += s * self.grad[i];
    });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
    require_2d(a, "add_row");
    const int64_t m = a.dim(0), n = a.dim(1);
    if (bias.size() != n)
        throw DimensionError("add_row: bias " + shape_str(bias.shape()) + " does not fit " + shape_str(a.shape()));
    std::vector<double> out(a.data().begin(), a.data().end());
    auto bd = bias.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[i * n + j] += bd[j];
    return Tensor::from_op(a.shape(), std::move(out), {a, bias}, [m, n](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) {
                const double g = self.grad[i * n + j];
                if (pa.requires_grad) pa.grad[i * n + j] += g;
                if (pb.requires_grad) pb.grad[j] += g;
            }
    });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
    return Tensor::from_op(a.shape(), std::move(out), {a}, [](Node& self) {
        Node& pa = parent(self, 0);
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (pa.data[i] > 0.0) pa.grad[i] += self.grad[i];
    });
}

Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = 1.0 / (1.0 + std::exp(-v));
    return Tensor::from_op(a.shape(), std::move(out), {a}, [](Node& self) {
        Node& pa = parent(self, 0);
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const double y = self.data[i];
            pa.grad[i] += self.grad[i] * y * (1.0 - y);
        }
    });
}

Tensor softmax_lastdim(const Tensor& a) {
    const int64_t n = a.shape().back();
    const int64_t rows = a.size() / n;
    std::vector<double> out(a.data().begin(), a.data().end());
    for (int64_t r = 0; r < rows; ++r) {
        double* row = out.data() + r * n;
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            z += row[j];
        }
        for (int64_t j = 0; j < n; ++j) row[j] /= z;
    }
    return Tensor::from_op(a.shape(), std::move(out), {a}, [rows, n](Node& self) {
        Node& pa = parent(self, 0);
        for (int64_t r = 0; r < rows; ++r) {
            const double* y = self.data.data() + r * n;
            const double* g = self.grad.data() + r * n;
            double dot = 0.0;
            for (int64_t j = 0; j < n; ++j) dot += g[j] * y[j];
            for (int64_t j = 0; j < n; ++j) pa.grad[r * n + j] += y[j] * (g[j] - dot);
        }
    });
}

Tensor log_softmax_lastdim(const Tensor& a) {
    const int64_t n = a.shape().back();
    const int64_t rows = a.size() / n;
    std::vector<double> out(a.data().begin(), a.data().end());
    for (int64_t r = 0; r < rows; ++r) {
        double* row = out.data() + r * n;
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (int64_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
        const double lse = mx + std::log(z);
        for (int64_t j = 0; j < n; ++j) row[j] -= lse;
    }
    return Tensor::from_op(a.shape(), std::move(out), {a}, [rows, n](Node& self) {
        Node& pa = parent(self, 0);
        for (int64_t r = 0; r < rows; ++r) {
            const double* y = self.data.data() + r * n;
            const double* g = self.grad.data() + r * n;
            double gs = 0.0;
            for (int64_t j = 0; j < n; ++j) gs += g[j];
            for (int64_t j = 0; j < n; ++j) pa.grad[r * n + j] += g[j] - std::exp(y[j]) * gs;
        }
    });
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
    require_2d(a, "layer_norm");
    const int64_t m = a.dim(0), n = a.dim(1);
    if (gain.size() != n || bias.size() != n)
        throw DimensionError("layer_norm: affine parameters do not fit " + shape_str(a.shape()));
    auto x = a.data();
    auto gd = gain.data();
    auto bd = bias.data();
    std::vector<double> out(static_cast<size_t>(m * n));
    auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(m * n));
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) {
        double mu = 0.0;
        for (int64_t j = 0; j < n; ++j) mu += x[i * n + j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            const double d = x[i * n + j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (int64_t j = 0; j < n; ++j) {
            const double h = (x[i * n + j] - mu) * is;
            (*xhat)[i * n + j] = h;
            out[i * n + j] = h * gd[j] + bd[j];
        }
    }
    return Tensor::from_op(a.shape(), std::move(out), {a, gain, bias}, [m, n, xhat, inv_std](Node& self) {
        Node& pa = parent(self, 0);
        Node& pg = parent(self, 1);
        Node& pb = parent(self, 2);
        const double nn = static_cast<double>(n);
        for (int64_t i = 0; i < m; ++i) {
            const double* g = self.grad.data() + i * n;
            const double* h = xhat->data() + i * n;
            if (pg.requires_grad || pb.requires_grad) {
                for (int64_t j = 0; j < n; ++j) {
                    if (pg.requires_grad) pg.grad[j] += g[j] * h[j];
                    if (pb.requires_grad) pb.grad[j] += g[j];
                }
            }
            if (!pa.requires_grad) continue;
            double s1 = 0.0, s2 = 0.0;
            for (int64_t j = 0; j < n; ++j) {
                const double gh = g[j] * pg.data[j];
                s1 += gh;
                s2 += gh * h[j];
            }
            const double is = (*inv_std)[i];
            for (int64_t j = 0; j < n; ++j) {
                const double gh = g[j] * pg.data[j];
                pa.grad[i * n + j] += is * (gh - s1 / nn - h[j] * s2 / nn);
            }
        }
    });
}

Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng, bool train) {
    if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout rate must lie in [0, 1)");
    if (!train || rate == 0.0) return a;
    auto mask = std::make_shared<std::vector<double>>(static_cast<size_t>(a.size()));
    std::bernoulli_distribution keep(1.0 - rate);
    const double s = 1.0 / (1.0 - rate);
    for (auto& v : *mask) v = keep(rng) ? s : 0.0;
    std::vector<double> out(a.data().begin(), a.data().end());
    for (size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i];
    return Tensor::from_op(a.shape(), std::move(out), {a}, [mask](Node& self) {
        Node& pa = parent(self, 0);
        for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * (*mask)[i];
    });
}

// --- convolution -----------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int padding) {
    if (input.ndim() != 3 || kernels.ndim() != 4)
        throw DimensionError("conv2d: expected input [C×H×W] and kernels [O×C×k×k], got " +
                             shape_str(input.shape()) + " and " + shape_str(kernels.shape()));
    if (stride <= 0 || padding < 0) throw DimensionError("conv2d: stride must be positive, padding nonnegative");
    const int64_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int64_t cout = kernels.dim(0), k = kernels.dim(2);
    if (kernels.dim(1) != cin || kernels.dim(3) != k)
        throw DimensionError("conv2d: kernels " + shape_str(kernels.shape()) + " incompatible with input " +
                             shape_str(input.shape()));
    const int64_t ho = (h + 2 * padding - k) / stride + 1;
    const int64_t wo = (w + 2 * padding - k) / stride + 1;
    if (h + 2 * padding - k < 0 || w + 2 * padding - k < 0 || ho < 1 || wo < 1)
        throw DimensionError("conv2d: non-positive output size for input " + shape_str(input.shape()));

    // im2col: cols[(c·k·k)×(ho·wo)]
    const int64_t rows = cin * k * k, cols_n = ho * wo;
    auto cols = std::make_shared<std::vector<double>>(static_cast<size_t>(rows * cols_n), 0.0);
    auto x = input.data();
    for (int64_t c = 0; c < cin; ++c)
        for (int64_t ki = 0; ki < k; ++ki)
            for (int64_t kj = 0; kj < k; ++kj) {
                double* dst = cols->data() + ((c * k + ki) * k + kj) * cols_n;
                for (int64_t oi = 0; oi < ho; ++oi) {
                    const int64_t ii = oi * stride - padding + ki;
                    if (ii < 0 || ii >= h) continue;
                    for (int64_t oj = 0; oj < wo; ++oj) {
                        const int64_t jj = oj * stride - padding + kj;
                        if (jj < 0 || jj >= w) continue;
                        dst[oi * wo + oj] = x[(c * h + ii) * w + jj];
                    }
                }
            }
    std::vector<double> out(static_cast<size_t>(cout * cols_n), 0.0);
    gemm_nn(kernels.data().data(), cols->data(), out.data(), cout, rows, cols_n);

    return Tensor::from_op(
        {cout, ho, wo}, std::move(out), {input, kernels},
        [=](Node& self) {
            Node& pin = parent(self, 0);
            Node& pk = parent(self, 1);
            if (pk.requires_grad) gemm_nt(self.grad.data(), cols->data(), pk.grad.data(), cout, cols_n, rows);
            if (!pin.requires_grad) return;
            std::vector<double> gcols(static_cast<size_t>(rows * cols_n), 0.0);
            gemm_tn(pk.data.data(), self.grad.data(), gcols.data(), cout, rows, cols_n);
            for (int64_t c = 0; c < cin; ++c)
                for (int64_t ki = 0; ki < k; ++ki)
                    for (int64_t kj = 0; kj < k; ++kj) {
                        const double* src = gcols.data() + ((c * k + ki) * k + kj) * cols_n;
                        for (int64_t oi = 0; oi < ho; ++oi) {
                            const int64_t ii = oi * stride - padding + ki;
                            if (ii < 0 || ii >= h) continue;
                            for (int64_t oj = 0; oj < wo; ++oj) {
                                const int64_t jj = oj * stride - padding + kj;
                                if (jj < 0 || jj >= w) continue;
                                pin.grad[(c * h + ii) * w + jj] += src[oi * wo + oj];
                            }
                        }
                    }
        });
}

Tensor add_channel_bias(const Tensor& a, const Tensor& bias) {
    if (a.ndim() != 3 || bias.size() != a.dim(0))
        throw DimensionError("add_channel_bias: bias " + shape_str(bias.shape()) + " does not fit " +
                             shape_str(a.shape()));
    const int64_t c = a.dim(0), hw = a.dim(1) * a.dim(2);
    std::vector<double> out(a.data().begin(), a.data().end());
    auto bd = bias.data();
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < hw; ++i) out[ch * hw + i] += bd[ch];
    return Tensor::from_op(a.shape(), std::move(out), {a, bias}, [c, hw](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t i = 0; i < hw; ++i) {
                const double g = self.grad[ch * hw + i];
                if (pa.requires_grad) pa.grad[ch * hw + i] += g;
                if (pb.requires_grad) pb.grad[ch] += g;
            }
    });
}

// --- shape -----------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
    check_shape(shape);
    if (numel(shape) != a.size())
        throw DimensionError("reshape: " + shape_str(a.shape()) + " cannot become " + shape_str(shape));
    std::vector<double> out(a.data().begin(), a.data().end());
    return Tensor::from_op(std::move(shape), std::move(out), {a}, [](Node& self) {
        Node& pa = parent(self, 0);
        for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    });
}

Tensor slice_cols(const Tensor& a, int64_t start, int64_t len) {
    require_2d(a, "slice_cols");
    const int64_t m = a.dim(0), n = a.dim(1);
    if (start < 0 || len <= 0 || start + len > n)
        throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + len) +
                             ") out of range for " + shape_str(a.shape()));
    std::vector<double> out(static_cast<size_t>(m * len));
    auto src = a.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < len; ++j) out[i * len + j] = src[i * n + start + j];
    return Tensor::from_op({m, len}, std::move(out), {a}, [m, n, start, len](Node& self) {
        Node& pa = parent(self, 0);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < len; ++j) pa.grad[i * n + start + j] += self.grad[i * len + j];
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const int64_t m = parts.front().dim(0);
    std::vector<int64_t> widths;
    int64_t total = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat_cols");
        if (p.dim(0) != m) throw DimensionError("concat_cols: row count mismatch " + shape_str(p.shape()));
        widths.push_back(p.dim(1));
        total += p.dim(1);
    }
    std::vector<double> out(static_cast<size_t>(m * total));
    int64_t off = 0;
    for (size_t t = 0; t < parts.size(); ++t) {
        auto src = parts[t].data();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < widths[t]; ++j) out[i * total + off + j] = src[i * widths[t] + j];
        off += widths[t];
    }
    return Tensor::from_op({m, total}, std::move(out), parts, [m, total, widths](Node& self) {
        int64_t off = 0;
        for (size_t t = 0; t < widths.size(); ++t) {
            Node& pt = parent(self, t);
            if (pt.requires_grad) {
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < widths[t]; ++j)
                        pt.grad[i * widths[t] + j] += self.grad[i * total + off + j];
            }
            off += widths[t];
        }
    });
}

// --- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return Tensor::from_op({1}, {s}, {a}, [](Node& self) {
        Node& pa = parent(self, 0);
        for (auto& g : pa.grad) g += self.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

}  // namespace attnconv
