#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace attnconv {

using Shape = std::vector<int64_t>;

class DimensionError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
   public:
    using std::logic_error::logic_error;
};

std::string shape_str(const Shape& shape);
int64_t numel(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a backward pass reaches the node
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into parents' grads.
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

}  // namespace detail

// Dense row-major float64 array. Copies share the underlying node (handle
// semantics), so a parameter updated in place is seen by every holder.
// Results of ops on tensors that require grad record their parents and a
// backward closure; backward() walks that record in reverse topological order.
class Tensor {
   public:
    Tensor();
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false) { return Tensor(std::move(shape), 0.0, requires_grad); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }
    static Tensor randn(Shape shape, double stddev, std::mt19937_64& rng, bool requires_grad = false);
    static Tensor xavier_uniform(Shape shape, int64_t fan_in, int64_t fan_out, std::mt19937_64& rng);
    // U(−√(6/fan_in), √(6/fan_in)); keeps activation scale through ReLU stacks.
    static Tensor he_uniform(Shape shape, int64_t fan_in, std::mt19937_64& rng);

    // Builds an op result. `backward` is only retained when some parent
    // requires grad; it receives the result node and must add into parent grads.
    static Tensor from_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                          std::function<void(detail::Node&)> backward);

    const Shape& shape() const { return node_->shape; }
    int64_t dim(size_t axis) const { return node_->shape.at(axis); }
    size_t ndim() const { return node_->shape.size(); }
    int64_t size() const { return static_cast<int64_t>(node_->data.size()); }

    std::span<double> data() { return node_->data; }
    std::span<const double> data() const { return node_->data; }
    double item() const;
    double at(std::initializer_list<int64_t> idx) const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }
    bool has_grad() const { return !node_->grad.empty(); }
    // Gradient as a plain vector; zeros when no backward pass reached this tensor.
    std::vector<double> grad() const;
    std::span<double> grad_mut();
    void zero_grad() { node_->grad.clear(); }

    // Value copy cut off from the tape.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

   private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;
};

// Reverse-mode sweep from a scalar loss. Leaf grads accumulate across calls
// until zero_grad(); interior grads are recomputed on every call.
void backward(const Tensor& loss);

// --- ops -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// a · bᵀ without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// a[m×n] + bias[n] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softmax_lastdim(const Tensor& a);
Tensor log_softmax_lastdim(const Tensor& a);

// Row-wise layer normalization of a[m×n] with learned gain/bias of length n.
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Inverted dropout. Identity when !train or rate == 0; the mask is drawn from `rng`.
Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng, bool train);

// input[C_in×H×W], kernels[C_out×C_in×k×k] → [C_out×H'×W'], cross-correlation.
Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int padding);
// Per-channel bias added to a [C×H×W] map.
Tensor add_channel_bias(const Tensor& a, const Tensor& bias);

Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_cols(const Tensor& a, int64_t start, int64_t len);
Tensor concat_cols(const std::vector<Tensor>& parts);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

}  // namespace attnconv
