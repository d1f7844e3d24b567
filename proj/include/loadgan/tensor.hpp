#pragma once

// Reverse-mode differentiation over dense float64 arrays.
//
// Every backward rule is itself written with differentiable operations, so a
// gradient computed with create_graph=true can be differentiated again. That
// is what the gradient-penalty loss needs: the penalty depends on the critic's
// input gradient, and training the critic needs the derivative of that
// penalty with respect to the critic parameters.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace loadgan::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tensor;
struct Node;

// Receives the node's own output and the gradient flowing into it; returns one
// gradient per parent (an undefined Tensor where a parent gets nothing).
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& out, const Tensor& grad)>;

struct Node {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::string op = "leaf";
    std::vector<Tensor> parents;
    BackwardFn backward;
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor constant(Shape shape, std::vector<double> values);
    static Tensor parameter(Shape shape, std::vector<double> values);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t size() const { return node_->values.size(); }
    std::span<const double> values() const { return node_->values; }
    double at(std::size_t i) const { return node_->values.at(i); }
    double item() const;
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return !node_->backward; }
    const std::string& op() const { return node_->op; }
    Node* node() const { return node_.get(); }

    // In-place access is only legal on leaves (parameters and buffers).
    std::vector<double>& mutable_values();
    Tensor& set_requires_grad(bool flag);

    // Copy of the values with no graph attachment.
    Tensor detach() const;

private:
    std::shared_ptr<Node> node_;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class GradientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Grad mode

bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// ---------------------------------------------------------------------------
// Backward

class Gradients {
public:
    // Gradient of the root with respect to t; undefined if t was unreachable.
    Tensor operator[](const Tensor& t) const;
    bool contains(const Tensor& t) const;
    void set(const Node* node, Tensor grad) { map_[node] = std::move(grad); }

private:
    std::unordered_map<const Node*, Tensor> map_;
};

// root must hold exactly one element. With create_graph the returned gradients
// are recorded in the graph and may be differentiated again.
Gradients backward(const Tensor& root, bool create_graph = false);

// Gradients for specific inputs; zero-filled where an input is unreachable.
std::vector<Tensor> grad(const Tensor& root, const std::vector<Tensor>& inputs,
                         bool create_graph = false);

// ---------------------------------------------------------------------------
// Elementwise arithmetic. Binary ops broadcast numpy-style.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& x);
Tensor operator*(const Tensor& x, double c);
Tensor operator*(double c, const Tensor& x);
Tensor operator+(const Tensor& x, double c);
Tensor operator-(const Tensor& x, double c);

Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor clamp_min(const Tensor& x, double lo);
// 1/x, with 0 mapped to 0 (used for norms that may vanish).
Tensor safe_reciprocal(const Tensor& x);

// ---------------------------------------------------------------------------
// Shape and reduction

Tensor reshape(const Tensor& x, Shape shape);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
// Sums broadcast dimensions away; inverse direction of broadcast_to.
Tensor sum_to(const Tensor& x, const Shape& shape);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Euclidean norm of each row of a [B, ...] tensor, flattened per row -> [B].
// The gradient at a zero row is taken as zero.
Tensor row_norms(const Tensor& x);

// ---------------------------------------------------------------------------
// Per-channel ops along axis 1 of [B, C, ...]; gamma, beta, scale and shift
// are [C]. Backward runs as direct loops, or through the primitive ops above
// when grad mode is on so that higher derivatives exist.

// Normalizes with the biased batch variance. The batch mean and variance are
// written to the optional outputs.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  std::vector<double>* batch_mean = nullptr, std::vector<double>* batch_var = nullptr);
// x * scale[c] + shift[c]
Tensor channel_affine(const Tensor& x, const Tensor& scale, const Tensor& shift);

Tensor transpose(const Tensor& x);
Tensor matmul(const Tensor& a, const Tensor& b);

// out[i] = x[index[i]], output shaped `shape`.
Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<std::size_t>> index, Shape shape);
// out[index[i]] += y[i], output shaped `shape`.
Tensor scatter_add(const Tensor& y, std::shared_ptr<const std::vector<std::size_t>> index,
                   Shape shape);

// ---------------------------------------------------------------------------
// Convolution over NCHW tensors, weights [out, in, kh, kw].

struct ConvGeometry {
    std::size_t kernel_h = 1, kernel_w = 1;
    std::size_t stride_h = 1, stride_w = 1;
    std::size_t pad_h = 0, pad_w = 0;
};

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t pad);
std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                                       std::size_t pad, std::size_t out_pad);

Tensor conv2d(const Tensor& x, const Tensor& weight, const ConvGeometry& geom);
// Weight layout [in, out, kh, kw] as for a transposed convolution.
Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const ConvGeometry& geom,
                        std::size_t out_pad_h = 0, std::size_t out_pad_w = 0);
// Weight gradient of conv2d: contracts input x with output-shaped y.
Tensor conv2d_weight(const Tensor& x, const Tensor& y, const ConvGeometry& geom,
                     std::size_t out_channels);

Tensor max_pool2d(const Tensor& x, std::size_t kernel_h, std::size_t kernel_w);

}  // namespace loadgan::ad
