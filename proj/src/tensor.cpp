#include "loadgan/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace loadgan::ad {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

#if defined(__GLIBC__)
// Activation buffers are large and short-lived; keeping them on the heap
// instead of fresh mmaps avoids a page fault storm on every op.
const bool g_malloc_tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    mallopt(M_TOP_PAD, 64 << 20);
    return true;
}();
#endif

[[noreturn]] void shape_fail(const std::string& op, const Shape& a, const Shape& b,
                             const std::string& detail = {}) {
    std::ostringstream os;
    os << op << ": incompatible shapes " << to_string(a) << " and " << to_string(b);
    if (!detail.empty()) os << " (" << detail << ')';
    throw ShapeError(os.str());
}

Tensor make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != values.size()) {
        throw ShapeError("tensor: shape " + to_string(shape) + " holds " +
                         std::to_string(numel(shape)) + " values, got " +
                         std::to_string(values.size()));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

// Builds an op output; the graph edge is recorded only when some parent needs
// a gradient and grad mode is on.
Tensor make_result(std::string op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents, BackwardFn fn) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->op = std::move(op);
    if (g_grad_enabled) {
        const bool any = std::any_of(parents.begin(), parents.end(),
                                     [](const Tensor& p) { return p.defined() && p.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->parents = std::move(parents);
            node->backward = std::move(fn);
        }
    }
    return Tensor(std::move(node));
}

Shape broadcast_shape(const std::string& op, const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1) shape_fail(op, a, b, "not broadcastable");
        out[i] = std::max(da, db);
    }
    return out;
}

// For each element of `to`, the flat index of the element of `from` that
// broadcasts onto it.
std::vector<std::size_t> broadcast_map(const std::string& op, const Shape& from, const Shape& to) {
    if (from.size() > to.size()) shape_fail(op, from, to, "rank");
    const std::size_t r = to.size();
    const std::size_t off = r - from.size();
    std::vector<std::size_t> stride(r, 0);
    std::size_t s = 1;
    for (std::size_t i = r; i-- > off;) {
        const std::size_t d = from[i - off];
        if (d != to[i] && d != 1) shape_fail(op, from, to, "not broadcastable");
        stride[i] = d == 1 ? 0 : s;
        s *= d;
    }
    const std::size_t n = numel(to);
    std::vector<std::size_t> map(n);
    std::vector<std::size_t> idx(r, 0);
    std::size_t src = 0;
    for (std::size_t k = 0; k < n; ++k) {
        map[k] = src;
        for (std::size_t i = r; i-- > 0;) {
            ++idx[i];
            src += stride[i];
            if (idx[i] < to[i]) break;
            src -= stride[i] * idx[i];
            idx[i] = 0;
        }
    }
    return map;
}

template <class F>
std::vector<double> map_values(const Tensor& x, F f) {
    std::vector<double> out(x.size());
    const auto v = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(v[i]);
    return out;
}

template <class F>
std::vector<double> zip_values(const Tensor& a, const Tensor& b, F f) {
    std::vector<double> out(a.size());
    const auto va = a.values();
    const auto vb = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(va[i], vb[i]);
    return out;
}

// Pairs operands up to a common shape before an elementwise kernel.
std::pair<Tensor, Tensor> align(const std::string& op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return {a, b};
    const Shape s = broadcast_shape(op, a.shape(), b.shape());
    return {a.shape() == s ? a : broadcast_to(a, s), b.shape() == s ? b : broadcast_to(b, s)};
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
    return make_leaf(std::move(shape), std::move(values), false);
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    return make_leaf(std::move(shape), std::move(values), true);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    const std::size_t n = numel(shape);
    return make_leaf(std::move(shape), std::vector<double>(n, value), false);
}

Tensor Tensor::scalar(double value) { return make_leaf({}, {value}, false); }

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
    return node_->values[0];
}

std::vector<double>& Tensor::mutable_values() {
    if (!is_leaf()) throw std::logic_error("mutable_values: tensor produced by '" + op() + "' is not a leaf");
    return node_->values;
}

Tensor& Tensor::set_requires_grad(bool flag) {
    if (!is_leaf()) throw std::logic_error("set_requires_grad: only leaves can change requires_grad");
    node_->requires_grad = flag;
    return *this;
}

Tensor Tensor::detach() const { return make_leaf(node_->shape, node_->values, false); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------
// Backward

Tensor Gradients::operator[](const Tensor& t) const {
    auto it = map_.find(t.node());
    return it == map_.end() ? Tensor{} : it->second;
}

bool Gradients::contains(const Tensor& t) const { return map_.count(t.node()) != 0; }

Gradients backward(const Tensor& root, bool create_graph) {
    if (!root.defined() || root.size() != 1) {
        throw GradientError("backward: root must be a scalar, got shape " +
                            (root.defined() ? to_string(root.shape()) : std::string("<undefined>")));
    }
    Gradients out;
    if (!root.requires_grad()) return out;

    // Iterative post-order DFS; reversing it gives a valid processing order.
    std::vector<Tensor> order;
    std::unordered_set<const Node*> seen;
    std::vector<std::pair<Tensor, std::size_t>> stack{{root, 0}};
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [t, next] = stack.back();
        const auto& parents = t.node()->parents;
        if (next < parents.size()) {
            const Tensor p = parents[next++];
            if (p.defined() && p.requires_grad() && seen.insert(p.node()).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(t);
            stack.pop_back();
        }
    }

    const bool previous = g_grad_enabled;
    g_grad_enabled = create_graph;
    try {
        std::unordered_map<const Node*, Tensor> acc;
        acc[root.node()] = Tensor::full(root.shape(), 1.0);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const Tensor& t = *it;
            auto found = acc.find(t.node());
            if (found == acc.end()) continue;
            const Tensor g = found->second;
            out.set(t.node(), g);
            if (t.is_leaf()) continue;
            const auto& parents = t.node()->parents;
            std::vector<Tensor> pg = t.node()->backward(t, g);
            for (std::size_t i = 0; i < parents.size(); ++i) {
                if (i >= pg.size() || !pg[i].defined()) continue;
                const Tensor& p = parents[i];
                if (!p.requires_grad()) continue;
                for (double v : pg[i].values()) {
                    if (!std::isfinite(v)) {
                        throw GradientError("backward: non-finite gradient produced by '" + t.op() +
                                            "' for input " + std::to_string(i));
                    }
                }
                auto slot = acc.find(p.node());
                if (slot == acc.end()) {
                    acc.emplace(p.node(), pg[i]);
                } else {
                    slot->second = add(slot->second, pg[i]);
                }
            }
        }
    } catch (...) {
        g_grad_enabled = previous;
        throw;
    }
    g_grad_enabled = previous;
    return out;
}

std::vector<Tensor> grad(const Tensor& root, const std::vector<Tensor>& inputs, bool create_graph) {
    const Gradients g = backward(root, create_graph);
    std::vector<Tensor> out;
    out.reserve(inputs.size());
    for (const auto& x : inputs) {
        Tensor gx = g[x];
        out.push_back(gx.defined() ? gx : Tensor::zeros(x.shape()));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a0, const Tensor& b0) {
    auto [a, b] = align("add", a0, b0);
    return make_result("add", a.shape(), zip_values(a, b, [](double x, double y) { return x + y; }),
                       {a, b}, [](const Tensor&, const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

Tensor sub(const Tensor& a0, const Tensor& b0) {
    auto [a, b] = align("sub", a0, b0);
    return make_result("sub", a.shape(), zip_values(a, b, [](double x, double y) { return x - y; }),
                       {a, b}, [](const Tensor&, const Tensor& g) { return std::vector<Tensor>{g, neg(g)}; });
}

Tensor mul(const Tensor& a0, const Tensor& b0) {
    auto [a, b] = align("mul", a0, b0);
    return make_result("mul", a.shape(), zip_values(a, b, [](double x, double y) { return x * y; }),
                       {a, b}, [](const Tensor& out, const Tensor& g) {
                           const auto& p = out.node()->parents;
                           return std::vector<Tensor>{mul(g, p[1]), mul(g, p[0])};
                       });
}

Tensor div(const Tensor& a0, const Tensor& b0) {
    auto [a, b] = align("div", a0, b0);
    return make_result("div", a.shape(), zip_values(a, b, [](double x, double y) { return x / y; }),
                       {a, b}, [](const Tensor& out, const Tensor& g) {
                           const auto& p = out.node()->parents;
                           const Tensor ga = div(g, p[1]);
                           return std::vector<Tensor>{ga, neg(mul(ga, div(p[0], p[1])))};
                       });
}

Tensor neg(const Tensor& x) {
    return make_result("neg", x.shape(), map_values(x, [](double v) { return -v; }), {x},
                       [](const Tensor&, const Tensor& g) { return std::vector<Tensor>{neg(g)}; });
}

Tensor scale(const Tensor& x, double c) {
    return make_result("scale", x.shape(), map_values(x, [c](double v) { return c * v; }), {x},
                       [c](const Tensor&, const Tensor& g) { return std::vector<Tensor>{scale(g, c)}; });
}

Tensor add_scalar(const Tensor& x, double c) {
    return make_result("add_scalar", x.shape(), map_values(x, [c](double v) { return v + c; }), {x},
                       [](const Tensor&, const Tensor& g) { return std::vector<Tensor>{g}; });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& x) { return neg(x); }
Tensor operator*(const Tensor& x, double c) { return scale(x, c); }
Tensor operator*(double c, const Tensor& x) { return scale(x, c); }
Tensor operator+(const Tensor& x, double c) { return add_scalar(x, c); }
Tensor operator-(const Tensor& x, double c) { return add_scalar(x, -c); }

Tensor square(const Tensor& x) {
    return make_result("square", x.shape(), map_values(x, [](double v) { return v * v; }), {x},
                       [](const Tensor& out, const Tensor& g) {
                           return std::vector<Tensor>{scale(mul(g, out.node()->parents[0]), 2.0)};
                       });
}

Tensor sqrt(const Tensor& x) {
    return make_result("sqrt", x.shape(), map_values(x, [](double v) { return std::sqrt(v); }), {x},
                       [](const Tensor& out, const Tensor& g) {
                           return std::vector<Tensor>{div(scale(g, 0.5), out)};
                       });
}

Tensor exp(const Tensor& x) {
    return make_result("exp", x.shape(), map_values(x, [](double v) { return std::exp(v); }), {x},
                       [](const Tensor& out, const Tensor& g) { return std::vector<Tensor>{mul(g, out)}; });
}

Tensor log(const Tensor& x) {
    return make_result("log", x.shape(), map_values(x, [](double v) { return std::log(v); }), {x},
                       [](const Tensor& out, const Tensor& g) {
                           return std::vector<Tensor>{div(g, out.node()->parents[0])};
                       });
}

Tensor tanh(const Tensor& x) {
    return make_result("tanh", x.shape(), map_values(x, [](double v) { return std::tanh(v); }), {x},
                       [](const Tensor& out, const Tensor& g) {
                           return std::vector<Tensor>{mul(g, add_scalar(neg(square(out)), 1.0))};
                       });
}

namespace {
double sigmoid_value(double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& x) {
    return make_result("sigmoid", x.shape(), map_values(x, sigmoid_value), {x},
                       [](const Tensor& out, const Tensor& g) {
                           return std::vector<Tensor>{mul(g, mul(out, add_scalar(neg(out), 1.0)))};
                       });
}

Tensor softplus(const Tensor& x) {
    return make_result("softplus", x.shape(),
                       map_values(x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }),
                       {x}, [](const Tensor& out, const Tensor& g) {
                           return std::vector<Tensor>{mul(g, sigmoid(out.node()->parents[0]))};
                       });
}

namespace {
Tensor masked(const std::string& op, const Tensor& x, double lo_slope, double threshold) {
    std::vector<double> mask(x.size());
    std::vector<double> out(x.size());
    const auto v = x.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        mask[i] = v[i] > threshold ? 1.0 : lo_slope;
        out[i] = v[i] * mask[i];
    }
    Tensor m = Tensor::constant(x.shape(), std::move(mask));
    return make_result(op, x.shape(), std::move(out), {x},
                       [m](const Tensor&, const Tensor& g) { return std::vector<Tensor>{mul(g, m)}; });
}
}  // namespace

Tensor relu(const Tensor& x) { return masked("relu", x, 0.0, 0.0); }

Tensor leaky_relu(const Tensor& x, double slope) { return masked("leaky_relu", x, slope, 0.0); }

Tensor clamp_min(const Tensor& x, double lo) {
    std::vector<double> mask(x.size());
    std::vector<double> out(x.size());
    const auto v = x.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        mask[i] = v[i] > lo ? 1.0 : 0.0;
        out[i] = v[i] > lo ? v[i] : lo;
    }
    Tensor m = Tensor::constant(x.shape(), std::move(mask));
    return make_result("clamp_min", x.shape(), std::move(out), {x},
                       [m](const Tensor&, const Tensor& g) { return std::vector<Tensor>{mul(g, m)}; });
}

Tensor safe_reciprocal(const Tensor& x) {
    return make_result("safe_reciprocal", x.shape(),
                       map_values(x, [](double v) { return v == 0.0 ? 0.0 : 1.0 / v; }), {x},
                       [](const Tensor& out, const Tensor& g) {
                           return std::vector<Tensor>{neg(mul(g, square(out)))};
                       });
}

// ---------------------------------------------------------------------------
// Shape and reduction

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.size()) shape_fail("reshape", x.shape(), shape, "element count");
    Shape original = x.shape();
    std::vector<double> v(x.values().begin(), x.values().end());
    return make_result("reshape", std::move(shape), std::move(v), {x},
                       [original](const Tensor&, const Tensor& g) {
                           return std::vector<Tensor>{reshape(g, original)};
                       });
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
    if (x.shape() == shape) return x;
    std::vector<double> out;
    if (x.size() == 1) {
        out.assign(numel(shape), x.values()[0]);
    } else {
        const auto map = broadcast_map("broadcast_to", x.shape(), shape);
        out.resize(map.size());
        const auto v = x.values();
        for (std::size_t i = 0; i < map.size(); ++i) out[i] = v[map[i]];
    }
    Shape original = x.shape();
    return make_result("broadcast_to", shape, std::move(out), {x},
                       [original](const Tensor&, const Tensor& g) {
                           return std::vector<Tensor>{sum_to(g, original)};
                       });
}

Tensor sum_to(const Tensor& x, const Shape& shape) {
    if (x.shape() == shape) return x;
    std::vector<double> out(numel(shape), 0.0);
    const auto v = x.values();
    if (out.size() == 1) {
        if (shape.size() > x.rank()) shape_fail("sum_to", shape, x.shape(), "rank");
        for (double e : v) out[0] += e;
    } else {
        const auto map = broadcast_map("sum_to", shape, x.shape());
        for (std::size_t i = 0; i < map.size(); ++i) out[map[i]] += v[i];
    }
    Shape original = x.shape();
    return make_result("sum_to", shape, std::move(out), {x},
                       [original](const Tensor&, const Tensor& g) {
                           return std::vector<Tensor>{broadcast_to(g, original)};
                       });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    Shape original = x.shape();
    return make_result("sum", {}, {s}, {x}, [original](const Tensor&, const Tensor& g) {
        return std::vector<Tensor>{broadcast_to(g, original)};
    });
}

Tensor mean(const Tensor& x) {
    if (x.size() == 0) throw ShapeError("mean: empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor row_norms(const Tensor& x) {
    if (x.rank() < 1 || x.dim(0) == 0) throw ShapeError("row_norms: need a [B, ...] tensor, got " + to_string(x.shape()));
    const std::size_t rows = x.dim(0);
    const std::size_t cols = x.size() / rows;
    std::vector<double> out(rows, 0.0);
    const auto v = x.values();
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += v[r * cols + c] * v[r * cols + c];
        out[r] = std::sqrt(s);
    }
    Shape original = x.shape();
    return make_result("row_norms", {rows}, std::move(out), {x},
                       [original, rows, cols](const Tensor& out, const Tensor& g) {
                           const Tensor xr = reshape(out.node()->parents[0], {rows, cols});
                           const Tensor coeff = reshape(mul(g, safe_reciprocal(out)), {rows, 1});
                           return std::vector<Tensor>{reshape(mul(broadcast_to(coeff, {rows, cols}), xr), original)};
                       });
}

namespace {

struct ChannelLayout {
    std::size_t outer, channels, inner;
    Shape shape;  // [1, C, 1, ...]
};

ChannelLayout channel_layout(const std::string& op, const Tensor& x, const Tensor& a, const Tensor& b) {
    if (x.rank() < 2) throw ShapeError(op + ": input must be [B, C, ...], got " + to_string(x.shape()));
    const std::size_t c = x.dim(1);
    if (a.shape() != Shape{c} || b.shape() != Shape{c}) {
        throw ShapeError(op + ": per-channel operands must be [" + std::to_string(c) + "], got " + to_string(a.shape()) +
                         " and " + to_string(b.shape()));
    }
    ChannelLayout l{x.dim(0), c, c == 0 || x.dim(0) == 0 ? 0 : x.size() / (x.dim(0) * c), Shape(x.rank(), 1)};
    l.shape[1] = c;
    return l;
}

Tensor per_channel_sum(const Tensor& x, const ChannelLayout& l) {
    return reshape(sum_to(x, l.shape), {l.channels});
}

Tensor needed(const Tensor& parent, Tensor g) { return parent.requires_grad() ? std::move(g) : Tensor{}; }

}  // namespace

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps, std::vector<double>* batch_mean,
                  std::vector<double>* batch_var) {
    const ChannelLayout l = channel_layout("batch_norm", x, gamma, beta);
    const double count = static_cast<double>(l.outer * l.inner);
    if (count == 0) throw ShapeError("batch_norm: empty batch");
    std::vector<double> mu(l.channels, 0.0), var(l.channels, 0.0), inv(l.channels);
    const auto v = x.values();
    auto at = [&l](std::size_t b, std::size_t c) { return (b * l.channels + c) * l.inner; };
    for (std::size_t b = 0; b < l.outer; ++b)
        for (std::size_t c = 0; c < l.channels; ++c)
            for (std::size_t i = 0; i < l.inner; ++i) mu[c] += v[at(b, c) + i];
    for (auto& m : mu) m /= count;
    for (std::size_t b = 0; b < l.outer; ++b)
        for (std::size_t c = 0; c < l.channels; ++c)
            for (std::size_t i = 0; i < l.inner; ++i) {
                const double d = v[at(b, c) + i] - mu[c];
                var[c] += d * d;
            }
    for (std::size_t c = 0; c < l.channels; ++c) {
        var[c] /= count;
        inv[c] = 1.0 / std::sqrt(var[c] + eps);
    }
    std::vector<double> out(x.size());
    const auto gv = gamma.values();
    const auto bv = beta.values();
    for (std::size_t b = 0; b < l.outer; ++b)
        for (std::size_t c = 0; c < l.channels; ++c)
            for (std::size_t i = 0; i < l.inner; ++i) {
                const std::size_t k = at(b, c) + i;
                out[k] = (v[k] - mu[c]) * inv[c] * gv[c] + bv[c];
            }
    if (batch_mean) *batch_mean = mu;
    if (batch_var) *batch_var = var;
    return make_result(
        "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
        [l, count, eps, mu, inv](const Tensor& out, const Tensor& g) {
            const auto& p = out.node()->parents;
            if (grad_enabled()) {
                // Same gradient rebuilt from primitives so it can be differentiated again.
                const Tensor xc = p[0] - scale(sum_to(p[0], l.shape), 1.0 / count);
                const Tensor s = div(Tensor::full(l.shape, 1.0),
                                     sqrt(add_scalar(scale(sum_to(square(xc), l.shape), 1.0 / count), eps)));
                const Tensor xhat = xc * s;
                const Tensor gh = g * reshape(p[1], l.shape);
                const Tensor dx = s * (gh - scale(sum_to(gh, l.shape), 1.0 / count) -
                                       xhat * scale(sum_to(gh * xhat, l.shape), 1.0 / count));
                return std::vector<Tensor>{needed(p[0], dx), needed(p[1], per_channel_sum(g * xhat, l)),
                                           needed(p[2], per_channel_sum(g, l))};
            }
            const auto xv = p[0].values();
            const auto gv = g.values();
            const auto gam = p[1].values();
            std::vector<double> dbeta(l.channels, 0.0), dgamma(l.channels, 0.0);
            auto at = [&l](std::size_t b, std::size_t c) { return (b * l.channels + c) * l.inner; };
            for (std::size_t b = 0; b < l.outer; ++b)
                for (std::size_t c = 0; c < l.channels; ++c)
                    for (std::size_t i = 0; i < l.inner; ++i) {
                        const std::size_t k = at(b, c) + i;
                        dbeta[c] += gv[k];
                        dgamma[c] += gv[k] * (xv[k] - mu[c]) * inv[c];
                    }
            Tensor dx;
            if (p[0].requires_grad()) {
                std::vector<double> d(xv.size());
                for (std::size_t b = 0; b < l.outer; ++b)
                    for (std::size_t c = 0; c < l.channels; ++c)
                        for (std::size_t i = 0; i < l.inner; ++i) {
                            const std::size_t k = at(b, c) + i;
                            const double xhat = (xv[k] - mu[c]) * inv[c];
                            d[k] = gam[c] * inv[c] * (gv[k] - (dbeta[c] + xhat * dgamma[c]) / count);
                        }
                dx = Tensor::constant(p[0].shape(), std::move(d));
            }
            return std::vector<Tensor>{dx, needed(p[1], Tensor::constant({l.channels}, std::move(dgamma))),
                                       needed(p[2], Tensor::constant({l.channels}, std::move(dbeta)))};
        });
}

Tensor channel_affine(const Tensor& x, const Tensor& scale_c, const Tensor& shift_c) {
    const ChannelLayout l = channel_layout("channel_affine", x, scale_c, shift_c);
    const auto v = x.values();
    const auto a = scale_c.values();
    const auto b = shift_c.values();
    std::vector<double> out(x.size());
    for (std::size_t n = 0; n < l.outer; ++n)
        for (std::size_t c = 0; c < l.channels; ++c) {
            const std::size_t base = (n * l.channels + c) * l.inner;
            for (std::size_t i = 0; i < l.inner; ++i) out[base + i] = v[base + i] * a[c] + b[c];
        }
    return make_result("channel_affine", x.shape(), std::move(out), {x, scale_c, shift_c},
                       [l](const Tensor& out, const Tensor& g) {
                           const auto& p = out.node()->parents;
                           if (grad_enabled()) {
                               return std::vector<Tensor>{needed(p[0], g * reshape(p[1], l.shape)),
                                                          needed(p[1], per_channel_sum(g * p[0], l)),
                                                          needed(p[2], per_channel_sum(g, l))};
                           }
                           const auto xv = p[0].values();
                           const auto gv = g.values();
                           const auto av = p[1].values();
                           std::vector<double> dx(p[0].requires_grad() ? xv.size() : 0);
                           std::vector<double> da(l.channels, 0.0), db(l.channels, 0.0);
                           for (std::size_t n = 0; n < l.outer; ++n)
                               for (std::size_t c = 0; c < l.channels; ++c) {
                                   const std::size_t base = (n * l.channels + c) * l.inner;
                                   for (std::size_t i = 0; i < l.inner; ++i) {
                                       const std::size_t k = base + i;
                                       db[c] += gv[k];
                                       da[c] += gv[k] * xv[k];
                                       if (!dx.empty()) dx[k] = gv[k] * av[c];
                                   }
                               }
                           return std::vector<Tensor>{
                               dx.empty() ? Tensor{} : Tensor::constant(p[0].shape(), std::move(dx)),
                               needed(p[1], Tensor::constant({l.channels}, std::move(da))),
                               needed(p[2], Tensor::constant({l.channels}, std::move(db)))};
                       });
}

Tensor transpose(const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("transpose: need rank 2, got " + to_string(x.shape()));
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<double> out(x.size());
    const auto v = x.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
    return make_result("transpose", {c, r}, std::move(out), {x},
                       [](const Tensor&, const Tensor& g) { return std::vector<Tensor>{transpose(g)}; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_fail("matmul", a.shape(), b.shape());
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    std::vector<double> out(m * n);
    Eigen::Map<RowMatrix>(out.data(), static_cast<long>(m), static_cast<long>(n)).noalias() =
        Eigen::Map<const RowMatrix>(a.values().data(), static_cast<long>(m), static_cast<long>(k)) *
        Eigen::Map<const RowMatrix>(b.values().data(), static_cast<long>(k), static_cast<long>(n));
    return make_result("matmul", {m, n}, std::move(out), {a, b}, [](const Tensor& out, const Tensor& g) {
        const auto& p = out.node()->parents;
        return std::vector<Tensor>{p[0].requires_grad() ? matmul(g, transpose(p[1])) : Tensor{},
                                   p[1].requires_grad() ? matmul(transpose(p[0]), g) : Tensor{}};
    });
}

Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<std::size_t>> index, Shape shape) {
    if (index->size() != numel(shape)) shape_fail("gather", {index->size()}, shape, "index count");
    std::vector<double> out(index->size());
    const auto v = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        if ((*index)[i] >= v.size()) throw ShapeError("gather: index out of range");
        out[i] = v[(*index)[i]];
    }
    Shape original = x.shape();
    return make_result("gather", std::move(shape), std::move(out), {x},
                       [index, original](const Tensor&, const Tensor& g) {
                           return std::vector<Tensor>{scatter_add(g, index, original)};
                       });
}

Tensor scatter_add(const Tensor& y, std::shared_ptr<const std::vector<std::size_t>> index, Shape shape) {
    if (index->size() != y.size()) shape_fail("scatter_add", {index->size()}, y.shape(), "index count");
    std::vector<double> out(numel(shape), 0.0);
    const auto v = y.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if ((*index)[i] >= out.size()) throw ShapeError("scatter_add: index out of range");
        out[(*index)[i]] += v[i];
    }
    Shape original = y.shape();
    return make_result("scatter_add", std::move(shape), std::move(out), {y},
                       [index, original](const Tensor&, const Tensor& g) {
                           return std::vector<Tensor>{gather(g, index, original)};
                       });
}

// ---------------------------------------------------------------------------
// Convolution
//
// conv2d, its input gradient and its weight gradient are the three partial
// derivatives of one trilinear form sum X[n,c,ih,iw] W[o,c,ki,kj] Y[n,o,oh,ow]
// (with ih = oh*s + ki - p). Each op's backward is expressed through the other
// two, which makes the whole family differentiable to any order.

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (stride == 0 || in + 2 * pad < kernel) return 0;
    return (in + 2 * pad - kernel) / stride + 1;
}

std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                                       std::size_t pad, std::size_t out_pad) {
    if (in == 0) return 0;
    const long long v = static_cast<long long>(stride) * static_cast<long long>(in - 1) +
                        static_cast<long long>(kernel) - 2 * static_cast<long long>(pad) +
                        static_cast<long long>(out_pad);
    return v > 0 ? static_cast<std::size_t>(v) : 0;
}

namespace {

struct ConvDims {
    std::size_t n, c, h, w;  // input
    std::size_t o, ho, wo;   // output
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unfolds x into [C*kh*kw, N*Ho*Wo] patch columns (zero where padded).
RowMatrix im2col(std::span<const double> x, const ConvDims& d, const ConvGeometry& g) {
    const std::size_t spatial = d.ho * d.wo;
    RowMatrix cols = RowMatrix::Zero(static_cast<long>(d.c * g.kernel_h * g.kernel_w), static_cast<long>(d.n * spatial));
    for (std::size_t c = 0; c < d.c; ++c) {
        for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                double* row = cols.data() + ((c * g.kernel_h + ki) * g.kernel_w + kj) * d.n * spatial;
                for (std::size_t n = 0; n < d.n; ++n) {
                    const double* xp = x.data() + (n * d.c + c) * d.h * d.w;
                    for (std::size_t oh = 0; oh < d.ho; ++oh) {
                        const long ih = static_cast<long>(oh * g.stride_h + ki) - static_cast<long>(g.pad_h);
                        if (ih < 0 || ih >= static_cast<long>(d.h)) continue;
                        for (std::size_t ow = 0; ow < d.wo; ++ow) {
                            const long iw = static_cast<long>(ow * g.stride_w + kj) - static_cast<long>(g.pad_w);
                            if (iw < 0 || iw >= static_cast<long>(d.w)) continue;
                            row[n * spatial + oh * d.wo + ow] = xp[static_cast<std::size_t>(ih) * d.w + static_cast<std::size_t>(iw)];
                        }
                    }
                }
            }
        }
    }
    return cols;
}

// Adjoint of im2col: accumulates patch columns back into an input-shaped array.
std::vector<double> col2im(const RowMatrix& cols, const ConvDims& d, const ConvGeometry& g) {
    const std::size_t spatial = d.ho * d.wo;
    std::vector<double> x(d.n * d.c * d.h * d.w, 0.0);
    for (std::size_t c = 0; c < d.c; ++c) {
        for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                const double* row = cols.data() + ((c * g.kernel_h + ki) * g.kernel_w + kj) * d.n * spatial;
                for (std::size_t n = 0; n < d.n; ++n) {
                    double* xp = x.data() + (n * d.c + c) * d.h * d.w;
                    for (std::size_t oh = 0; oh < d.ho; ++oh) {
                        const long ih = static_cast<long>(oh * g.stride_h + ki) - static_cast<long>(g.pad_h);
                        if (ih < 0 || ih >= static_cast<long>(d.h)) continue;
                        for (std::size_t ow = 0; ow < d.wo; ++ow) {
                            const long iw = static_cast<long>(ow * g.stride_w + kj) - static_cast<long>(g.pad_w);
                            if (iw < 0 || iw >= static_cast<long>(d.w)) continue;
                            xp[static_cast<std::size_t>(ih) * d.w + static_cast<std::size_t>(iw)] += row[n * spatial + oh * d.wo + ow];
                        }
                    }
                }
            }
        }
    }
    return x;
}

// [N, O, Ho*Wo] <-> [O, N*Ho*Wo]
RowMatrix output_to_matrix(std::span<const double> y, const ConvDims& d) {
    const std::size_t spatial = d.ho * d.wo;
    RowMatrix m(static_cast<long>(d.o), static_cast<long>(d.n * spatial));
    for (std::size_t n = 0; n < d.n; ++n)
        for (std::size_t o = 0; o < d.o; ++o)
            std::copy_n(y.data() + (n * d.o + o) * spatial, spatial, m.data() + o * d.n * spatial + n * spatial);
    return m;
}

std::vector<double> matrix_to_output(const RowMatrix& m, const ConvDims& d) {
    const std::size_t spatial = d.ho * d.wo;
    std::vector<double> y(d.n * d.o * spatial);
    for (std::size_t n = 0; n < d.n; ++n)
        for (std::size_t o = 0; o < d.o; ++o)
            std::copy_n(m.data() + o * d.n * spatial + n * spatial, spatial, y.data() + (n * d.o + o) * spatial);
    return y;
}

Eigen::Map<const RowMatrix> weight_matrix(std::span<const double> wt, const ConvDims& d, const ConvGeometry& g) {
    return {wt.data(), static_cast<long>(d.o), static_cast<long>(d.c * g.kernel_h * g.kernel_w)};
}

// Y = F(X, W)
std::vector<double> conv_forward_kernel(std::span<const double> x, std::span<const double> wt,
                                        const ConvDims& d, const ConvGeometry& g) {
    const RowMatrix y = weight_matrix(wt, d, g) * im2col(x, d, g);
    return matrix_to_output(y, d);
}

// X = dT/dX (Y, W)
std::vector<double> conv_input_kernel(std::span<const double> y, std::span<const double> wt,
                                      const ConvDims& d, const ConvGeometry& g) {
    const RowMatrix cols = weight_matrix(wt, d, g).transpose() * output_to_matrix(y, d);
    return col2im(cols, d, g);
}

// W = dT/dW (X, Y)
std::vector<double> conv_weight_kernel(std::span<const double> x, std::span<const double> y,
                                       const ConvDims& d, const ConvGeometry& g) {
    const RowMatrix w = output_to_matrix(y, d) * im2col(x, d, g).transpose();
    return std::vector<double>(w.data(), w.data() + w.size());
}

void check_rank4(const std::string& op, const Tensor& t, const char* what) {
    if (t.rank() != 4) {
        throw ShapeError(op + ": " + what + " must be rank 4, got " + to_string(t.shape()));
    }
}

// Input-gradient op: given output-shaped y and weights, produce an input of
// spatial size (h, w). This is exactly a transposed convolution.
Tensor conv_input(const Tensor& y, const Tensor& wt, const ConvGeometry& g, std::size_t h, std::size_t w) {
    check_rank4("conv_input", y, "input");
    check_rank4("conv_input", wt, "weight");
    if (wt.dim(0) != y.dim(1) || wt.dim(2) != g.kernel_h || wt.dim(3) != g.kernel_w) {
        shape_fail("conv_transpose2d", y.shape(), wt.shape(), "weight must be [in, out, kh, kw]");
    }
    ConvDims d{y.dim(0), wt.dim(1), h, w, y.dim(1), y.dim(2), y.dim(3)};
    if (conv_output_size(h, g.kernel_h, g.stride_h, g.pad_h) != d.ho ||
        conv_output_size(w, g.kernel_w, g.stride_w, g.pad_w) != d.wo) {
        shape_fail("conv_transpose2d", y.shape(), {d.n, d.c, h, w}, "inconsistent geometry");
    }
    auto out = conv_input_kernel(y.values(), wt.values(), d, g);
    return make_result("conv_transpose2d", {d.n, d.c, h, w}, std::move(out), {y, wt},
                       [g](const Tensor& out, const Tensor& grad) {
                           const auto& p = out.node()->parents;
                           return std::vector<Tensor>{
                               p[0].requires_grad() ? conv2d(grad, p[1], g) : Tensor{},
                               p[1].requires_grad() ? conv2d_weight(grad, p[0], g, p[1].dim(0)) : Tensor{}};
                       });
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& wt, const ConvGeometry& g) {
    check_rank4("conv2d", x, "input");
    check_rank4("conv2d", wt, "weight");
    if (wt.dim(1) != x.dim(1) || wt.dim(2) != g.kernel_h || wt.dim(3) != g.kernel_w) {
        shape_fail("conv2d", x.shape(), wt.shape(), "weight must be [out, in, kh, kw]");
    }
    const std::size_t ho = conv_output_size(x.dim(2), g.kernel_h, g.stride_h, g.pad_h);
    const std::size_t wo = conv_output_size(x.dim(3), g.kernel_w, g.stride_w, g.pad_w);
    if (ho == 0 || wo == 0) shape_fail("conv2d", x.shape(), wt.shape(), "kernel larger than padded input");
    ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), wt.dim(0), ho, wo};
    auto out = conv_forward_kernel(x.values(), wt.values(), d, g);
    return make_result("conv2d", {d.n, d.o, ho, wo}, std::move(out), {x, wt},
                       [g](const Tensor& out, const Tensor& grad) {
                           const auto& p = out.node()->parents;
                           return std::vector<Tensor>{
                               p[0].requires_grad() ? conv_input(grad, p[1], g, p[0].dim(2), p[0].dim(3)) : Tensor{},
                               p[1].requires_grad() ? conv2d_weight(p[0], grad, g, p[1].dim(0)) : Tensor{}};
                       });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& wt, const ConvGeometry& g, std::size_t out_pad_h,
                        std::size_t out_pad_w) {
    check_rank4("conv_transpose2d", x, "input");
    if (out_pad_h >= std::max<std::size_t>(g.stride_h, 1) || out_pad_w >= std::max<std::size_t>(g.stride_w, 1)) {
        throw ShapeError("conv_transpose2d: output padding must be smaller than stride");
    }
    const std::size_t h = conv_transpose_output_size(x.dim(2), g.kernel_h, g.stride_h, g.pad_h, out_pad_h);
    const std::size_t w = conv_transpose_output_size(x.dim(3), g.kernel_w, g.stride_w, g.pad_w, out_pad_w);
    if (h == 0 || w == 0) shape_fail("conv_transpose2d", x.shape(), wt.shape(), "empty output");
    return conv_input(x, wt, g, h, w);
}

Tensor conv2d_weight(const Tensor& x, const Tensor& y, const ConvGeometry& g, std::size_t out_channels) {
    check_rank4("conv2d_weight", x, "input");
    check_rank4("conv2d_weight", y, "output");
    if (y.dim(0) != x.dim(0) || y.dim(1) != out_channels) shape_fail("conv2d_weight", x.shape(), y.shape());
    ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), out_channels, y.dim(2), y.dim(3)};
    auto out = conv_weight_kernel(x.values(), y.values(), d, g);
    return make_result("conv2d_weight", {out_channels, d.c, g.kernel_h, g.kernel_w}, std::move(out), {x, y},
                       [g](const Tensor& out, const Tensor& grad) {
                           const auto& p = out.node()->parents;
                           return std::vector<Tensor>{
                               p[0].requires_grad() ? conv_input(p[1], grad, g, p[0].dim(2), p[0].dim(3)) : Tensor{},
                               p[1].requires_grad() ? conv2d(p[0], grad, g) : Tensor{}};
                       });
}

Tensor max_pool2d(const Tensor& x, std::size_t kh, std::size_t kw) {
    check_rank4("max_pool2d", x, "input");
    if (kh == 0 || kw == 0) throw ShapeError("max_pool2d: zero kernel");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = h / kh, wo = w / kw;
    if (ho == 0 || wo == 0) {
        throw ShapeError("max_pool2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than input " + to_string(x.shape()));
    }
    auto index = std::make_shared<std::vector<std::size_t>>(n * c * ho * wo);
    const auto v = x.values();
    std::size_t k = 0;
    for (std::size_t b = 0; b < n * c; ++b) {
        for (std::size_t i = 0; i < ho; ++i) {
            for (std::size_t j = 0; j < wo; ++j) {
                std::size_t best = b * h * w + (i * kh) * w + j * kw;
                for (std::size_t a = 0; a < kh; ++a) {
                    for (std::size_t e = 0; e < kw; ++e) {
                        const std::size_t at = b * h * w + (i * kh + a) * w + (j * kw + e);
                        if (v[at] > v[best]) best = at;
                    }
                }
                (*index)[k++] = best;
            }
        }
    }
    return gather(x, index, {n, c, ho, wo});
}

}  // namespace loadgan::ad
