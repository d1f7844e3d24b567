#include "loadgan/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "loadgan/io_util.hpp"

namespace loadgan::nn {

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv: return "conv";
        case LayerKind::conv_transpose: return "conv_transpose";
        case LayerKind::reshape: return "reshape";
        case LayerKind::flatten: return "flatten";
        case LayerKind::max_pool: return "max_pool";
    }
    return "?";
}

std::string to_string(Activation act) {
    switch (act) {
        case Activation::none: return "none";
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
    for (auto k : {LayerKind::dense, LayerKind::conv, LayerKind::conv_transpose, LayerKind::reshape,
                   LayerKind::flatten, LayerKind::max_pool}) {
        if (to_string(k) == s) return k;
    }
    throw std::invalid_argument("unknown layer kind '" + s + "'");
}

Activation activation_from_string(const std::string& s) {
    for (auto a : {Activation::none, Activation::relu, Activation::leaky_relu, Activation::tanh,
                   Activation::sigmoid}) {
        if (to_string(a) == s) return a;
    }
    throw std::invalid_argument("unknown activation '" + s + "'");
}

namespace {

[[noreturn]] void layer_fail(std::size_t index, const LayerSpec& spec, const Shape& in,
                             const std::string& why) {
    std::ostringstream os;
    os << "layer " << index << " (" << to_string(spec.kind) << "): input shape " << ad::to_string(in)
       << ": " << why;
    throw ad::ShapeError(os.str());
}

}  // namespace

Shape propagate_shape(const LayerSpec& s, const Shape& in, std::size_t index) {
    switch (s.kind) {
        case LayerKind::dense:
            if (in.size() != 1 || in[0] != s.in) {
                layer_fail(index, s, in, "expected [" + std::to_string(s.in) + "]");
            }
            return {s.out};
        case LayerKind::conv: {
            if (in.size() != 3 || in[0] != s.in) {
                layer_fail(index, s, in, "expected [" + std::to_string(s.in) + ", H, W]");
            }
            const auto h = ad::conv_output_size(in[1], s.kernel.h, s.stride.h, s.pad.h);
            const auto w = ad::conv_output_size(in[2], s.kernel.w, s.stride.w, s.pad.w);
            if (h == 0 || w == 0) layer_fail(index, s, in, "kernel larger than padded input");
            return {s.out, h, w};
        }
        case LayerKind::conv_transpose: {
            if (in.size() != 3 || in[0] != s.in) {
                layer_fail(index, s, in, "expected [" + std::to_string(s.in) + ", H, W]");
            }
            if (s.out_pad.h >= s.stride.h || s.out_pad.w >= s.stride.w) {
                layer_fail(index, s, in, "output padding must be smaller than stride");
            }
            const auto h = ad::conv_transpose_output_size(in[1], s.kernel.h, s.stride.h, s.pad.h, s.out_pad.h);
            const auto w = ad::conv_transpose_output_size(in[2], s.kernel.w, s.stride.w, s.pad.w, s.out_pad.w);
            if (h == 0 || w == 0) layer_fail(index, s, in, "empty output");
            return {s.out, h, w};
        }
        case LayerKind::reshape:
            if (ad::numel(s.target) != ad::numel(in)) {
                layer_fail(index, s, in, "cannot reshape to " + ad::to_string(s.target));
            }
            return s.target;
        case LayerKind::flatten:
            return {ad::numel(in)};
        case LayerKind::max_pool:
            if (in.size() != 3 || in[1] < s.kernel.h || in[2] < s.kernel.w) {
                layer_fail(index, s, in, "pool kernel does not fit");
            }
            return {in[0], in[1] / s.kernel.h, in[2] / s.kernel.w};
    }
    layer_fail(index, s, in, "unknown kind");
}

// ---------------------------------------------------------------------------

ParameterStore::ParameterStore(const ParameterStore& other) : entries_(other.entries_) {
    for (auto& e : entries_) {
        const Tensor& src = e.value;
        e.value = e.trainable ? Tensor::parameter(src.shape(), std::vector<double>(src.values().begin(), src.values().end()))
                              : Tensor::constant(src.shape(), std::vector<double>(src.values().begin(), src.values().end()));
    }
}

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
    if (this != &other) *this = ParameterStore(other);
    return *this;
}

Tensor& ParameterStore::add(const std::string& name, Shape shape, std::vector<double> values, bool trainable) {
    if (find(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    ParamEntry e;
    e.name = name;
    const std::size_t n = values.size();
    e.value = trainable ? Tensor::parameter(std::move(shape), std::move(values))
                        : Tensor::constant(std::move(shape), std::move(values));
    e.sq_avg.assign(trainable ? n : 0, 0.0);
    e.trainable = trainable;
    entries_.push_back(std::move(e));
    return entries_.back().value;
}

const ParamEntry* ParameterStore::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return &e;
    return nullptr;
}

ParamEntry* ParameterStore::find(const std::string& name) {
    for (auto& e : entries_)
        if (e.name == name) return &e;
    return nullptr;
}

std::vector<Tensor> ParameterStore::trainable() const {
    std::vector<Tensor> out;
    for (const auto& e : entries_)
        if (e.trainable) out.push_back(e.value);
    return out;
}

std::size_t ParameterStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_)
        if (e.trainable) n += e.value.size();
    return n;
}

StepSummary RmsProp::step(ParameterStore& store, const ad::Gradients& grads) const {
    if (!(lr > 0) || !(decay > 0 && decay < 1) || !(eps > 0)) {
        throw std::invalid_argument("rmsprop: need lr > 0, 0 < decay < 1, eps > 0");
    }
    StepSummary summary;
    for (auto& e : store.entries()) {
        if (!e.trainable) continue;
        const Tensor g = grads[e.value];
        if (!g.defined()) {
            summary.missing.push_back(e.name);
            continue;
        }
        auto& p = e.value.mutable_values();
        const auto gv = g.values();
        for (std::size_t i = 0; i < p.size(); ++i) {
            e.sq_avg[i] = decay * e.sq_avg[i] + (1.0 - decay) * gv[i] * gv[i];
            p[i] -= lr * gv[i] / (std::sqrt(e.sq_avg[i]) + eps);
        }
        ++summary.updated;
    }
    return summary;
}

// ---------------------------------------------------------------------------

Network::Network(std::vector<LayerSpec> specs, Shape input_shape, Rng& rng)
    : specs_(std::move(specs)), input_shape_(std::move(input_shape)) {
    Shape shape = input_shape_;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        const auto& s = specs_[i];
        const Shape next = propagate_shape(s, shape, i);
        const std::string prefix = "layer" + std::to_string(i);
        auto uniform_init = [&](std::size_t count, std::size_t fan_in) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
            std::vector<double> v(count);
            for (auto& x : v) x = rng.uniform(-bound, bound);
            return v;
        };
        switch (s.kind) {
            case LayerKind::dense:
                params_.add(prefix + ".weight", {s.in, s.out}, uniform_init(s.in * s.out, s.in));
                params_.add(prefix + ".bias", {s.out}, uniform_init(s.out, s.in));
                break;
            case LayerKind::conv: {
                const std::size_t fan = s.in * s.kernel.h * s.kernel.w;
                params_.add(prefix + ".weight", {s.out, s.in, s.kernel.h, s.kernel.w},
                            uniform_init(s.out * fan, fan));
                params_.add(prefix + ".bias", {s.out}, uniform_init(s.out, fan));
                break;
            }
            case LayerKind::conv_transpose: {
                const std::size_t fan = s.out * s.kernel.h * s.kernel.w;
                params_.add(prefix + ".weight", {s.in, s.out, s.kernel.h, s.kernel.w},
                            uniform_init(s.in * fan, fan));
                params_.add(prefix + ".bias", {s.out}, uniform_init(s.out, fan));
                break;
            }
            default:
                break;
        }
        if (s.norm) {
            if (s.kind != LayerKind::dense && s.kind != LayerKind::conv && s.kind != LayerKind::conv_transpose) {
                throw ad::ShapeError("layer " + std::to_string(i) + ": normalization needs a dense or conv layer");
            }
            const std::size_t c = next[0];
            params_.add(prefix + ".bn.gamma", {c}, std::vector<double>(c, 1.0));
            params_.add(prefix + ".bn.beta", {c}, std::vector<double>(c, 0.0));
            params_.add(prefix + ".bn.running_mean", {c}, std::vector<double>(c, 0.0), false);
            params_.add(prefix + ".bn.running_var", {c}, std::vector<double>(c, 1.0), false);
        }
        shapes_.push_back(next);
        shape = next;
    }
    output_shape_ = shape;
}

namespace {

Shape with_batch(std::size_t b, const Shape& s) {
    Shape out{b};
    out.insert(out.end(), s.begin(), s.end());
    return out;
}

Tensor ones(std::size_t c) { return Tensor::constant({c}, std::vector<double>(c, 1.0)); }

}  // namespace

Tensor Network::batch_norm(const Tensor& x, std::size_t layer, Mode mode) {
    const std::string prefix = "layer" + std::to_string(layer) + ".bn.";
    ParamEntry* gamma = params_.find(prefix + "gamma");
    ParamEntry* beta = params_.find(prefix + "beta");
    ParamEntry* rmean = params_.find(prefix + "running_mean");
    ParamEntry* rvar = params_.find(prefix + "running_var");
    const std::size_t c = x.dim(1);
    if (mode == Mode::train) {
        std::vector<double> mu, var;
        Tensor y = ad::batch_norm(x, gamma->value, beta->value, bn_eps, &mu, &var);
        const double count = static_cast<double>(x.size() / c);
        auto& rm = rmean->value.mutable_values();
        auto& rv = rvar->value.mutable_values();
        const double unbias = count > 1 ? count / (count - 1.0) : 1.0;
        for (std::size_t i = 0; i < c; ++i) {
            rm[i] = (1.0 - bn_momentum) * rm[i] + bn_momentum * mu[i];
            rv[i] = (1.0 - bn_momentum) * rv[i] + bn_momentum * var[i] * unbias;
        }
        return y;
    }
    std::vector<double> inv(c), shift(c);
    for (std::size_t i = 0; i < c; ++i) {
        inv[i] = 1.0 / std::sqrt(rvar->value.at(i) + bn_eps);
        shift[i] = -rmean->value.at(i) * inv[i];
    }
    // gamma * (x - mean) / sd + beta as one per-channel affine map
    const Tensor inv_t = Tensor::constant({c}, std::move(inv));
    return ad::channel_affine(x, gamma->value * inv_t, gamma->value * Tensor::constant({c}, std::move(shift)) + beta->value);
}

Tensor Network::forward(const Tensor& x0, Mode mode) {
    if (x0.rank() != input_shape_.size() + 1 || !std::equal(input_shape_.begin(), input_shape_.end(), x0.shape().begin() + 1)) {
        throw ad::ShapeError("network input: expected [B, ...] with per-sample shape " + ad::to_string(input_shape_) +
                             ", got " + ad::to_string(x0.shape()));
    }
    const std::size_t batch = x0.dim(0);
    Tensor x = x0;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        const auto& s = specs_[i];
        const std::string prefix = "layer" + std::to_string(i);
        switch (s.kind) {
            case LayerKind::dense: {
                const Tensor& w = params_.find(prefix + ".weight")->value;
                const Tensor& b = params_.find(prefix + ".bias")->value;
                x = ad::channel_affine(ad::matmul(x, w), ones(s.out), b);
                break;
            }
            case LayerKind::conv: {
                const Tensor& w = params_.find(prefix + ".weight")->value;
                const Tensor& b = params_.find(prefix + ".bias")->value;
                ad::ConvGeometry g{s.kernel.h, s.kernel.w, s.stride.h, s.stride.w, s.pad.h, s.pad.w};
                x = ad::channel_affine(ad::conv2d(x, w, g), ones(s.out), b);
                break;
            }
            case LayerKind::conv_transpose: {
                const Tensor& w = params_.find(prefix + ".weight")->value;
                const Tensor& b = params_.find(prefix + ".bias")->value;
                ad::ConvGeometry g{s.kernel.h, s.kernel.w, s.stride.h, s.stride.w, s.pad.h, s.pad.w};
                x = ad::channel_affine(ad::conv_transpose2d(x, w, g, s.out_pad.h, s.out_pad.w), ones(s.out), b);
                break;
            }
            case LayerKind::reshape:
            case LayerKind::flatten:
                x = ad::reshape(x, with_batch(batch, shapes_[i]));
                break;
            case LayerKind::max_pool:
                x = ad::max_pool2d(x, s.kernel.h, s.kernel.w);
                break;
        }
        if (s.norm) x = batch_norm(x, i, mode);
        switch (s.activation) {
            case Activation::none: break;
            case Activation::relu: x = ad::relu(x); break;
            case Activation::leaky_relu: x = ad::leaky_relu(x, s.slope); break;
            case Activation::tanh: x = ad::tanh(x); break;
            case Activation::sigmoid: x = ad::sigmoid(x); break;
        }
    }
    return x;
}

std::string Network::fingerprint() const {
    std::ostringstream os;
    os << "in" << ad::to_string(input_shape_);
    for (const auto& s : specs_) {
        os << '|' << to_string(s.kind) << ':' << s.in << ':' << s.out << ":k" << s.kernel.h << 'x' << s.kernel.w
           << ":s" << s.stride.h << 'x' << s.stride.w << ":p" << s.pad.h << 'x' << s.pad.w << ":op" << s.out_pad.h
           << 'x' << s.out_pad.w << ":t" << ad::to_string(s.target) << ':' << to_string(s.activation);
        if (s.activation == Activation::leaky_relu) os << '(' << s.slope << ')';
        if (s.norm) os << ":bn";
    }
    return os.str();
}

void Network::clip_parameters(double c) {
    for (auto& e : params_.entries()) {
        if (!e.trainable) continue;
        for (auto& v : e.value.mutable_values()) v = std::clamp(v, -c, c);
    }
}

// ---------------------------------------------------------------------------

namespace {

constexpr char magic[4] = {'L', 'G', 'C', 'K'};

using io::put;

template <class T>
T get(std::istream& is, const std::filesystem::path& path) {
    return io::get<T>(is, "checkpoint " + path.string());
}

void put_string(std::ostream& os, const std::string& s) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const std::filesystem::path& path) {
    const auto n = get<std::uint32_t>(is, path);
    if (n > (1u << 24)) throw std::runtime_error("checkpoint " + path.string() + ": corrupt string length");
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw std::runtime_error("checkpoint " + path.string() + ": truncated");
    return s;
}

void put_array(std::ostream& os, const std::string& name, const Shape& shape, std::span<const double> v) {
    put_string(os, name);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put<std::uint64_t>(os, d);
    for (double x : v) put<double>(os, x);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store, const CheckpointHeader& header) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    os.write(magic, 4);
    put<std::uint32_t>(os, header.version);
    put_string(os, header.fingerprint);
    put<std::uint64_t>(os, header.seed);
    std::uint32_t count = 0;
    for (const auto& e : store.entries()) count += e.trainable ? 2 : 1;
    put<std::uint32_t>(os, count);
    for (const auto& e : store.entries()) {
        put_array(os, e.name, e.value.shape(), e.value.values());
        if (e.trainable) put_array(os, e.name + "#sq_avg", e.value.shape(), e.sq_avg);
    }
    if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

CheckpointHeader load_checkpoint(const std::filesystem::path& path, ParameterStore& store,
                                 const std::string& expected_fingerprint) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
    char m[4];
    is.read(m, 4);
    if (!is || std::memcmp(m, magic, 4) != 0) throw std::runtime_error(path.string() + ": not a checkpoint");
    CheckpointHeader h;
    h.version = get<std::uint32_t>(is, path);
    if (h.version != checkpoint_version) {
        throw std::runtime_error(path.string() + ": unsupported checkpoint version " + std::to_string(h.version));
    }
    h.fingerprint = get_string(is, path);
    if (!expected_fingerprint.empty() && h.fingerprint != expected_fingerprint) {
        throw std::runtime_error(path.string() + ": architecture fingerprint mismatch");
    }
    h.seed = get<std::uint64_t>(is, path);
    const auto count = get<std::uint32_t>(is, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = get_string(is, path);
        const auto rank = get<std::uint32_t>(is, path);
        Shape shape(rank);
        for (auto& d : shape) d = get<std::uint64_t>(is, path);
        const bool is_state = name.size() > 7 && name.ends_with("#sq_avg");
        const std::string base = is_state ? name.substr(0, name.size() - 7) : name;
        ParamEntry* e = store.find(base);
        if (!e || e->value.shape() != shape) {
            throw std::runtime_error(path.string() + ": array '" + name + "' does not match the model");
        }
        std::vector<double>& dst = is_state ? e->sq_avg : e->value.mutable_values();
        dst.resize(ad::numel(shape));
        for (auto& v : dst) v = get<double>(is, path);
    }
    return h;
}

}  // namespace loadgan::nn
