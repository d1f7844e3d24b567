#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "loadgan/rng.hpp"
#include "loadgan/tensor.hpp"

namespace loadgan::nn {

using ad::Shape;
using ad::Tensor;

enum class Mode { train, eval };

enum class LayerKind { dense, conv, conv_transpose, reshape, flatten, max_pool };
enum class Activation { none, relu, leaky_relu, tanh, sigmoid };

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
LayerKind layer_kind_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

struct Pair {
    std::size_t h = 1;
    std::size_t w = 1;
    bool operator==(const Pair&) const = default;
};

// One block of a stack: the op, then optional batch normalization, then the
// activation. Field use depends on kind:
//   dense           in_features -> out_features over [B, F]
//   conv            in_channels -> out_channels, kernel/stride/pad
//   conv_transpose  same plus out_pad
//   reshape         target per-sample shape
//   max_pool        kernel (stride equals kernel)
struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    std::size_t in = 0;
    std::size_t out = 0;
    Pair kernel{};
    Pair stride{};
    Pair pad{0, 0};
    Pair out_pad{0, 0};
    Shape target{};
    Activation activation = Activation::none;
    double slope = 0.2;
    bool norm = false;
    bool operator==(const LayerSpec&) const = default;
};

// Per-sample shape after the layer; throws ShapeError naming the layer.
Shape propagate_shape(const LayerSpec& spec, const Shape& in, std::size_t layer_index);

// ---------------------------------------------------------------------------

struct ParamEntry {
    std::string name;
    Tensor value;
    std::vector<double> sq_avg;  // RMSProp running average of squared gradients
    bool trainable = true;
};

// Copies are deep: a copied store owns fresh leaves with the same values.
class ParameterStore {
public:
    ParameterStore() = default;
    ParameterStore(const ParameterStore& other);
    ParameterStore& operator=(const ParameterStore& other);
    ParameterStore(ParameterStore&&) noexcept = default;
    ParameterStore& operator=(ParameterStore&&) noexcept = default;

    Tensor& add(const std::string& name, Shape shape, std::vector<double> values, bool trainable = true);
    const ParamEntry* find(const std::string& name) const;
    ParamEntry* find(const std::string& name);
    std::vector<ParamEntry>& entries() { return entries_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }
    std::vector<Tensor> trainable() const;
    std::size_t parameter_count() const;

private:
    std::vector<ParamEntry> entries_;
};

struct StepSummary {
    std::size_t updated = 0;
    std::vector<std::string> missing;  // trainable parameters left untouched
};

struct RmsProp {
    double lr = 1e-4;
    double decay = 0.9;
    double eps = 1e-8;

    // s <- decay*s + (1-decay)*g^2 ; p <- p - lr*g/(sqrt(s)+eps)
    StepSummary step(ParameterStore& store, const ad::Gradients& grads) const;
};

// ---------------------------------------------------------------------------

class Network {
public:
    Network() = default;
    // input_shape is per sample (no batch dimension).
    Network(std::vector<LayerSpec> specs, Shape input_shape, Rng& init_rng);

    // x is [B, input_shape...].
    Tensor forward(const Tensor& x, Mode mode);

    const Shape& input_shape() const { return input_shape_; }
    const Shape& output_shape() const { return output_shape_; }
    const std::vector<LayerSpec>& specs() const { return specs_; }
    const std::vector<Shape>& layer_shapes() const { return shapes_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }

    // Stable description of the architecture for checkpoint headers.
    std::string fingerprint() const;

    // Clamp every trainable parameter into [-c, c].
    void clip_parameters(double c);

private:
    Tensor batch_norm(const Tensor& x, std::size_t layer, Mode mode);

    std::vector<LayerSpec> specs_;
    Shape input_shape_;
    Shape output_shape_;
    std::vector<Shape> shapes_;
    ParameterStore params_;

public:
    static constexpr double bn_momentum = 0.1;
    static constexpr double bn_eps = 1e-5;
};

// ---------------------------------------------------------------------------
// Checkpoints: "LGCK" magic, format version, fingerprint, seed, then named
// arrays (rank, dims, little-endian float64 values). Optimizer state is stored
// as extra arrays named "<param>#sq_avg".

inline constexpr std::uint32_t checkpoint_version = 1;

struct CheckpointHeader {
    std::uint32_t version = checkpoint_version;
    std::string fingerprint;
    std::uint64_t seed = 0;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                     const CheckpointHeader& header);
// Loads into an existing store; names, shapes and fingerprint must match.
CheckpointHeader load_checkpoint(const std::filesystem::path& path, ParameterStore& store,
                                 const std::string& expected_fingerprint);

}  // namespace loadgan::nn
