#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "loadgan/group.hpp"
#include "loadgan/tensor.hpp"

namespace loadgan::codec {

struct EncodingLevels {
    double l3 = 6.0;       // saturation level, kW
    double t_max = 120.0;  // temperature ceiling, degrees F
    // Use each matrix's own maximum as l3 (stored on the encoded image).
    bool per_sample_max = false;

    double l1() const { return l3 / 3.0; }
    double l2() const { return 2.0 * l3 / 3.0; }
    void validate() const;
};

// Channels r, g, b, t, each M x N, stored channel-major; values in [-1, 1].
struct EncodedImage {
    std::size_t steps = 0;
    std::size_t households = 0;
    double l3 = 0.0;  // level the image was encoded with
    std::vector<double> data;

    EncodedImage() = default;
    EncodedImage(std::size_t m, std::size_t n, double level)
        : steps(m), households(n), l3(level), data(4 * m * n, 0.0) {}

    double at(std::size_t c, std::size_t m, std::size_t n) const { return data[(c * steps + m) * households + n]; }
    double& at(std::size_t c, std::size_t m, std::size_t n) { return data[(c * steps + m) * households + n]; }
};

// [0,1] <-> [-1,1]
inline double to_signed(double x) { return (x - 0.5) / 0.5; }
inline double from_signed(double y) { return 0.5 * y + 0.5; }

// Colour of power p on the curve, in [0,1]^3.
std::array<double, 3> encode_power(double p, double l3);

struct Projection {
    double power = 0.0;
    double distance = 0.0;  // Euclidean distance from the colour to the curve
};
// Nearest point on the curve for an [0,1]^3 colour (clamped first).
Projection decode_color(const std::array<double, 3>& rgb, double l3);

struct EncodeStats {
    std::size_t clamped_temperatures = 0;
};

struct DecodeStats {
    double max_distance = 0.0;
    double mean_distance = 0.0;
    std::size_t off_curve = 0;  // cells farther than off_curve_distance from the curve
};

inline constexpr double off_curve_distance = 0.25;

EncodedImage encode_group(const LoadGroup& group, const EncodingLevels& levels, EncodeStats* stats = nullptr);
LoadGroup decode_group(const EncodedImage& image, const EncodingLevels& levels, DecodeStats* stats = nullptr);

// Batch conversion to/from network tensors of shape [B, 4, M, N].
ad::Tensor to_batch(const std::vector<EncodedImage>& images);
std::vector<EncodedImage> from_batch(const ad::Tensor& batch, double l3);

// RGB panel with the temperature channel as a grayscale strip on the right.
void write_png(const std::filesystem::path& path, const EncodedImage& image, std::size_t cell_width = 8);

}  // namespace loadgan::codec
