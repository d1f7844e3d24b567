#include "loadgan/codec.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace loadgan::codec {

void EncodingLevels::validate() const {
    if (!(l3 > 0.0) || !std::isfinite(l3)) throw std::invalid_argument("encoding levels: l3 must be positive");
    if (!(t_max > 0.0) || !std::isfinite(t_max)) throw std::invalid_argument("encoding levels: t_max must be positive");
}

namespace {

using Color = std::array<double, 3>;

struct Segment {
    Color from;
    Color to;
    double p0;
    double p1;
};

// green -> blue -> red -> black
std::array<Segment, 3> curve(double l3) {
    const double l1 = l3 / 3.0;
    const double l2 = 2.0 * l3 / 3.0;
    return {{{{0, 1, 0}, {0, 0, 1}, 0.0, l1}, {{0, 0, 1}, {1, 0, 0}, l1, l2}, {{1, 0, 0}, {0, 0, 0}, l2, l3}}};
}

}  // namespace

Color encode_power(double p, double l3) {
    const double l1 = l3 / 3.0;
    const double l2 = 2.0 * l3 / 3.0;
    if (p < l1) {
        const double s = p / l1;
        return {0.0, 1.0 - s, s};
    }
    if (p < l2) {
        const double s = (p - l1) / (l2 - l1);
        return {s, 0.0, 1.0 - s};
    }
    if (p < l3) {
        const double s = (p - l2) / (l3 - l2);
        return {1.0 - s, 0.0, 0.0};
    }
    return {0.0, 0.0, 0.0};
}

Projection decode_color(const Color& rgb_in, double l3) {
    Color x;
    for (int i = 0; i < 3; ++i) x[i] = std::clamp(rgb_in[i], 0.0, 1.0);
    Projection best{0.0, std::numeric_limits<double>::infinity()};
    for (const auto& seg : curve(l3)) {
        double num = 0.0;
        double den = 0.0;
        for (int i = 0; i < 3; ++i) {
            const double d = seg.to[i] - seg.from[i];
            num += (x[i] - seg.from[i]) * d;
            den += d * d;
        }
        const double s = std::clamp(num / den, 0.0, 1.0);
        double dist2 = 0.0;
        for (int i = 0; i < 3; ++i) {
            const double c = seg.from[i] + s * (seg.to[i] - seg.from[i]);
            dist2 += (x[i] - c) * (x[i] - c);
        }
        const double dist = std::sqrt(dist2);
        // Segments are visited in increasing p, so strict < keeps the smaller p on ties.
        if (dist < best.distance) best = {seg.p0 + s * (seg.p1 - seg.p0), dist};
    }
    return best;
}

EncodedImage encode_group(const LoadGroup& group, const EncodingLevels& levels, EncodeStats* stats) {
    levels.validate();
    group.validate();
    double l3 = levels.l3;
    for (std::size_t m = 0; m < group.steps; ++m) {
        for (std::size_t n = 0; n < group.households; ++n) {
            const double p = group.at(m, n);
            if (!(p >= 0.0)) {
                std::ostringstream os;
                os << "encode: invalid power " << p << " at (m=" << m << ", n=" << n << ") in group '" << group.id << "'";
                throw std::invalid_argument(os.str());
            }
        }
    }
    if (levels.per_sample_max) {
        const double mx = *std::max_element(group.kw.begin(), group.kw.end());
        if (mx > 0.0) l3 = mx;
    }
    EncodedImage img(group.steps, group.households, l3);
    std::size_t clamped = 0;
    for (std::size_t m = 0; m < group.steps; ++m) {
        double t = group.temperature[m] / levels.t_max;
        if (!(t >= 0.0 && t <= 1.0)) {
            ++clamped;
            t = std::isnan(t) ? 0.0 : std::clamp(t, 0.0, 1.0);
        }
        for (std::size_t n = 0; n < group.households; ++n) {
            const Color c = encode_power(group.at(m, n), l3);
            for (std::size_t k = 0; k < 3; ++k) img.at(k, m, n) = to_signed(c[k]);
            img.at(3, m, n) = to_signed(t);
        }
    }
    if (stats) stats->clamped_temperatures += clamped;
    return img;
}

LoadGroup decode_group(const EncodedImage& image, const EncodingLevels& levels, DecodeStats* stats) {
    levels.validate();
    if (image.data.size() != 4 * image.steps * image.households) throw std::invalid_argument("decode: malformed image");
    const double l3 = levels.per_sample_max && image.l3 > 0.0 ? image.l3 : levels.l3;
    LoadGroup g(image.steps, image.households);
    double max_d = 0.0;
    double sum_d = 0.0;
    std::size_t off = 0;
    for (std::size_t m = 0; m < image.steps; ++m) {
        double t_sum = 0.0;
        for (std::size_t n = 0; n < image.households; ++n) {
            Color c;
            for (std::size_t k = 0; k < 3; ++k) c[k] = from_signed(std::clamp(image.at(k, m, n), -1.0, 1.0));
            const auto pr = decode_color(c, l3);
            g.at(m, n) = pr.power;
            max_d = std::max(max_d, pr.distance);
            sum_d += pr.distance;
            if (pr.distance > off_curve_distance) ++off;
            t_sum += std::clamp(image.at(3, m, n), -1.0, 1.0);
        }
        // The t channel is constant across households for encoded data; average otherwise.
        g.temperature[m] = levels.t_max * from_signed(t_sum / static_cast<double>(image.households));
    }
    if (stats) {
        stats->max_distance = max_d;
        stats->off_curve = off;
        stats->mean_distance = image.steps > 0 && image.households > 0 ? sum_d / static_cast<double>(image.steps * image.households) : 0.0;
    }
    return g;
}

ad::Tensor to_batch(const std::vector<EncodedImage>& images) {
    if (images.empty()) throw std::invalid_argument("to_batch: no images");
    const auto m = images[0].steps;
    const auto n = images[0].households;
    std::vector<double> v;
    v.reserve(images.size() * 4 * m * n);
    for (const auto& img : images) {
        if (img.steps != m || img.households != n) throw ad::ShapeError("to_batch: mixed image shapes");
        v.insert(v.end(), img.data.begin(), img.data.end());
    }
    return ad::Tensor::constant({images.size(), 4, m, n}, std::move(v));
}

std::vector<EncodedImage> from_batch(const ad::Tensor& batch, double l3) {
    const auto& s = batch.shape();
    if (s.size() != 4 || s[1] != 4) throw ad::ShapeError("from_batch: expected [B, 4, M, N], got " + ad::to_string(s));
    std::vector<EncodedImage> out;
    const auto vals = batch.values();
    const std::size_t per = 4 * s[2] * s[3];
    for (std::size_t b = 0; b < s[0]; ++b) {
        EncodedImage img(s[2], s[3], l3);
        std::copy(vals.begin() + static_cast<std::ptrdiff_t>(b * per),
                  vals.begin() + static_cast<std::ptrdiff_t>((b + 1) * per), img.data.begin());
        out.push_back(std::move(img));
    }
    return out;
}

void write_png(const std::filesystem::path& path, const EncodedImage& image, std::size_t cell_width) {
    if (cell_width == 0) cell_width = 1;
    const std::size_t gap = 2;
    const std::size_t width = image.households * cell_width + gap + cell_width;
    const std::size_t height = image.steps;
    std::vector<unsigned char> px(width * height * 3, 255);
    auto byte = [](double v) {
        return static_cast<unsigned char>(std::lround(255.0 * from_signed(std::clamp(v, -1.0, 1.0))));
    };
    for (std::size_t m = 0; m < height; ++m) {
        for (std::size_t x = 0; x < width; ++x) {
            unsigned char* p = &px[(m * width + x) * 3];
            if (x < image.households * cell_width) {
                const std::size_t n = x / cell_width;
                for (std::size_t k = 0; k < 3; ++k) p[k] = byte(image.at(k, m, n));
            } else if (x >= image.households * cell_width + gap) {
                p[0] = p[1] = p[2] = byte(image.at(3, m, 0));
            }
        }
    }
    png_image pi{};
    pi.version = PNG_IMAGE_VERSION;
    pi.width = static_cast<png_uint_32>(width);
    pi.height = static_cast<png_uint_32>(height);
    pi.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&pi, path.string().c_str(), 0, px.data(), 0, nullptr)) {
        throw std::runtime_error("write_png " + path.string() + ": " + pi.message);
    }
}

}  // namespace loadgan::codec
