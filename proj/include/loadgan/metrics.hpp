#pragma once

#include <span>
#include <vector>

namespace loadgan::metrics {

struct Moments {
    double mean = 0.0;
    double stddev = 0.0;  // population
};

Moments moments(std::span<const double> v);

// Frechet distance between Gaussian fits of two 1-D samples:
// (mean_a - mean_b)^2 + (sd_a - sd_b)^2.
double frechet_1d(std::span<const double> a, std::span<const double> b);

// Share of scores strictly above 0.5, as a percentage. Throws on empty input.
double por(std::span<const double> scores);
// Mean confidence. Throws on empty input.
double mcl(std::span<const double> scores);

struct Summary {
    double mean = 0, stddev = 0, min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
    std::size_t count = 0;
};
// Quartiles by linear interpolation between order statistics.
Summary summarize(std::span<const double> v);

}  // namespace loadgan::metrics
