#include "loadgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace loadgan::metrics {

Moments moments(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("moments: empty sample");
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return {mean, std::sqrt(var / n)};
}

double frechet_1d(std::span<const double> a, std::span<const double> b) {
    const auto ma = moments(a);
    const auto mb = moments(b);
    const double dm = ma.mean - mb.mean;
    const double ds = ma.stddev - mb.stddev;
    return dm * dm + ds * ds;
}

double por(std::span<const double> scores) {
    if (scores.empty()) throw std::invalid_argument("por: empty score set");
    const auto hits = std::count_if(scores.begin(), scores.end(), [](double s) { return s > 0.5; });
    return 100.0 * static_cast<double>(hits) / static_cast<double>(scores.size());
}

double mcl(std::span<const double> scores) {
    if (scores.empty()) throw std::invalid_argument("mcl: empty score set");
    double s = 0.0;
    for (double x : scores) s += x;
    return s / static_cast<double>(scores.size());
}

Summary summarize(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("summarize: empty sample");
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    auto q = [&s](double p) {
        const double pos = p * static_cast<double>(s.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, s.size() - 1);
        return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
    };
    const auto m = moments(v);
    return {m.mean, m.stddev, s.front(), q(0.25), q(0.5), q(0.75), s.back(), s.size()};
}

}  // namespace loadgan::metrics
