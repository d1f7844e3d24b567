#pragma once

// Statistic-guided negative samples: groups whose columns are drawn partly
// from the bulk of the real per-profile mean/peak distributions and partly
// from outside it.

#include <cstdint>
#include <string>
#include <vector>

#include "loadgan/group.hpp"
#include "loadgan/json_util.hpp"

namespace loadgan::nsg {

enum class Difficulty { very_negative, negative, slightly_negative, almost_positive };

std::string to_string(Difficulty d);
Difficulty difficulty_from_string(const std::string& s);

struct Criteria {
    bool use_mean = true;
    bool use_peak = true;
    std::size_t bins = 6;
    std::size_t region_bins = 2;  // width of the in-distribution window
    std::size_t k_min = 0;
    long k_max = -1;  // -1: N/2
    Difficulty difficulty = Difficulty::negative;

    void validate() const;
};

json_util::ordered to_json(const Criteria& c);
Criteria criteria_from_json(const json_util::json& j, const std::string& where = "nsg");

// Equal-width histogram of one statistic with its highest-mass window.
struct Histogram {
    double lo = 0.0;
    double width = 0.0;
    std::vector<std::size_t> counts;
    std::size_t red_first = 0;  // first bin of the in-distribution window
    std::size_t red_last = 0;   // last bin, inclusive

    double edge(std::size_t i) const { return lo + width * static_cast<double>(i); }
    double red_lo() const { return edge(red_first); }
    double red_hi() const { return edge(red_last + 1); }
    // Distance from the window in bin widths; 0 inside it.
    double distance(double x) const;
    bool in_red(double x) const { return distance(x) == 0.0; }
};

struct Reference {
    Histogram mean;
    Histogram peak;
};

// Fits both histograms on every column of the positives.
Reference fit_reference(const SampleSet& positives, const Criteria& criteria);
Histogram fit_histogram(const std::vector<double>& values, std::size_t bins, std::size_t region_bins,
                        const std::string& name);

json_util::ordered to_json(const Reference& r);

double profile_mean(const std::vector<double>& p);
double profile_peak(const std::vector<double>& p);

// True when the distance from the window satisfies the difficulty:
// very-negative >= 2 widths, negative >= 1, slightly-negative > 0,
// almost-positive in (0, 1].
bool out_pick_allowed(double distance, Difficulty d);

struct Report {
    std::size_t requested = 0;
    std::size_t produced = 0;
    std::size_t shortfall = 0;
    std::vector<std::size_t> k_values;  // in-region columns per produced sample
};

// pool: one-column profiles (see dataio::profile_pool). Every sample is
// assembled from profiles of a single week; the first K columns are
// in-region picks and the remaining N-K are out-region picks.
SampleSet generate_negatives(const SampleSet& pool, const Reference& reference, const Criteria& criteria,
                             std::size_t households, std::size_t count, std::uint64_t seed, Report* report = nullptr);

// Baseline negatives: N distinct same-week profiles chosen uniformly.
SampleSet random_groups(const SampleSet& pool, std::size_t households, std::size_t count, std::uint64_t seed,
                        Provenance provenance, LabelState label, Report* report = nullptr);

}  // namespace loadgan::nsg
