#include "loadgan/nsg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "loadgan/dataio.hpp"
#include "loadgan/rng.hpp"

namespace loadgan::nsg {

std::string to_string(Difficulty d) {
    switch (d) {
        case Difficulty::very_negative: return "very-negative";
        case Difficulty::negative: return "negative";
        case Difficulty::slightly_negative: return "slightly-negative";
        case Difficulty::almost_positive: return "almost-positive";
    }
    return "?";
}

Difficulty difficulty_from_string(const std::string& s) {
    for (auto d : {Difficulty::very_negative, Difficulty::negative, Difficulty::slightly_negative,
                   Difficulty::almost_positive})
        if (to_string(d) == s) return d;
    throw json_util::ConfigError("unknown difficulty '" + s + "'");
}

void Criteria::validate() const {
    if (!use_mean && !use_peak) throw json_util::ConfigError("nsg: enable at least one criterion");
    if (bins < 2) throw json_util::ConfigError("nsg: need at least 2 bins");
    if (region_bins == 0 || region_bins >= bins) throw json_util::ConfigError("nsg: region must be narrower than the histogram");
    if (k_max >= 0 && static_cast<std::size_t>(k_max) < k_min) throw json_util::ConfigError("nsg: empty K range");
}

json_util::ordered to_json(const Criteria& c) {
    json_util::ordered j;
    j["use_mean"] = c.use_mean;
    j["use_peak"] = c.use_peak;
    j["bins"] = c.bins;
    j["region_bins"] = c.region_bins;
    j["k_min"] = c.k_min;
    j["k_max"] = c.k_max;
    j["difficulty"] = to_string(c.difficulty);
    return j;
}

Criteria criteria_from_json(const json_util::json& j, const std::string& where) {
    json_util::Reader r(j, where);
    Criteria c;
    std::string diff = to_string(c.difficulty);
    r.get("use_mean", c.use_mean);
    r.get("use_peak", c.use_peak);
    r.get("bins", c.bins);
    r.get("region_bins", c.region_bins);
    r.get("k_min", c.k_min);
    r.get("k_max", c.k_max);
    r.get("difficulty", diff);
    r.finish();
    c.difficulty = difficulty_from_string(diff);
    c.validate();
    return c;
}

double Histogram::distance(double x) const {
    if (x < red_lo()) return (red_lo() - x) / width;
    if (x > red_hi()) return (x - red_hi()) / width;
    return 0.0;
}

double profile_mean(const std::vector<double>& p) {
    return std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
}

double profile_peak(const std::vector<double>& p) { return *std::max_element(p.begin(), p.end()); }

Histogram fit_histogram(const std::vector<double>& values, std::size_t bins, std::size_t region_bins,
                        const std::string& name) {
    if (values.empty()) throw std::invalid_argument("nsg: no positives to fit");
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    Histogram h;
    h.lo = *mn;
    h.width = (*mx - *mn) / static_cast<double>(bins);
    h.counts.assign(bins, 0);
    if (!(h.width > 0.0)) {
        throw std::invalid_argument("nsg: " + name + " distribution is degenerate (single value); use a more varied corpus");
    }
    for (double v : values) {
        const auto b = static_cast<std::size_t>(std::floor((v - h.lo) / h.width));
        ++h.counts[std::min(b, bins - 1)];
    }
    const auto occupied = std::count_if(h.counts.begin(), h.counts.end(), [](std::size_t c) { return c > 0; });
    if (occupied < 2) {
        throw std::invalid_argument("nsg: " + name + " distribution occupies a single bin; use a more varied corpus");
    }
    std::size_t best = 0, best_mass = 0;
    for (std::size_t first = 0; first + region_bins <= bins; ++first) {
        const std::size_t mass = std::accumulate(h.counts.begin() + static_cast<long>(first),
                                                 h.counts.begin() + static_cast<long>(first + region_bins), std::size_t{0});
        if (mass > best_mass) {
            best_mass = mass;
            best = first;
        }
    }
    h.red_first = best;
    h.red_last = best + region_bins - 1;
    return h;
}

Reference fit_reference(const SampleSet& positives, const Criteria& criteria) {
    criteria.validate();
    std::vector<double> means, peaks;
    for (const auto& g : positives.groups)
        for (std::size_t n = 0; n < g.households; ++n) {
            const auto c = g.column(n);
            means.push_back(profile_mean(c));
            peaks.push_back(profile_peak(c));
        }
    return {fit_histogram(means, criteria.bins, criteria.region_bins, "mean"),
            fit_histogram(peaks, criteria.bins, criteria.region_bins, "peak")};
}

json_util::ordered to_json(const Reference& r) {
    auto hist = [](const Histogram& h) {
        json_util::ordered j;
        j["lo"] = h.lo;
        j["width"] = h.width;
        j["counts"] = h.counts;
        j["red_first"] = h.red_first;
        j["red_last"] = h.red_last;
        return j;
    };
    return {{"mean", hist(r.mean)}, {"peak", hist(r.peak)}};
}

bool out_pick_allowed(double distance, Difficulty d) {
    switch (d) {
        case Difficulty::very_negative: return distance >= 2.0;
        case Difficulty::negative: return distance >= 1.0;
        case Difficulty::slightly_negative: return distance > 0.0;
        case Difficulty::almost_positive: return distance > 0.0 && distance <= 1.0;
    }
    return false;
}

namespace {

struct Candidate {
    std::size_t index;
    bool in;
    bool out;
};

std::vector<Candidate> classify(const SampleSet& pool, const std::vector<std::size_t>& members, const Reference& ref,
                                const Criteria& c) {
    std::vector<Candidate> out;
    for (std::size_t i : members) {
        const auto& p = pool.groups[i].kw;
        const double dm = ref.mean.distance(profile_mean(p));
        const double dp = ref.peak.distance(profile_peak(p));
        Candidate cand{i, true, true};
        if (c.use_mean) {
            cand.in = cand.in && dm == 0.0;
            cand.out = cand.out && out_pick_allowed(dm, c.difficulty);
        }
        if (c.use_peak) {
            cand.in = cand.in && dp == 0.0;
            cand.out = cand.out && out_pick_allowed(dp, c.difficulty);
        }
        out.push_back(cand);
    }
    return out;
}

std::vector<std::size_t> pick(std::vector<std::size_t> from, std::size_t k, Rng& rng) {
    for (std::size_t i = 0; i < k; ++i) std::swap(from[i], from[i + rng.index(from.size() - i)]);
    from.resize(k);
    return from;
}

std::string sample_id(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%05zu", prefix, i);
    return buf;
}

void check_pool(const SampleSet& pool) {
    for (const auto& g : pool.groups)
        if (g.households != 1) throw std::invalid_argument("nsg: pool entries must be one-column profiles");
}

}  // namespace

SampleSet generate_negatives(const SampleSet& pool, const Reference& reference, const Criteria& criteria,
                             std::size_t households, std::size_t count, std::uint64_t seed, Report* report) {
    criteria.validate();
    check_pool(pool);
    if (households == 0) throw std::invalid_argument("nsg: households must be positive");
    const std::size_t k_hi = criteria.k_max < 0 ? households / 2 : std::min<std::size_t>(criteria.k_max, households);
    if (criteria.k_min > k_hi) throw std::invalid_argument("nsg: K range is empty for this group size");

    struct Week {
        std::vector<std::size_t> in, out;
    };
    std::vector<Week> weeks;
    for (const auto& [start, members] : dataio::pool_by_week(pool)) {
        Week w;
        for (const auto& c : classify(pool, members, reference, criteria)) {
            if (c.in) w.in.push_back(c.index);
            if (c.out) w.out.push_back(c.index);
        }
        weeks.push_back(std::move(w));
    }

    SampleSet out;
    Report rep;
    rep.requested = count;
    for (std::size_t i = 0; i < count; ++i) {
        // Per-sample streams keep K draws aligned across difficulty settings.
        Rng rng(derive_seed(seed, "negative/" + std::to_string(i)));
        const std::size_t k = criteria.k_min + rng.index(k_hi - criteria.k_min + 1);
        const std::size_t n_out = households - k;
        bool done = false;
        for (std::size_t w : rng.permutation(weeks.size())) {
            const Week& wk = weeks[w];
            if (wk.in.size() < k || wk.out.size() < n_out) continue;
            std::vector<std::size_t> members = pick(wk.in, k, rng);
            const auto outs = pick(wk.out, n_out, rng);
            members.insert(members.end(), outs.begin(), outs.end());
            out.add(dataio::assemble_group(pool, members, Provenance::nsg_negative, sample_id("nsg", out.size())),
                    Label{LabelState::negative, std::nullopt});
            rep.k_values.push_back(k);
            done = true;
            break;
        }
        if (!done) ++rep.shortfall;
    }
    rep.produced = out.size();
    out.metadata["nsg.criteria"] = to_json(criteria).dump();
    if (report) *report = rep;
    return out;
}

SampleSet random_groups(const SampleSet& pool, std::size_t households, std::size_t count, std::uint64_t seed,
                        Provenance provenance, LabelState label, Report* report) {
    check_pool(pool);
    std::vector<std::vector<std::size_t>> weeks;
    for (const auto& [start, members] : dataio::pool_by_week(pool))
        if (members.size() >= households) weeks.push_back(members);
    SampleSet out;
    Report rep;
    rep.requested = count;
    if (weeks.empty()) {
        rep.shortfall = count;
        if (report) *report = rep;
        return out;
    }
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, "random/" + std::to_string(i)));
        const auto& wk = weeks[rng.index(weeks.size())];
        out.add(dataio::assemble_group(pool, pick(wk, households, rng), provenance, sample_id("rand", i)),
                Label{label, std::nullopt});
    }
    rep.produced = out.size();
    if (report) *report = rep;
    return out;
}

}  // namespace loadgan::nsg
