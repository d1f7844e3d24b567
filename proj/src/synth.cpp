#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "loadgan/dataio.hpp"
#include "loadgan/rng.hpp"

namespace loadgan::dataio {

void CorpusSpec::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("corpus spec: " + what); };
    if (groups == 0 || households == 0 || weeks == 0) fail("groups, households and weeks must be positive");
    if (cadence <= 0 || 1440 % cadence != 0) fail("cadence must divide one day");
    if (!(0.0 < base_min && base_min <= base_max)) fail("bad base range");
    if (!(0.0 < pool_base_min && pool_base_min <= pool_base_max)) fail("bad pool base range");
    if (!(beta_min >= 0.0 && beta_min <= beta_max)) fail("bad weather sensitivity range");
    if (noise < 0.0) fail("noise must be non-negative");
    if (spike_rate < 0.0 || spike_rate > 1.0 || missing_rate < 0.0 || missing_rate > 1.0) fail("rates must be in [0, 1]");
    if (!(0.0 <= spike_min && spike_min <= spike_max)) fail("bad spike range");
}

double hvac_factor(double temp_f) {
    return std::max(0.0, temp_f - 70.0) / 15.0 + std::max(0.0, 50.0 - temp_f) / 30.0;
}

namespace {

// Daily shape shared by every household of a group.
struct ShapeParams {
    double night;
    double morning_amp, morning_hour, morning_width;
    double midday_amp;
    double evening_amp, evening_hour, evening_width;
    double weekend_shift;

    static ShapeParams draw(Rng& rng) {
        ShapeParams p;
        p.night = rng.uniform(0.25, 0.5);
        p.morning_amp = rng.uniform(0.3, 1.0);
        p.morning_hour = rng.uniform(6.0, 8.5);
        p.morning_width = rng.uniform(0.7, 1.5);
        p.midday_amp = rng.uniform(0.05, 0.5);
        p.evening_amp = rng.uniform(0.7, 1.6);
        p.evening_hour = rng.uniform(17.0, 20.5);
        p.evening_width = rng.uniform(1.2, 2.5);
        p.weekend_shift = rng.uniform(0.5, 2.0);
        return p;
    }

    double at(double hour, int day) const {
        auto bump = [hour](double centre, double width) {
            const double z = (hour - centre) / width;
            return std::exp(-0.5 * z * z);
        };
        const bool weekend = day >= 5;
        const double shift = weekend ? weekend_shift : 0.0;
        const double midday = weekend ? midday_amp * (day == 6 ? 2.5 : 2.0) : midday_amp;
        return night + morning_amp * bump(morning_hour + shift, morning_width) + midday * bump(13.0, 2.5) +
               evening_amp * bump(evening_hour, evening_width);
    }
};

Series synth_temperature(const CorpusSpec& spec, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "temperature"));
    Series s;
    s.start = spec.start;
    s.cadence = spec.cadence;
    const std::size_t per_day = static_cast<std::size_t>(1440 / spec.cadence);
    const std::size_t n = spec.weeks * 7 * per_day;
    s.values.resize(n);
    double anomaly = 0.0;
    const double phi = 0.995;
    const double sigma = 6.0 * std::sqrt(1.0 - phi * phi);
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t t = spec.start + static_cast<std::int64_t>(i) * spec.cadence;
        const double day = static_cast<double>(t) / 1440.0;
        const double year_phase = 2.0 * std::numbers::pi * (std::fmod(day, 365.25) - 110.0) / 365.25;
        const double hour = std::fmod(static_cast<double>(t % 1440) / 60.0, 24.0);
        anomaly = phi * anomaly + sigma * rng.normal();
        const double v = 57.0 + 25.0 * std::sin(year_phase) + 8.0 * std::sin(2.0 * std::numbers::pi * (hour - 9.0) / 24.0) +
                         anomaly;
        s.values[i] = std::clamp(v, 0.0, 120.0);
    }
    return s;
}

Series synth_meter(const CorpusSpec& spec, const Series& temperature, const ShapeParams& shape, double base,
                   double beta, Rng& rng) {
    Series s;
    s.start = temperature.start;
    s.cadence = temperature.cadence;
    s.values.resize(temperature.values.size());
    const std::size_t spikes_len = static_cast<std::size_t>(std::max<std::int64_t>(1, 30 / spec.cadence));
    std::size_t spike_left = 0;
    double spike = 0.0;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        const std::int64_t t = s.start + static_cast<std::int64_t>(i) * s.cadence;
        const double hour = static_cast<double>(((t % 1440) + 1440) % 1440) / 60.0;
        double v = base * shape.at(hour, weekday(t)) * (1.0 + beta * hvac_factor(temperature.values[i]));
        v += spec.noise * rng.normal();
        if (spike_left == 0 && rng.bernoulli(spec.spike_rate)) {
            spike_left = spikes_len;
            spike = rng.uniform(spec.spike_min, spec.spike_max);
        }
        if (spike_left > 0) {
            v += spike;
            --spike_left;
        }
        s.values[i] = std::max(0.0, v);
    }
    if (spec.missing_rate > 0.0) {
        const std::size_t per_week = static_cast<std::size_t>(7 * 1440 / spec.cadence);
        const std::size_t gap = static_cast<std::size_t>(std::max<std::int64_t>(1, 120 / spec.cadence));
        for (std::size_t w = 0; w * per_week < s.values.size(); ++w) {
            if (!rng.bernoulli(spec.missing_rate)) continue;
            const std::size_t at = w * per_week + rng.index(per_week - gap);
            for (std::size_t k = 0; k < gap && at + k < s.values.size(); ++k) s.values[at + k] = std::nan("");
        }
    }
    return s;
}

std::string padded(const char* prefix, std::size_t i, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
    return buf;
}

}  // namespace

Corpus synth_corpus(const CorpusSpec& spec, std::uint64_t seed, const WindowOptions& options, WindowReport* report) {
    spec.validate();
    if (options.households != spec.households) {
        throw std::invalid_argument("corpus spec households differ from window households");
    }
    Corpus c;
    c.temperature = synth_temperature(spec, seed);
    for (std::size_t g = 0; g < spec.groups; ++g) {
        const std::string gid = padded("g", g, 2);
        Rng grng(derive_seed(seed, "group/" + gid));
        const ShapeParams shape = ShapeParams::draw(grng);
        const double beta = grng.uniform(spec.beta_min, spec.beta_max);
        auto& ids = c.assignment[gid];
        for (std::size_t h = 0; h < spec.households; ++h) {
            const std::string mid = gid + padded("-h", h, 1);
            Rng mrng(derive_seed(seed, "meter/" + mid));
            const double base = mrng.uniform(spec.base_min, spec.base_max);
            c.meters.push_back({mid, synth_meter(spec, c.temperature, shape, base, beta, mrng)});
            ids.push_back(mid);
        }
    }
    for (std::size_t p = 0; p < spec.pool_meters; ++p) {
        const std::string mid = padded("p", p, 3);
        Rng mrng(derive_seed(seed, "meter/" + mid));
        const ShapeParams shape = ShapeParams::draw(mrng);
        const double beta = mrng.uniform(spec.beta_min, spec.beta_max);
        const double base = mrng.uniform(spec.pool_base_min, spec.pool_base_max);
        c.meters.push_back({mid, synth_meter(spec, c.temperature, shape, base, beta, mrng)});
    }
    c.positives = window_groups(c.meters, c.assignment, c.temperature, options, report);
    return c;
}

}  // namespace loadgan::dataio
