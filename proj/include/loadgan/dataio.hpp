#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "loadgan/group.hpp"

namespace loadgan::dataio {

// ---- time helpers (minutes since the Unix epoch, UTC) ----

std::int64_t parse_timestamp(const std::string& text);  // ISO-8601, throws on failure
std::string format_timestamp(std::int64_t minutes);
int weekday(std::int64_t minutes);  // 0 = Monday
// Latest midnight on `week_day` at or before t.
std::int64_t align_to_weekday(std::int64_t minutes, int week_day);

// Regular series; NaN marks a missing reading.
struct Series {
    std::int64_t start = 0;
    std::int64_t cadence = 15;
    std::vector<double> values;

    std::int64_t end() const { return start + cadence * static_cast<std::int64_t>(values.size()); }
    // Index of time t, or -1 when t is off-grid or out of range.
    long index_of(std::int64_t t) const;
};

struct MeterSeries {
    std::string id;
    Series series;
};

struct IngestReport {
    std::size_t rows = 0;
    std::size_t gaps = 0;          // missing grid steps
    std::size_t off_cadence = 0;   // readings not on the meter's grid (dropped)
};

// CSV `timestamp,meter_id,kw`. Rows may arrive out of order.
std::vector<MeterSeries> ingest_meters(const std::filesystem::path& path, std::int64_t cadence = 15,
                                       IngestReport* report = nullptr);

struct TemperatureReport {
    std::int64_t source_cadence = 0;
    std::size_t interpolated = 0;
    std::size_t missing = 0;
};

// CSV `timestamp,temp_f`, resampled onto `cadence`: forward-fill within the
// source cadence, linear interpolation across runs of <= max_gap missing steps.
Series ingest_temperature(const std::filesystem::path& path, std::int64_t cadence = 15, std::size_t max_gap = 4,
                          TemperatureReport* report = nullptr);
Series resample_temperature(const std::vector<std::pair<std::int64_t, double>>& readings, std::int64_t cadence,
                            std::size_t max_gap = 4, TemperatureReport* report = nullptr);

void write_meters_csv(const std::filesystem::path& path, const std::vector<MeterSeries>& meters);
void write_temperature_csv(const std::filesystem::path& path, const Series& temperature);

// ---- windowing ----

struct WindowOptions {
    std::size_t steps = 96;        // M after downsampling
    std::size_t households = 4;    // N
    std::size_t downsample = 7;    // native steps averaged into one window step
    int week_day = 0;              // window start weekday, 0 = Monday
    std::int64_t stride_minutes = 0;  // 0 = window length (non-overlapping)
};

struct WindowReport {
    std::size_t candidates = 0;
    std::size_t complete = 0;
    std::size_t excluded = 0;
};

// group id -> ordered meter ids
using Assignment = std::map<std::string, std::vector<std::string>>;

SampleSet window_groups(const std::vector<MeterSeries>& meters, const Assignment& assignment, const Series& temperature,
                        const WindowOptions& options, WindowReport* report = nullptr);

// Weekly single-meter profiles used by random assembly and negative mining.
// Stored as a SampleSet of one-column groups whose id is the meter id.
SampleSet profile_pool(const std::vector<MeterSeries>& meters, const Series& temperature, const WindowOptions& options,
                       WindowReport* report = nullptr);

// Pool members grouped by week start.
std::map<std::int64_t, std::vector<std::size_t>> pool_by_week(const SampleSet& pool);

// Column-stacks one-column pool profiles into an N-column group.
LoadGroup assemble_group(const SampleSet& pool, const std::vector<std::size_t>& members, Provenance provenance,
                         const std::string& id);

// ---- synthetic corpus ----

struct CorpusSpec {
    std::size_t groups = 8;
    std::size_t households = 4;
    std::size_t weeks = 40;
    std::size_t pool_meters = 48;
    std::int64_t cadence = 15;
    std::int64_t start = 24'832'800;      // 2017-03-20 00:00 UTC, a Monday
    double base_min = 0.4, base_max = 1.4;        // group households, kW
    double pool_base_min = 0.1, pool_base_max = 3.0;
    double beta_min = 0.0, beta_max = 0.6;        // weather sensitivity per group
    double noise = 0.05;                          // additive Gaussian sd, kW
    double spike_rate = 0.002;                    // per step
    double spike_min = 1.0, spike_max = 3.0;      // kW
    double missing_rate = 0.01;                   // chance a meter loses a 2-hour block per week

    void validate() const;
};

struct Corpus {
    SampleSet positives;
    std::vector<MeterSeries> meters;  // group members then the unassigned pool
    Assignment assignment;
    Series temperature;
};

// Per-step heating/cooling demand factor.
double hvac_factor(double temp_f);

Corpus synth_corpus(const CorpusSpec& spec, std::uint64_t seed, const WindowOptions& options,
                    WindowReport* report = nullptr);

}  // namespace loadgan::dataio
