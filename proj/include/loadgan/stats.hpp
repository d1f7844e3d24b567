#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "loadgan/group.hpp"
#include "loadgan/metrics.hpp"

namespace loadgan::stats {

enum class Level { household, transformer };
enum class IndexKind { peak, mean, ramp, hourly, daily };

std::string to_string(Level l);
std::string to_string(IndexKind k);
inline constexpr IndexKind all_index_kinds[] = {IndexKind::peak, IndexKind::mean, IndexKind::ramp, IndexKind::hourly,
                                                IndexKind::daily};

struct DayPeriod {
    double from_hour;
    double to_hour;
};

struct IndexConfig {
    std::vector<DayPeriod> periods{{0, 6}, {6, 10}, {10, 14}, {14, 18}, {18, 24}};
    // Weekday numbers (0 = Monday) per day class: weekday, Saturday, Sunday.
    std::vector<std::vector<int>> day_classes{{0, 1, 2, 3, 4}, {5}, {6}};
    std::vector<std::string> day_class_names{"weekday", "saturday", "sunday"};

    void validate() const;
};

// One distribution; tuple indices (hourly, daily) produce one per component.
struct IndexDistribution {
    IndexKind kind;
    Level level;
    std::size_t component = 0;
    std::string component_name;  // empty for scalar indices
    std::vector<double> values;

    metrics::Summary summary() const { return metrics::summarize(values); }
};

// Per-profile index values.
double peak(std::span<const double> profile);
double mean(std::span<const double> profile);
std::vector<double> ramps(std::span<const double> profile);

struct DayEnergy {
    std::int64_t day;  // days since the epoch
    int weekday;
    std::vector<double> period_kwh;
    double total_kwh;  // sum of period_kwh
};
// Energy per day and period, splitting steps by fractional time overlap.
std::vector<DayEnergy> day_energies(std::span<const double> profile, std::int64_t start_minutes,
                                    std::int64_t cadence_minutes, const std::vector<DayPeriod>& periods);

std::vector<IndexDistribution> compute_indices(const SampleSet& samples, Level level, const IndexConfig& config = {});

struct Ratio {
    bool defined = false;
    double value = 0.0;
    bool favorable = false;  // value < 1
};
Ratio ratio(double multi_fid, double single_fid);

struct ClassifierScores {
    std::vector<double> real;
    std::vector<double> multi;
    std::vector<double> single;
};

struct ReportInputs {
    const SampleSet* real = nullptr;
    const SampleSet* multi = nullptr;
    const SampleSet* single = nullptr;
    std::optional<ClassifierScores> scores;
    IndexConfig config;
    nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
};

// Full index x level grid of Frechet distances, ratios, and the classifier
// block. Sub-metric failures are recorded in the report rather than thrown.
nlohmann::ordered_json build_report(const ReportInputs& in);

// Distribution-curve and box-plot SVGs named <index>_<level>_{curve|box}.svg.
void write_plots(const std::filesystem::path& dir, const ReportInputs& in);

}  // namespace loadgan::stats
