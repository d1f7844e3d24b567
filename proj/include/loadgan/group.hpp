#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace loadgan {

enum class Provenance { real, generated, random_assembled, nsg_negative };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

// M x N kW readings (column n = household n) plus the group's temperature.
struct LoadGroup {
    std::size_t steps = 0;       // M
    std::size_t households = 0;  // N
    std::vector<double> kw;      // row-major M x N
    std::vector<double> temperature;  // M readings, degrees F
    std::string id;
    std::int64_t week_start = 0;  // minutes since the Unix epoch, UTC
    std::int64_t cadence_minutes = 15;
    Provenance provenance = Provenance::real;

    LoadGroup() = default;
    LoadGroup(std::size_t m, std::size_t n)
        : steps(m), households(n), kw(m * n, 0.0), temperature(m, 0.0) {}

    double at(std::size_t m, std::size_t n) const { return kw[m * households + n]; }
    double& at(std::size_t m, std::size_t n) { return kw[m * households + n]; }

    std::vector<double> column(std::size_t n) const;
    // Transformer-level series: the column sum at each step.
    std::vector<double> aggregate() const;
    void validate() const;
};

// Copy with columns ordered by weekly mean, largest first (stable on ties).
LoadGroup canonical_columns(const LoadGroup& g);

enum class LabelState { positive, negative, unlabeled };

std::string to_string(LabelState s);
LabelState label_state_from_string(const std::string& s);

struct Label {
    LabelState state = LabelState::unlabeled;
    std::optional<double> confidence;  // set when machine-labeled
};

struct SampleSet {
    std::vector<LoadGroup> groups;
    std::vector<Label> labels;
    std::map<std::string, std::string> metadata;

    std::size_t size() const { return groups.size(); }
    bool empty() const { return groups.empty(); }
    void add(LoadGroup g, Label l = {});
    void append(const SampleSet& other);
    // Throws unless every group shares one (M, N) and labels are consistent.
    void validate() const;
};

// Directory layout: one binary matrix file per group plus manifest.json.
// Group file: "LGGR" magic, u32 version, u64 M, u64 N, i64 week start,
// i64 cadence, u8 provenance, u32 id length + id, then M*N row-major float64
// kW values followed by M float64 temperatures (little endian).
void save_sample_set(const std::filesystem::path& dir, const SampleSet& set);
SampleSet load_sample_set(const std::filesystem::path& dir);

void write_group_file(const std::filesystem::path& path, const LoadGroup& g);
LoadGroup read_group_file(const std::filesystem::path& path);

}  // namespace loadgan
