#pragma once

// Run configuration and the command implementations behind the CLI. Every
// command reads and writes under one run directory.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "loadgan/ada.hpp"
#include "loadgan/codec.hpp"
#include "loadgan/dataio.hpp"
#include "loadgan/dlc.hpp"
#include "loadgan/gan.hpp"
#include "loadgan/json_util.hpp"
#include "loadgan/nsg.hpp"
#include "loadgan/stats.hpp"

namespace loadgan::pipeline {

struct DataConfig {
    std::string source = "synth";  // synth | files
    dataio::CorpusSpec synth;
    dataio::WindowOptions window;
    std::string meters;       // files: CSV timestamp,meter_id,kw
    std::string temperature;  // files: CSV timestamp,temp_f
    std::string assignment;   // files: JSON {group id: [meter ids]}
    std::size_t max_gap = 4;  // temperature interpolation limit, steps
};

struct NsgConfig {
    std::string method = "nsg";  // nsg | random
    nsg::Criteria criteria;
};

struct EvalConfig {
    std::size_t count = 0;  // generated groups per model; 0 = as many as the real positives
    stats::IndexConfig indices;
    bool plots = true;
    // Optional SampleSet directories overriding the run's own sets.
    std::string real, multi, single;
};

struct RunConfig {
    std::string preset = "desk";
    std::uint64_t seed = 0;
    codec::EncodingLevels codec;
    DataConfig data;
    NsgConfig nsg;
    dlc::ClassifierConfig classifier;
    gan::GanConfig multi;
    gan::GanConfig single;
    ada::AdaConfig ada;
    EvalConfig evaluate;
};

// Preset defaults with every module seed derived from `seed`.
RunConfig default_config(const std::string& preset, std::uint64_t seed);

// Unknown keys anywhere fail. Overrides replace the file's preset / seed.
RunConfig config_from_json(const json_util::json& j, const std::optional<std::string>& preset = std::nullopt,
                           const std::optional<std::uint64_t>& seed = std::nullopt);
json_util::ordered to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path, const std::optional<std::string>& preset = std::nullopt,
                      const std::optional<std::uint64_t>& seed = std::nullopt);

using Log = std::function<void(const std::string&)>;

const std::vector<std::string>& command_names();

// Runs one command; throws on failure. Writes <out>/config.resolved.json.
void run_command(const std::string& command, const RunConfig& config, const std::filesystem::path& out,
                 const Log& log = {});

// Run-directory layout.
namespace paths {
inline std::filesystem::path positives(const std::filesystem::path& out) { return out / "data" / "positives"; }
inline std::filesystem::path pool(const std::filesystem::path& out) { return out / "data" / "pool"; }
inline std::filesystem::path negatives(const std::filesystem::path& out) { return out / "nsg" / "negatives"; }
inline std::filesystem::path classifier(const std::filesystem::path& out) { return out / "dlc"; }
inline std::filesystem::path gan(const std::filesystem::path& out, gan::ModelMode m) {
    return out / (m == gan::ModelMode::multi ? "gan_multi" : "gan_single");
}
inline std::filesystem::path generated(const std::filesystem::path& out, gan::ModelMode m) {
    return out / "generated" / (m == gan::ModelMode::multi ? "multi" : "single");
}
inline std::filesystem::path eval(const std::filesystem::path& out) { return out / "eval"; }
inline std::filesystem::path ada(const std::filesystem::path& out) { return out / "ada"; }
}  // namespace paths

}  // namespace loadgan::pipeline
