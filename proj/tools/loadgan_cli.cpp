// loadgan command-line entry point: one subcommand per pipeline stage.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "loadgan/pipeline.hpp"

namespace {

struct Descriptions {
    const char* name;
    const char* help;
};

constexpr Descriptions kCommands[] = {
    {"synth-data", "generate the synthetic corpus, positive groups and profile pool"},
    {"ingest", "read meter, temperature and assignment files into groups and a pool"},
    {"train-single", "train the one-household GAN"},
    {"train-multi", "train the group GAN"},
    {"nsg", "build negative groups from the profile pool"},
    {"train-dlc", "train the realism classifier on positives and negatives"},
    {"generate", "sample groups from every trained GAN"},
    {"evaluate", "compare real and generated groups and write the report"},
    {"ada", "run the augmentation loop on the trained GAN and classifier"},
    {"report", "render the evaluation report as markdown"},
};

int fail(const std::string& command, const char* kind, const std::string& message, int code) {
    nlohmann::ordered_json e;
    e["error"] = {{"command", command}, {"kind", kind}, {"message", message}};
    std::cerr << e.dump() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic load-group generation and evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    std::string preset;
    std::uint64_t seed = 0;
    std::string out = "run";
    bool quiet = false;
    app.add_option("--config", config_path, "run configuration (JSON)")->check(CLI::ExistingFile);
    app.add_option("--preset", preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    auto* seed_opt = app.add_option("--seed", seed, "global seed");
    app.add_option("--out", out, "run directory")->capture_default_str();
    app.add_flag("--quiet", quiet, "suppress progress output");

    for (const auto& c : kCommands) app.add_subcommand(c.name, c.help)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        const std::optional<std::string> preset_override = preset.empty() ? std::nullopt : std::optional(preset);
        const std::optional<std::uint64_t> seed_override = seed_opt->count() ? std::optional(seed) : std::nullopt;
        const auto config = config_path.empty()
                                ? loadgan::pipeline::config_from_json(nlohmann::json::object(), preset_override, seed_override)
                                : loadgan::pipeline::load_config(config_path, preset_override, seed_override);
        loadgan::pipeline::Log log;
        if (!quiet) log = [](const std::string& s) { std::cerr << s << '\n'; };
        loadgan::pipeline::run_command(command, config, out, log);
    } catch (const loadgan::json_util::ConfigError& e) {
        return fail(command, "config", e.what(), 2);
    } catch (const std::exception& e) {
        return fail(command, "runtime", e.what(), 1);
    }
    return 0;
}
