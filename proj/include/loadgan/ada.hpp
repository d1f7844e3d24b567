#pragma once

// Iterative augmentation: machine-label unlabeled groups, retrain the
// classifier, harvest confident random groups and feed them to the GAN.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "loadgan/codec.hpp"
#include "loadgan/dlc.hpp"
#include "loadgan/gan.hpp"
#include "loadgan/group.hpp"
#include "loadgan/json_util.hpp"

namespace loadgan::ada {

struct AdaConfig {
    double cut = 0.9;            // harvest threshold on the classifier score
    double eps_acc = 0.005;      // saturation threshold, as an accuracy fraction
    std::size_t max_steps = 5;
    double gan_fraction = 0.2;   // GAN continuation, share of the original epoch budget
    std::size_t n_gan = 64;      // generated unlabeled groups per step
    std::size_t n_rand = 64;     // randomly assembled unlabeled groups per step
    std::size_t eval_count = 128;  // generated groups scored for the step metrics
    std::uint64_t seed = 0;

    void validate() const;
};

json_util::ordered to_json(const AdaConfig& c);
AdaConfig ada_config_from_json(const json_util::json& j, const std::string& where = "ada");

struct StepMetrics {
    std::size_t step = 0;
    double cls_acc = 0.0;
    double por_real = 0.0;
    double por_gen = 0.0;
    double mcl_gen = 0.0;
    double score_fid = 0.0;
    // Same classifier, generator before this step's continuation.
    double por_gen_before = 0.0;
    double score_fid_before = 0.0;
    std::size_t unlabeled = 0;
    std::size_t machine_positive = 0;
    std::size_t augmented = 0;
    std::size_t rand_shortfall = 0;
    bool unaugmented = false;
};

struct AdaState {
    std::size_t step = 0;
    gan::GanModel gan;
    dlc::ClassifierModel classifier;
    std::size_t base_epochs = 0;  // epoch budget of the original GAN training
    std::vector<StepMetrics> history;
    std::vector<std::string> warnings;
};

struct UnlabeledReport {
    std::size_t gan = 0;
    std::size_t rand = 0;
    std::size_t rand_shortfall = 0;
};

// Generated groups followed by randomly assembled ones, all unlabeled.
SampleSet make_unlabeled(gan::GanModel& gan, const SampleSet& pool, const SampleSet& conditioning,
                         std::size_t n_gan, std::size_t n_rand, std::uint64_t seed,
                         const codec::EncodingLevels& levels, UnlabeledReport* report = nullptr);

struct Inputs {
    const SampleSet* positives = nullptr;  // ground truth, also the GAN's real data
    const SampleSet* negatives = nullptr;  // NSG output
    const SampleSet* pool = nullptr;       // one-column profiles for random assembly
    codec::EncodingLevels levels;
    std::filesystem::path audit_dir;       // empty: nothing persisted
};

// Classifier and GAN quality on the same footing: POR/MCL of generated groups
// and the score Frechet distance to the real positives.
struct Quality {
    double por_real = 0.0;
    double por_gen = 0.0;
    double mcl_gen = 0.0;
    double score_fid = 0.0;
};
Quality measure(gan::GanModel& gan, dlc::ClassifierModel& classifier, const Inputs& in, std::size_t count,
                std::uint64_t seed);

void ada_step(AdaState& state, const AdaConfig& config, const Inputs& in);

// Steps until the accuracy change stays below eps_acc twice in a row or
// max_steps is reached.
void run(AdaState& state, const AdaConfig& config, const Inputs& in,
         const std::function<void(const StepMetrics&)>& on_step = {});

void write_metrics_csv(const std::filesystem::path& path, const std::vector<StepMetrics>& history);

}  // namespace loadgan::ada
