#pragma once

// Binary realism classifier over encoded load groups, and score sets.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "loadgan/codec.hpp"
#include "loadgan/group.hpp"
#include "loadgan/json_util.hpp"
#include "loadgan/nn.hpp"

namespace loadgan::dlc {

struct ClassifierConfig {
    std::size_t steps = 96;
    std::size_t households = 4;
    bool raw_input = false;  // single-channel kW matrix instead of the 4-channel image
    std::vector<nn::LayerSpec> layers;  // ends in a single logit
    double lr = 1e-3;
    double rms_decay = 0.9;
    double rms_eps = 1e-8;
    std::size_t batch = 32;
    std::size_t epochs = 20;
    double negative_ratio = 3.0;  // negatives requested per positive
    double test_fraction = 0.2;
    std::uint64_t seed = 0;

    ad::Shape input_shape() const;
    void validate() const;
};

// 3 conv + 3 dense layers for desk scale, 5 + 5 for the paper preset.
ClassifierConfig desk_classifier(std::size_t steps = 96, std::size_t households = 4);
ClassifierConfig paper_classifier(std::size_t steps = 672, std::size_t households = 8);

json_util::ordered to_json(const ClassifierConfig& c);
ClassifierConfig classifier_config_from_json(const json_util::json& j, const std::string& where = "classifier");

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    double test_accuracy = 0.0;
};

struct ClassifierModel {
    ClassifierConfig config;
    nn::Network network;
    std::size_t version = 0;  // incremented by every retraining
    double test_accuracy = 0.0;
    std::size_t train_count = 0;
    std::size_t test_count = 0;
    std::vector<EpochRecord> history;
    std::vector<std::string> warnings;
};

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Stratified split of each class by test_fraction (rounded). Machine-labeled
// samples with a positive or negative state join the training portion only.
ClassifierModel train_classifier(const SampleSet& positives, const SampleSet& negatives,
                                 const SampleSet* machine_labeled, const ClassifierConfig& config,
                                 const codec::EncodingLevels& levels, std::size_t version = 1);

// Per-class train/test sizes used by train_classifier.
std::pair<std::size_t, std::size_t> split_sizes(std::size_t count, double test_fraction);

// Network input for one group (columns in canonical order).
std::vector<double> classifier_input(const LoadGroup& g, const ClassifierConfig& config,
                                     const codec::EncodingLevels& levels);

struct ScoreSet {
    std::vector<std::string> ids;
    std::vector<double> scores;  // probability the group is real

    std::size_t size() const { return scores.size(); }
};

ScoreSet score(ClassifierModel& model, const SampleSet& samples, const codec::EncodingLevels& levels);

// Mean squared-mean and squared-sd differences of the Gaussian fits.
double score_fid(const ScoreSet& a, const ScoreSet& b);

void write_scores_csv(const std::filesystem::path& path, const ScoreSet& s);
ScoreSet read_scores_csv(const std::filesystem::path& path);

void save_classifier(const std::filesystem::path& dir, const ClassifierModel& m);
ClassifierModel load_classifier(const std::filesystem::path& dir);

}  // namespace loadgan::dlc
