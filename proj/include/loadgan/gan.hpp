#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "loadgan/codec.hpp"
#include "loadgan/group.hpp"
#include "loadgan/json_util.hpp"
#include "loadgan/nn.hpp"

namespace loadgan::gan {

using ad::Shape;
using ad::Tensor;

enum class ModelMode { single, multi };
enum class LossKind { wgan_gp, wgan_clip, original };

std::string to_string(ModelMode m);
std::string to_string(LossKind k);
ModelMode model_mode_from_string(const std::string& s);
LossKind loss_kind_from_string(const std::string& s);

struct GanConfig {
    ModelMode mode = ModelMode::multi;
    std::size_t steps = 96;      // M
    std::size_t households = 4;  // N (images are one column wide in single mode)
    std::size_t latent = 64;
    // Per-sample shape override for non-image data; empty means [4, M, width].
    Shape sample_shape{};
    std::vector<nn::LayerSpec> generator;
    std::vector<nn::LayerSpec> critic;
    LossKind loss = LossKind::wgan_gp;
    double lr_d = 1e-4;
    double lr_g = 1.4e-4;
    double rms_decay = 0.9;
    double rms_eps = 1e-8;
    double lambda = 10.0;
    double clip = 0.01;
    double slope = 0.2;
    std::size_t batch = 16;
    std::size_t epochs = 300;
    std::size_t critic_steps = 5;
    bool critic_batchnorm = false;
    bool free_temperature = false;
    bool permute_columns = false;  // random column permutation augmentation
    std::uint64_t seed = 0;

    Shape data_shape() const;
    void validate() const;
};

// Stacks derived from the layer vocabulary (kind, in/out, kernel, stride,
// padding, output padding) for the two scales.
GanConfig desk_preset(ModelMode mode);
GanConfig paper_preset(ModelMode mode);

json_util::ordered to_json(const GanConfig& c);
GanConfig gan_config_from_json(const json_util::json& j, const std::string& where = "gan");
json_util::ordered to_json(const nn::LayerSpec& s);
nn::LayerSpec layer_spec_from_json(const json_util::json& j, const std::string& where);

nn::Network build_generator(const GanConfig& config, Rng& init_rng);
nn::Network build_critic(const GanConfig& config, Rng& init_rng);

// ---- losses ----

using Critic = std::function<Tensor(const Tensor&)>;

struct LossTerms {
    Tensor loss;
    double wasserstein = 0.0;     // mean D(fake) - mean D(real)
    double penalty = 0.0;         // lambda-weighted
    double grad_norm_mean = 0.0;  // mean interpolate gradient norm
};

class LossError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Interpolation weights are drawn uniformly per sample from rng.
LossTerms loss_wgan_gp(const Critic& critic, const Tensor& real, const Tensor& fake, double lambda, Rng& rng);
LossTerms loss_wgan_clip(const Critic& critic, const Tensor& real, const Tensor& fake);
// Critic outputs are logits; probabilities are floored at 1e-12 before logs.
LossTerms loss_original(const Critic& critic, const Tensor& real, const Tensor& fake);
// -log D(real) - log(1 - D(fake)) from probabilities.
Tensor discriminator_log_loss(const Tensor& p_real, const Tensor& p_fake);
Tensor generator_loss(LossKind kind, const Critic& critic, const Tensor& fake);

// ---- model and training ----

struct EpochStats {
    std::size_t epoch = 0;
    double loss_d = 0.0;
    double loss_g = 0.0;
    double grad_norm = 0.0;
};

struct GanModel {
    GanConfig config;
    nn::Network generator;
    nn::Network critic;
    std::vector<EpochStats> history;
    std::size_t epochs_done = 0;
    std::size_t critic_counter = 0;  // critic steps since the last generator step
};

GanModel build_model(const GanConfig& config);

// Flattened samples of one shape.
struct TrainData {
    Shape sample_shape;
    std::size_t count = 0;
    std::vector<double> values;
};

TrainData images_to_data(const std::vector<codec::EncodedImage>& images);
// Encodes groups after sorting columns by weekly mean (descending); in single
// mode each column becomes its own one-wide image.
TrainData groups_to_data(const SampleSet& groups, const codec::EncodingLevels& levels, ModelMode mode);

struct TrainOptions {
    std::size_t epochs = 0;
    std::filesystem::path checkpoint_dir;  // empty: no periodic checkpoints
    std::size_t checkpoint_every = 0;
    std::function<void(const EpochStats&)> on_epoch;
};

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Critic steps and generator steps alternate; augment samples join the real
// pool. On divergence the model is restored to the last good epoch and
// DivergenceError is thrown.
void train(GanModel& model, const TrainData& real, const TrainData* augment, const TrainOptions& options);

// Generator output in eval mode, [count, sample_shape...].
Tensor generate(GanModel& model, std::size_t count, Rng& rng);

struct SampleReport {
    std::size_t off_curve = 0;  // decoded cells farther than 0.25 from the colour curve
    double max_distance = 0.0;
};

// Decodes generated images into groups. Temperatures and calendar positions
// are borrowed from randomly chosen conditioning groups; unless
// free_temperature is set the t channel is overwritten by that series.
SampleSet sample_groups(GanModel& model, std::size_t count, std::uint64_t seed, const codec::EncodingLevels& levels,
                        const SampleSet& conditioning, SampleReport* report = nullptr);

void save_model(const std::filesystem::path& dir, const GanModel& model);
GanModel load_model(const std::filesystem::path& dir);
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history);

}  // namespace loadgan::gan
