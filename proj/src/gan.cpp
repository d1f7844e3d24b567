#include "loadgan/gan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace loadgan::gan {

using json_util::json;
using json_util::ordered;
using nn::Activation;
using nn::LayerKind;
using nn::LayerSpec;

std::string to_string(ModelMode m) { return m == ModelMode::single ? "single" : "multi"; }

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::wgan_gp: return "wgan_gp";
        case LossKind::wgan_clip: return "wgan_clip";
        case LossKind::original: return "original";
    }
    return "?";
}

ModelMode model_mode_from_string(const std::string& s) {
    if (s == "single") return ModelMode::single;
    if (s == "multi") return ModelMode::multi;
    throw json_util::ConfigError("unknown model mode '" + s + "'");
}

LossKind loss_kind_from_string(const std::string& s) {
    for (auto k : {LossKind::wgan_gp, LossKind::wgan_clip, LossKind::original})
        if (to_string(k) == s) return k;
    throw json_util::ConfigError("unknown loss '" + s + "'");
}

// ---------------------------------------------------------------------------
// configuration

Shape GanConfig::data_shape() const {
    if (!sample_shape.empty()) return sample_shape;
    return {4, steps, mode == ModelMode::multi ? households : 1};
}

void GanConfig::validate() const {
    auto fail = [](const std::string& m) { throw json_util::ConfigError("gan config: " + m); };
    if (latent == 0) fail("latent dimension must be positive");
    if (!(lr_d > 0.0) || !(lr_g > 0.0)) fail("learning rates must be positive");
    if (!(lambda >= 0.0)) fail("gradient penalty weight must be non-negative");
    if (loss == LossKind::wgan_clip && !(clip > 0.0)) fail("clip must be positive");
    if (!(rms_decay > 0.0 && rms_decay < 1.0) || !(rms_eps > 0.0)) fail("bad RMSProp settings");
    if (batch == 0 || critic_steps == 0) fail("batch and critic steps must be positive");
    if (generator.empty() || critic.empty()) fail("generator and critic stacks must be non-empty");
    if (generator.back().activation != Activation::tanh) fail("generator must end with a tanh activation");
    if (critic.back().activation != Activation::none) fail("critic must end without an activation");
    for (auto d : data_shape())
        if (d == 0) fail("sample shape has a zero dimension");
}

namespace {

LayerSpec dense(std::size_t in, std::size_t out, Activation act, bool norm) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in = in;
    s.out = out;
    s.activation = act;
    s.norm = norm;
    return s;
}

LayerSpec reshape_to(Shape target) {
    LayerSpec s;
    s.kind = LayerKind::reshape;
    s.target = std::move(target);
    return s;
}

LayerSpec flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

LayerSpec conv_block(LayerKind kind, std::size_t in, std::size_t out, nn::Pair k, nn::Pair st, nn::Pair p,
                     Activation act, bool norm, double slope) {
    LayerSpec s;
    s.kind = kind;
    s.in = in;
    s.out = out;
    s.kernel = k;
    s.stride = st;
    s.pad = p;
    s.activation = act;
    s.norm = norm;
    s.slope = slope;
    return s;
}

// Seed map of height steps / 2^depth, one column wide. Every transposed conv
// doubles the height and the first also widens to the image width; the last
// emits the 4 image channels.
void fill_stacks(GanConfig& c, const std::vector<std::size_t>& gen_channels, const std::vector<std::size_t>& critic_channels) {
    const std::size_t depth = gen_channels.size();
    const std::size_t width = c.mode == ModelMode::multi ? c.households : 1;
    const std::size_t seed_h = c.steps >> depth;
    if (seed_h == 0 || (seed_h << depth) != c.steps) {
        throw json_util::ConfigError("preset needs steps divisible by " + std::to_string(1u << depth));
    }
    const nn::Pair body_k = width > 1 ? nn::Pair{4, 3} : nn::Pair{4, 1};
    const nn::Pair body_p = width > 1 ? nn::Pair{1, 1} : nn::Pair{1, 0};
    c.generator.clear();
    c.generator.push_back(dense(c.latent, gen_channels[0] * seed_h, Activation::relu, true));
    c.generator.push_back(reshape_to({gen_channels[0], seed_h, 1}));
    for (std::size_t i = 0; i < depth; ++i) {
        const bool last = i + 1 == depth;
        const nn::Pair k = i == 0 ? nn::Pair{4, width} : body_k;
        const nn::Pair p = i == 0 ? nn::Pair{1, 0} : body_p;
        c.generator.push_back(conv_block(LayerKind::conv_transpose, gen_channels[i], last ? 4 : gen_channels[i + 1], k,
                                         {2, 1}, p, last ? Activation::tanh : Activation::relu, !last, c.slope));
    }
    c.critic.clear();
    std::size_t in = 4;
    for (std::size_t ch : critic_channels) {
        c.critic.push_back(conv_block(LayerKind::conv, in, ch, body_k, {2, 1}, body_p, Activation::leaky_relu, false, c.slope));
        in = ch;
    }
    c.critic.push_back(flatten());
    c.critic.push_back(dense(in * (c.steps >> critic_channels.size()) * width, 1, Activation::none, false));
}

}  // namespace

GanConfig desk_preset(ModelMode mode) {
    GanConfig c;
    c.mode = mode;
    c.steps = 96;
    c.households = 4;
    c.latent = 64;
    c.lr_d = 1e-4;
    c.lr_g = mode == ModelMode::multi ? 1.4e-4 : 1.2e-4;
    c.batch = 16;
    c.epochs = 60;
    fill_stacks(c, {64, 32, 16, 8}, {8, 16, 24, 32});
    return c;
}

GanConfig paper_preset(ModelMode mode) {
    GanConfig c;
    c.mode = mode;
    c.steps = 672;
    c.households = 8;
    c.latent = 100;
    c.lr_d = 1e-4;
    c.lr_g = mode == ModelMode::multi ? 1.4e-4 : 1.2e-4;
    c.batch = mode == ModelMode::multi ? 16 : 64;
    c.epochs = mode == ModelMode::multi ? 300 : 100;
    fill_stacks(c, {256, 128, 64, 32, 16}, {16, 32, 64, 128, 256});
    return c;
}

ordered to_json(const LayerSpec& s) {
    ordered j;
    j["kind"] = nn::to_string(s.kind);
    switch (s.kind) {
        case LayerKind::dense:
            j["in"] = s.in;
            j["out"] = s.out;
            break;
        case LayerKind::conv:
        case LayerKind::conv_transpose:
            j["in"] = s.in;
            j["out"] = s.out;
            j["kernel"] = {s.kernel.h, s.kernel.w};
            j["stride"] = {s.stride.h, s.stride.w};
            j["pad"] = {s.pad.h, s.pad.w};
            if (s.kind == LayerKind::conv_transpose) j["out_pad"] = {s.out_pad.h, s.out_pad.w};
            break;
        case LayerKind::reshape: j["target"] = s.target; break;
        case LayerKind::max_pool: j["kernel"] = {s.kernel.h, s.kernel.w}; break;
        case LayerKind::flatten: break;
    }
    j["activation"] = nn::to_string(s.activation);
    if (s.activation == Activation::leaky_relu) j["slope"] = s.slope;
    j["norm"] = s.norm;
    return j;
}

LayerSpec layer_spec_from_json(const json& j, const std::string& where) {
    json_util::Reader r(j, where);
    LayerSpec s;
    std::string kind = "dense";
    std::string act = "none";
    std::array<std::size_t, 2> kernel{1, 1}, stride{1, 1}, pad{0, 0}, out_pad{0, 0};
    r.get("kind", kind);
    r.get("in", s.in);
    r.get("out", s.out);
    r.get("kernel", kernel);
    r.get("stride", stride);
    r.get("pad", pad);
    r.get("out_pad", out_pad);
    r.get("target", s.target);
    r.get("activation", act);
    r.get("slope", s.slope);
    r.get("norm", s.norm);
    r.finish();
    try {
        s.kind = nn::layer_kind_from_string(kind);
        s.activation = nn::activation_from_string(act);
    } catch (const std::exception& e) {
        throw json_util::ConfigError(where + ": " + e.what());
    }
    s.kernel = {kernel[0], kernel[1]};
    s.stride = {stride[0], stride[1]};
    s.pad = {pad[0], pad[1]};
    s.out_pad = {out_pad[0], out_pad[1]};
    return s;
}

ordered to_json(const GanConfig& c) {
    ordered j;
    j["mode"] = to_string(c.mode);
    j["steps"] = c.steps;
    j["households"] = c.households;
    j["latent"] = c.latent;
    if (!c.sample_shape.empty()) j["sample_shape"] = c.sample_shape;
    j["loss"] = to_string(c.loss);
    j["lr_d"] = c.lr_d;
    j["lr_g"] = c.lr_g;
    j["rms_decay"] = c.rms_decay;
    j["rms_eps"] = c.rms_eps;
    j["lambda"] = c.lambda;
    j["clip"] = c.clip;
    j["slope"] = c.slope;
    j["batch"] = c.batch;
    j["epochs"] = c.epochs;
    j["critic_steps"] = c.critic_steps;
    j["critic_batchnorm"] = c.critic_batchnorm;
    j["free_temperature"] = c.free_temperature;
    j["permute_columns"] = c.permute_columns;
    j["seed"] = c.seed;
    auto& g = j["generator"] = ordered::array();
    for (const auto& s : c.generator) g.push_back(to_json(s));
    auto& d = j["critic"] = ordered::array();
    for (const auto& s : c.critic) d.push_back(to_json(s));
    return j;
}

GanConfig gan_config_from_json(const json& j, const std::string& where) {
    json_util::Reader r(j, where);
    std::string mode = "multi";
    r.get("mode", mode);
    std::string preset = "desk";
    r.get("preset", preset);
    if (preset != "desk" && preset != "paper") throw json_util::ConfigError(where + ".preset: expected desk or paper");
    const bool paper = preset == "paper";
    // Start from the preset for the mode so partial configs are usable.
    GanConfig c = paper ? paper_preset(model_mode_from_string(mode)) : desk_preset(model_mode_from_string(mode));
    const GanConfig defaults = c;
    std::string loss = to_string(c.loss);
    r.get("steps", c.steps);
    r.get("households", c.households);
    r.get("latent", c.latent);
    r.get("sample_shape", c.sample_shape);
    r.get("loss", loss);
    r.get("lr_d", c.lr_d);
    r.get("lr_g", c.lr_g);
    r.get("rms_decay", c.rms_decay);
    r.get("rms_eps", c.rms_eps);
    r.get("lambda", c.lambda);
    r.get("clip", c.clip);
    r.get("slope", c.slope);
    r.get("batch", c.batch);
    r.get("epochs", c.epochs);
    r.get("critic_steps", c.critic_steps);
    r.get("critic_batchnorm", c.critic_batchnorm);
    r.get("free_temperature", c.free_temperature);
    r.get("permute_columns", c.permute_columns);
    r.get("seed", c.seed);
    c.loss = loss_kind_from_string(loss);
    const bool custom_stack = r.has("generator") || r.has("critic");
    if (!custom_stack && (c.steps != defaults.steps || c.households != defaults.households || c.latent != defaults.latent)) {
        const std::size_t latent = c.latent;
        if (paper) {
            fill_stacks(c, {256, 128, 64, 32, 16}, {16, 32, 64, 128, 256});
        } else {
            fill_stacks(c, {64, 32, 16, 8}, {8, 16, 24, 32});
        }
        c.latent = latent;
    }
    if (const json* g = r.child("generator")) {
        c.generator.clear();
        for (std::size_t i = 0; i < g->size(); ++i)
            c.generator.push_back(layer_spec_from_json((*g)[i], where + ".generator[" + std::to_string(i) + "]"));
    }
    if (const json* d = r.child("critic")) {
        c.critic.clear();
        for (std::size_t i = 0; i < d->size(); ++i)
            c.critic.push_back(layer_spec_from_json((*d)[i], where + ".critic[" + std::to_string(i) + "]"));
    }
    r.finish();
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// networks

namespace {

[[noreturn]] void stack_mismatch(const char* which, const nn::Network& net, const Shape& expected) {
    std::ostringstream os;
    os << which << " output shape " << ad::to_string(net.output_shape()) << " does not match expected "
       << ad::to_string(expected) << "; layer outputs:";
    for (std::size_t i = 0; i < net.specs().size(); ++i) {
        os << "\n  layer " << i << " (" << nn::to_string(net.specs()[i].kind) << "): " << ad::to_string(net.layer_shapes()[i]);
    }
    throw ad::ShapeError(os.str());
}

}  // namespace

nn::Network build_generator(const GanConfig& config, Rng& init_rng) {
    config.validate();
    nn::Network net(config.generator, {config.latent}, init_rng);
    if (net.output_shape() != config.data_shape()) stack_mismatch("generator", net, config.data_shape());
    return net;
}

nn::Network build_critic(const GanConfig& config, Rng& init_rng) {
    config.validate();
    auto specs = config.critic;
    for (auto& s : specs) {
        if (s.activation == Activation::leaky_relu) s.slope = config.slope;
        if (config.critic_batchnorm && s.kind == LayerKind::conv) s.norm = true;
    }
    nn::Network net(specs, config.data_shape(), init_rng);
    if (net.output_shape() != Shape{1}) stack_mismatch("critic", net, {1});
    return net;
}

// ---------------------------------------------------------------------------
// losses

namespace {

void require_same_batches(const Tensor& real, const Tensor& fake) {
    if (real.shape() != fake.shape()) {
        throw ad::ShapeError("loss: real batch " + ad::to_string(real.shape()) + " and fake batch " +
                             ad::to_string(fake.shape()) + " differ");
    }
    if (real.rank() == 0 || real.dim(0) == 0) throw ad::ShapeError("loss: empty batch");
}

void require_finite(double v, const char* term) {
    if (!std::isfinite(v)) throw LossError(std::string("loss: non-finite ") + term + " term");
}

}  // namespace

LossTerms loss_wgan_clip(const Critic& critic, const Tensor& real, const Tensor& fake) {
    require_same_batches(real, fake);
    LossTerms t;
    t.loss = ad::mean(critic(fake)) - ad::mean(critic(real));
    t.wasserstein = t.loss.item();
    require_finite(t.wasserstein, "wasserstein");
    return t;
}

LossTerms loss_wgan_gp(const Critic& critic, const Tensor& real, const Tensor& fake, double lambda, Rng& rng) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("loss_wgan_gp: lambda must be non-negative");
    LossTerms t = loss_wgan_clip(critic, real, fake);
    const std::size_t b = real.dim(0);
    const std::size_t per = real.size() / b;
    std::vector<double> eps(b);
    for (auto& e : eps) e = rng.uniform();
    if (lambda == 0.0) return t;
    std::vector<double> mixed(real.size());
    const auto rv = real.values();
    const auto fv = fake.values();
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t k = 0; k < per; ++k) {
            const std::size_t at = i * per + k;
            mixed[at] = eps[i] * rv[at] + (1.0 - eps[i]) * fv[at];
        }
    Tensor x_hat = Tensor::constant(real.shape(), std::move(mixed));
    x_hat.set_requires_grad(true);
    const Tensor g = ad::grad(ad::sum(critic(x_hat)), {x_hat}, true)[0];
    const Tensor norms = ad::row_norms(ad::reshape(g, {b, per}));
    const Tensor penalty = ad::scale(ad::mean(ad::square(ad::add_scalar(norms, -1.0))), lambda);
    t.penalty = penalty.item();
    require_finite(t.penalty, "gradient penalty");
    t.grad_norm_mean = ad::mean(norms).item();
    t.loss = t.loss + penalty;
    return t;
}

Tensor discriminator_log_loss(const Tensor& p_real, const Tensor& p_fake) {
    constexpr double floor = 1e-12;
    return -ad::mean(ad::log(ad::clamp_min(p_real, floor))) -
           ad::mean(ad::log(ad::clamp_min(ad::add_scalar(-p_fake, 1.0), floor)));
}

LossTerms loss_original(const Critic& critic, const Tensor& real, const Tensor& fake) {
    require_same_batches(real, fake);
    const Tensor pr = ad::sigmoid(critic(real));
    const Tensor pf = ad::sigmoid(critic(fake));
    LossTerms t;
    t.loss = discriminator_log_loss(pr, pf);
    t.wasserstein = ad::mean(pf).item() - ad::mean(pr).item();
    require_finite(t.loss.item(), "log-loss");
    return t;
}

Tensor generator_loss(LossKind kind, const Critic& critic, const Tensor& fake) {
    if (kind == LossKind::original) {
        const Tensor pf = ad::sigmoid(critic(fake));
        return ad::mean(ad::log(ad::clamp_min(ad::add_scalar(-pf, 1.0), 1e-12)));
    }
    return -ad::mean(critic(fake));
}

// ---------------------------------------------------------------------------
// training

GanModel build_model(const GanConfig& config) {
    config.validate();
    GanModel m;
    m.config = config;
    Rng g(derive_seed(config.seed, "init/generator"));
    Rng d(derive_seed(config.seed, "init/critic"));
    m.generator = build_generator(config, g);
    m.critic = build_critic(config, d);
    return m;
}

TrainData images_to_data(const std::vector<codec::EncodedImage>& images) {
    TrainData d;
    if (images.empty()) return d;
    d.sample_shape = {4, images[0].steps, images[0].households};
    d.count = images.size();
    for (const auto& img : images) {
        if (img.steps != images[0].steps || img.households != images[0].households) {
            throw ad::ShapeError("images_to_data: mixed image shapes");
        }
        d.values.insert(d.values.end(), img.data.begin(), img.data.end());
    }
    return d;
}

TrainData groups_to_data(const SampleSet& groups, const codec::EncodingLevels& levels, ModelMode mode) {
    std::vector<codec::EncodedImage> images;
    for (const auto& g : groups.groups) {
        if (mode == ModelMode::multi) {
            images.push_back(codec::encode_group(canonical_columns(g), levels));
        } else {
            for (std::size_t n = 0; n < g.households; ++n) {
                LoadGroup col(g.steps, 1);
                col.kw = g.column(n);
                col.temperature = g.temperature;
                images.push_back(codec::encode_group(col, levels));
            }
        }
    }
    return images_to_data(images);
}

namespace {

struct Snapshot {
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> sq_avg;
};

Snapshot snapshot(const nn::ParameterStore& store) {
    Snapshot s;
    for (const auto& e : store.entries()) {
        s.values.emplace_back(e.value.values().begin(), e.value.values().end());
        s.sq_avg.push_back(e.sq_avg);
    }
    return s;
}

void restore(nn::ParameterStore& store, const Snapshot& s) {
    auto& entries = store.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto& v = entries[i].value.mutable_values();
        std::copy(s.values[i].begin(), s.values[i].end(), v.begin());
        entries[i].sq_avg = s.sq_avg[i];
    }
}

Tensor latent_batch(std::size_t count, std::size_t dim, Rng& rng) {
    std::vector<double> z(count * dim);
    for (auto& v : z) v = rng.normal();
    return Tensor::constant({count, dim}, std::move(z));
}

bool diverged(double v) { return !std::isfinite(v) || std::abs(v) > 1e6; }

}  // namespace

void train(GanModel& model, const TrainData& real, const TrainData* augment, const TrainOptions& options) {
    const GanConfig& cfg = model.config;
    const Shape shape = cfg.data_shape();
    if (options.epochs == 0) return;
    if (real.count == 0) throw std::invalid_argument("train: no real samples");
    if (real.sample_shape != shape) {
        throw ad::ShapeError("train: data shape " + ad::to_string(real.sample_shape) + " differs from model shape " +
                             ad::to_string(shape));
    }
    const std::size_t per = ad::numel(shape);
    std::vector<double> pool(real.values);
    std::size_t count = real.count;
    if (augment && augment->count > 0) {
        if (augment->sample_shape != shape) throw ad::ShapeError("train: augment data shape differs from model shape");
        pool.insert(pool.end(), augment->values.begin(), augment->values.end());
        count += augment->count;
    }
    const std::size_t batch = std::min(cfg.batch, count);
    const std::size_t batches = count / batch;
    const nn::RmsProp opt_d{cfg.lr_d, cfg.rms_decay, cfg.rms_eps};
    const nn::RmsProp opt_g{cfg.lr_g, cfg.rms_decay, cfg.rms_eps};
    const Critic critic = [&model](const Tensor& x) { return model.critic.forward(x, nn::Mode::train); };
    const bool image_columns = shape.size() == 3 && cfg.sample_shape.empty();
    Shape batch_shape{batch};
    batch_shape.insert(batch_shape.end(), shape.begin(), shape.end());

    for (std::size_t e = 0; e < options.epochs; ++e) {
        const Snapshot good_g = snapshot(model.generator.params());
        const Snapshot good_d = snapshot(model.critic.params());
        const std::size_t good_counter = model.critic_counter;
        auto fail = [&](const std::string& what, double v) {
            restore(model.generator.params(), good_g);
            restore(model.critic.params(), good_d);
            model.critic_counter = good_counter;
            std::ostringstream os;
            os << "training diverged in epoch " << model.epochs_done + 1 << ": " << what << " = " << v
               << "; model restored to the end of epoch " << model.epochs_done;
            throw DivergenceError(os.str());
        };
        Rng rng(derive_seed(cfg.seed, "epoch/" + std::to_string(model.epochs_done)));
        const auto order = rng.permutation(count);
        double sum_d = 0.0, sum_g = 0.0, sum_norm = 0.0;
        std::size_t n_d = 0, n_g = 0;
        for (std::size_t b = 0; b < batches; ++b) {
            std::vector<double> rb(batch * per);
            for (std::size_t i = 0; i < batch; ++i) {
                const double* src = pool.data() + order[b * batch + i] * per;
                double* dst = rb.data() + i * per;
                if (image_columns && cfg.permute_columns && shape[2] > 1) {
                    const auto cols = rng.permutation(shape[2]);
                    for (std::size_t c = 0; c < shape[0] * shape[1]; ++c)
                        for (std::size_t w = 0; w < shape[2]; ++w) dst[c * shape[2] + w] = src[c * shape[2] + cols[w]];
                } else {
                    std::copy(src, src + per, dst);
                }
            }
            const Tensor real_batch = Tensor::constant(batch_shape, std::move(rb));
            Tensor fake;
            {
                ad::NoGradGuard guard;
                fake = model.generator.forward(latent_batch(batch, cfg.latent, rng), nn::Mode::train);
            }
            fake = fake.detach();
            LossTerms terms;
            try {
                switch (cfg.loss) {
                    case LossKind::wgan_gp: terms = loss_wgan_gp(critic, real_batch, fake, cfg.lambda, rng); break;
                    case LossKind::wgan_clip: terms = loss_wgan_clip(critic, real_batch, fake); break;
                    case LossKind::original: terms = loss_original(critic, real_batch, fake); break;
                }
            } catch (const LossError& err) {
                fail(err.what(), std::numeric_limits<double>::quiet_NaN());
            }
            const double ld = terms.loss.item();
            if (diverged(ld)) fail("critic loss", ld);
            opt_d.step(model.critic.params(), ad::backward(terms.loss));
            if (cfg.loss == LossKind::wgan_clip) model.critic.clip_parameters(cfg.clip);
            sum_d += ld;
            sum_norm += terms.grad_norm_mean;
            ++n_d;
            if (++model.critic_counter >= cfg.critic_steps) {
                model.critic_counter = 0;
                const Tensor gen = model.generator.forward(latent_batch(batch, cfg.latent, rng), nn::Mode::train);
                const Tensor lg = generator_loss(cfg.loss, critic, gen);
                const double lgv = lg.item();
                if (diverged(lgv)) fail("generator loss", lgv);
                opt_g.step(model.generator.params(), ad::backward(lg));
                sum_g += lgv;
                ++n_g;
            }
        }
        EpochStats st;
        st.epoch = ++model.epochs_done;
        st.loss_d = n_d ? sum_d / static_cast<double>(n_d) : 0.0;
        st.loss_g = n_g ? sum_g / static_cast<double>(n_g) : std::numeric_limits<double>::quiet_NaN();
        st.grad_norm = n_d ? sum_norm / static_cast<double>(n_d) : 0.0;
        model.history.push_back(st);
        if (!options.checkpoint_dir.empty() && options.checkpoint_every > 0 && st.epoch % options.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof name, "epoch_%05zu", st.epoch);
            save_model(options.checkpoint_dir / name, model);
        }
        if (options.on_epoch) options.on_epoch(st);
    }
}

Tensor generate(GanModel& model, std::size_t count, Rng& rng) {
    const Shape shape = model.config.data_shape();
    Shape out_shape{count};
    out_shape.insert(out_shape.end(), shape.begin(), shape.end());
    std::vector<double> values;
    values.reserve(count * ad::numel(shape));
    ad::NoGradGuard guard;
    for (std::size_t done = 0; done < count;) {
        const std::size_t n = std::min<std::size_t>(64, count - done);
        const Tensor y = model.generator.forward(latent_batch(n, model.config.latent, rng), nn::Mode::eval);
        values.insert(values.end(), y.values().begin(), y.values().end());
        done += n;
    }
    return Tensor::constant(std::move(out_shape), std::move(values));
}

SampleSet sample_groups(GanModel& model, std::size_t count, std::uint64_t seed, const codec::EncodingLevels& levels,
                        const SampleSet& conditioning, SampleReport* report) {
    SampleSet out;
    SampleReport rep;
    if (count == 0) {
        if (report) *report = rep;
        return out;
    }
    if (conditioning.empty()) throw std::invalid_argument("sample_groups: conditioning set is empty");
    const GanConfig& cfg = model.config;
    if (!cfg.sample_shape.empty()) throw std::invalid_argument("sample_groups: model does not produce images");
    Rng rng(seed);
    const std::size_t width = cfg.mode == ModelMode::multi ? cfg.households : 1;
    const std::size_t per_group = cfg.mode == ModelMode::multi ? 1 : cfg.households;
    const auto images = codec::from_batch(generate(model, count * per_group, rng), levels.l3);
    for (std::size_t i = 0; i < count; ++i) {
        const LoadGroup& cond = conditioning.groups[rng.index(conditioning.size())];
        if (cond.steps != cfg.steps) throw std::invalid_argument("sample_groups: conditioning groups have a different length");
        LoadGroup g(cfg.steps, cfg.households);
        std::vector<double> t_decoded(cfg.steps, 0.0);
        for (std::size_t k = 0; k < per_group; ++k) {
            codec::EncodedImage img = images[i * per_group + k];
            if (!cfg.free_temperature) {
                for (std::size_t m = 0; m < cfg.steps; ++m) {
                    const double t = codec::to_signed(std::clamp(cond.temperature[m] / levels.t_max, 0.0, 1.0));
                    for (std::size_t w = 0; w < width; ++w) img.at(3, m, w) = t;
                }
            }
            codec::DecodeStats ds;
            const LoadGroup d = codec::decode_group(img, levels, &ds);
            rep.off_curve += ds.off_curve;
            rep.max_distance = std::max(rep.max_distance, ds.max_distance);
            for (std::size_t m = 0; m < cfg.steps; ++m) {
                for (std::size_t w = 0; w < width; ++w) g.at(m, k * width + w) = d.at(m, w);
                t_decoded[m] += d.temperature[m] / static_cast<double>(per_group);
            }
        }
        g.temperature = cfg.free_temperature ? t_decoded : cond.temperature;
        g.week_start = cond.week_start;
        g.cadence_minutes = cond.cadence_minutes;
        g.provenance = Provenance::generated;
        char id[32];
        std::snprintf(id, sizeof id, "gen-%s-%05zu", to_string(cfg.mode).c_str(), i);
        g.id = id;
        out.add(std::move(g), Label{});
    }
    if (report) *report = rep;
    return out;
}

// ---------------------------------------------------------------------------
// persistence

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "epoch,loss_d,loss_g\n";
    char buf[96];
    for (const auto& h : history) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", h.epoch, h.loss_d, h.loss_g);
        os << buf;
    }
}

void save_model(const std::filesystem::path& dir, const GanModel& model) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "config.json", std::ios::trunc);
        os << to_json(model.config).dump(2) << '\n';
    }
    nn::save_checkpoint(dir / "generator.ckpt", model.generator.params(),
                        {nn::checkpoint_version, model.generator.fingerprint(), model.config.seed});
    nn::save_checkpoint(dir / "critic.ckpt", model.critic.params(),
                        {nn::checkpoint_version, model.critic.fingerprint(), model.config.seed});
    ordered state;
    state["epochs_done"] = model.epochs_done;
    state["critic_counter"] = model.critic_counter;
    auto& h = state["history"] = ordered::array();
    for (const auto& e : model.history) {
        h.push_back({e.epoch, e.loss_d, std::isfinite(e.loss_g) ? ordered(e.loss_g) : ordered(nullptr), e.grad_norm});
    }
    std::ofstream os(dir / "state.json", std::ios::trunc);
    os << state.dump(1) << '\n';
    write_history_csv(dir / "history.csv", model.history);
}

GanModel load_model(const std::filesystem::path& dir) {
    std::ifstream cs(dir / "config.json");
    if (!cs) throw std::runtime_error("no model config in " + dir.string());
    GanModel m = build_model(gan_config_from_json(json::parse(cs), "model"));
    nn::load_checkpoint(dir / "generator.ckpt", m.generator.params(), m.generator.fingerprint());
    nn::load_checkpoint(dir / "critic.ckpt", m.critic.params(), m.critic.fingerprint());
    std::ifstream ss(dir / "state.json");
    if (!ss) throw std::runtime_error("no model state in " + dir.string());
    const json state = json::parse(ss);
    m.epochs_done = state.at("epochs_done").get<std::size_t>();
    m.critic_counter = state.at("critic_counter").get<std::size_t>();
    for (const auto& row : state.at("history")) {
        EpochStats e;
        e.epoch = row.at(0).get<std::size_t>();
        e.loss_d = row.at(1).get<double>();
        e.loss_g = row.at(2).is_null() ? std::numeric_limits<double>::quiet_NaN() : row.at(2).get<double>();
        e.grad_norm = row.at(3).get<double>();
        m.history.push_back(e);
    }
    return m;
}

}  // namespace loadgan::gan
