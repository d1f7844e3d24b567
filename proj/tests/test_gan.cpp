#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "loadgan/gan.hpp"

namespace gan = loadgan::gan;
namespace ad = loadgan::ad;
namespace nn = loadgan::nn;
using ad::Tensor;
using loadgan::Rng;

namespace {

std::vector<char> file_bytes(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

gan::TrainData random_images(std::size_t count, const ad::Shape& shape, std::uint64_t seed) {
    Rng rng(seed);
    gan::TrainData d;
    d.sample_shape = shape;
    d.count = count;
    d.values.resize(count * ad::numel(shape));
    for (auto& v : d.values) v = rng.uniform(-1.0, 1.0);
    return d;
}

// D(x) = x . w over the flattened sample.
gan::Critic linear_critic(std::vector<double> w) {
    const std::size_t d = w.size();
    Tensor wt = Tensor::constant({d, 1}, std::move(w));
    return [wt, d](const Tensor& x) { return ad::matmul(ad::reshape(x, {x.dim(0), d}), wt); };
}

Tensor batch(Rng& rng, ad::Shape shape) {
    std::vector<double> v(ad::numel(shape));
    for (auto& x : v) x = rng.normal();
    return Tensor::constant(std::move(shape), std::move(v));
}

loadgan::SampleSet conditioning_set(std::size_t steps, std::size_t households) {
    loadgan::SampleSet s;
    for (int i = 0; i < 3; ++i) {
        loadgan::LoadGroup g(steps, households);
        for (std::size_t m = 0; m < steps; ++m) g.temperature[m] = 40.0 + i + 0.25 * static_cast<double>(m);
        g.week_start = 17245LL * 1440 + i * 7 * 1440;
        g.cadence_minutes = 105;
        s.add(g);
    }
    return s;
}

}  // namespace

TEST_CASE("desk network shapes") {
    Rng rng(1);
    const auto multi = gan::desk_preset(gan::ModelMode::multi);
    auto g = gan::build_generator(multi, rng);
    CHECK(g.input_shape() == ad::Shape{64});
    CHECK(g.output_shape() == ad::Shape{4, 96, 4});
    auto d = gan::build_critic(multi, rng);
    CHECK(d.input_shape() == ad::Shape{4, 96, 4});
    CHECK(d.output_shape() == ad::Shape{1});

    const auto single = gan::desk_preset(gan::ModelMode::single);
    CHECK(gan::build_generator(single, rng).output_shape() == ad::Shape{4, 96, 1});
    CHECK(gan::build_critic(single, rng).output_shape() == ad::Shape{1});

    // Generated values stay inside the tanh range.
    ad::NoGradGuard guard;
    const Tensor y = g.forward(batch(rng, {5, 64}), nn::Mode::eval);
    for (double v : y.values()) CHECK(std::abs(v) < 1.0);
}

TEST_CASE("paper preset shapes") {
    Rng rng(2);
    for (auto mode : {gan::ModelMode::multi, gan::ModelMode::single}) {
        const auto c = gan::paper_preset(mode);
        const std::size_t width = mode == gan::ModelMode::multi ? 8 : 1;
        CHECK(gan::build_generator(c, rng).output_shape() == ad::Shape{4, 672, width});
        CHECK(gan::build_critic(c, rng).output_shape() == ad::Shape{1});
    }
    CHECK(gan::paper_preset(gan::ModelMode::multi).batch == 16);
    CHECK(gan::paper_preset(gan::ModelMode::single).batch == 64);
    CHECK(gan::paper_preset(gan::ModelMode::single).lr_g == 1.2e-4);
}

TEST_CASE("generator stack validation") {
    Rng rng(3);
    auto c = gan::desk_preset(gan::ModelMode::multi);
    c.generator.back().activation = nn::Activation::relu;
    CHECK_THROWS_AS(gan::build_generator(c, rng), loadgan::json_util::ConfigError);

    c = gan::desk_preset(gan::ModelMode::multi);
    c.households = 5;
    try {
        gan::build_generator(c, rng);
        FAIL("expected a shape mismatch");
    } catch (const ad::ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[4, 96, 5]") != std::string::npos);
        CHECK(msg.find("layer 5") != std::string::npos);
    }
    c = gan::desk_preset(gan::ModelMode::multi);
    c.lambda = -1;
    CHECK_THROWS(c.validate());
}

TEST_CASE("critic introspection") {
    Rng rng(4);
    auto c = gan::desk_preset(gan::ModelMode::multi);
    auto d = gan::build_critic(c, rng);
    std::size_t convs = 0;
    for (const auto& s : d.specs()) {
        CHECK_FALSE(s.norm);
        if (s.kind == nn::LayerKind::conv) {
            ++convs;
            CHECK(s.activation == nn::Activation::leaky_relu);
            CHECK(s.slope == 0.2);
        }
    }
    CHECK(convs == 4);
    CHECK(d.specs().back().activation == nn::Activation::none);
    for (const auto& e : d.params().entries()) CHECK(e.name.find("bn") == std::string::npos);

    c.critic_batchnorm = true;
    auto dn = gan::build_critic(c, rng);
    std::size_t normed = 0;
    for (const auto& s : dn.specs()) normed += s.norm;
    CHECK(normed == 4);
    CHECK(dn.params().entries().size() > d.params().entries().size());
}

TEST_CASE("gradient penalty identities") {
    Rng rng(5);
    SUBCASE("unit-norm linear critic has zero penalty") {
        const Tensor real = batch(rng, {6, 2, 3});
        const Tensor fake = batch(rng, {6, 2, 3});
        std::vector<double> e(6, 0.0);
        e[4] = 1.0;
        Rng r1(9);
        CHECK(gan::loss_wgan_gp(linear_critic(e), real, fake, 10.0, r1).penalty == 0.0);
        Rng r2(9);
        const auto t = gan::loss_wgan_gp(linear_critic({0.6, 0.0, 0.8, 0.0, 0.0, 0.0}), real, fake, 10.0, r2);
        CHECK(t.penalty < 1e-28);
        CHECK(t.grad_norm_mean == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("slope-3 scalar critic with lambda 10") {
        const Tensor real = batch(rng, {8, 1});
        const Tensor fake = batch(rng, {8, 1});
        const gan::Critic d = [](const Tensor& x) { return ad::scale(x, 3.0); };
        Rng r(1);
        const auto t = gan::loss_wgan_gp(d, real, fake, 10.0, r);
        CHECK(t.penalty == doctest::Approx(40.0).epsilon(1e-14));
        CHECK(t.grad_norm_mean == doctest::Approx(3.0).epsilon(1e-14));
    }
    SUBCASE("lambda 0 reduces to the clipped objective") {
        nn::Network net(gan::desk_preset(gan::ModelMode::multi).critic, {4, 96, 4}, rng);
        const gan::Critic d = [&net](const Tensor& x) { return net.forward(x, nn::Mode::train); };
        const Tensor real = batch(rng, {3, 4, 96, 4});
        const Tensor fake = batch(rng, {3, 4, 96, 4});
        Rng r(2);
        const double gp = gan::loss_wgan_gp(d, real, fake, 0.0, r).loss.item();
        const double clip = gan::loss_wgan_clip(d, real, fake).loss.item();
        CHECK(std::abs(gp - clip) <= 1e-12);
    }
    SUBCASE("identical batches have zero wasserstein term") {
        const Tensor x = batch(rng, {4, 3});
        const auto t = gan::loss_wgan_clip(linear_critic({1.0, -2.0, 0.5}), x, x);
        CHECK(t.wasserstein == 0.0);
    }
    SUBCASE("bad inputs") {
        const gan::Critic d = [](const Tensor& x) { return x; };
        CHECK_THROWS_AS(gan::loss_wgan_clip(d, batch(rng, {2, 1}), batch(rng, {3, 1})), ad::ShapeError);
        Rng r(3);
        CHECK_THROWS(gan::loss_wgan_gp(d, batch(rng, {2, 1}), batch(rng, {2, 1}), -1.0, r));
        const gan::Critic inf = [](const Tensor& x) { return ad::scale(x, 1e308 * 10); };
        CHECK_THROWS_AS(gan::loss_wgan_clip(inf, batch(rng, {2, 1}), batch(rng, {2, 1})), gan::LossError);
    }
}

TEST_CASE("original log-loss") {
    const Tensor ones = Tensor::full({4, 1}, 1.0);
    const Tensor zeros = Tensor::zeros({4, 1});
    CHECK(std::abs(gan::discriminator_log_loss(ones, zeros).item()) < 1e-12);
    // Fully wrong probabilities hit the floor instead of producing infinity.
    const double worst = gan::discriminator_log_loss(zeros, ones).item();
    CHECK(std::isfinite(worst));
    CHECK(worst == doctest::Approx(-2.0 * std::log(1e-12)));
    const Tensor half = Tensor::full({4, 1}, 0.5);
    CHECK(gan::discriminator_log_loss(half, half).item() == doctest::Approx(2.0 * std::log(2.0)));
}

TEST_CASE("training bookkeeping") {
    auto cfg = gan::desk_preset(gan::ModelMode::multi);
    cfg.seed = 11;
    const auto data = random_images(20, {4, 96, 4}, 1);

    SUBCASE("zero epochs leave the model untouched") {
        auto m = gan::build_model(cfg);
        const auto before = m.generator.params().entries()[0].value.values()[0];
        gan::train(m, data, nullptr, {});
        CHECK(m.history.empty());
        CHECK(m.epochs_done == 0);
        CHECK(m.generator.params().entries()[0].value.values()[0] == before);
    }
    SUBCASE("weight clipping bounds every critic parameter") {
        cfg.loss = gan::LossKind::wgan_clip;
        cfg.critic_steps = 1;
        auto m = gan::build_model(cfg);
        gan::TrainOptions opt;
        opt.epochs = 2;
        gan::train(m, data, nullptr, opt);
        CHECK(m.history.size() == 2);
        for (const auto& e : m.critic.params().entries()) {
            if (!e.trainable) continue;
            for (double v : e.value.values()) CHECK(std::abs(v) <= 0.01);
        }
    }
    SUBCASE("shape mismatch") {
        auto m = gan::build_model(cfg);
        gan::TrainOptions opt;
        opt.epochs = 1;
        CHECK_THROWS_AS(gan::train(m, random_images(4, {4, 96, 1}, 2), nullptr, opt), ad::ShapeError);
    }
}

namespace {

nn::LayerSpec dense(std::size_t in, std::size_t out, nn::Activation act) {
    nn::LayerSpec s;
    s.in = in;
    s.out = out;
    s.activation = act;
    return s;
}

gan::GanConfig scalar_config(std::uint64_t seed) {
    gan::GanConfig c;
    c.sample_shape = {1};
    c.latent = 8;
    c.generator = {dense(8, 32, nn::Activation::relu), dense(32, 32, nn::Activation::relu),
                   dense(32, 1, nn::Activation::tanh)};
    c.critic = {dense(1, 32, nn::Activation::leaky_relu), dense(32, 32, nn::Activation::leaky_relu),
                dense(32, 1, nn::Activation::none)};
    c.loss = gan::LossKind::wgan_clip;
    c.lr_d = 2e-4;
    c.lr_g = 2e-4;
    c.batch = 64;
    c.seed = seed;
    return c;
}

gan::TrainData gaussian(std::size_t count, double mean, double sd, std::uint64_t seed) {
    Rng rng(seed);
    gan::TrainData d{{1}, count, std::vector<double>(count)};
    for (auto& v : d.values) v = rng.normal(mean, sd);
    return d;
}

}  // namespace

TEST_CASE("scalar toy problems") {
    SUBCASE("generated mean approaches the data mean") {
        const double data_mean = 0.3;
        auto m = gan::build_model(scalar_config(4));
        gan::TrainOptions opt;
        opt.epochs = 50;  // 100 batches each: 5000 critic steps
        gan::train(m, gaussian(6400, data_mean, 0.1, 8), nullptr, opt);
        Rng rng(12);
        const Tensor g = gan::generate(m, 10000, rng);
        double mean = 0.0;
        for (double v : g.values()) mean += v;
        mean /= 10000.0;
        CHECK(std::abs(mean - data_mean) <= 0.1 * data_mean);
    }
    SUBCASE("one critic step per generator step stays finite") {
        auto c = scalar_config(5);
        c.critic_steps = 1;
        auto m = gan::build_model(c);
        gan::TrainOptions opt;
        opt.epochs = 2;
        gan::train(m, gaussian(6400, 0.3, 0.1, 9), nullptr, opt);
        for (const auto& h : m.history) {
            CHECK(std::isfinite(h.loss_d));
            CHECK(std::isfinite(h.loss_g));
        }
        for (const auto& e : m.critic.params().entries())
            for (double v : e.value.values()) CHECK(std::abs(v) <= c.clip);
    }
    SUBCASE("divergence restores the last good epoch") {
        auto c = scalar_config(6);
        c.loss = gan::LossKind::wgan_gp;
        auto m = gan::build_model(c);
        gan::TrainOptions opt;
        opt.epochs = 1;
        const auto data = gaussian(640, 0.3, 0.1, 10);
        gan::train(m, data, nullptr, opt);
        const auto good = m.critic.params().entries()[0].value.values();
        const std::vector<double> kept(good.begin(), good.end());
        m.config.lr_d = 1e6;
        m.config.lr_g = 1e6;
        opt.epochs = 5;
        CHECK_THROWS_AS(gan::train(m, data, nullptr, opt), gan::DivergenceError);
        CHECK(m.epochs_done == 1);
        const auto now = m.critic.params().entries()[0].value.values();
        CHECK(std::equal(now.begin(), now.end(), kept.begin(), kept.end()));
    }
}

TEST_CASE("seeded training is bit-reproducible") {
    auto cfg = gan::desk_preset(gan::ModelMode::multi);
    cfg.seed = 21;
    cfg.critic_steps = 1;
    cfg.permute_columns = true;
    const auto data = random_images(24, {4, 96, 4}, 3);
    const auto augment = random_images(8, {4, 96, 4}, 4);
    const auto root = std::filesystem::temp_directory_path() / "loadgan_gan_det";
    std::filesystem::remove_all(root);
    std::vector<std::vector<gan::EpochStats>> histories;
    for (const char* run : {"a", "b"}) {
        auto m = gan::build_model(cfg);
        gan::TrainOptions opt;
        opt.epochs = 2;
        gan::train(m, data, &augment, opt);
        gan::save_model(root / run, m);
        histories.push_back(m.history);
    }
    REQUIRE(histories[0].size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(histories[0][i].loss_d == histories[1][i].loss_d);
        CHECK(histories[0][i].loss_g == histories[1][i].loss_g);
    }
    for (const char* f : {"generator.ckpt", "critic.ckpt", "history.csv", "state.json", "config.json"}) {
        CHECK_MESSAGE(file_bytes(root / "a" / f) == file_bytes(root / "b" / f), f);
    }

    // Resuming from a saved model continues the same trajectory.
    auto full = gan::build_model(cfg);
    gan::TrainOptions three;
    three.epochs = 3;
    gan::train(full, data, &augment, three);
    auto resumed = gan::load_model(root / "a");
    CHECK(resumed.history.size() == 2);
    gan::TrainOptions one;
    one.epochs = 1;
    gan::train(resumed, data, &augment, one);
    CHECK(resumed.history.back().loss_d == full.history.back().loss_d);
    const auto& pa = resumed.generator.params().entries();
    const auto& pb = full.generator.params().entries();
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(std::equal(pa[i].value.values().begin(), pa[i].value.values().end(), pb[i].value.values().begin()));
    std::filesystem::remove_all(root);
}

TEST_CASE("sampling groups") {
    const loadgan::codec::EncodingLevels levels;
    SUBCASE("multi mode shape and conditioning") {
        auto cfg = gan::gan_config_from_json({{"mode", "multi"}, {"households", 8}, {"seed", 4}});
        CHECK(cfg.data_shape() == ad::Shape{4, 96, 8});
        auto m = gan::build_model(cfg);
        const auto cond = conditioning_set(96, 8);
        CHECK(gan::sample_groups(m, 0, 1, levels, cond).empty());
        gan::SampleReport rep;
        const auto out = gan::sample_groups(m, 3, 1, levels, cond, &rep);
        REQUIRE(out.size() == 3);
        for (const auto& g : out.groups) {
            CHECK(g.steps == 96);
            CHECK(g.households == 8);
            CHECK(g.provenance == loadgan::Provenance::generated);
            CHECK(g.cadence_minutes == 105);
            bool matched = false;
            for (const auto& c : cond.groups)
                matched = matched || (c.temperature == g.temperature && c.week_start == g.week_start);
            CHECK(matched);
            for (double v : g.kw) CHECK((v >= 0.0 && v <= levels.l3));
        }
        CHECK_NOTHROW(out.validate());
        const auto again = gan::sample_groups(m, 3, 1, levels, cond);
        for (std::size_t i = 0; i < 3; ++i) CHECK(again.groups[i].kw == out.groups[i].kw);
    }
    SUBCASE("single mode columns are exchangeable") {
        auto cfg = gan::desk_preset(gan::ModelMode::single);
        cfg.seed = 5;
        auto m = gan::build_model(cfg);
        const auto out = gan::sample_groups(m, 250, 2, levels, conditioning_set(96, 4));
        REQUIRE(out.size() == 250);
        CHECK(out.groups[0].households == 4);
        // Permutation test on the difference of mean column-0 and column-3
        // weekly means; swapping the two columns within a group is a valid
        // relabelling when draws are independent.
        std::vector<double> d(out.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            const auto a = out.groups[i].column(0);
            const auto b = out.groups[i].column(3);
            double s = 0;
            for (std::size_t k = 0; k < a.size(); ++k) s += a[k] - b[k];
            d[i] = s / static_cast<double>(a.size());
        }
        auto stat = [&](const std::vector<int>& sign) {
            double s = 0;
            for (std::size_t i = 0; i < d.size(); ++i) s += sign[i] * d[i];
            return std::abs(s);
        };
        const double observed = stat(std::vector<int>(d.size(), 1));
        Rng rng(77);
        std::size_t extreme = 0;
        const std::size_t trials = 1000;
        for (std::size_t t = 0; t < trials; ++t) {
            std::vector<int> sign(d.size());
            for (auto& x : sign) x = rng.bernoulli(0.5) ? 1 : -1;
            extreme += stat(sign) >= observed;
        }
        CHECK(static_cast<double>(extreme) / trials > 0.01);
    }
    SUBCASE("free temperature decodes the generated channel") {
        auto cfg = gan::desk_preset(gan::ModelMode::multi);
        cfg.free_temperature = true;
        auto m = gan::build_model(cfg);
        const auto cond = conditioning_set(96, 4);
        const auto out = gan::sample_groups(m, 2, 3, levels, cond);
        for (const auto& g : out.groups)
            for (const auto& c : cond.groups) CHECK(g.temperature != c.temperature);
    }
    SUBCASE("requires conditioning") {
        auto m = gan::build_model(gan::desk_preset(gan::ModelMode::multi));
        CHECK_THROWS(gan::sample_groups(m, 1, 1, levels, loadgan::SampleSet{}));
    }
}

TEST_CASE("config json round trip") {
    auto c = gan::desk_preset(gan::ModelMode::single);
    c.seed = 99;
    c.loss = gan::LossKind::original;
    const auto j = gan::to_json(c);
    const auto back = gan::gan_config_from_json(loadgan::json_util::json::parse(j.dump()));
    CHECK(gan::to_json(back).dump() == j.dump());
    CHECK(back.generator == c.generator);
    CHECK(back.critic == c.critic);
    CHECK_THROWS_AS(gan::gan_config_from_json({{"epoch", 3}}), loadgan::json_util::ConfigError);
    CHECK_THROWS_AS(gan::gan_config_from_json({{"loss", "hinge"}}), loadgan::json_util::ConfigError);
}
