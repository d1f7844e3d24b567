#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "loadgan/codec.hpp"
#include "loadgan/rng.hpp"

namespace codec = loadgan::codec;
using loadgan::LoadGroup;
using Color = std::array<double, 3>;

namespace {

void check_color(const Color& got, const Color& want) {
    for (int i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-15));
}

LoadGroup one_row(std::initializer_list<double> powers, double temp = 60.0) {
    LoadGroup g(1, powers.size());
    std::size_t n = 0;
    for (double p : powers) g.at(0, n++) = p;
    g.temperature[0] = temp;
    return g;
}

// Dense grid search over the curve, independent of the closed-form projection.
double grid_decode(const Color& x, double l3, std::size_t samples) {
    double best_p = 0.0;
    double best_d = 1e300;
    for (std::size_t i = 0; i <= samples; ++i) {
        const double p = l3 * static_cast<double>(i) / static_cast<double>(samples);
        const Color c = codec::encode_power(p, l3);
        const double d = (c[0] - x[0]) * (c[0] - x[0]) + (c[1] - x[1]) * (c[1] - x[1]) + (c[2] - x[2]) * (c[2] - x[2]);
        if (d < best_d) {
            best_d = d;
            best_p = p;
        }
    }
    return best_p;
}

}  // namespace

TEST_CASE("colour table anchors") {
    check_color(codec::encode_power(0.0, 6.0), {0, 1, 0});
    check_color(codec::encode_power(2.0, 6.0), {0, 0, 1});
    check_color(codec::encode_power(4.0, 6.0), {1, 0, 0});
    check_color(codec::encode_power(6.0, 6.0), {0, 0, 0});
    check_color(codec::encode_power(9.5, 6.0), {0, 0, 0});
    check_color(codec::encode_power(3.0, 6.0), {0.5, 0, 0.5});
}

TEST_CASE("levels derive from l3") {
    codec::EncodingLevels lv;
    CHECK(lv.l1() == 2.0);
    CHECK(lv.l2() == 4.0);
    CHECK(lv.l3 == 6.0);
    CHECK(lv.t_max == 120.0);
    lv.l3 = -1.0;
    CHECK_THROWS(lv.validate());
}

TEST_CASE("curve is continuous at the breakpoints") {
    const double l3 = 6.0;
    for (double b : {2.0, 4.0, 6.0}) {
        const Color left = codec::encode_power(std::nextafter(b, 0.0), l3);
        const Color at = codec::encode_power(b, l3);
        for (int i = 0; i < 3; ++i) CHECK(std::abs(left[i] - at[i]) < 1e-12);
    }
}

TEST_CASE("encode writes signed channels and temperature") {
    const auto img = codec::encode_group(one_row({0.0, 3.0}, 60.0), {});
    CHECK(img.at(0, 0, 0) == -1.0);
    CHECK(img.at(1, 0, 0) == 1.0);
    CHECK(img.at(2, 0, 0) == -1.0);
    CHECK(img.at(0, 0, 1) == 0.0);
    CHECK(img.at(1, 0, 1) == -1.0);
    CHECK(img.at(2, 0, 1) == 0.0);
    CHECK(img.at(3, 0, 0) == 0.0);
    CHECK(img.at(3, 0, 1) == 0.0);
}

TEST_CASE("signed mapping is a bijection") {
    loadgan::Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform();
        CHECK(std::abs(codec::from_signed(codec::to_signed(x)) - x) <= 1e-15);
    }
    CHECK(codec::to_signed(0.0) == -1.0);
    CHECK(codec::to_signed(1.0) == 1.0);
}

TEST_CASE("encode rejects negative power naming the cell") {
    LoadGroup g(3, 2);
    g.at(2, 1) = -0.1;
    try {
        codec::encode_group(g, {});
        FAIL("expected failure");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("m=2") != std::string::npos);
        CHECK(msg.find("n=1") != std::string::npos);
    }
}

TEST_CASE("out-of-range temperature is clamped and counted") {
    LoadGroup g(3, 1);
    g.temperature = {-5.0, 60.0, 130.0};
    codec::EncodeStats st;
    const auto img = codec::encode_group(g, {}, &st);
    CHECK(st.clamped_temperatures == 2);
    CHECK(img.at(3, 0, 0) == -1.0);
    CHECK(img.at(3, 2, 0) == 1.0);
}

TEST_CASE("round trip on and beyond the curve") {
    for (double p : {0.0, 1.0, 2.0, 3.7, 5.999}) {
        const auto g = codec::decode_group(codec::encode_group(one_row({p}), {}), {});
        CHECK(std::abs(g.at(0, 0) - p) <= 1e-9);
    }
    loadgan::Rng rng(11);
    for (int i = 0; i < 2000; ++i) {
        const double p = rng.uniform(0.0, 6.0);
        CHECK(std::abs(codec::decode_color(codec::encode_power(p, 6.0), 6.0).power - p) <= 1e-9);
    }
    for (double p : {6.0, 6.5, 40.0}) CHECK(codec::decode_color(codec::encode_power(p, 6.0), 6.0).power == 6.0);
    CHECK(codec::decode_color({0, 0, 0}, 6.0).power == 6.0);
}

TEST_CASE("temperature decodes from the t channel") {
    const auto g = codec::decode_group(codec::encode_group(one_row({1.0, 2.0}, 87.5), {}), {});
    CHECK(g.temperature[0] == doctest::Approx(87.5).epsilon(1e-12));
}

TEST_CASE("off-curve colour projects to the nearest curve point") {
    const Color x{0.0, 0.5, 0.6};
    const double oracle = grid_decode(x, 6.0, 1'000'000);
    const auto pr = codec::decode_color(x, 6.0);
    CHECK(pr.power == doctest::Approx(1.1).epsilon(1e-12));
    CHECK(std::abs(pr.power - oracle) <= 6.0 / 1'000'000);
    CHECK(pr.distance > 0.0);

    loadgan::Rng rng(19);
    for (int i = 0; i < 50; ++i) {
        const Color y{rng.uniform(), rng.uniform(), rng.uniform()};
        const double p = codec::decode_color(y, 6.0).power;
        const double q = grid_decode(y, 6.0, 200'000);
        // Compare distances rather than parameters: distinct p can tie.
        auto dist = [&](double pp) {
            const Color c = codec::encode_power(pp, 6.0);
            return std::hypot(c[0] - y[0], c[1] - y[1], c[2] - y[2]);
        };
        CHECK(dist(p) <= dist(q) + 1e-9);
    }
}

TEST_CASE("decoding is idempotent") {
    loadgan::Rng rng(23);
    codec::EncodedImage img(8, 3, 6.0);
    for (auto& v : img.data) v = rng.uniform(-1.2, 1.2);
    const auto once = codec::decode_group(img, {});
    const auto twice = codec::decode_group(codec::encode_group(once, {}), {});
    for (std::size_t i = 0; i < once.kw.size(); ++i) CHECK(std::abs(once.kw[i] - twice.kw[i]) <= 1e-12);
}

TEST_CASE("per-sample maximum level is carried on the image") {
    codec::EncodingLevels lv;
    lv.per_sample_max = true;
    const auto img = codec::encode_group(one_row({1.0, 9.0}), lv);
    CHECK(img.l3 == 9.0);
    const auto g = codec::decode_group(img, lv);
    CHECK(g.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.at(0, 1) == 9.0);
}

TEST_CASE("batch conversion and png output") {
    const auto a = codec::encode_group(one_row({0.5, 4.5}), {});
    const auto t = codec::to_batch({a, a});
    CHECK(t.shape() == loadgan::ad::Shape{2, 4, 1, 2});
    const auto back = codec::from_batch(t, 6.0);
    REQUIRE(back.size() == 2);
    CHECK(back[1].data == a.data);

    const auto path = std::filesystem::temp_directory_path() / "loadgan_codec_test.png";
    codec::write_png(path, a, 4);
    std::ifstream is(path, std::ios::binary);
    char sig[8];
    is.read(sig, 8);
    CHECK(std::string(sig + 1, 3) == "PNG");
    std::filesystem::remove(path);
}
