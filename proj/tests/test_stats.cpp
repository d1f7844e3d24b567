#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>

#include "loadgan/dataio.hpp"
#include "loadgan/metrics.hpp"
#include "loadgan/rng.hpp"
#include "loadgan/stats.hpp"

namespace stats = loadgan::stats;
namespace metrics = loadgan::metrics;
using loadgan::LoadGroup;
using loadgan::SampleSet;

namespace {

const std::int64_t monday = 17245LL * 1440;

// General Frechet distance between Gaussian fits in d dimensions, from the
// empirical mean vectors and (population) covariance matrices.
double frechet_matrix_form(const std::vector<double>& a, const std::vector<double>& b) {
    auto fit = [](const std::vector<double>& v) {
        Eigen::MatrixXd x(static_cast<long>(v.size()), 1);
        for (std::size_t i = 0; i < v.size(); ++i) x(static_cast<long>(i), 0) = v[i];
        Eigen::VectorXd mu = x.colwise().mean();
        Eigen::MatrixXd c = x.rowwise() - mu.transpose();
        Eigen::MatrixXd cov = (c.transpose() * c) / static_cast<double>(v.size());
        return std::make_pair(mu, cov);
    };
    auto [ma, ca] = fit(a);
    auto [mb, cb] = fit(b);
    // sqrt(ca cb) via the symmetric form ca^(1/2) cb ca^(1/2).
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(ca);
    Eigen::MatrixXd ca_half = ea.operatorSqrt();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(ca_half * cb * ca_half);
    Eigen::MatrixXd cross = em.operatorSqrt();
    return (ma - mb).squaredNorm() + (ca + cb - 2.0 * cross).trace();
}

SampleSet random_set(loadgan::Rng& rng, std::size_t count, std::size_t m, std::size_t n, std::int64_t cadence) {
    SampleSet s;
    for (std::size_t i = 0; i < count; ++i) {
        LoadGroup g(m, n);
        for (auto& v : g.kw) v = rng.uniform(0.0, 4.0);
        g.week_start = monday;
        g.cadence_minutes = cadence;
        s.add(g);
    }
    return s;
}

}  // namespace

TEST_CASE("score metrics on the hand set") {
    const std::vector<double> s{0.9, 0.4, 0.6, 0.51};
    CHECK(metrics::por(s) == 75.0);
    CHECK(metrics::mcl(s) == doctest::Approx(0.6025).epsilon(1e-15));
    CHECK(metrics::por(std::vector<double>(5, 1.0)) == 100.0);
    CHECK(metrics::mcl(std::vector<double>(5, 1.0)) == 1.0);
    CHECK_THROWS(metrics::por(std::vector<double>{}));
}

TEST_CASE("1-D Frechet distance") {
    loadgan::Rng rng(8);
    SUBCASE("matches the matrix form") {
        for (int t = 0; t < 100; ++t) {
            std::vector<double> a(5 + rng.index(60)), b(5 + rng.index(60));
            for (auto& x : a) x = rng.uniform();
            for (auto& x : b) x = rng.uniform() * rng.uniform();
            const double f = metrics::frechet_1d(a, b);
            const double o = frechet_matrix_form(a, b);
            CHECK(std::abs(f - o) <= 1e-10 * std::max(std::abs(o), 1e-300));
        }
    }
    SUBCASE("closed form on known fits") {
        CHECK(metrics::frechet_1d(std::vector<double>{-1, 1}, std::vector<double>{0, 2}) == 1.0);
        std::vector<double> a(100000), b(100000);
        for (auto& x : a) x = rng.normal(2, 1);
        for (auto& x : b) x = rng.normal(2, 3);
        CHECK(std::abs(metrics::frechet_1d(a, b) - 4.0) < 0.1);
        CHECK(metrics::frechet_1d(a, a) == 0.0);
        std::vector<double> shifted(a);
        for (auto& x : shifted) x += 0.75;
        CHECK(metrics::frechet_1d(a, shifted) == doctest::Approx(0.5625).epsilon(1e-12));
        CHECK(metrics::frechet_1d(a, b) == metrics::frechet_1d(b, a));
    }
}

TEST_CASE("summary quartiles") {
    const auto s = metrics::summarize(std::vector<double>{4, 1, 3, 2, 5});
    CHECK(s.min == 1);
    CHECK(s.q1 == 2);
    CHECK(s.median == 3);
    CHECK(s.q3 == 4);
    CHECK(s.max == 5);
    CHECK(s.stddev == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("constant profile indices") {
    SampleSet set;
    LoadGroup g(672, 1);
    std::fill(g.kw.begin(), g.kw.end(), 1.0);
    g.week_start = monday;
    g.cadence_minutes = 15;
    set.add(g);
    const auto d = stats::compute_indices(set, stats::Level::household);
    for (const auto& x : d) {
        switch (x.kind) {
            case stats::IndexKind::peak: CHECK(x.values == std::vector<double>{1.0}); break;
            case stats::IndexKind::mean: CHECK(x.values == std::vector<double>{1.0}); break;
            case stats::IndexKind::ramp:
                CHECK(x.values.size() == 671);
                for (double r : x.values) CHECK(r == 0.0);
                break;
            case stats::IndexKind::daily:
                for (double e : x.values) CHECK(e == doctest::Approx(24.0).epsilon(1e-14));
                CHECK(x.values.size() == (x.component == 0 ? 5u : 1u));
                break;
            case stats::IndexKind::hourly: break;
        }
    }
    // Hourly periods hold 6, 4, 4, 4, 6 hours.
    const double hours[] = {6, 4, 4, 4, 6};
    for (const auto& x : d)
        if (x.kind == stats::IndexKind::hourly) {
            CHECK(x.values.size() == 7);
            for (double e : x.values) CHECK(e == doctest::Approx(hours[x.component]).epsilon(1e-14));
        }
}

TEST_CASE("period energies split steps by overlap and sum to the day") {
    // 105-minute steps straddle period boundaries and midnight.
    loadgan::Rng rng(1);
    std::vector<double> p(96);
    for (auto& v : p) v = rng.uniform(0, 3);
    const auto days = stats::day_energies(p, monday, 105, stats::IndexConfig{}.periods);
    REQUIRE(days.size() == 7);
    double total = 0;
    for (const auto& d : days) {
        double s = 0;
        for (double e : d.period_kwh) s += e;
        CHECK(s == d.total_kwh);
        total += d.total_kwh;
    }
    double direct = 0;
    for (double v : p) direct += v * 1.75;
    CHECK(total == doctest::Approx(direct).epsilon(1e-12));
    // Step 3 covers 05:15-07:00: 45 minutes before 06:00, 60 after.
    const auto one = stats::day_energies(std::vector<double>{0, 0, 0, 2.0}, monday, 105, stats::IndexConfig{}.periods);
    CHECK(one[0].period_kwh[0] == doctest::Approx(1.5));
    CHECK(one[0].period_kwh[1] == doctest::Approx(2.0));
}

TEST_CASE("transformer level is the column sum") {
    loadgan::Rng rng(3);
    const auto set = random_set(rng, 6, 96, 4, 105);
    const auto hh = stats::compute_indices(set, stats::Level::household);
    const auto tr = stats::compute_indices(set, stats::Level::transformer);
    CHECK(hh[0].values.size() == 24);
    CHECK(tr[0].values.size() == 6);
    for (std::size_t g = 0; g < 6; ++g) {
        double sum_peaks = 0;
        for (std::size_t n = 0; n < 4; ++n) sum_peaks += hh[0].values[g * 4 + n];
        CHECK(tr[0].values[g] <= sum_peaks);
        const auto agg = set.groups[g].aggregate();
        CHECK(tr[0].values[g] == *std::max_element(agg.begin(), agg.end()));
    }
}

TEST_CASE("indices are permutation invariant") {
    loadgan::Rng rng(5);
    auto set = random_set(rng, 5, 96, 3, 105);
    auto perm = set;
    std::reverse(perm.groups.begin(), perm.groups.end());
    for (auto& g : perm.groups)
        for (std::size_t m = 0; m < g.steps; ++m) std::swap(g.at(m, 0), g.at(m, 2));
    const auto a = stats::compute_indices(set, stats::Level::household);
    const auto b = stats::compute_indices(perm, stats::Level::household);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(metrics::frechet_1d(a[i].values, b[i].values) < 1e-20);
}

TEST_CASE("ratio") {
    auto r = stats::ratio(2, 4);
    CHECK(r.defined);
    CHECK(r.value == 0.5);
    CHECK(r.favorable);
    r = stats::ratio(3, 3);
    CHECK(r.value == 1.0);
    CHECK_FALSE(r.favorable);
    CHECK_FALSE(stats::ratio(1, 0).defined);
}

TEST_CASE("report structure") {
    loadgan::Rng rng(6);
    const auto real = random_set(rng, 8, 96, 4, 105);
    const auto single = random_set(rng, 8, 96, 4, 105);
    stats::ReportInputs in;
    in.real = &real;
    in.multi = &real;
    in.single = &single;
    auto rep = stats::build_report(in);
    CHECK(rep["classifier"]["present"] == false);
    std::size_t cells = 0;
    for (const char* level : {"household", "transformer"}) {
        for (stats::IndexKind k : stats::all_index_kinds) {
            const auto& e = rep["statistics"][level][stats::to_string(k)];
            REQUIRE(e.contains("fid_multi"));
            REQUIRE(e.contains("fid_single"));
            CHECK(e["fid_multi"].get<double>() == 0.0);
            CHECK(e["fid_single"].get<double>() > 0.0);
            CHECK(e["ratio"].get<double>() == 0.0);
            cells += 2;
        }
    }
    CHECK(cells == 5 * 2 * 2);
    CHECK(rep["statistics"]["household"]["hourly"]["components"].size() == 5);
    CHECK(rep["statistics"]["household"]["daily"]["components"].size() == 3);

    in.scores = stats::ClassifierScores{{0.9, 0.8}, {0.9, 0.8}, {0.2, 0.7}};
    rep = stats::build_report(in);
    CHECK(rep["classifier"]["present"] == true);
    CHECK(rep["classifier"]["multi"]["por"] == rep["classifier"]["real"]["por"]);
    CHECK(rep["classifier"]["multi"]["score_fid"].get<double>() == 0.0);
    CHECK(rep["classifier"]["single"]["por"].get<double>() == 50.0);

    in.single = nullptr;
    rep = stats::build_report(in);
    CHECK_FALSE(rep["statistics"]["household"]["peak"].contains("ratio"));

    const auto dir = std::filesystem::temp_directory_path() / "loadgan_plots";
    in.single = &single;
    stats::write_plots(dir, in);
    CHECK(std::filesystem::exists(dir / "peak_household_curve.svg"));
    CHECK(std::filesystem::exists(dir / "daily_transformer_box.svg"));
    std::filesystem::remove_all(dir);
}
