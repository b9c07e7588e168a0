#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "oracles.hpp"
#include "qus/error.hpp"
#include "qus/field_simulator.hpp"
#include "qus/hk_model.hpp"
#include "qus/parametric_imaging.hpp"

using namespace qus;
using namespace qus::img;

namespace {

sim::EnvelopeFrame frame_of(const Raster& r) { return {r, {}, {}}; }

ParametricMap constant_map(Dims d, double v) { return map_from_raster(Raster(d, v)); }

PatchConfig patch(double extent, double overlap) {
    PatchConfig c;
    c.extent_axial = c.extent_lateral = extent;
    c.overlap_fraction = overlap;
    return c;
}

sim::PhantomSpec two_layer(Dims canvas, double top, double bottom) {
    sim::PhantomSpec ph{canvas, {sim::Region{sim::Shape::background, 0, 0, 0, 0, top, 2.0}}};
    const double qa = canvas.axial / 4.0;
    ph.regions.push_back(
        sim::Region{sim::Shape::rectangle, 3 * qa, canvas.lateral / 2.0, qa, canvas.lateral / 2.0, bottom, 2.0});
    return ph;
}

// Median of valid map pixels whose covering windows lie fully on one side of
// the layer boundary.
std::pair<double, double> layer_medians(const ParametricMap& m, std::size_t boundary, std::size_t margin) {
    std::vector<double> top, bottom;
    for (std::size_t a = 0; a < m.dims().axial; ++a)
        for (std::size_t l = 0; l < m.dims().lateral; ++l) {
            if (!m.validity(a, l)) continue;
            if (a + margin < boundary) top.push_back(m.data(a, l));
            if (a >= boundary + margin) bottom.push_back(m.data(a, l));
        }
    return {oracle::median(top), oracle::median(bottom)};
}

}  // namespace

TEST_CASE("patch config validation") {
    CHECK_NOTHROW(PatchConfig{}.validate());
    CHECK_THROWS_AS(patch(32, 1.0).validate(), ConfigError);
    CHECK_THROWS_AS(patch(32, -0.1).validate(), ConfigError);
    CHECK_THROWS_AS(patch(0, 0.5).validate(), ConfigError);
    PatchConfig c;
    c.min_valid_samples = 15;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("partition: stride arithmetic") {
    const auto w = partition_patches({100, 100}, {}, patch(50, 0.75));
    CHECK(w.size() == 25);
    std::vector<std::size_t> starts;
    for (const auto& x : w)
        if (x.l0 == 0) starts.push_back(x.a0);
    CHECK(starts == std::vector<std::size_t>{0, 12, 25, 37, 50});
    CHECK(w.front().center_a == doctest::Approx(24.5));
}

TEST_CASE("partition: zero overlap tiles the frame") {
    const auto w = partition_patches({100, 100}, {}, patch(25, 0.0));
    CHECK(w.size() == 16);
    Grid<int> hits({100, 100}, 0);
    for (const auto& x : w)
        for (std::size_t a = x.a0; a < x.a0 + x.size_a; ++a)
            for (std::size_t l = x.l0; l < x.l0 + x.size_l; ++l) ++hits(a, l);
    for (int h : hits.values()) CHECK(h == 1);
}

TEST_CASE("partition: every pixel covered, windows inside the frame") {
    for (auto [dims, ext, ov] : {std::tuple{Dims{97, 83}, 20.0, 0.6}, std::tuple{Dims{256, 128}, 32.0, 0.75},
                                 std::tuple{Dims{64, 40}, 40.0, 0.3}}) {
        const auto w = partition_patches(dims, {}, patch(ext, ov));
        Grid<int> hits(dims, 0);
        for (const auto& x : w) {
            CHECK(x.a0 + x.size_a <= dims.axial);
            CHECK(x.l0 + x.size_l <= dims.lateral);
            for (std::size_t a = x.a0; a < x.a0 + x.size_a; ++a)
                for (std::size_t l = x.l0; l < x.l0 + x.size_l; ++l) ++hits(a, l);
        }
        for (int h : hits.values()) CHECK(h >= 1);
    }
}

TEST_CASE("partition: physical extents and oversize patches") {
    PatchConfig c = patch(4.5, 0.75);
    c.unit = ExtentUnit::physical;
    const auto w = partition_patches({200, 100}, {0.1, 0.15}, c);
    CHECK(w.front().size_a == 45);
    CHECK(w.front().size_l == 30);
    CHECK_THROWS_AS(partition_patches({30, 100}, {}, patch(32, 0.5)), ConfigError);
}

TEST_CASE("estimate_map: constant estimator gives a constant map") {
    Raster r({90, 70}, 1.0);
    const auto m = estimate_map(frame_of(r), patch(20, 0.5), [](std::span<const double>) { return 4.25; });
    for (std::size_t i = 0; i < r.size(); ++i) {
        CHECK(m.validity.storage()[i] == 1);
        CHECK(m.data.storage()[i] == 4.25);
    }
    CHECK(m.valid_fraction() == 1.0);
}

TEST_CASE("estimate_map: pixel value is the mean of covering windows") {
    Raster r({40, 40});
    for (std::size_t a = 0; a < 40; ++a)
        for (std::size_t l = 0; l < 40; ++l) r(a, l) = 100.0 * a + l;
    // each window reports its top-left sample, i.e. 100 a0 + l0
    const auto m = estimate_map(frame_of(r), patch(20, 0.5), [](std::span<const double> s) { return s[0]; });
    CHECK(m.windows.size() == 9);
    CHECK(m.data(15, 15) == (0.0 + 10.0 + 1000.0 + 1010.0) / 4.0);
    CHECK(m.data(5, 5) == 0.0);
    CHECK(m.data(35, 25) == (2010.0 + 2020.0) / 2.0);
}

TEST_CASE("estimate_map: failing patches are invalid, never zero") {
    Raster r({64, 64}, 1.0);
    for (std::size_t a = 0; a < 32; ++a)
        for (std::size_t l = 0; l < 64; ++l) r(a, l) = 2.0 + 0.01 * ((a * 7 + l * 3) % 11);
    const auto m = estimate_map(frame_of(r), patch(32, 0.0), xu_alpha_estimator());
    for (std::size_t a = 0; a < 64; ++a)
        for (std::size_t l = 0; l < 64; ++l) {
            if (a >= 32) {
                CHECK(m.validity(a, l) == 0);
                CHECK(std::isnan(m.data(a, l)));
            } else {
                CHECK(m.validity(a, l) == 1);
            }
        }
    CHECK(m.valid_windows() == 2);
}

TEST_CASE("estimate_map: too few positive samples marks a patch invalid") {
    Raster r({32, 64}, 0.0);
    std::mt19937_64 gen(1);
    std::exponential_distribution<double> e(1.0);
    for (std::size_t a = 0; a < 32; ++a)
        for (std::size_t l = 32; l < 64; ++l) r(a, l) = e(gen);
    for (std::size_t i = 0; i < 10; ++i) r(i, i) = 1.0 + i;
    const auto m = estimate_map(frame_of(r), patch(32, 0.0), [](std::span<const double>) { return 1.0; });
    CHECK(m.validity(0, 0) == 0);
    CHECK(m.validity(0, 40) == 1);
}

TEST_CASE("estimate_map: constant frame is an empty-map error") {
    CHECK_THROWS_AS(estimate_map(frame_of(Raster({64, 64}, 3.0)), patch(32, 0.5), xu_alpha_estimator()),
                    DegenerateDataError);
}

TEST_CASE("estimate_map: thread count does not change the result") {
    const auto batch = hk::hk_sample(hk::HKParams::from_alpha_k(3.0, 0.5), 96 * 96, 21);
    const auto f = frame_of(Raster({96, 96}, batch.values));
    const auto a = estimate_map(f, patch(32, 0.75), xu_alpha_estimator(), 1);
    const auto b = estimate_map(f, patch(32, 0.75), xu_alpha_estimator(), 4);
    CHECK(a.window_values.size() == b.window_values.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double x = a.data.storage()[i], y = b.data.storage()[i];
        CHECK(((std::isnan(x) && std::isnan(y)) || x == y));
    }
}

TEST_CASE("estimate_map: i.i.d. HK frame recovers alpha") {
    const auto batch = hk::hk_sample(hk::HKParams::from_alpha_k(5.0, 1.0), 320 * 320, 8);
    const auto m = estimate_map(frame_of(Raster({320, 320}, batch.values)), patch(64, 0.5), xu_alpha_estimator());
    std::vector<double> v;
    for (std::size_t i = 0; i < m.data.size(); ++i)
        if (m.validity.storage()[i]) v.push_back(m.data.storage()[i]);
    CHECK(std::abs(oracle::median(v) - 5.0) <= 0.2 * 5.0);
}

TEST_CASE("estimate_map: layered phantom medians ordered (3 vs 15, 20 seeds)") {
    const sim::PSFSpec psf{2.0, 3.0, 0.25, 9};
    const auto ph = two_layer({512, 256}, 3.0, 15.0);
    int ordered = 0;
    for (int s = 0; s < 20; ++s) {
        const auto f = sim::simulate_frame(ph, psf, 1, 1, 4000 + s);
        const auto m = estimate_map(f.envelope, patch(32, 0.5), xu_alpha_estimator());
        const auto [top, bottom] = layer_medians(m, 128, 32);
        if (bottom > top) ++ordered;
    }
    CHECK(ordered == 20);
}

TEST_CASE("gain: constant references give a constant curve") {
    std::vector<sim::EnvelopeFrame> refs = {frame_of(Raster({120, 30}, 2.5))};
    const auto c = fit_gain(refs);
    CHECK(c.values.size() == 120);
    for (double v : c.values) CHECK(std::abs(v - 2.5) <= 1e-6);
    CHECK(c.family == "poly-log");
    CHECK(c.degree == 4);
}

TEST_CASE("gain: exponential decay recovered within 1%") {
    Raster r({400, 20});
    for (std::size_t a = 0; a < 400; ++a)
        for (std::size_t l = 0; l < 20; ++l) r(a, l) = std::exp(-0.002 * a);
    std::vector<sim::EnvelopeFrame> refs = {frame_of(r)};
    const auto c = fit_gain(refs);
    for (std::size_t a = 0; a < 400; ++a) CHECK(std::abs(c.values[a] / std::exp(-0.002 * a) - 1.0) <= 0.01);
}

TEST_CASE("gain: averaging idempotence, identity and ratio invariance") {
    std::mt19937_64 gen(2);
    std::exponential_distribution<double> e(1.0);
    Raster r({100, 50});
    for (auto& v : r.storage()) v = 0.5 + e(gen);
    const std::vector<sim::EnvelopeFrame> one = {frame_of(r)}, two = {frame_of(r), frame_of(r)};
    const auto c1 = fit_gain(one), c2 = fit_gain(two);
    for (std::size_t a = 0; a < 100; ++a) CHECK(c1.values[a] == doctest::Approx(c2.values[a]).epsilon(1e-12));

    GainCurve unit;
    unit.depth.resize(100);
    unit.values.assign(100, 1.0);
    CHECK(apply_gain(frame_of(r), unit).data.storage() == r.storage());

    Raster scaled = r;
    for (auto& v : scaled.storage()) v *= 7.0;
    GainCurve sc = c1;
    for (auto& v : sc.values) v *= 7.0;
    const auto o1 = apply_gain(frame_of(r), c1), o2 = apply_gain(frame_of(scaled), sc);
    for (std::size_t i = 0; i < r.size(); ++i)
        CHECK(o1.data.storage()[i] == doctest::Approx(o2.data.storage()[i]).epsilon(1e-12));
    CHECK(o1.provenance.notes.count("gain_normalized") == 1);
}

TEST_CASE("gain: self-normalization removes a depth-separable field") {
    // normalized / unmodulated speckle isolates the residual field from speckle noise
    const sim::PSFSpec psf{2.0, 3.0, 0.25, 9};
    const sim::PhantomSpec ph{{256, 512}, {sim::Region{sim::Shape::background, 0, 0, 0, 0, 10.0, 2.0}}};
    std::vector<sim::EnvelopeFrame> raw, refs;
    for (int s = 0; s < 12; ++s) {
        raw.push_back(sim::simulate_frame(ph, psf, 0, 0, 70 + s).envelope);
        auto f = raw.back();
        for (std::size_t a = 0; a < 256; ++a)
            for (std::size_t l = 0; l < 512; ++l) f.data(a, l) *= std::exp(-0.004 * a) * (1.0 + 0.2 * a / 256.0);
        refs.push_back(f);
    }
    const auto curve = fit_gain(refs);
    std::vector<double> norm(256, 0.0), plain(256, 0.0);
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const auto n = apply_gain(refs[i], curve);
        for (std::size_t a = 0; a < 256; ++a)
            for (std::size_t l = 0; l < 512; ++l) {
                norm[a] += n.data(a, l);
                plain[a] += raw[i].data(a, l);
            }
    }
    std::vector<double> ratio;
    for (std::size_t a = 64; a < 192; ++a) ratio.push_back(norm[a] / plain[a]);
    const double mid = oracle::median(ratio);
    for (double r : ratio) CHECK(std::abs(r / mid - 1.0) <= 0.02);
}

TEST_CASE("gain: errors") {
    Raster r({50, 10}, 1.0);
    for (std::size_t l = 0; l < 10; ++l) r(7, l) = r(31, l) = 0.0;
    std::vector<sim::EnvelopeFrame> refs = {frame_of(r)};
    try {
        (void)fit_gain(refs);
        FAIL("expected DegenerateDataError");
    } catch (const DegenerateDataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(" 7") != std::string::npos);
        CHECK(msg.find(" 31") != std::string::npos);
    }
    CHECK_THROWS_AS(fit_gain(std::vector<sim::EnvelopeFrame>{}), ConfigError);
    std::vector<sim::EnvelopeFrame> ok = {frame_of(Raster({50, 10}, 1.0))};
    CHECK_THROWS_AS(apply_gain(frame_of(Raster({40, 10}, 1.0)), fit_gain(ok)), ConfigError);
}

TEST_CASE("gain: CSV export") {
    std::vector<sim::EnvelopeFrame> refs = {frame_of(Raster({3, 4}, 2.0))};
    const auto csv = gain_curve_csv(fit_gain(refs));
    CHECK(csv.rfind("depth,gain\n0,2", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("aggregate: two frames, identical frames, single frame") {
    const Dims d{6, 5};
    const std::vector<ParametricMap> pair = {constant_map(d, 1.0), constant_map(d, 3.0)};
    const auto agg = aggregate_frames(pair);
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(agg.mean.data.storage()[i] == 2.0);
        CHECK(agg.uncertainty.data.storage()[i] == 0.5);
    }
    const std::vector<ParametricMap> same = {constant_map(d, 4.2), constant_map(d, 4.2), constant_map(d, 4.2)};
    const auto agg_same = aggregate_frames(same);
    for (double v : agg_same.uncertainty.data.values()) CHECK(v == 0.0);
    const std::vector<ParametricMap> single = {constant_map(d, 9.0)};
    const auto agg_single = aggregate_frames(single);
    for (double v : agg_single.uncertainty.data.values()) CHECK(v == 0.0);
}

TEST_CASE("aggregate: matches the two-pass computation and is order independent") {
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> u(0.1, 20.0);
    const Dims d{17, 13};
    std::vector<ParametricMap> maps;
    for (int f = 0; f < 7; ++f) {
        Raster r(d);
        for (auto& v : r.storage()) v = u(gen);
        maps.push_back(map_from_raster(r));
    }
    const auto agg = aggregate_frames(maps);
    for (std::size_t i = 0; i < d.size(); ++i) {
        std::vector<double> v;
        for (const auto& m : maps) v.push_back(m.data.storage()[i]);
        const auto ref = oracle::two_pass_mean_cv(v);
        CHECK(std::abs(agg.mean.data.storage()[i] - ref.mean) <= 1e-12 * ref.mean);
        CHECK(std::abs(agg.uncertainty.data.storage()[i] - ref.cv) <= 1e-12);
    }
    auto shuffled = maps;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    const auto agg2 = aggregate_frames(shuffled);
    CHECK(agg2.mean.data.storage() == agg.mean.data.storage());
    CHECK(agg2.uncertainty.data.storage() == agg.uncertainty.data.storage());
}

TEST_CASE("aggregate: validity rules and errors") {
    const Dims d{4, 4};
    Raster a(d, 2.0), b(d, 4.0), z(d, 0.0);
    b(1, 1) = std::nan("");
    const std::vector<ParametricMap> maps = {map_from_raster(a), map_from_raster(b)};
    const auto agg = aggregate_frames(maps);
    CHECK(agg.mean.validity(1, 1) == 0);
    CHECK(std::isnan(agg.mean.data(1, 1)));
    CHECK(agg.mean.validity(0, 0) == 1);
    const std::vector<ParametricMap> zeros = {map_from_raster(z), map_from_raster(z)};
    const auto zagg = aggregate_frames(zeros);
    CHECK(zagg.mean.validity(0, 0) == 1);
    CHECK(zagg.uncertainty.validity(0, 0) == 0);
    CHECK(std::isnan(zagg.uncertainty.data(0, 0)));
    CHECK_THROWS_AS(aggregate_frames(std::vector<ParametricMap>{}), ConfigError);
    const std::vector<ParametricMap> mixed = {constant_map(d, 1.0), constant_map({4, 5}, 1.0)};
    CHECK_THROWS_AS(aggregate_frames(mixed), ConfigError);
}

TEST_CASE("metrics: exact and constant cases") {
    const Dims d{8, 8};
    Raster truth(d, 2.0);
    const auto zero = eval_metrics(map_from_raster(truth), truth);
    CHECK(zero.rmse == 0.0);
    CHECK(zero.rrmse == 0.0);
    CHECK(zero.mae == 0.0);
    const auto m = eval_metrics(constant_map(d, 3.0), truth);
    CHECK(m.rmse == doctest::Approx(1.0));
    CHECK(m.rrmse == doctest::Approx(0.5));
    CHECK(m.mae == doctest::Approx(1.0));
    CHECK(m.pixels == 64);
    CHECK_THROWS_AS(eval_metrics(map_from_raster(Raster(d, std::nan(""))), truth), DataError);
    CHECK_THROWS_AS(eval_metrics(constant_map({8, 9}, 1.0), truth), ConfigError);
}
