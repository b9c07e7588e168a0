#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "oracles.hpp"
#include "qus/error.hpp"
#include "qus/field_simulator.hpp"

using namespace qus;
using namespace qus::sim;

namespace {

PhantomSpec uniform_phantom(Dims canvas, double density, double amp = 2.0) {
    return {canvas, {Region{Shape::background, 0, 0, 0, 0, density, amp}}};
}

// Background with a rectangle covering the lower half of the canvas.
PhantomSpec layered_phantom(Dims canvas, double d_top, double d_bottom) {
    PhantomSpec ph = uniform_phantom(canvas, d_top);
    const double qa = canvas.axial / 4.0;
    ph.regions.push_back(
        Region{Shape::rectangle, 3 * qa, canvas.lateral / 2.0, qa, canvas.lateral / 2.0, d_bottom, 2.0});
    return ph;
}

double median_correlation(const PSFSpec& psf, std::size_t sa, std::size_t sl, int seeds, std::uint64_t base) {
    std::vector<double> c;
    const auto ph = uniform_phantom({320, 192}, 10.0);
    for (int s = 0; s < seeds; ++s) c.push_back(lag1_correlation(simulate_frame(ph, psf, sa, sl, base + s).envelope.data));
    return oracle::median(c);
}

}  // namespace

TEST_CASE("psf: validation") {
    CHECK_NOTHROW(PSFSpec{}.validate());
    CHECK_THROWS_AS(PSFSpec({0.0, 5, 0.25, 15}).validate(), ConfigError);
    CHECK_THROWS_AS(PSFSpec({3, -1, 0.25, 15}).validate(), ConfigError);
    CHECK_THROWS_AS(PSFSpec({3, 5, 0.5, 15}).validate(), ConfigError);
    CHECK_THROWS_AS(PSFSpec({3, 5, 0.0, 15}).validate(), ConfigError);
    CHECK_THROWS_AS(PSFSpec({3, 5, 0.25, 14}).validate(), ConfigError);
    const auto p = PSFSpec::with_default_extent(2.2, 3.4, 0.25);
    CHECK(p.kernel_half_extent == 11);
    CHECK(p.resolution_cell_points() == doctest::Approx(9 * 2.2 * 3.4));
}

TEST_CASE("psf kernel: centre, symmetry and separable sum") {
    const PSFSpec psf{2.5, 4.0, 0.2, 12};
    const auto k = psf_kernel(psf);
    const int h = psf.kernel_half_extent;
    REQUIRE(k.axial() == static_cast<std::size_t>(2 * h + 1));
    CHECK(k(h, h) == 1.0);
    for (int a = -h; a <= h; ++a)
        for (int l = 1; l <= h; ++l) CHECK(k(a + h, h + l) == k(a + h, h - l));
    double total = 0.0;
    for (double v : k.values()) total += v;
    double ga = 0.0, gl = 0.0;
    for (int d = -h; d <= h; ++d) {
        ga += std::exp(-0.5 * d * d / (psf.sigma_a * psf.sigma_a)) * std::cos(2 * M_PI * psf.fc_norm * d);
        gl += std::exp(-0.5 * d * d / (psf.sigma_l * psf.sigma_l));
    }
    CHECK(std::abs(total - ga * gl) <= 1e-9);
}

TEST_CASE("phantom: validation names the field and bound") {
    auto ph = layered_phantom({64, 64}, 5, 25);
    try {
        ph.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("regions[1].density") != std::string::npos);
        CHECK(msg.find("20") != std::string::npos);
    }
    ph = layered_phantom({64, 64}, 5, 10);
    ph.regions[1].amp_mean = 6;
    CHECK_THROWS_AS(ph.validate(), ConfigError);
    ph = layered_phantom({64, 64}, 5, 10);
    ph.regions[0].shape = Shape::ellipse;
    CHECK_THROWS_AS(ph.validate(), ConfigError);
    CHECK_THROWS_AS(PhantomSpec({{64, 64}, {}}).validate(), ConfigError);
    CHECK_THROWS_AS(parse_shape("triangle"), ConfigError);
}

TEST_CASE("trf: scatterer count within binomial bounds") {
    const PSFSpec psf{2.0, 3.0, 0.25, 9};
    const double G = psf.resolution_cell_points();
    for (double d : {1.0, 7.5, 20.0}) {
        const auto ph = uniform_phantom({400, 400}, d);
        const double M = 400.0 * 400.0, p = d / G;
        const auto trf = build_trf(ph, psf, static_cast<std::uint64_t>(d * 10));
        const double n = static_cast<double>(trf.scatterer_count());
        CHECK(std::abs(n - M * p) <= 3.0 * std::sqrt(M * p * (1 - p)));
    }
}

TEST_CASE("trf: amplitudes only where occupied, positive, with the stated moments") {
    const auto ph = uniform_phantom({300, 300}, 20.0, 3.0);
    const auto trf = build_trf(ph, {2.0, 3.0, 0.25, 9}, 77);
    double s = 0.0, ss = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < trf.amplitudes.size(); ++i) {
        const double v = trf.amplitudes.storage()[i];
        const bool occ = trf.occupancy.storage()[i] != 0;
        CHECK((v != 0.0) == occ);
        if (occ) {
            CHECK(v > 0.0);
            s += v;
            ss += v * v;
            ++n;
        }
    }
    const double mean = s / n, var = ss / n - mean * mean;
    CHECK(mean == doctest::Approx(3.0).epsilon(0.01));
    CHECK(var == doctest::Approx(0.02 * 3.0).epsilon(0.05));
}

TEST_CASE("trf: two-region occupancy rates") {
    const PSFSpec psf{2.0, 3.0, 0.25, 9};
    const double G = psf.resolution_cell_points();
    const auto ph = layered_phantom({800, 300}, 4.0, 16.0);
    const auto trf = build_trf(ph, psf, 5);
    double in[2] = {0, 0}, tot[2] = {0, 0};
    for (std::size_t a = 0; a < 800; ++a)
        for (std::size_t l = 0; l < 300; ++l) {
            const auto r = ph.region_at(a, l);
            tot[r] += 1;
            in[r] += trf.occupancy(a, l);
        }
    REQUIRE(tot[0] >= 1e5);
    REQUIRE(tot[1] >= 1e5);
    CHECK(in[0] / tot[0] == doctest::Approx(4.0 / G).epsilon(0.05));
    CHECK(in[1] / tot[1] == doctest::Approx(16.0 / G).epsilon(0.05));
}

TEST_CASE("trf: realized per-region density over 20 seeds") {
    const PSFSpec psf{3.0, 4.0, 0.25, 12};
    const double G = psf.resolution_cell_points();
    const auto ph = layered_phantom({512, 256}, 3.0, 12.0);
    for (int s = 0; s < 20; ++s) {
        const auto trf = build_trf(ph, psf, 900 + s);
        double count[2] = {0, 0}, points[2] = {0, 0};
        for (std::size_t a = 0; a < 512; ++a)
            for (std::size_t l = 0; l < 256; ++l) {
                const auto r = ph.region_at(a, l);
                points[r] += 1;
                count[r] += trf.occupancy(a, l);
            }
        for (int r = 0; r < 2; ++r) {
            REQUIRE(points[r] / G >= 100);
            CHECK(count[r] / (points[r] / G) == doctest::Approx(ph.regions[r].density).epsilon(0.05));
        }
    }
}

TEST_CASE("trf: density beyond grid capacity is a configuration error") {
    const PSFSpec tiny{1.0, 1.0, 0.25, 3};
    CHECK_THROWS_AS(build_trf(uniform_phantom({64, 64}, 20.0), tiny, 1), ConfigError);
}

TEST_CASE("trf: deterministic in the seed") {
    const auto ph = layered_phantom({128, 96}, 2, 9);
    const auto a = build_trf(ph, {}, 3), b = build_trf(ph, {}, 3), c = build_trf(ph, {}, 4);
    CHECK(a.amplitudes.storage() == b.amplitudes.storage());
    CHECK(a.amplitudes.storage() != c.amplitudes.storage());
}

TEST_CASE("rf: delta response is the kernel") {
    const PSFSpec psf{2.0, 3.0, 0.25, 9};
    Raster trf({64, 64}, 0.0);
    trf(32, 30) = 1.0;
    const auto rf = synthesize_rf(trf, psf);
    const auto k = psf_kernel(psf);
    const int h = psf.kernel_half_extent;
    for (int a = 0; a < 64; ++a)
        for (int l = 0; l < 64; ++l) {
            const int da = a - 32, dl = l - 30;
            const double want = (std::abs(da) <= h && std::abs(dl) <= h) ? k(da + h, dl + h) : 0.0;
            CHECK(std::abs(rf(a, l) - want) <= 1e-12);
        }
}

TEST_CASE("rf: superposition") {
    const PSFSpec psf{2.0, 4.0, 0.3, 12};
    std::mt19937_64 gen(1);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 0; t < 5; ++t) {
        Raster x({48, 40}), y({48, 40}), xy({48, 40});
        const double c1 = n(gen), c2 = n(gen);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x.storage()[i] = n(gen);
            y.storage()[i] = n(gen);
            xy.storage()[i] = c1 * x.storage()[i] + c2 * y.storage()[i];
        }
        const auto rx = synthesize_rf(x, psf), ry = synthesize_rf(y, psf), rxy = synthesize_rf(xy, psf);
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(std::abs(rxy.storage()[i] - (c1 * rx.storage()[i] + c2 * ry.storage()[i])) <= 1e-12);
    }
}

TEST_CASE("rf: matches direct-sum convolution") {
    const PSFSpec psf{2.5, 3.5, 0.25, 11};
    const auto ph = uniform_phantom({64, 64}, 15.0);
    const auto trf = build_trf(ph, psf, 12);
    const auto rf = synthesize_rf(trf, psf);
    const auto ref = oracle::naive_convolve_same(trf.amplitudes, psf_kernel(psf));
    double scale = 0.0;
    for (double v : ref.values()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < rf.size(); ++i) CHECK(std::abs(rf.storage()[i] - ref.storage()[i]) <= 1e-9 * scale);
}

TEST_CASE("rf: TRF smaller than the kernel") {
    CHECK_THROWS_AS(synthesize_rf(Raster({20, 40}, 0.0), PSFSpec{3, 5, 0.25, 15}), ConfigError);
}

TEST_CASE("envelope: pure tone with whole periods per column") {
    for (double f : {0.1, 0.2, 0.24, 0.32}) {
        const std::size_t n = 250;
        Raster rf({n, 3});
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t l = 0; l < 3; ++l) rf(a, l) = std::cos(2 * M_PI * f * a + 0.3 * l);
        const auto env = detect_envelope(rf);
        const auto edge = static_cast<std::size_t>(std::ceil(2.0 / f));
        for (std::size_t a = edge; a + edge < n; ++a)
            for (std::size_t l = 0; l < 3; ++l) {
                CAPTURE(f);
                CAPTURE(a);
                CHECK(std::abs(env.data(a, l) - 1.0) < 0.02);
            }
    }
}

TEST_CASE("envelope: edge leakage of a non-periodic tone decays inward") {
    const double f = 0.137;
    const std::size_t n = 250;
    Raster rf({n, 3});
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t l = 0; l < 3; ++l) rf(a, l) = std::cos(2 * M_PI * f * a + 0.3 * l);
    const auto env = detect_envelope(rf);
    auto ripple = [&](double periods) {
        const auto edge = static_cast<std::size_t>(std::ceil(periods / f));
        double e = 0.0;
        for (std::size_t a = edge; a + edge < n; ++a)
            for (std::size_t l = 0; l < 3; ++l) e = std::max(e, std::abs(env.data(a, l) - 1.0));
        return e;
    };
    CHECK(ripple(16.0) < 0.02);
    CHECK(ripple(8.0) < ripple(2.0));
    CHECK(ripple(16.0) < ripple(4.0));
}

TEST_CASE("envelope: zero input and the |rf| bound") {
    const auto z = detect_envelope(Raster({32, 8}, 0.0));
    for (double v : z.data.values()) CHECK(v == 0.0);
    const auto trf = build_trf(uniform_phantom({96, 64}, 6.0), {}, 8);
    const auto rf = synthesize_rf(trf, {});
    const auto env = detect_envelope(rf);
    for (std::size_t i = 0; i < rf.size(); ++i) {
        CHECK(env.data.storage()[i] >= 0.0);
        CHECK(env.data.storage()[i] >= std::abs(rf.storage()[i]) - 1e-12);
    }
}

TEST_CASE("skip: identity, stride arithmetic and metadata") {
    Raster r({512, 128});
    for (std::size_t i = 0; i < r.size(); ++i) r.storage()[i] = static_cast<double>(i);
    EnvelopeFrame f{r, {0.1, 0.2}, {}};
    const auto same = skip_decimate(f, 0, 0);
    CHECK(same.data.storage() == r.storage());
    const auto half = skip_decimate(f, 1, 0);
    CHECK(half.dims() == Dims{256, 128});
    CHECK(half.spacing.axial == doctest::Approx(0.2));
    CHECK(half.spacing.lateral == doctest::Approx(0.2));
    CHECK(half.data(3, 5) == r(6, 5));
    CHECK(half.provenance.skip_a == 1);
    const auto again = skip_decimate(half, 1, 2);
    CHECK(again.provenance.skip_a == 3);
    CHECK(again.provenance.skip_l == 2);
    CHECK(decimated_dims({10, 10}, 2, 3) == Dims{4, 3});
    CHECK_THROWS_AS(skip_decimate(f, 100, 0), ConfigError);
}

TEST_CASE("correlation: white noise null bound") {
    std::mt19937_64 gen(2);
    std::exponential_distribution<double> e(1.0);
    for (int t = 0; t < 5; ++t) {
        Raster r({200, 150});
        for (auto& v : r.storage()) v = e(gen);
        CHECK(std::abs(lag1_correlation(r)) <= 3.0 / std::sqrt(static_cast<double>(r.size())));
    }
}

TEST_CASE("correlation: duplicated rows and degenerate frames") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Raster r({40, 30});
    for (std::size_t a = 0; a < 40; a += 2)
        for (std::size_t l = 0; l < 30; ++l) r(a, l) = r(a + 1, l) = u(gen);
    // pairs (2i, 2i+1) are identical; the (2i+1, 2i+2) pairs are independent
    const auto c = lag1_correlation_components(r);
    CHECK(c.axial > 0.3);
    Raster rows({40, 30});
    for (std::size_t a = 0; a < 40; ++a)
        for (std::size_t l = 0; l < 30; ++l) rows(a, l) = u(gen);
    for (std::size_t a = 1; a < 40; ++a)
        for (std::size_t l = 0; l < 30; ++l) rows(a, l) = rows(0, l);
    const auto c2 = lag1_correlation_components(rows);
    CHECK(c2.axial == doctest::Approx(1.0));
    CHECK(c2.mean() >= 0.5);
    CHECK_THROWS_AS(lag1_correlation(Raster({16, 16}, 3.0)), DegenerateDataError);
    CHECK_THROWS_AS(lag1_correlation(Raster({1, 16}, 3.0)), ConfigError);
}

TEST_CASE("correlation: skipping decorrelates simulated speckle") {
    const PSFSpec psf{3.0, 5.0, 0.25, 15};
    const auto ph = uniform_phantom({384, 256}, 10.0);
    for (int s = 0; s < 5; ++s) {
        const auto full = simulate_frame(ph, psf, 0, 0, 60 + s);
        const auto skipped = skip_decimate(full.envelope, 2, 2);
        CHECK(lag1_correlation(skipped.data) < lag1_correlation(full.envelope.data));
    }
}

TEST_CASE("correlation: non-increasing in both skip factors (median of 20 seeds)") {
    const PSFSpec psf{2.5, 4.0, 0.25, 12};
    for (std::size_t sl : {0, 1, 3}) {
        double prev = 2.0;
        for (std::size_t sa : {0, 1, 2, 4}) {
            const double m = median_correlation(psf, sa, sl, 20, 100);
            CAPTURE(sa);
            CAPTURE(sl);
            CHECK(m <= prev);
            prev = m;
        }
    }
    for (std::size_t sa : {0, 2}) {
        double prev = 2.0;
        for (std::size_t sl : {0, 1, 2, 4}) {
            const double m = median_correlation(psf, sa, sl, 20, 100);
            CHECK(m <= prev);
            prev = m;
        }
    }
}

TEST_CASE("correlation: wider PSF never decorrelates (median of 20 seeds)") {
    double prev = -2.0;
    for (double w : {2.0, 3.0, 4.0, 5.0}) {
        const auto psf = PSFSpec::with_default_extent(w, 1.5 * w, 0.25);
        const double m = median_correlation(psf, 1, 1, 20, 300);
        CAPTURE(w);
        CHECK(m >= prev);
        prev = m;
    }
}

TEST_CASE("ground truth: uniform, two-region and overlap order") {
    const PSFSpec psf{};
    const auto u = density_ground_truth(uniform_phantom({100, 80}, 7.0), psf, 1, 1);
    CHECK(u.dims() == Dims{50, 40});
    for (double v : u.values()) CHECK(v == 7.0);

    const auto two = density_ground_truth(layered_phantom({100, 80}, 3.0, 11.0), psf, 0, 0);
    for (std::size_t a = 0; a < 100; ++a)
        for (std::size_t l = 0; l < 80; ++l) CHECK(two(a, l) == (a >= 50 ? 11.0 : 3.0));

    auto ph = layered_phantom({100, 80}, 3.0, 11.0);
    ph.regions.push_back(Region{Shape::ellipse, 50, 40, 10, 10, 17.0, 2.0});
    const auto over = density_ground_truth(ph, psf, 0, 0);
    CHECK(over(50, 40) == 17.0);
    CHECK(over(58, 40) == 17.0);
    CHECK(over(70, 40) == 11.0);
    CHECK(over(10, 10) == 3.0);
    for (double v : over.values()) CHECK((v >= 1.0 && v <= 20.0));
}

TEST_CASE("simulate: aligned outputs, positivity and determinism") {
    const auto ph = layered_phantom({256, 128}, 2.0, 14.0);
    const PSFSpec psf{2.0, 3.0, 0.25, 9};
    const auto a = simulate_frame(ph, psf, 1, 0, 10);
    const auto b = simulate_frame(ph, psf, 1, 0, 10);
    CHECK(a.envelope.dims() == Dims{128, 128});
    CHECK(a.density.dims() == a.envelope.dims());
    CHECK(a.envelope.data.storage() == b.envelope.data.storage());
    CHECK(a.envelope.provenance.seed == 10);
    CHECK(a.envelope.provenance.psf == psf);
    for (double v : a.envelope.data.values()) CHECK(v >= 0.0);
    CHECK(a.scatterers > 0);
}
