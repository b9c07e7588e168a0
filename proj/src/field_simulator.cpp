#include "qus/field_simulator.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

#include <fftw3.h>

#include "qus/error.hpp"
#include "qus/random.hpp"

namespace qus::sim {

namespace {

std::string field_error(const std::string& field, double value, double lo, double hi) {
    std::ostringstream os;
    os << field << " = " << value << " outside [" << lo << ", " << hi << "]";
    return os.str();
}

// FFTW's planner is not re-entrant.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwDeleter {
    void operator()(fftw_complex* p) const noexcept { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwDeleter>;

class FftPlans {
public:
    explicit FftPlans(std::size_t n)
        : n_(n), buffer_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
        std::lock_guard lock(fftw_planner_mutex());
        const int len = static_cast<int>(n);
        forward_ = fftw_plan_dft_1d(len, buffer_.get(), buffer_.get(), FFTW_FORWARD, FFTW_ESTIMATE);
        backward_ = fftw_plan_dft_1d(len, buffer_.get(), buffer_.get(), FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    ~FftPlans() {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
    }
    FftPlans(const FftPlans&) = delete;
    FftPlans& operator=(const FftPlans&) = delete;

    fftw_complex* data() noexcept { return buffer_.get(); }
    void forward() { fftw_execute(forward_); }
    void backward() { fftw_execute(backward_); }
    std::size_t size() const noexcept { return n_; }

private:
    std::size_t n_;
    FftwBuffer buffer_;
    fftw_plan forward_ = nullptr;
    fftw_plan backward_ = nullptr;
};

// 1D "same" correlation of `line` (stride `stride`) with a symmetric kernel
// of half-width h, written into out.
void convolve_line(const double* line, std::size_t n, std::size_t stride, const std::vector<double>& kernel,
                   int h, double* out) {
    const auto len = static_cast<std::ptrdiff_t>(n);
    for (std::ptrdiff_t i = 0; i < len; ++i) {
        double acc = 0.0;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(-h, i - len + 1);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(h, i);
        for (std::ptrdiff_t d = lo; d <= hi; ++d) acc += kernel[d + h] * line[(i - d) * stride];
        out[i * stride] = acc;
    }
}

}  // namespace

void PSFSpec::validate() const {
    if (!(sigma_a > 0.0) || !std::isfinite(sigma_a)) throw ConfigError("psf.sigma_a must be > 0");
    if (!(sigma_l > 0.0) || !std::isfinite(sigma_l)) throw ConfigError("psf.sigma_l must be > 0");
    if (!(fc_norm > 0.0 && fc_norm < 0.5)) throw ConfigError(field_error("psf.fc_norm", fc_norm, 0.0, 0.5) + " (exclusive)");
    if (kernel_half_extent < 3.0 * std::max(sigma_a, sigma_l)) {
        std::ostringstream os;
        os << "psf.kernel_half_extent = " << kernel_half_extent << " below 3 * max(sigma_a, sigma_l) = "
           << 3.0 * std::max(sigma_a, sigma_l);
        throw ConfigError(os.str());
    }
}

PSFSpec PSFSpec::with_default_extent(double sigma_a, double sigma_l, double fc_norm) {
    PSFSpec psf{sigma_a, sigma_l, fc_norm, static_cast<int>(std::ceil(3.0 * std::max(sigma_a, sigma_l)))};
    psf.validate();
    return psf;
}

const char* shape_name(Shape shape) noexcept {
    switch (shape) {
        case Shape::background: return "background";
        case Shape::rectangle: return "rectangle";
        case Shape::ellipse: return "ellipse";
    }
    return "?";
}

Shape parse_shape(const std::string& name) {
    if (name == "background") return Shape::background;
    if (name == "rectangle") return Shape::rectangle;
    if (name == "ellipse") return Shape::ellipse;
    throw ConfigError("unknown region shape '" + name + "' (expected background, rectangle or ellipse)");
}

bool Region::contains(double a, double l) const noexcept {
    switch (shape) {
        case Shape::background: return true;
        case Shape::rectangle: return std::abs(a - center_a) <= half_a && std::abs(l - center_l) <= half_l;
        case Shape::ellipse: {
            const double da = (a - center_a) / half_a;
            const double dl = (l - center_l) / half_l;
            return da * da + dl * dl <= 1.0;
        }
    }
    return false;
}

void PhantomSpec::validate() const {
    if (canvas.axial == 0 || canvas.lateral == 0) throw ConfigError("phantom.canvas must be non-empty");
    if (regions.empty() || regions.front().shape != Shape::background)
        throw ConfigError("phantom.regions[0] must be the background region");
    for (std::size_t i = 0; i < regions.size(); ++i) {
        const auto& r = regions[i];
        const std::string prefix = "phantom.regions[" + std::to_string(i) + "]";
        if (!(r.density >= kDensityMin && r.density <= kDensityMax))
            throw ConfigError(field_error(prefix + ".density", r.density, kDensityMin, kDensityMax));
        if (!(r.amp_mean >= kAmpMeanMin && r.amp_mean <= kAmpMeanMax))
            throw ConfigError(field_error(prefix + ".amp_mean", r.amp_mean, kAmpMeanMin, kAmpMeanMax));
        if (i > 0 && r.shape == Shape::background) throw ConfigError(prefix + ": only regions[0] may be background");
        if (r.shape != Shape::background && !(r.half_a > 0.0 && r.half_l > 0.0))
            throw ConfigError(prefix + ": half_a and half_l must be > 0");
    }
}

std::size_t PhantomSpec::region_at(std::size_t a, std::size_t l) const noexcept {
    for (std::size_t i = regions.size(); i-- > 1;) {
        if (regions[i].contains(static_cast<double>(a), static_cast<double>(l))) return i;
    }
    return 0;
}

std::size_t TRFGrid::scatterer_count() const noexcept {
    return static_cast<std::size_t>(std::count(occupancy.values().begin(), occupancy.values().end(), 1));
}

TRFGrid build_trf(const PhantomSpec& phantom, const PSFSpec& psf, std::uint64_t seed) {
    phantom.validate();
    psf.validate();
    const double cell = psf.resolution_cell_points();
    std::vector<double> p(phantom.regions.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = phantom.regions[i].density / cell;
        if (p[i] > 1.0) {
            std::ostringstream os;
            os << "phantom.regions[" << i << "].density = " << phantom.regions[i].density
               << " exceeds grid capacity: resolution cell holds only " << cell << " grid points";
            throw ConfigError(os.str());
        }
    }

    TRFGrid trf{Raster(phantom.canvas, 0.0), Mask(phantom.canvas, 0)};
    Rng rng(seed);
    for (std::size_t a = 0; a < phantom.canvas.axial; ++a) {
        for (std::size_t l = 0; l < phantom.canvas.lateral; ++l) {
            const std::size_t r = phantom.region_at(a, l);
            if (!rng.bernoulli(p[r])) continue;
            const double mean = phantom.regions[r].amp_mean;
            const double sd = std::sqrt(kAmpVarianceFraction * mean);
            double amp;
            do {
                amp = rng.normal(mean, sd);
            } while (!(amp > 0.0));
            trf.amplitudes(a, l) = amp;
            trf.occupancy(a, l) = 1;
        }
    }
    return trf;
}

Raster psf_kernel(const PSFSpec& psf) {
    psf.validate();
    const int h = psf.kernel_half_extent;
    const auto side = static_cast<std::size_t>(2 * h + 1);
    Raster k(Dims{side, side});
    for (int a = -h; a <= h; ++a) {
        for (int l = -h; l <= h; ++l) {
            const double e = (a * a) / (psf.sigma_a * psf.sigma_a) + (l * l) / (psf.sigma_l * psf.sigma_l);
            k(a + h, l + h) = std::exp(-0.5 * e) * std::cos(2.0 * std::numbers::pi * psf.fc_norm * a);
        }
    }
    return k;
}

Raster synthesize_rf(const Raster& trf, const PSFSpec& psf) {
    psf.validate();
    const int h = psf.kernel_half_extent;
    const auto side = static_cast<std::size_t>(2 * h + 1);
    if (trf.axial() < side || trf.lateral() < side) {
        std::ostringstream os;
        os << "synthesize_rf: TRF " << trf.axial() << "x" << trf.lateral() << " smaller than the " << side << "x"
           << side << " kernel";
        throw ConfigError(os.str());
    }

    std::vector<double> axial_kernel(side), lateral_kernel(side);
    for (int d = -h; d <= h; ++d) {
        axial_kernel[d + h] = std::exp(-0.5 * d * d / (psf.sigma_a * psf.sigma_a)) *
                              std::cos(2.0 * std::numbers::pi * psf.fc_norm * d);
        lateral_kernel[d + h] = std::exp(-0.5 * d * d / (psf.sigma_l * psf.sigma_l));
    }

    const std::size_t na = trf.axial();
    const std::size_t nl = trf.lateral();
    Raster tmp(trf.dims());
    for (std::size_t a = 0; a < na; ++a)
        convolve_line(&trf(a, 0), nl, 1, lateral_kernel, h, &tmp(a, 0));
    Raster rf(trf.dims());
    for (std::size_t l = 0; l < nl; ++l)
        convolve_line(&tmp(0, l), na, nl, axial_kernel, h, &rf(0, l));
    return rf;
}

EnvelopeFrame detect_envelope(const Raster& rf, Spacing spacing) {
    for (double v : rf.values())
        if (!std::isfinite(v)) throw DomainError("detect_envelope: RF data must be finite");
    EnvelopeFrame frame;
    frame.spacing = spacing;
    frame.data = Raster(rf.dims());
    const std::size_t n = rf.axial();
    if (n == 0 || rf.lateral() == 0) return frame;

    FftPlans fft(n);
    fftw_complex* buf = fft.data();
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t l = 0; l < rf.lateral(); ++l) {
        for (std::size_t a = 0; a < n; ++a) {
            buf[a][0] = rf(a, l);
            buf[a][1] = 0.0;
        }
        fft.forward();
        // One-sided spectrum: keep DC (and Nyquist for even n), double positive
        // frequencies, zero negative ones.
        const std::size_t half = n / 2;
        for (std::size_t i = 1; i < n; ++i) {
            const bool nyquist = (n % 2 == 0) && i == half;
            const double gain = nyquist ? 1.0 : (i <= (n - 1) / 2 ? 2.0 : 0.0);
            buf[i][0] *= gain;
            buf[i][1] *= gain;
        }
        fft.backward();
        for (std::size_t a = 0; a < n; ++a) frame.data(a, l) = std::hypot(buf[a][0], buf[a][1]) * inv_n;
    }
    return frame;
}

Dims decimated_dims(Dims dims, std::size_t skip_a, std::size_t skip_l) noexcept {
    return {(dims.axial + skip_a) / (skip_a + 1), (dims.lateral + skip_l) / (skip_l + 1)};
}

Raster skip_decimate(const Raster& raster, std::size_t skip_a, std::size_t skip_l) {
    const Dims out = decimated_dims(raster.dims(), skip_a, skip_l);
    if (out.axial < 8 || out.lateral < 8) {
        std::ostringstream os;
        os << "skip (" << skip_a << ", " << skip_l << ") on " << raster.axial() << "x" << raster.lateral()
           << " leaves " << out.axial << "x" << out.lateral << ", below the 8x8 minimum";
        throw ConfigError(os.str());
    }
    Raster r(out);
    for (std::size_t a = 0; a < out.axial; ++a)
        for (std::size_t l = 0; l < out.lateral; ++l) r(a, l) = raster(a * (skip_a + 1), l * (skip_l + 1));
    return r;
}

EnvelopeFrame skip_decimate(const EnvelopeFrame& frame, std::size_t skip_a, std::size_t skip_l) {
    EnvelopeFrame out;
    out.data = skip_decimate(frame.data, skip_a, skip_l);
    out.spacing = {frame.spacing.axial * static_cast<double>(skip_a + 1),
                   frame.spacing.lateral * static_cast<double>(skip_l + 1)};
    out.provenance = frame.provenance;
    out.provenance.skip_a = (frame.provenance.skip_a + 1) * (skip_a + 1) - 1;
    out.provenance.skip_l = (frame.provenance.skip_l + 1) * (skip_l + 1) - 1;
    return out;
}

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y, const char* direction) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0))
        throw DegenerateDataError(std::string("lag1_correlation: no variance along the ") + direction + " direction");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

LagCorrelation lag1_correlation_components(const Raster& frame) {
    if (frame.axial() < 2 || frame.lateral() < 2) throw ConfigError("lag1_correlation: frame must be at least 2x2");
    std::vector<double> x, y;
    x.reserve(frame.size());
    y.reserve(frame.size());
    for (std::size_t a = 0; a + 1 < frame.axial(); ++a)
        for (std::size_t l = 0; l < frame.lateral(); ++l) {
            x.push_back(frame(a, l));
            y.push_back(frame(a + 1, l));
        }
    LagCorrelation c;
    c.axial = pearson(x, y, "axial");
    x.clear();
    y.clear();
    for (std::size_t a = 0; a < frame.axial(); ++a)
        for (std::size_t l = 0; l + 1 < frame.lateral(); ++l) {
            x.push_back(frame(a, l));
            y.push_back(frame(a, l + 1));
        }
    c.lateral = pearson(x, y, "lateral");
    return c;
}

Raster density_ground_truth(const PhantomSpec& phantom, const PSFSpec& psf, std::size_t skip_a, std::size_t skip_l) {
    phantom.validate();
    psf.validate();
    Raster full(phantom.canvas);
    for (std::size_t a = 0; a < phantom.canvas.axial; ++a)
        for (std::size_t l = 0; l < phantom.canvas.lateral; ++l)
            full(a, l) = phantom.regions[phantom.region_at(a, l)].density;
    return skip_decimate(full, skip_a, skip_l);
}

SimulatedFrame simulate_frame(const PhantomSpec& phantom, const PSFSpec& psf, std::size_t skip_a,
                              std::size_t skip_l, std::uint64_t seed) {
    const auto trf = build_trf(phantom, psf, seed);
    const auto rf = synthesize_rf(trf, psf);
    auto envelope = detect_envelope(rf);
    envelope.provenance.seed = seed;
    envelope.provenance.psf = psf;
    SimulatedFrame out;
    out.envelope = skip_decimate(envelope, skip_a, skip_l);
    out.density = density_ground_truth(phantom, psf, skip_a, skip_l);
    out.scatterers = trf.scatterer_count();
    return out;
}

}  // namespace qus::sim
