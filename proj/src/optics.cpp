// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "emsplat/optics.hpp"

#include "emsplat/errors.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <tuple>

namespace emsplat {

namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex gPlanMutex;

class FftPlan {
  public:
    FftPlan(int rank, int n, int sign) : mCount(1) {
        for (int r = 0; r < rank; ++r) {
            mCount *= static_cast<std::size_t>(n);
        }
        std::vector<int> dims(rank, n);
        std::lock_guard lock(gPlanMutex);
        mBuffer = static_cast<fftw_complex *>(fftw_malloc(sizeof(fftw_complex) * mCount));
        mPlan   = fftw_plan_dft(rank, dims.data(), mBuffer, mBuffer, sign, FFTW_ESTIMATE);
        if (mPlan == nullptr) {
            fftw_free(mBuffer);
            throw Error(ErrorKind::Numerical, "FFTW failed to create a plan");
        }
    }
    ~FftPlan() {
        std::lock_guard lock(gPlanMutex);
        fftw_destroy_plan(mPlan);
        fftw_free(mBuffer);
    }
    FftPlan(const FftPlan &)            = delete;
    FftPlan &operator=(const FftPlan &) = delete;

    Complex *data() { return reinterpret_cast<Complex *>(mBuffer); }
    std::size_t count() const { return mCount; }
    void execute() { fftw_execute(mPlan); }

  private:
    std::size_t mCount;
    fftw_complex *mBuffer = nullptr;
    fftw_plan mPlan       = nullptr;
};

FftPlan &
planFor(int rank, int n, int sign) {
    thread_local std::map<std::tuple<int, int, int>, std::unique_ptr<FftPlan>> cache;
    auto &slot = cache[{rank, n, sign}];
    if (!slot) {
        slot = std::make_unique<FftPlan>(rank, n, sign);
    }
    return *slot;
}

int
wrap(int i, int n) {
    const int r = i % n;
    return r < 0 ? r + n : r;
}

/// Centered-layout transform of a rank-2 or rank-3 cube. Input and output are
/// both in centered order; shifts are folded into the copies.
template <typename In>
std::vector<Complex>
centeredTransform(int rank, int n, int sign, const In &input) {
    FftPlan &plan = planFor(rank, n, sign);
    Complex *buf  = plan.data();
    const int c   = n / 2;
    const int nz  = rank == 3 ? n : 1;
    const std::size_t n2 = static_cast<std::size_t>(n) * n;

    // standard index s <- centered index s + c
    for (int z = 0; z < nz; ++z) {
        const int zs = rank == 3 ? wrap(z + c, n) : 0;
        for (int y = 0; y < n; ++y) {
            const int ys = wrap(y + c, n);
            for (int x = 0; x < n; ++x) {
                buf[z * n2 + static_cast<std::size_t>(y) * n + x] =
                    Complex(input[zs * n2 + static_cast<std::size_t>(ys) * n + wrap(x + c, n)]);
            }
        }
    }
    plan.execute();

    std::vector<Complex> out(plan.count());
    for (int z = 0; z < nz; ++z) {
        const int zs = rank == 3 ? wrap(z - c, n) : 0;
        for (int y = 0; y < n; ++y) {
            const int ys = wrap(y - c, n);
            for (int x = 0; x < n; ++x) {
                out[z * n2 + static_cast<std::size_t>(y) * n + x] =
                    buf[zs * n2 + static_cast<std::size_t>(ys) * n + wrap(x - c, n)];
            }
        }
    }
    return out;
}

Image
toImage(const GridSpec &grid, const std::vector<Complex> &values, double scale, double *maxImag) {
    Image out(grid);
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out.pixels[i] = values[i].real() * scale;
        worst         = std::max(worst, std::abs(values[i].imag() * scale));
    }
    if (maxImag != nullptr) {
        *maxImag = worst;
    }
    return out;
}

} // namespace

Spectrum
fftCentered(const Image &image) {
    image.grid.validate();
    Spectrum s;
    s.grid   = image.grid;
    s.values = centeredTransform(2, image.size(), FFTW_FORWARD, image.pixels);
    return s;
}

Image
ifftCentered(const Spectrum &spectrum, double *maxImaginary) {
    const int n = spectrum.grid.size;
    if (spectrum.values.size() != static_cast<std::size_t>(n) * n) {
        throw ShapeMismatch("spectrum payload does not match its grid");
    }
    const auto values = centeredTransform(2, n, FFTW_BACKWARD, spectrum.values);
    return toImage(spectrum.grid, values, 1.0 / (static_cast<double>(n) * n), maxImaginary);
}

std::vector<Complex>
fftCentered3d(const VoxelVolume &volume) {
    volume.grid.validate();
    return centeredTransform(3, volume.size(), FFTW_FORWARD, volume.voxels);
}

void
CtfParams::validate() const {
    if (!(voltage > 0.0)) {
        throw InvalidArgument("CTF voltage must be positive");
    }
    if (!(amplitudeContrast >= 0.0 && amplitudeContrast < 1.0)) {
        throw InvalidArgument("CTF amplitude contrast must lie in [0, 1)");
    }
    if (!(bFactor >= 0.0)) {
        throw InvalidArgument("CTF B-factor must be non-negative");
    }
    for (double v : {defocusU, defocusV, astigmatismAngle, sphericalAberration, phaseShift}) {
        if (!std::isfinite(v)) {
            throw InvalidArgument("CTF parameters must be finite");
        }
    }
}

double
electronWavelength(double voltageKv) {
    // lambda = h / sqrt(2 m0 e V (1 + e V / (2 m0 c^2)))
    if (!(voltageKv > 0.0) || !std::isfinite(voltageKv)) {
        throw InvalidArgument("accelerating voltage must be positive");
    }
    const double volts = voltageKv * 1e3;
    return 12.2643247 / std::sqrt(volts * (1.0 + 0.978466e-6 * volts));
}

std::vector<double>
ctfEvaluate(const CtfParams &p, const GridSpec &grid) {
    p.validate();
    grid.validate();
    const int n         = grid.size;
    const int c         = grid.center();
    const double lambda = electronWavelength(p.voltage);
    const double cs     = p.sphericalAberration * 1e7; // mm -> Angstrom
    const double w      = p.amplitudeContrast;
    const double wPhase = std::sqrt(1.0 - w * w);
    const double dk     = 1.0 / (n * grid.pixelSize);
    const double pi     = std::numbers::pi;
    const double cos2a  = std::cos(2.0 * p.astigmatismAngle);
    const double sin2a  = std::sin(2.0 * p.astigmatismAngle);

    std::vector<double> h(static_cast<std::size_t>(n) * n);
    for (int row = 0; row < n; ++row) {
        const double ky = (row - c) * dk;
        for (int col = 0; col < n; ++col) {
            const double kx = (col - c) * dk;
            const double k2 = kx * kx + ky * ky;
            // cos 2(theta - astig) from cos/sin of the double angles, which is
            // exactly even in k (atan2 is not)
            const double cos2 = k2 > 0.0 ? (kx * kx - ky * ky) / k2 : 1.0;
            const double sin2 = k2 > 0.0 ? 2.0 * kx * ky / k2 : 0.0;
            const double defocus =
                0.5 * ((p.defocusU + p.defocusV) + (p.defocusU - p.defocusV) * (cos2 * cos2a + sin2 * sin2a));
            const double chi = pi * lambda * defocus * k2 -
                               0.5 * pi * cs * lambda * lambda * lambda * k2 * k2 + p.phaseShift;
            const double envelope = std::exp(-p.bFactor * k2 / 4.0);
            h[static_cast<std::size_t>(row) * n + col] =
                -(wPhase * std::sin(chi) + w * std::cos(chi)) * envelope;
        }
    }
    if (n % 2 == 0) {
        // The Nyquist row/column is its own mirror; average with the wrapped
        // partner so H[m] == H[-m mod D] holds on the whole grid.
        auto at = [&](int row, int col) -> double & { return h[static_cast<std::size_t>(row) * n + col]; };
        for (int k = 1; k < n; ++k) {
            const int mirror = n - k;
            if (k < mirror) {
                const double row0 = 0.5 * (at(0, k) + at(0, mirror));
                at(0, k) = at(0, mirror) = row0;
                const double col0 = 0.5 * (at(k, 0) + at(mirror, 0));
                at(k, 0) = at(mirror, 0) = col0;
            }
        }
    }
    return h;
}

Image
applyFilter(const Image &image, std::span<const double> filter) {
    if (filter.size() != image.pixels.size()) {
        throw ShapeMismatch("filter size does not match image grid");
    }
    Spectrum s = fftCentered(image);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        s.values[i] *= filter[i];
    }
    return ifftCentered(s);
}

Image
applyCtf(const Image &image, const CtfParams &params) {
    return applyFilter(image, ctfEvaluate(params, image.grid));
}

Image
phaseShiftTranslate(const Image &image, const Vec2 &t) {
    if (!t.allFinite()) {
        throw InvalidArgument("translation must be finite");
    }
    const int n = image.size();
    const int c = image.grid.center();
    // On even grids the lowest index is the Nyquist bin, its own mirror; only
    // the real part of its phase keeps the result real.
    const bool hasNyquist = n % 2 == 0;
    Spectrum s            = fftCentered(image);
    const double twoPi    = 2.0 * std::numbers::pi;
    for (int row = 0; row < n; ++row) {
        const int my = row - c;
        for (int col = 0; col < n; ++col) {
            const int mx = col - c;
            const double phiX = -twoPi * mx * t.x() / n;
            const double phiY = -twoPi * my * t.y() / n;
            const Complex fx  = (hasNyquist && col == 0) ? Complex(std::cos(phiX), 0.0)
                                                         : std::polar(1.0, phiX);
            const Complex fy  = (hasNyquist && row == 0) ? Complex(std::cos(phiY), 0.0)
                                                         : std::polar(1.0, phiY);
            s.values[static_cast<std::size_t>(row) * n + col] *= fx * fy;
        }
    }
    return ifftCentered(s);
}

} // namespace emsplat
