// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Fourier-domain image physics on the FFT-aligned grid.
//
// Spectra use a centered layout: frequency index (my, mx) lives at
// (my + floor(D/2), mx + floor(D/2)), and the spatial origin is pixel
// floor(D/2). The forward transform is unnormalized; the inverse carries 1/D^n.
//
#pragma once

#include "emsplat/image.hpp"

#include <complex>
#include <span>
#include <vector>

namespace emsplat {

using Complex = std::complex<double>;

struct Spectrum {
    GridSpec grid;
    std::vector<Complex> values;
};

Spectrum fftCentered(const Image &image);

/// Real part of the inverse transform. If maxImaginary is given it receives
/// the largest absolute imaginary residue.
Image ifftCentered(const Spectrum &spectrum, double *maxImaginary = nullptr);

/// Centered 3D transform of a cubic volume, (z, y, x) order, x fastest.
std::vector<Complex> fftCentered3d(const VoxelVolume &volume);

struct CtfParams {
    double defocusU = 15000.0;       // Angstrom, positive = underfocus
    double defocusV = 15000.0;       // Angstrom
    double astigmatismAngle = 0.0;   // radians
    double voltage = 300.0;          // kV
    double sphericalAberration = 2.7; // mm
    double amplitudeContrast = 0.1;
    double phaseShift = 0.0;         // radians
    double bFactor = 0.0;            // Angstrom^2

    void validate() const;
    friend bool operator==(const CtfParams &, const CtfParams &) = default;
};

/// Relativistic electron wavelength in Angstrom for an accelerating voltage in kV.
double electronWavelength(double voltageKv);

/// H(k) on the centered D x D frequency grid (row-major, ky rows).
std::vector<double> ctfEvaluate(const CtfParams &params, const GridSpec &grid);

/// F^-1(H . F(image)), real part. H is a real filter on the centered grid.
Image applyFilter(const Image &image, std::span<const double> filter);
Image applyCtf(const Image &image, const CtfParams &params);

/// Shift by t pixels (x, y): out(r) = in(r - t), via phase multiplication.
/// Whole-pixel shifts reduce to circular shifts.
Image phaseShiftTranslate(const Image &image, const Vec2 &shiftPixels);

} // namespace emsplat
