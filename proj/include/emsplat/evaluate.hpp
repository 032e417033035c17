// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "emsplat/gmm.hpp"
#include "emsplat/image.hpp"
#include "emsplat/trainer.hpp"

#include <optional>
#include <vector>

namespace emsplat {

/// Point samples of the mixture density at voxel centers, using the same
/// FFT-aligned coordinate map as the rasterizer. Each Gaussian is evaluated
/// inside a box of cullSigma times its largest standard deviation.
VoxelVolume voxelize(const GaussianMixture &mixture, const GridSpec &grid, double cullSigma = 6.0);

struct FscShell {
    int radius = 0;          // integer shell index
    double frequency = 0.0;  // cycles per Angstrom
    double correlation = 0.0;
};

struct FscCurve {
    std::vector<FscShell> shells;
    int boxSize = 0;
    double pixelSize = 1.0;
    /// Interpolated shell position where the curve first drops below 0.143 /
    /// 0.5; empty when it never does.
    std::optional<double> crossing0143;
    std::optional<double> crossing05;

    /// Resolution in Angstrom, (D * pixel size) / crossing shell.
    std::optional<double> resolution0143() const;
    std::optional<double> resolution05() const;

    /// First crossing of an arbitrary threshold, linearly interpolated
    /// between shells (the DC shell counts as 1).
    std::optional<double> crossing(double threshold) const;
    /// Smallest correlation over shells 1..maxShell.
    double minCorrelationUpTo(int maxShell) const;
};

/// Fourier shell correlation with shells round(|k|) = 1 .. floor(D/2).
FscCurve fsc(const VoxelVolume &a, const VoxelVolume &b);

/// Records with even (parity 0) or odd (parity 1) index.
Dataset halfDataset(const Dataset &dataset, int parity);

struct GoldStandardResult {
    FscCurve curve;
    GaussianMixture evenHalf;
    GaussianMixture oddHalf;
};

/// Trains independently on the even and odd halves (seed, seed + 1),
/// voxelizes both on the dataset grid and correlates them.
GoldStandardResult goldStandardFsc(const Dataset &dataset, const TrainConfig &config);

} // namespace emsplat
