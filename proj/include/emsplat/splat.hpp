// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Orthographic Gaussian splatting: posed view transform, marginalization
// along z to normalized 2D Gaussians, and tile-based additive rasterization
// onto the FFT-aligned pixel grid (forward and backward).
//
#pragma once

#include "emsplat/gmm.hpp"
#include "emsplat/image.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace emsplat {

/// Rigid pose: camera-frame position = W * world + (tx, ty, 0).
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec2 translation = Vec2::Zero();
    /// Quaternion the rotation was built from (w, x, y, z), kept verbatim so
    /// metadata round trips reproduce the matrix bit for bit.
    Vec4 quaternion{1.0, 0.0, 0.0, 0.0};

    static Pose fromQuaternion(const Vec4 &q, const Vec2 &t = Vec2::Zero());
    static Pose fromRotation(const Mat3 &w, const Vec2 &t = Vec2::Zero());

    /// Throws InvalidArgument unless W^T W = I and det W = +1 to 1e-9.
    void validate() const;
};

struct CameraSpaceGaussian {
    Vec3 mean3;
    Mat3 cov3;
};

struct SplatGaussian2D {
    Vec2 mean2;
    Mat2 cov2;
    double amplitude = 1.0;

    /// A * N(r | mean2, cov2) with the 1 / (2 pi |cov2|^1/2) factor kept.
    double evaluate(const Vec2 &r) const;
};

CameraSpaceGaussian viewTransform(const GaussianParams &g, const Pose &pose);

/// Drops the z components. Throws DegenerateSplat when the 2x2 block is not
/// positive definite.
SplatGaussian2D orthographicProject(const CameraSpaceGaussian &cg, double amplitude = 1.0);

struct RasterSettings {
    int tileSize = 16;
    /// Footprint half-width in units of the largest 2D standard deviation.
    double cullSigma = 6.0;
    /// Smallest allowed 2D eigenvalue, as a fraction of the pixel width
    /// (squared). Values below are clamped.
    double eigenFloorFraction = 0.1;
};

struct RasterStats {
    std::size_t clampedSplats = 0;
    std::size_t visibleSplats = 0;
    std::size_t tileEntries = 0;
};

/// Per-pixel sum of A_i * G~_i at pixel centers. No compositing, no sorting.
Image rasterize(const GaussianMixture &mixture, const Pose &pose, const GridSpec &grid,
                const RasterSettings &settings = {}, RasterStats *stats = nullptr);

/// Gradient of L with respect to every raw parameter, given dL/dpixel.
/// Each block is ordered like ParamBlock. In isotropic mode the three
/// raw-scale entries hold the per-axis partials; their sum is the gradient of
/// the shared raw scale.
std::vector<ParamBlock> rasterizeBackward(const GaussianMixture &mixture, const Pose &pose,
                                          const GridSpec &grid, std::span<const double> dLdPixels,
                                          const RasterSettings &settings = {});

} // namespace emsplat
