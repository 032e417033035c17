// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Gaussian mixture volume representation.
//
// Every Gaussian is stored through 11 raw (pre-activation) scalars:
//   mean (3), raw scale (3), quaternion (w, x, y, z) (4), raw amplitude (1).
// Scales and amplitude pass through softplus; the quaternion is normalized
// before each covariance build.
//
#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace emsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline constexpr std::size_t kParamsPerGaussian = 11;

/// Flat per-Gaussian parameter (or gradient) block, ordered
/// (mx, my, mz, raw_sx, raw_sy, raw_sz, qw, qx, qy, qz, raw_A).
using ParamBlock = std::array<double, kParamsPerGaussian>;

enum class GaussianMode : std::uint8_t { Anisotropic = 0, Isotropic = 1 };

struct GaussianParams {
    Vec3 mean = Vec3::Zero();
    Vec3 rawScale = Vec3::Zero();
    Vec4 quaternion{1.0, 0.0, 0.0, 0.0}; // (w, x, y, z), unnormalized storage
    double rawAmplitude = 0.0;

    ParamBlock toBlock() const;
    static GaussianParams fromBlock(const ParamBlock &block);

    Vec3 scales() const;
    double amplitude() const;
};

/// N Gaussians with a fixed count. In isotropic mode the three raw scale
/// components of each Gaussian always hold the same value.
class GaussianMixture {
  public:
    GaussianMixture() = default;
    GaussianMixture(std::vector<GaussianParams> params, GaussianMode mode);

    std::size_t size() const noexcept { return mParams.size(); }
    GaussianMode mode() const noexcept { return mMode; }
    bool isotropic() const noexcept { return mMode == GaussianMode::Isotropic; }

    std::span<const GaussianParams> params() const noexcept { return mParams; }
    const GaussianParams &operator[](std::size_t i) const { return mParams[i]; }

    /// Mutable access for the optimizer. Isotropic ties are re-imposed by
    /// setBlock; direct mutation through params() is not offered.
    void setBlock(std::size_t i, const ParamBlock &block);

    double totalAmplitude() const;

    friend bool operator==(const GaussianMixture &a, const GaussianMixture &b);

  private:
    std::vector<GaussianParams> mParams;
    GaussianMode mMode = GaussianMode::Anisotropic;
};

/// Image/volume discretization. Pixel index i sits at (i - floor(D/2)) * 2E/D,
/// so pixel floor(D/2) is exactly the origin.
struct GridSpec {
    int size = 64;
    double extent = 0.5;
    double pixelSize = 1.0; // Angstrom per pixel, metadata only

    double pixelWidth() const { return 2.0 * extent / size; }
    int center() const { return size / 2; }
    double coord(int index) const { return (index - center()) * pixelWidth(); }
    void validate() const;

    friend bool operator==(const GridSpec &, const GridSpec &) = default;
};

/// softplus(x) = ln(1 + e^x), overflow-safe.
double activate(double raw);
/// Inverse of softplus for y > 0.
double inverseActivate(double value);
/// d softplus / dx = logistic sigmoid.
double activateDerivative(double raw);

/// Rotation matrix of the normalized quaternion (w, x, y, z), right-handed.
/// Throws DegenerateRotation for a zero-norm quaternion.
Mat3 quaternionToRotation(const Vec4 &q);

/// Sigma = R diag(softplus(rawScale))^2 R^T.
Mat3 buildCovariance(const Vec4 &q, const Vec3 &rawScale);

struct InitOptions {
    GaussianMode mode = GaussianMode::Anisotropic;
    double meanSpreadFactor = 0.9 / 6.0; // mean std = factor * E
    double scaleFactor = 0.1;            // scale = factor * mean std
};

/// Random initialization: means ~ N(0, (0.9 E / 6)^2 I), scales 0.1 * that,
/// identity rotation, amplitude 1 / (2N). Raw values are inverse-softplus of
/// the targets.
GaussianMixture initRandom(std::size_t count, std::uint64_t seed, const GridSpec &grid,
                           const InitOptions &options = {});

/// Number of trainable scalars, 11 * N.
std::size_t paramCount(const GaussianMixture &mixture);

} // namespace emsplat
