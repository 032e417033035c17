// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "emsplat/gmm.hpp"

#include "emsplat/errors.hpp"

#include <cmath>
#include <random>
#include <string>

namespace emsplat {

ParamBlock
GaussianParams::toBlock() const {
    return {mean.x(),       mean.y(),       mean.z(),       rawScale.x(),
            rawScale.y(),   rawScale.z(),   quaternion[0],  quaternion[1],
            quaternion[2],  quaternion[3],  rawAmplitude};
}

GaussianParams
GaussianParams::fromBlock(const ParamBlock &b) {
    GaussianParams p;
    p.mean         = Vec3(b[0], b[1], b[2]);
    p.rawScale     = Vec3(b[3], b[4], b[5]);
    p.quaternion   = Vec4(b[6], b[7], b[8], b[9]);
    p.rawAmplitude = b[10];
    return p;
}

Vec3
GaussianParams::scales() const {
    return Vec3(activate(rawScale.x()), activate(rawScale.y()), activate(rawScale.z()));
}

double
GaussianParams::amplitude() const {
    return activate(rawAmplitude);
}

GaussianMixture::GaussianMixture(std::vector<GaussianParams> params, GaussianMode mode)
    : mParams(std::move(params)), mMode(mode) {
    if (mMode == GaussianMode::Isotropic) {
        for (auto &p : mParams) {
            p.rawScale.setConstant(p.rawScale.x());
        }
    }
}

void
GaussianMixture::setBlock(std::size_t i, const ParamBlock &block) {
    auto p = GaussianParams::fromBlock(block);
    if (mMode == GaussianMode::Isotropic) {
        p.rawScale.setConstant(p.rawScale.x());
    }
    mParams.at(i) = p;
}

double
GaussianMixture::totalAmplitude() const {
    double total = 0.0;
    for (const auto &p : mParams) {
        total += p.amplitude();
    }
    return total;
}

bool
operator==(const GaussianMixture &a, const GaussianMixture &b) {
    if (a.mMode != b.mMode || a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.mParams[i].toBlock() != b.mParams[i].toBlock()) {
            return false;
        }
    }
    return true;
}

void
GridSpec::validate() const {
    if (size < 1) {
        throw InvalidArgument("grid size must be positive, got " + std::to_string(size));
    }
    if (!(extent > 0.0) || !std::isfinite(extent)) {
        throw InvalidArgument("grid extent must be positive and finite");
    }
    if (!(pixelSize > 0.0) || !std::isfinite(pixelSize)) {
        throw InvalidArgument("grid pixel size must be positive and finite");
    }
}

double
activate(double raw) {
    // ln(1 + e^x) = max(x, 0) + ln(1 + e^-|x|)
    return std::max(raw, 0.0) + std::log1p(std::exp(-std::abs(raw)));
}

double
inverseActivate(double value) {
    if (!(value > 0.0)) {
        throw InvalidArgument("inverse softplus requires a positive value");
    }
    // ln(e^y - 1) = y + ln(1 - e^-y)
    return value + std::log(-std::expm1(-value));
}

double
activateDerivative(double raw) {
    if (raw >= 0.0) {
        return 1.0 / (1.0 + std::exp(-raw));
    }
    const double e = std::exp(raw);
    return e / (1.0 + e);
}

Mat3
quaternionToRotation(const Vec4 &q) {
    const double norm = q.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw DegenerateRotation("quaternion has zero or non-finite norm");
    }
    const double w = q[0] / norm, x = q[1] / norm, y = q[2] / norm, z = q[3] / norm;
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Mat3
buildCovariance(const Vec4 &q, const Vec3 &rawScale) {
    const Mat3 r = quaternionToRotation(q);
    const Vec3 s(activate(rawScale.x()), activate(rawScale.y()), activate(rawScale.z()));
    const Mat3 m = r * s.asDiagonal();
    Mat3 sigma = m * m.transpose();
    // exact symmetry
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
    return sigma;
}

GaussianMixture
initRandom(std::size_t count, std::uint64_t seed, const GridSpec &grid, const InitOptions &options) {
    if (count == 0) {
        throw InvalidArgument("init_random: number of Gaussians must be at least 1");
    }
    grid.validate();

    const double meanStd   = options.meanSpreadFactor * grid.extent;
    const double rawScale  = inverseActivate(options.scaleFactor * meanStd);
    const double rawAmp    = inverseActivate(1.0 / (2.0 * static_cast<double>(count)));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, meanStd);

    std::vector<GaussianParams> params(count);
    for (auto &p : params) {
        p.mean.x()     = normal(rng);
        p.mean.y()     = normal(rng);
        p.mean.z()     = normal(rng);
        p.rawScale     = Vec3::Constant(rawScale);
        p.quaternion   = Vec4(1.0, 0.0, 0.0, 0.0);
        p.rawAmplitude = rawAmp;
    }
    return GaussianMixture(std::move(params), options.mode);
}

std::size_t
paramCount(const GaussianMixture &mixture) {
    return kParamsPerGaussian * mixture.size();
}

} // namespace emsplat
