// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "emsplat/simulator.hpp"

#include "emsplat/errors.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

namespace emsplat {

void
SimSpec::validate() const {
    grid.validate();
    if (numParticles < 2) {
        throw InvalidArgument("simulate: at least 2 particles are required");
    }
    if (truth.size() == 0) {
        throw InvalidArgument("simulate: ground-truth mixture is empty");
    }
    if (!(noise.snr > 0.0)) {
        throw InvalidArgument("simulate: SNR must be positive");
    }
    if (!(translationRange >= 0.0)) {
        throw InvalidArgument("simulate: translation range must be non-negative");
    }
    if (ctf.list.empty() && !(ctf.defocusMin <= ctf.defocusMax)) {
        throw InvalidArgument("simulate: defocus range is inverted");
    }
    ctf.base.validate();
    for (const auto &c : ctf.list) {
        c.validate();
    }
}

Pose
samplePose(std::mt19937_64 &rng, double translationRange) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec4 q;
    do {
        q = Vec4(normal(rng), normal(rng), normal(rng), normal(rng));
    } while (q.norm() < 1e-12);
    q /= q.norm();
    Vec2 t = Vec2::Zero();
    if (translationRange > 0.0) {
        std::uniform_real_distribution<double> uniform(-translationRange, translationRange);
        t = Vec2(uniform(rng), uniform(rng));
    }
    return Pose::fromQuaternion(q, t);
}

double
noiseStdFor(double signalVariance, const NoiseModel &noise) {
    if (!noise.enabled()) {
        return 0.0;
    }
    return std::sqrt(signalVariance / noise.snr);
}

namespace {

struct Draw {
    Pose pose;
    Pose recorded;
    CtfParams ctf;
    Vec2 translation;
};

Draw
drawRecord(const SimSpec &spec, std::size_t index) {
    std::mt19937_64 rng(spec.seed + index);
    Draw d;
    d.pose     = samplePose(rng);
    d.recorded = d.pose;

    if (spec.ctf.list.empty()) {
        std::uniform_real_distribution<double> defocus(spec.ctf.defocusMin, spec.ctf.defocusMax);
        d.ctf          = spec.ctf.base;
        d.ctf.defocusU = defocus(rng);
        d.ctf.defocusV = d.ctf.defocusU;
    } else {
        d.ctf = spec.ctf.list[index % spec.ctf.list.size()];
    }

    d.translation = Vec2::Zero();
    if (spec.translationRange > 0.0) {
        std::uniform_real_distribution<double> shift(-spec.translationRange, spec.translationRange);
        d.translation = Vec2(shift(rng), shift(rng));
        if (spec.roundTranslations) {
            d.translation = Vec2(std::round(d.translation.x()), std::round(d.translation.y()));
        }
    }

    if (spec.angularJitterDegrees > 0.0) {
        std::normal_distribution<double> normal(0.0, 1.0);
        Vec3 axis(normal(rng), normal(rng), normal(rng));
        axis.normalize();
        std::normal_distribution<double> angle(0.0, spec.angularJitterDegrees * std::numbers::pi / 180.0);
        const Eigen::Quaterniond jitter(Eigen::AngleAxisd(angle(rng), axis));
        const Eigen::Quaterniond truth(d.pose.quaternion[0], d.pose.quaternion[1], d.pose.quaternion[2],
                                       d.pose.quaternion[3]);
        const Eigen::Quaterniond noisy = (jitter * truth).normalized();
        d.recorded = Pose::fromQuaternion(Vec4(noisy.w(), noisy.x(), noisy.y(), noisy.z()));
    }
    return d;
}

} // namespace

SimulationResult
simulate(const SimSpec &spec) {
    spec.validate();
    const std::size_t count = spec.numParticles;
    const std::size_t npix  = static_cast<std::size_t>(spec.grid.size) * spec.grid.size;

    SimulationResult result;
    result.dataset.grid = spec.grid;
    result.dataset.records.resize(count);

    const long total = static_cast<long>(count);
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < total; ++i) {
        const Draw d     = drawRecord(spec, static_cast<std::size_t>(i));
        Image clean      = rasterize(spec.truth, d.pose, spec.grid, spec.raster);
        clean            = applyCtf(clean, d.ctf);
        if (!d.translation.isZero(0.0)) {
            clean = phaseShiftTranslate(clean, d.translation);
        }
        auto &rec       = result.dataset.records[i];
        rec.image       = std::move(clean.pixels);
        rec.pose        = d.recorded;
        rec.ctf         = d.ctf;
        rec.translation = d.translation;
    }

    double sum = 0.0, sumSq = 0.0;
    for (const auto &rec : result.dataset.records) {
        for (double v : rec.image) {
            sum += v;
            sumSq += v * v;
        }
    }
    const double n    = static_cast<double>(count * npix);
    const double mean = sum / n;
    result.signalVariance = std::max(0.0, sumSq / n - mean * mean);
    result.noiseStd       = noiseStdFor(result.signalVariance, spec.noise);

#pragma omp parallel for schedule(static)
    for (long i = 0; i < total; ++i) {
        auto &img = result.dataset.records[i].image;
        if (spec.noise.enabled()) {
            std::mt19937_64 rng(spec.noise.seed + i);
            std::normal_distribution<double> normal(0.0, result.noiseStd);
            for (double &v : img) {
                v += normal(rng);
            }
        }
        for (double &v : img) {
            v = static_cast<double>(static_cast<float>(v));
        }
    }
    return result;
}

PhantomKind
parsePhantomKind(const std::string &name) {
    if (name == "helix") {
        return PhantomKind::Helix;
    }
    if (name == "blob-cluster") {
        return PhantomKind::BlobCluster;
    }
    if (name == "two-lobe") {
        return PhantomKind::TwoLobe;
    }
    throw InvalidArgument("unknown phantom kind '" + name + "' (expected helix, blob-cluster, two-lobe)");
}

std::string
phantomKindName(PhantomKind kind) {
    switch (kind) {
    case PhantomKind::Helix:
        return "helix";
    case PhantomKind::BlobCluster:
        return "blob-cluster";
    case PhantomKind::TwoLobe:
        return "two-lobe";
    }
    return "unknown";
}

namespace {

Vec4
toVec4(const Eigen::Quaterniond &q) {
    return Vec4(q.w(), q.x(), q.y(), q.z());
}

GaussianParams
makeGaussian(const Vec3 &mean, const Vec3 &scales, const Vec4 &q, double amplitude) {
    GaussianParams g;
    g.mean         = mean;
    g.rawScale     = Vec3(inverseActivate(scales.x()), inverseActivate(scales.y()), inverseActivate(scales.z()));
    g.quaternion   = q;
    g.rawAmplitude = inverseActivate(amplitude);
    return g;
}

std::vector<double>
jitteredAmplitudes(std::size_t count, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(0.8, 1.2);
    std::vector<double> amps(count);
    double total = 0.0;
    for (auto &a : amps) {
        a = u(rng);
        total += a;
    }
    for (auto &a : amps) {
        a *= 0.5 / total;
    }
    return amps;
}

} // namespace

GaussianMixture
makePhantom(PhantomKind kind, std::size_t count, std::uint64_t seed, double extent) {
    if (count == 0) {
        throw InvalidArgument("phantom needs at least one Gaussian");
    }
    std::mt19937_64 rng(seed);
    const auto amps = jitteredAmplitudes(count, rng);
    std::vector<GaussianParams> params;
    params.reserve(count);
    const double pi = std::numbers::pi;

    switch (kind) {
    case PhantomKind::Helix: {
        const double radius = 0.24 * extent, halfHeight = 0.28 * extent, turns = 2.0;
        const double along = 0.04 * extent, across = 0.032 * extent;
        std::uniform_real_distribution<double> phase0(0.0, 2.0 * pi);
        const double phase = phase0(rng);
        for (std::size_t i = 0; i < count; ++i) {
            const double t   = count == 1 ? 0.5 : static_cast<double>(i) / (count - 1);
            const double phi = phase + 2.0 * pi * turns * t;
            const Vec3 mean(radius * std::cos(phi), radius * std::sin(phi), halfHeight * (2.0 * t - 1.0));
            const Vec3 tangent =
                Vec3(-radius * std::sin(phi) * 2.0 * pi * turns, radius * std::cos(phi) * 2.0 * pi * turns,
                     2.0 * halfHeight)
                    .normalized();
            const Vec3 inward(-std::cos(phi), -std::sin(phi), 0.0);
            Mat3 frame;
            frame.col(0) = tangent;
            frame.col(1) = inward;
            frame.col(2) = tangent.cross(inward);
            params.push_back(makeGaussian(mean, Vec3(along, across, across),
                                          toVec4(Eigen::Quaterniond(frame).normalized()), amps[i]));
        }
        break;
    }
    case PhantomKind::BlobCluster: {
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_real_distribution<double> scale(0.025 * extent, 0.05 * extent);
        for (std::size_t i = 0; i < count; ++i) {
            Vec3 dir(normal(rng), normal(rng), normal(rng));
            dir.normalize();
            const Vec3 mean = dir * (0.3 * extent * std::cbrt(unit(rng)));
            Vec4 q(normal(rng), normal(rng), normal(rng), normal(rng));
            q.normalize();
            params.push_back(makeGaussian(mean, Vec3(scale(rng), scale(rng), scale(rng)), q, amps[i]));
        }
        break;
    }
    case PhantomKind::TwoLobe: {
        std::normal_distribution<double> jitter(0.0, 0.02 * extent);
        const double sigma = 0.06 * extent;
        for (std::size_t i = 0; i < count; ++i) {
            const Vec3 center((i % 2 == 0 ? 1.0 : -1.0) * 0.24 * extent, 0.0, 0.0);
            const Vec3 mean = center + Vec3(jitter(rng), jitter(rng), jitter(rng));
            params.push_back(makeGaussian(mean, Vec3::Constant(sigma), Vec4(1.0, 0.0, 0.0, 0.0), amps[i]));
        }
        break;
    }
    }
    return GaussianMixture(std::move(params), GaussianMode::Anisotropic);
}

} // namespace emsplat
