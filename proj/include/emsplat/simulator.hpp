// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic particle generator following the forward model
//   image = shift_t( CTF * project(W, truth) ) + noise
//
#pragma once

#include "emsplat/gmm.hpp"
#include "emsplat/optics.hpp"
#include "emsplat/splat.hpp"
#include "emsplat/trainer.hpp"

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace emsplat {

struct NoiseModel {
    /// Signal variance / noise variance. Infinity disables noise.
    double snr = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 0;

    bool enabled() const { return std::isfinite(snr); }
    static double snrFromDecibels(double db) { return std::pow(10.0, db / 10.0); }
};

/// Defocus sampled uniformly in [defocusMin, defocusMax]; defocusV = defocusU.
struct CtfSampling {
    double defocusMin = 10000.0; // Angstrom
    double defocusMax = 25000.0;
    CtfParams base;              // voltage, Cs, amplitude contrast, phase shift, B
    /// When non-empty, record i uses list[i % size] verbatim instead.
    std::vector<CtfParams> list;
};

struct SimSpec {
    GaussianMixture truth;
    std::size_t numParticles = 1000;
    GridSpec grid;
    CtfSampling ctf;
    double translationRange = 0.0; // pixels, uniform in [-range, range]
    bool roundTranslations = false;
    NoiseModel noise;
    std::uint64_t seed = 0;
    /// Optional error added to the recorded (not the rendered) rotation.
    double angularJitterDegrees = 0.0;
    RasterSettings raster;

    void validate() const;
};

/// Uniform rotation over SO(3) (normalized 4D Gaussian quaternion) and an
/// in-plane translation uniform in [-range, range] (normalized units).
Pose samplePose(std::mt19937_64 &rng, double translationRange = 0.0);

struct SimulationResult {
    Dataset dataset;
    double signalVariance = 0.0;
    double noiseStd = 0.0;
};

/// Noise std for a given clean-signal variance: sqrt(variance / snr).
double noiseStdFor(double signalVariance, const NoiseModel &noise);

/// Renders every particle, measures the clean-signal variance over the whole
/// dataset, then adds white noise. Images are rounded to float32.
SimulationResult simulate(const SimSpec &spec);

enum class PhantomKind { Helix, BlobCluster, TwoLobe };

PhantomKind parsePhantomKind(const std::string &name);
std::string phantomKindName(PhantomKind kind);

/// Deterministic structured ground truth with all means inside radius E/2.
/// Total amplitude is 1/2.
GaussianMixture makePhantom(PhantomKind kind, std::size_t count, std::uint64_t seed,
                            double extent = 0.5);

} // namespace emsplat
