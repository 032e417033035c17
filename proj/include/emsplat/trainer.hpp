// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "emsplat/gmm.hpp"
#include "emsplat/image.hpp"
#include "emsplat/optics.hpp"
#include "emsplat/splat.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace emsplat {

struct TrainConfig {
    int epochs = 5;
    int batchSize = 1;
    double learningRate = 1e-3;
    double decayGamma = 0.1;
    double adamBeta1 = 0.9;
    double adamBeta2 = 0.999;
    double adamEpsilon = 1e-8;
    std::uint64_t seed = 0;
    GaussianMode mode = GaussianMode::Anisotropic;
    std::size_t numGaussians = 1000;
    bool shuffle = true;
    /// Abort when a loss exceeds this multiple of the epoch-0 median.
    double divergenceFactor = 1e3;
    RasterSettings raster;

    void validate() const;
};

/// lr(e) = lr0 * gamma^e, one value for every parameter kind.
double learningRateForEpoch(const TrainConfig &config, int epoch);

struct ParticleRecord {
    std::vector<double> image; // D x D observed pixels
    Pose pose;
    CtfParams ctf;
    Vec2 translation = Vec2::Zero(); // pixels; observed image is shifted back by this
};

struct Dataset {
    GridSpec grid;
    std::vector<ParticleRecord> records;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
};

/// One Adam step with a single scalar learning rate applied to all 11 raw
/// parameters. In isotropic mode the three raw-scale partials are summed into
/// the shared scale, whose moments live in slot 3.
void adamUpdate(GaussianMixture &mixture, std::span<const ParamBlock> grads, AdamState &state,
                const TrainConfig &config, double learningRate);

/// Mean over all pixels of the squared difference.
double lossMse(std::span<const double> rendered, std::span<const double> observed);

/// Full pipeline loss render -> CTF -> MSE against the translation-corrected
/// observation. If grads is non-null it receives d loss / d raw parameters.
double pipelineLoss(const GaussianMixture &mixture, const ParticleRecord &record, const GridSpec &grid,
                    const RasterSettings &settings, std::vector<ParamBlock> *grads);

/// Observed image shifted by -translation (phase shift).
std::vector<double> alignedObservation(const ParticleRecord &record, const GridSpec &grid);

/// Render, compare, backpropagate and apply one Adam update. Returns the loss.
/// Throws DivergenceError carrying recordIndex on a non-finite loss.
double trainStep(GaussianMixture &mixture, const ParticleRecord &record, const GridSpec &grid,
                 const TrainConfig &config, AdamState &state, double learningRate,
                 std::size_t recordIndex = 0);

struct LossRecord {
    int epoch = 0;
    long step = 0;
    double loss = 0.0;
    double learningRate = 0.0;
};

struct TrainCallbacks {
    std::function<void(int epoch, const GaussianMixture &)> onEpochEnd;
    std::function<void(const LossRecord &)> onStep;
};

struct TrainResult {
    GaussianMixture mixture;
    std::vector<LossRecord> trace;
};

/// Epoch loop: seeded per-epoch shuffle, lr decay per epoch, Adam updates.
/// Starts from initRandom(config.numGaussians, config.seed) unless an initial
/// mixture is supplied.
TrainResult train(const Dataset &dataset, const TrainConfig &config, const TrainCallbacks &callbacks = {},
                  std::optional<GaussianMixture> initial = std::nullopt);

} // namespace emsplat
