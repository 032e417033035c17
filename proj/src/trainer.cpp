// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "emsplat/trainer.hpp"

#include "emsplat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace emsplat {

void
TrainConfig::validate() const {
    if (epochs < 1) {
        throw InvalidArgument("epochs must be at least 1");
    }
    if (batchSize < 1) {
        throw InvalidArgument("batch size must be at least 1");
    }
    if (!(learningRate > 0.0) || !(decayGamma > 0.0)) {
        throw InvalidArgument("learning rate and decay must be positive");
    }
    if (!(adamBeta1 >= 0.0 && adamBeta1 < 1.0) || !(adamBeta2 >= 0.0 && adamBeta2 < 1.0) ||
        !(adamEpsilon > 0.0)) {
        throw InvalidArgument("invalid Adam hyperparameters");
    }
    if (numGaussians == 0) {
        throw InvalidArgument("number of Gaussians must be at least 1");
    }
}

double
learningRateForEpoch(const TrainConfig &config, int epoch) {
    return config.learningRate * std::pow(config.decayGamma, epoch);
}

void
adamUpdate(GaussianMixture &mixture, std::span<const ParamBlock> grads, AdamState &state,
           const TrainConfig &config, double learningRate) {
    const std::size_t n = mixture.size();
    if (grads.size() != n) {
        throw ShapeMismatch("gradient count does not match mixture size");
    }
    if (state.m.size() != n * kParamsPerGaussian) {
        state.m.assign(n * kParamsPerGaussian, 0.0);
        state.v.assign(n * kParamsPerGaussian, 0.0);
        state.step = 0;
    }
    ++state.step;
    const double b1 = config.adamBeta1, b2 = config.adamBeta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const bool iso  = mixture.isotropic();

    for (std::size_t i = 0; i < n; ++i) {
        ParamBlock g = grads[i];
        if (iso) {
            g[3] = g[3] + g[4] + g[5];
            g[4] = g[5] = 0.0;
        }
        ParamBlock p = mixture[i].toBlock();
        double *m    = &state.m[i * kParamsPerGaussian];
        double *v    = &state.v[i * kParamsPerGaussian];
        for (std::size_t k = 0; k < kParamsPerGaussian; ++k) {
            if (iso && (k == 4 || k == 5)) {
                continue;
            }
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            const double mHat = m[k] / c1;
            const double vHat = v[k] / c2;
            p[k] -= learningRate * mHat / (std::sqrt(vHat) + config.adamEpsilon);
        }
        if (iso) {
            p[4] = p[5] = p[3];
        }
        mixture.setBlock(i, p);
    }
}

double
lossMse(std::span<const double> rendered, std::span<const double> observed) {
    if (rendered.size() != observed.size()) {
        throw ShapeMismatch("loss: rendered and observed images differ in size");
    }
    if (rendered.empty()) {
        return 0.0;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < rendered.size(); ++i) {
        const double d = rendered[i] - observed[i];
        acc += d * d;
    }
    return acc / static_cast<double>(rendered.size());
}

std::vector<double>
alignedObservation(const ParticleRecord &record, const GridSpec &grid) {
    if (record.translation.isZero(0.0)) {
        return record.image;
    }
    return phaseShiftTranslate(Image(grid, record.image), -record.translation).pixels;
}

namespace {

double
lossAgainst(const GaussianMixture &mixture, const ParticleRecord &record, const GridSpec &grid,
            std::span<const double> observed, const RasterSettings &settings,
            std::vector<ParamBlock> *grads) {
    if (observed.size() != static_cast<std::size_t>(grid.size) * grid.size) {
        throw ShapeMismatch("observed image does not match the grid");
    }
    const std::vector<double> ctf = ctfEvaluate(record.ctf, grid);
    const Image rendered          = rasterize(mixture, record.pose, grid, settings);
    const Image predicted         = applyFilter(rendered, ctf);
    const double loss             = lossMse(predicted.pixels, observed);
    if (grads != nullptr) {
        Image residual(grid);
        const double scale = 2.0 / static_cast<double>(observed.size());
        for (std::size_t i = 0; i < observed.size(); ++i) {
            residual.pixels[i] = scale * (predicted.pixels[i] - observed[i]);
        }
        // the CTF operator is self-adjoint
        const Image dRendered = applyFilter(residual, ctf);
        *grads = rasterizeBackward(mixture, record.pose, grid, dRendered.pixels, settings);
    }
    return loss;
}

} // namespace

double
pipelineLoss(const GaussianMixture &mixture, const ParticleRecord &record, const GridSpec &grid,
             const RasterSettings &settings, std::vector<ParamBlock> *grads) {
    const std::vector<double> observed = alignedObservation(record, grid);
    return lossAgainst(mixture, record, grid, observed, settings, grads);
}

double
trainStep(GaussianMixture &mixture, const ParticleRecord &record, const GridSpec &grid,
          const TrainConfig &config, AdamState &state, double learningRate, std::size_t recordIndex) {
    std::vector<ParamBlock> grads;
    const double loss = pipelineLoss(mixture, record, grid, config.raster, &grads);
    if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite loss at record " + std::to_string(recordIndex), recordIndex);
    }
    adamUpdate(mixture, grads, state, config, learningRate);
    return loss;
}

namespace {

double
median(std::vector<double> values) {
    const auto mid = values.begin() + static_cast<long>(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    return *mid;
}

} // namespace

TrainResult
train(const Dataset &dataset, const TrainConfig &config, const TrainCallbacks &callbacks,
      std::optional<GaussianMixture> initial) {
    config.validate();
    dataset.grid.validate();
    if (dataset.records.empty()) {
        throw InvalidArgument("train: dataset is empty");
    }

    TrainResult result;
    result.mixture = initial ? std::move(*initial)
                             : initRandom(config.numGaussians, config.seed, dataset.grid,
                                          InitOptions{.mode = config.mode});
    AdamState state;

    std::vector<std::size_t> order(dataset.records.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffleRng(config.seed ^ 0x5DEECE66DULL);

    std::vector<double> epochZeroLosses;
    double guard = 0.0; // 0 = not yet armed
    long step    = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = learningRateForEpoch(config, epoch);
        if (config.shuffle) {
            std::shuffle(order.begin(), order.end(), shuffleRng);
        }
        for (std::size_t start = 0; start < order.size(); start += config.batchSize) {
            const std::size_t stop = std::min(order.size(), start + config.batchSize);
            double loss            = 0.0;
            std::vector<ParamBlock> batchGrads;
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t idx = order[b];
                const auto &rec       = dataset.records[idx];
                std::vector<ParamBlock> grads;
                const double l = pipelineLoss(result.mixture, rec, dataset.grid, config.raster, &grads);
                if (!std::isfinite(l) || (guard > 0.0 && l > guard)) {
                    throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                              ", step " + std::to_string(step) + ", record " +
                                              std::to_string(idx) + " (loss " + std::to_string(l) + ")",
                                          idx, epoch, step);
                }
                loss += l;
                if (batchGrads.empty()) {
                    batchGrads = std::move(grads);
                } else {
                    for (std::size_t i = 0; i < grads.size(); ++i) {
                        for (std::size_t k = 0; k < kParamsPerGaussian; ++k) {
                            batchGrads[i][k] += grads[i][k];
                        }
                    }
                }
            }
            const double count = static_cast<double>(stop - start);
            if (stop - start > 1) {
                for (auto &g : batchGrads) {
                    for (auto &x : g) {
                        x /= count;
                    }
                }
            }
            loss /= count;
            adamUpdate(result.mixture, batchGrads, state, config, lr);

            const LossRecord record{epoch, step, loss, lr};
            result.trace.push_back(record);
            if (callbacks.onStep) {
                callbacks.onStep(record);
            }
            if (epoch == 0) {
                epochZeroLosses.push_back(loss);
                if (epochZeroLosses.size() >= 16 && epochZeroLosses.size() % 16 == 0) {
                    guard = config.divergenceFactor * median(epochZeroLosses);
                }
            }
            ++step;
        }
        if (epoch == 0 && !epochZeroLosses.empty()) {
            guard = config.divergenceFactor * median(epochZeroLosses);
        }
        if (callbacks.onEpochEnd) {
            callbacks.onEpochEnd(epoch, result.mixture);
        }
    }
    return result;
}

} // namespace emsplat
