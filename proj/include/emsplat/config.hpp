// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// JSON configuration for the command-line tools. Every field has a default;
// the resolved configuration (defaults filled in) is what the CLI prints.
//
#pragma once

#include "emsplat/simulator.hpp"
#include "emsplat/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace emsplat {

/// Everything `simulate` needs, including where the truth comes from.
struct SimConfig {
    GridSpec grid{64, 0.5, 3.0};
    std::size_t numParticles = 1000;
    std::uint64_t seed = 1;
    std::string phantom = "helix";
    std::size_t phantomCount = 50;
    std::uint64_t phantomSeed = 7;
    /// When set, the truth is read from this checkpoint instead.
    std::string truthCheckpoint;
    CtfSampling ctf;
    double translationRange = 0.0;
    bool roundTranslations = false;
    bool noise = true;
    double snr = 0.1;
    std::optional<double> snrDb;
    std::uint64_t noiseSeed = 1001;
    double angularJitterDegrees = 0.0;
    RasterSettings raster;

    double effectiveSnr() const;
    SimSpec toSpec() const;
};

nlohmann::json toJson(const GridSpec &grid);
nlohmann::json toJson(const CtfParams &ctf);
nlohmann::json toJson(const RasterSettings &raster);
nlohmann::json toJson(const TrainConfig &config);
nlohmann::json toJson(const SimConfig &config);

/// Fill from JSON; unknown keys are rejected with InvalidArgument so typos
/// do not silently fall back to defaults.
void fromJson(const nlohmann::json &j, GridSpec &grid);
void fromJson(const nlohmann::json &j, CtfParams &ctf);
void fromJson(const nlohmann::json &j, RasterSettings &raster);
void fromJson(const nlohmann::json &j, TrainConfig &config);
void fromJson(const nlohmann::json &j, SimConfig &config);

nlohmann::json readJsonFile(const std::filesystem::path &path);

} // namespace emsplat
