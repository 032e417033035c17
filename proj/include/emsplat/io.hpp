// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// File formats:
//   * MRC2014 volumes and particle stacks (mode 2, little-endian)
//   * mixture checkpoints ("CGS1" + u64 count + u8 mode + N x 11 f64)
//   * particle metadata tables (plain text, one row per image)
//   * loss traces and FSC tables (plain text)
//
#pragma once

#include "emsplat/evaluate.hpp"
#include "emsplat/gmm.hpp"
#include "emsplat/image.hpp"
#include "emsplat/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace emsplat::io {

namespace fs = std::filesystem;

struct MrcHeader {
    int nx = 0, ny = 0, nz = 0;
    int mode = 2;
    int spaceGroup = 1; // 0 for image stacks, 1 for volumes
    double pixelSize = 1.0;
};

struct MrcFile {
    MrcHeader header;
    std::vector<float> data; // x fastest, then y, then z
};

void writeMrc(const fs::path &path, const MrcFile &file);
/// Throws FormatError on unsupported mode, truncation, or inconsistent
/// dimensions.
MrcFile readMrc(const fs::path &path);

void writeVolume(const fs::path &path, const VoxelVolume &volume);
VoxelVolume readVolume(const fs::path &path, double extent = 0.5);

void writeStack(const fs::path &path, const Dataset &dataset);

void writeCheckpoint(const fs::path &path, const GaussianMixture &mixture);
GaussianMixture readCheckpoint(const fs::path &path);

struct MetaRow {
    std::size_t index = 0;
    Pose pose;
    Vec2 translation = Vec2::Zero(); // pixels
    CtfParams ctf;
};

void writeMetadata(const fs::path &path, const Dataset &dataset);
std::vector<MetaRow> readMetadata(const fs::path &path);

/// Reads a stack and its metadata. Count or index mismatches are rejected
/// before any image payload is converted.
Dataset loadDataset(const fs::path &stackPath, const fs::path &metaPath, double extent = 0.5);

void writeLossTrace(const fs::path &path, const std::vector<LossRecord> &trace);
std::vector<LossRecord> readLossTrace(const fs::path &path);

/// "shell_index spatial_freq_per_A correlation" rows plus '#' resolution lines.
void writeFscTable(const fs::path &path, const FscCurve &curve);
std::string formatFscTable(const FscCurve &curve);

} // namespace emsplat::io
