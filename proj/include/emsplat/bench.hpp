// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "emsplat/splat.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace emsplat {

struct BenchOptions {
    std::vector<std::size_t> gaussianCounts{2048, 3072, 5120, 10000, 30000};
    std::vector<int> sizes{192, 256};
    int repeats = 5;
    int warmup = 1;
    int threads = 0; // 0 = runtime default
    std::uint64_t seed = 0;
    RasterSettings raster;
};

struct BenchRow {
    int size = 0;
    std::size_t gaussians = 0;
    double medianSeconds = 0.0;
    double fps = 0.0;
};

struct BenchReport {
    int threads = 1;
    std::vector<BenchRow> rows;
};

/// Median wall time of one forward + backward pass (render, CTF, MSE, CTF
/// adjoint, rasterizer backward) on a freshly initialized mixture.
BenchReport runBench(const BenchOptions &options);

std::string formatBenchTable(const BenchReport &report);

} // namespace emsplat
