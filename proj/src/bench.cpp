// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "emsplat/bench.hpp"

#include "emsplat/errors.hpp"
#include "emsplat/simulator.hpp"
#include "emsplat/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace emsplat {

BenchReport
runBench(const BenchOptions &options) {
    if (options.repeats < 1) {
        throw InvalidArgument("bench: repeats must be at least 1");
    }
    BenchReport report;
#ifdef _OPENMP
    if (options.threads > 0) {
        omp_set_num_threads(options.threads);
    }
    report.threads = omp_get_max_threads();
#else
    report.threads = 1;
#endif

    for (int size : options.sizes) {
        const GridSpec grid{size, 0.5, 1.0};
        // a single observed particle: noise only, fixed CTF and pose
        ParticleRecord record;
        std::mt19937_64 rng(options.seed);
        record.pose = samplePose(rng);
        record.ctf.defocusU = record.ctf.defocusV = 15000.0;
        record.image.resize(static_cast<std::size_t>(size) * size);
        std::normal_distribution<double> normal(0.0, 1e-3);
        for (auto &v : record.image) {
            v = normal(rng);
        }

        for (std::size_t n : options.gaussianCounts) {
            const GaussianMixture mixture = initRandom(n, options.seed, grid);
            std::vector<ParamBlock> grads;
            std::vector<double> samples;
            for (int r = 0; r < options.warmup + options.repeats; ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                pipelineLoss(mixture, record, grid, options.raster, &grads);
                const auto t1 = std::chrono::steady_clock::now();
                if (r >= options.warmup) {
                    samples.push_back(std::chrono::duration<double>(t1 - t0).count());
                }
            }
            std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());
            BenchRow row;
            row.size          = size;
            row.gaussians     = n;
            row.medianSeconds = samples[samples.size() / 2];
            row.fps           = 1.0 / row.medianSeconds;
            report.rows.push_back(row);
        }
    }
    return report;
}

std::string
formatBenchTable(const BenchReport &report) {
    std::ostringstream out;
    out << "# threads " << report.threads << "\n";
    out << "# D N median_seconds fps\n";
    char buf[128];
    for (const auto &r : report.rows) {
        std::snprintf(buf, sizeof buf, "%d %zu %.6e %.3f\n", r.size, r.gaussians, r.medianSeconds, r.fps);
        out << buf;
    }
    return out.str();
}

} // namespace emsplat
