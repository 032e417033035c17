// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// emsplat command-line tool: simulate, reconstruct, voxelize, fsc, bench.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.
//
#include "emsplat/bench.hpp"
#include "emsplat/config.hpp"
#include "emsplat/errors.hpp"
#include "emsplat/evaluate.hpp"
#include "emsplat/io.hpp"
#include "emsplat/simulator.hpp"
#include "emsplat/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace emsplat;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

int
exitFor(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Usage: return kUsage;
    case ErrorKind::Data: return kData;
    case ErrorKind::Numerical: return kDivergence;
    }
    return kData;
}

void
setThreads(int threads) {
#ifdef _OPENMP
    if (threads > 0) {
        omp_set_num_threads(threads);
    }
#else
    (void)threads;
#endif
}

int
activeThreads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

/// Top-level config object; only the named sections are allowed.
json
loadConfig(const std::string &path) {
    if (path.empty()) {
        return json::object();
    }
    json j = readJsonFile(path);
    if (!j.is_object()) {
        throw InvalidArgument("config file must hold a JSON object");
    }
    for (const auto &item : j.items()) {
        if (item.key() != "simulate" && item.key() != "train" && item.key() != "reconstruct") {
            throw InvalidArgument("unknown config section '" + item.key() + "'");
        }
    }
    return j;
}

void
printResolved(const json &resolved, std::uint64_t seed) {
    std::cout << "config: " << resolved.dump() << "\n";
    std::cout << "seed: " << seed << "\n";
    std::cout << "threads: " << activeThreads() << "\n";
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string config;
    std::string out;
    int threads = 0;
};

int
runSimulate(const SimulateArgs &args) {
    const json file = loadConfig(args.config);
    SimConfig cfg;
    std::string outDir = "simulated";
    if (file.contains("simulate")) {
        const json &s = file.at("simulate");
        fromJson(s, cfg);
        if (s.contains("output_dir")) {
            outDir = s.at("output_dir").get<std::string>();
        }
    }
    if (!args.out.empty()) {
        outDir = args.out;
    }
    setThreads(args.threads);

    json simJson          = toJson(cfg);
    simJson["output_dir"] = outDir;
    printResolved(json{{"simulate", simJson}}, cfg.seed);

    const SimSpec spec = cfg.toSpec();
    const auto result  = simulate(spec);
    const fs::path dir(outDir);
    fs::create_directories(dir);
    io::writeStack(dir / "particles.mrcs", result.dataset);
    io::writeMetadata(dir / "particles.meta", result.dataset);
    io::writeCheckpoint(dir / "truth.cgs", spec.truth);
    io::writeVolume(dir / "truth.mrc", voxelize(spec.truth, spec.grid, spec.raster.cullSigma));
    std::ofstream(dir / "config.json") << json{{"simulate", simJson}}.dump(2) << "\n";

    std::printf("particles: %zu  D: %d  apix: %.4f\n", result.dataset.records.size(), spec.grid.size,
                spec.grid.pixelSize);
    std::printf("signal variance: %.6e  noise std: %.6e\n", result.signalVariance, result.noiseStd);
    std::printf("wrote %s\n", dir.string().c_str());
    return kOk;
}

// ---------------------------------------------------------------------------

struct ReconstructArgs {
    std::string config;
    std::string stack;
    std::string meta;
    std::string out;
    std::string half;
    std::optional<std::size_t> numGaussians;
    std::optional<int> epochs;
    std::optional<std::uint64_t> seed;
    bool isotropic = false;
    int threads = 0;
};

int
runReconstruct(const ReconstructArgs &args) {
    const json file = loadConfig(args.config);
    TrainConfig cfg;
    std::string stack, meta, half = "all", outDir = "reconstruction";
    int threads = 0;
    if (file.contains("train")) {
        fromJson(file.at("train"), cfg);
    }
    if (file.contains("reconstruct")) {
        const json &r = file.at("reconstruct");
        for (const auto &item : r.items()) {
            const auto &k = item.key();
            if (k != "stack" && k != "meta" && k != "half" && k != "output_dir" && k != "threads") {
                throw InvalidArgument("unknown config key '" + k + "' in 'reconstruct'");
            }
        }
        stack   = r.value("stack", stack);
        meta    = r.value("meta", meta);
        half    = r.value("half", half);
        outDir  = r.value("output_dir", outDir);
        threads = r.value("threads", threads);
    }

    // flags win over the config file
    if (!args.stack.empty()) stack = args.stack;
    if (!args.meta.empty()) meta = args.meta;
    if (!args.half.empty()) half = args.half;
    if (!args.out.empty()) outDir = args.out;
    if (args.threads > 0) threads = args.threads;
    if (args.numGaussians) cfg.numGaussians = *args.numGaussians;
    if (args.epochs) cfg.epochs = *args.epochs;
    if (args.seed) cfg.seed = *args.seed;
    if (args.isotropic) cfg.mode = GaussianMode::Isotropic;

    if (stack.empty() || meta.empty()) {
        throw InvalidArgument("reconstruct needs --stack and --meta");
    }
    if (half != "all" && half != "even" && half != "odd") {
        throw InvalidArgument("--half must be 'even' or 'odd', got '" + half + "'");
    }
    cfg.validate();
    setThreads(threads);

    // the odd half trains with seed + 1 so the two halves start independently
    TrainConfig run = cfg;
    if (half == "odd") {
        run.seed = cfg.seed + 1;
    }

    const json resolved{{"train", toJson(cfg)},
                        {"reconstruct",
                         {{"stack", stack}, {"meta", meta}, {"half", half}, {"output_dir", outDir}, {"threads", threads}}}};
    printResolved(resolved, run.seed);

    const Dataset full = io::loadDataset(stack, meta);
    const int parity   = half == "odd" ? 1 : 0;
    const Dataset data = half == "all" ? full : halfDataset(full, parity);
    std::vector<std::size_t> used;
    for (std::size_t i = 0; i < data.records.size(); ++i) {
        used.push_back(half == "all" ? i : 2 * i + static_cast<std::size_t>(parity));
    }
    if (data.records.empty()) {
        throw ShapeMismatch("no records selected for training");
    }

    const fs::path dir(outDir);
    fs::create_directories(dir);
    std::ofstream(dir / "config.json") << resolved.dump(2) << "\n";
    {
        std::ofstream rec(dir / "records.txt");
        for (auto i : used) {
            rec << i << "\n";
        }
    }
    std::printf("records: %zu of %zu (half: %s)\n", used.size(), full.records.size(), half.c_str());

    double epochSum = 0.0;
    long epochSteps = 0;
    TrainCallbacks cb;
    cb.onStep = [&](const LossRecord &r) {
        epochSum += r.loss;
        ++epochSteps;
    };
    cb.onEpochEnd = [&](int epoch, const GaussianMixture &m) {
        const auto path = dir / ("epoch_" + std::to_string(epoch + 1) + ".cgs");
        io::writeCheckpoint(path, m);
        std::printf("epoch %d  mean loss %.6e  lr %.3e  -> %s\n", epoch + 1,
                    epochSteps ? epochSum / static_cast<double>(epochSteps) : 0.0, learningRateForEpoch(run, epoch),
                    path.string().c_str());
        std::fflush(stdout);
        epochSum   = 0.0;
        epochSteps = 0;
    };

    TrainResult result;
    try {
        result = train(data, run, cb);
    } catch (const DivergenceError &e) {
        const std::size_t original = e.record() < used.size() ? used[e.record()] : e.record();
        throw DivergenceError(std::string(e.what()) + " (record " + std::to_string(original) + ", epoch " +
                                  std::to_string(e.epoch() + 1) + ", step " + std::to_string(e.step()) + ")",
                              original, e.epoch(), e.step());
    }
    io::writeCheckpoint(dir / "final.cgs", result.mixture);
    io::writeLossTrace(dir / "loss.txt", result.trace);
    std::printf("wrote %s\n", dir.string().c_str());
    return kOk;
}

// ---------------------------------------------------------------------------

struct VoxelizeArgs {
    std::string checkpoint;
    std::string out;
    int size = 0;
    double apix = 0.0;
    double extent = 0.5;
    double cullSigma = 6.0;
    int threads = 0;
};

int
runVoxelize(const VoxelizeArgs &args) {
    setThreads(args.threads);
    const GridSpec grid{args.size, args.extent, args.apix};
    grid.validate();
    printResolved(json{{"voxelize",
                        {{"checkpoint", args.checkpoint},
                         {"out", args.out},
                         {"grid", toJson(grid)},
                         {"cull_sigma", args.cullSigma}}}},
                  0);
    const auto mixture = io::readCheckpoint(args.checkpoint);
    io::writeVolume(args.out, voxelize(mixture, grid, args.cullSigma));
    std::printf("gaussians: %zu  wrote %s\n", mixture.size(), args.out.c_str());
    return kOk;
}

// ---------------------------------------------------------------------------

struct FscArgs {
    std::string a, b, out;
};

int
runFsc(const FscArgs &args) {
    printResolved(json{{"fsc", {{"volume_a", args.a}, {"volume_b", args.b}, {"out", args.out}}}}, 0);
    const auto va = io::readVolume(args.a);
    const auto vb = io::readVolume(args.b);
    if (va.grid.pixelSize != vb.grid.pixelSize) {
        std::fprintf(stderr, "emsplat: warning: pixel sizes differ (%g vs %g); using the first\n",
                     va.grid.pixelSize, vb.grid.pixelSize);
    }
    const auto curve = fsc(va, vb);
    std::cout << io::formatFscTable(curve);
    if (!args.out.empty()) {
        io::writeFscTable(args.out, curve);
    }
    return kOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
    std::vector<std::size_t> counts{2048, 3072, 5120, 10000, 30000};
    std::vector<int> sizes{192, 256};
    int repeats = 5;
    int warmup = 1;
    int threads = 0;
    std::uint64_t seed = 0;
    std::string out;
};

int
runBenchCommand(const BenchArgs &args) {
    BenchOptions opt;
    opt.gaussianCounts = args.counts;
    opt.sizes          = args.sizes;
    opt.repeats        = args.repeats;
    opt.warmup         = args.warmup;
    opt.threads        = args.threads;
    opt.seed           = args.seed;
    for (int d : opt.sizes) {
        GridSpec{d, 0.5, 1.0}.validate();
    }
    setThreads(args.threads);
    printResolved(json{{"bench",
                        {{"n_gaussians", opt.gaussianCounts},
                         {"sizes", opt.sizes},
                         {"repeats", opt.repeats},
                         {"warmup", opt.warmup},
                         {"raster", toJson(opt.raster)}}}},
                  opt.seed);
    const auto report = runBench(opt);
    const auto table  = formatBenchTable(report);
    std::cout << table;
    if (!args.out.empty()) {
        std::ofstream(args.out) << table;
    }
    return kOk;
}

} // namespace

int
main(int argc, char **argv) {
    CLI::App app{"emsplat: Gaussian-mixture cryo-EM reconstruction from simulated particle images"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "emsplat 0.1.0");

    SimulateArgs sim;
    auto *simCmd = app.add_subcommand("simulate", "Render a phantom into a noisy particle stack");
    simCmd->add_option("--config", sim.config, "JSON config (\"simulate\" section)")->check(CLI::ExistingFile);
    simCmd->add_option("--out", sim.out, "Output directory (overrides the config)");
    simCmd->add_option("--threads", sim.threads, "Worker threads (0 = default)")->check(CLI::NonNegativeNumber);

    ReconstructArgs rec;
    auto *recCmd = app.add_subcommand("reconstruct", "Fit a Gaussian mixture to a particle stack");
    recCmd->add_option("--config", rec.config, "JSON config (\"train\" and \"reconstruct\" sections)")
        ->check(CLI::ExistingFile);
    recCmd->add_option("--stack", rec.stack, "Particle stack (.mrcs)");
    recCmd->add_option("--meta", rec.meta, "Particle metadata table");
    recCmd->add_option("--n-gaussians", rec.numGaussians, "Number of Gaussians");
    recCmd->add_option("--epochs", rec.epochs, "Training epochs");
    recCmd->add_option("--seed", rec.seed, "Initialization and shuffle seed");
    recCmd->add_flag("--isotropic", rec.isotropic, "Tie the three scales and drop rotations");
    recCmd->add_option("--half", rec.half, "Train on even or odd record indices only")
        ->check(CLI::IsMember({"even", "odd"}));
    recCmd->add_option("--out", rec.out, "Output directory");
    recCmd->add_option("--threads", rec.threads, "Worker threads (0 = default)")->check(CLI::NonNegativeNumber);

    VoxelizeArgs vox;
    auto *voxCmd = app.add_subcommand("voxelize", "Sample a checkpoint onto a cubic MRC volume");
    voxCmd->add_option("--checkpoint", vox.checkpoint, "Mixture checkpoint")->required()->check(CLI::ExistingFile);
    voxCmd->add_option("--size", vox.size, "Box size D")->required();
    voxCmd->add_option("--apix", vox.apix, "Pixel size in Angstrom")->required();
    voxCmd->add_option("--out", vox.out, "Output MRC path")->required();
    voxCmd->add_option("--extent", vox.extent, "Half-width E of the normalized box");
    voxCmd->add_option("--cull-sigma", vox.cullSigma, "Cull radius in standard deviations");
    voxCmd->add_option("--threads", vox.threads, "Worker threads (0 = default)")->check(CLI::NonNegativeNumber);

    FscArgs fscArgs;
    auto *fscCmd = app.add_subcommand("fsc", "Fourier shell correlation between two volumes");
    fscCmd->add_option("--volume-a", fscArgs.a, "First volume")->required()->check(CLI::ExistingFile);
    fscCmd->add_option("--volume-b", fscArgs.b, "Second volume")->required()->check(CLI::ExistingFile);
    fscCmd->add_option("--out", fscArgs.out, "Also write the table here");

    BenchArgs bench;
    auto *benchCmd = app.add_subcommand("bench", "Forward+backward timing table");
    benchCmd->add_option("--n-gaussians", bench.counts, "Comma-separated Gaussian counts")->delimiter(',');
    benchCmd->add_option("--size", bench.sizes, "Comma-separated box sizes")->delimiter(',');
    benchCmd->add_option("--repeats", bench.repeats, "Timed repeats per cell")->check(CLI::PositiveNumber);
    benchCmd->add_option("--warmup", bench.warmup, "Untimed warmup runs")->check(CLI::NonNegativeNumber);
    benchCmd->add_option("--threads", bench.threads, "Worker threads (0 = default)")->check(CLI::NonNegativeNumber);
    benchCmd->add_option("--seed", bench.seed, "Mixture seed");
    benchCmd->add_option("--out", bench.out, "Also write the table here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        std::fprintf(stderr, "emsplat: usage error: %s\n", e.what());
        return kUsage;
    }

    try {
        if (*simCmd) return runSimulate(sim);
        if (*recCmd) return runReconstruct(rec);
        if (*voxCmd) return runVoxelize(vox);
        if (*fscCmd) return runFsc(fscArgs);
        if (*benchCmd) return runBenchCommand(bench);
    } catch (const DivergenceError &e) {
        std::fprintf(stderr, "emsplat: divergence: %s\n", e.what());
        return kDivergence;
    } catch (const Error &e) {
        const char *label = e.kind() == ErrorKind::Usage ? "usage" : e.kind() == ErrorKind::Data ? "data" : "numerical";
        std::fprintf(stderr, "emsplat: %s error: %s\n", label, e.what());
        return exitFor(e.kind());
    } catch (const std::exception &e) {
        std::fprintf(stderr, "emsplat: data error: %s\n", e.what());
        return kData;
    }
    return kUsage;
}
