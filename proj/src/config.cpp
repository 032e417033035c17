// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "emsplat/config.hpp"

#include "emsplat/errors.hpp"
#include "emsplat/io.hpp"

#include <fstream>
#include <initializer_list>

namespace emsplat {

using nlohmann::json;

namespace {

void
rejectUnknown(const json &j, std::initializer_list<const char *> known, const char *section) {
    if (!j.is_object()) {
        throw InvalidArgument(std::string("config section '") + section + "' must be an object");
    }
    for (const auto &item : j.items()) {
        bool found = false;
        for (const char *k : known) {
            found = found || item.key() == k;
        }
        if (!found) {
            throw InvalidArgument(std::string("unknown config key '") + item.key() + "' in '" + section + "'");
        }
    }
}

template <typename T>
void
take(const json &j, const char *key, T &out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception &) {
            throw InvalidArgument(std::string("config key '") + key + "' has the wrong type");
        }
    }
}

} // namespace

double
SimConfig::effectiveSnr() const {
    if (!noise) {
        return std::numeric_limits<double>::infinity();
    }
    return snrDb ? NoiseModel::snrFromDecibels(*snrDb) : snr;
}

SimSpec
SimConfig::toSpec() const {
    SimSpec spec;
    spec.truth = truthCheckpoint.empty()
                     ? makePhantom(parsePhantomKind(phantom), phantomCount, phantomSeed, grid.extent)
                     : io::readCheckpoint(truthCheckpoint);
    spec.numParticles         = numParticles;
    spec.grid                 = grid;
    spec.ctf                  = ctf;
    spec.translationRange     = translationRange;
    spec.roundTranslations    = roundTranslations;
    spec.noise.snr            = effectiveSnr();
    spec.noise.seed           = noiseSeed;
    spec.seed                 = seed;
    spec.angularJitterDegrees = angularJitterDegrees;
    spec.raster               = raster;
    return spec;
}

json
toJson(const GridSpec &g) {
    return {{"size", g.size}, {"extent", g.extent}, {"pixel_size", g.pixelSize}};
}

json
toJson(const CtfParams &c) {
    return {{"defocus_u", c.defocusU},
            {"defocus_v", c.defocusV},
            {"astigmatism_angle", c.astigmatismAngle},
            {"voltage", c.voltage},
            {"spherical_aberration", c.sphericalAberration},
            {"amplitude_contrast", c.amplitudeContrast},
            {"phase_shift", c.phaseShift},
            {"b_factor", c.bFactor}};
}

json
toJson(const RasterSettings &r) {
    return {{"tile_size", r.tileSize}, {"cull_sigma", r.cullSigma}, {"eigen_floor_fraction", r.eigenFloorFraction}};
}

json
toJson(const TrainConfig &c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batchSize},
            {"learning_rate", c.learningRate},
            {"decay_gamma", c.decayGamma},
            {"adam_beta1", c.adamBeta1},
            {"adam_beta2", c.adamBeta2},
            {"adam_epsilon", c.adamEpsilon},
            {"seed", c.seed},
            {"mode", c.mode == GaussianMode::Isotropic ? "isotropic" : "anisotropic"},
            {"n_gaussians", c.numGaussians},
            {"shuffle", c.shuffle},
            {"divergence_factor", c.divergenceFactor},
            {"raster", toJson(c.raster)}};
}

json
toJson(const SimConfig &c) {
    json ctfList = json::array();
    for (const auto &p : c.ctf.list) {
        ctfList.push_back(toJson(p));
    }
    json j = {{"grid", toJson(c.grid)},
              {"num_particles", c.numParticles},
              {"seed", c.seed},
              {"phantom", c.phantom},
              {"phantom_count", c.phantomCount},
              {"phantom_seed", c.phantomSeed},
              {"truth_checkpoint", c.truthCheckpoint},
              {"ctf",
               {{"defocus_min", c.ctf.defocusMin},
                {"defocus_max", c.ctf.defocusMax},
                {"base", toJson(c.ctf.base)},
                {"list", ctfList}}},
              {"translation_range", c.translationRange},
              {"round_translations", c.roundTranslations},
              {"noise", c.noise},
              {"snr", c.snr},
              {"noise_seed", c.noiseSeed},
              {"angular_jitter_deg", c.angularJitterDegrees},
              {"raster", toJson(c.raster)}};
    j["snr_db"] = c.snrDb ? json(*c.snrDb) : json(nullptr);
    return j;
}

void
fromJson(const json &j, GridSpec &g) {
    rejectUnknown(j, {"size", "extent", "pixel_size"}, "grid");
    take(j, "size", g.size);
    take(j, "extent", g.extent);
    take(j, "pixel_size", g.pixelSize);
    g.validate();
}

void
fromJson(const json &j, CtfParams &c) {
    rejectUnknown(j,
                  {"defocus_u", "defocus_v", "astigmatism_angle", "voltage", "spherical_aberration",
                   "amplitude_contrast", "phase_shift", "b_factor"},
                  "ctf");
    take(j, "defocus_u", c.defocusU);
    take(j, "defocus_v", c.defocusV);
    take(j, "astigmatism_angle", c.astigmatismAngle);
    take(j, "voltage", c.voltage);
    take(j, "spherical_aberration", c.sphericalAberration);
    take(j, "amplitude_contrast", c.amplitudeContrast);
    take(j, "phase_shift", c.phaseShift);
    take(j, "b_factor", c.bFactor);
    c.validate();
}

void
fromJson(const json &j, RasterSettings &r) {
    rejectUnknown(j, {"tile_size", "cull_sigma", "eigen_floor_fraction"}, "raster");
    take(j, "tile_size", r.tileSize);
    take(j, "cull_sigma", r.cullSigma);
    take(j, "eigen_floor_fraction", r.eigenFloorFraction);
}

void
fromJson(const json &j, TrainConfig &c) {
    rejectUnknown(j,
                  {"epochs", "batch_size", "learning_rate", "decay_gamma", "adam_beta1", "adam_beta2",
                   "adam_epsilon", "seed", "mode", "n_gaussians", "shuffle", "divergence_factor", "raster"},
                  "train");
    take(j, "epochs", c.epochs);
    take(j, "batch_size", c.batchSize);
    take(j, "learning_rate", c.learningRate);
    take(j, "decay_gamma", c.decayGamma);
    take(j, "adam_beta1", c.adamBeta1);
    take(j, "adam_beta2", c.adamBeta2);
    take(j, "adam_epsilon", c.adamEpsilon);
    take(j, "seed", c.seed);
    take(j, "n_gaussians", c.numGaussians);
    take(j, "shuffle", c.shuffle);
    take(j, "divergence_factor", c.divergenceFactor);
    if (j.contains("mode")) {
        std::string mode;
        take(j, "mode", mode);
        if (mode == "isotropic") {
            c.mode = GaussianMode::Isotropic;
        } else if (mode == "anisotropic") {
            c.mode = GaussianMode::Anisotropic;
        } else {
            throw InvalidArgument("mode must be 'anisotropic' or 'isotropic'");
        }
    }
    if (j.contains("raster")) {
        fromJson(j.at("raster"), c.raster);
    }
    c.validate();
}

void
fromJson(const json &j, SimConfig &c) {
    rejectUnknown(j,
                  {"grid", "num_particles", "seed", "phantom", "phantom_count", "phantom_seed",
                   "truth_checkpoint", "ctf", "translation_range", "round_translations", "noise", "snr",
                   "snr_db", "noise_seed", "angular_jitter_deg", "raster", "output_dir"},
                  "simulate");
    if (j.contains("grid")) {
        fromJson(j.at("grid"), c.grid);
    }
    take(j, "num_particles", c.numParticles);
    take(j, "seed", c.seed);
    take(j, "phantom", c.phantom);
    take(j, "phantom_count", c.phantomCount);
    take(j, "phantom_seed", c.phantomSeed);
    take(j, "truth_checkpoint", c.truthCheckpoint);
    if (j.contains("ctf")) {
        const json &cj = j.at("ctf");
        rejectUnknown(cj, {"defocus_min", "defocus_max", "base", "list"}, "ctf");
        take(cj, "defocus_min", c.ctf.defocusMin);
        take(cj, "defocus_max", c.ctf.defocusMax);
        if (cj.contains("base")) {
            fromJson(cj.at("base"), c.ctf.base);
        }
        if (cj.contains("list")) {
            c.ctf.list.clear();
            for (const auto &item : cj.at("list")) {
                CtfParams p;
                fromJson(item, p);
                c.ctf.list.push_back(p);
            }
        }
    }
    take(j, "translation_range", c.translationRange);
    take(j, "round_translations", c.roundTranslations);
    take(j, "noise", c.noise);
    take(j, "snr", c.snr);
    if (j.contains("snr_db") && !j.at("snr_db").is_null()) {
        double db = 0.0;
        take(j, "snr_db", db);
        c.snrDb = db;
    }
    take(j, "noise_seed", c.noiseSeed);
    take(j, "angular_jitter_deg", c.angularJitterDegrees);
    if (j.contains("raster")) {
        fromJson(j.at("raster"), c.raster);
    }
    if (c.noise && !(c.effectiveSnr() > 0.0)) {
        throw InvalidArgument("snr must be positive");
    }
}

json
readJsonFile(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidArgument("cannot open config file '" + path.string() + "'");
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw InvalidArgument("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
}

} // namespace emsplat
