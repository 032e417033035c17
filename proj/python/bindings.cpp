// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "emsplat/errors.hpp"
#include "emsplat/evaluate.hpp"
#include "emsplat/io.hpp"
#include "emsplat/optics.hpp"
#include "emsplat/simulator.hpp"
#include "emsplat/splat.hpp"
#include "emsplat/trainer.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

namespace py = pybind11;
using namespace emsplat;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

DoubleArray
toArray(const std::vector<double> &data, std::vector<py::ssize_t> shape) {
    DoubleArray out(shape);
    std::memcpy(out.mutable_data(), data.data(), data.size() * sizeof(double));
    return out;
}

std::vector<double>
fromArray(const DoubleArray &a, std::size_t expected, const char *what) {
    if (static_cast<std::size_t>(a.size()) != expected) {
        throw ShapeMismatch(std::string(what) + ": expected " + std::to_string(expected) + " values, got " +
                            std::to_string(a.size()));
    }
    return {a.data(), a.data() + a.size()};
}

VoxelVolume
volumeFromArray(const DoubleArray &a, double pixelSize) {
    if (a.ndim() != 3 || a.shape(0) != a.shape(1) || a.shape(1) != a.shape(2)) {
        throw ShapeMismatch("volume must be a cubic (D, D, D) array");
    }
    VoxelVolume v(GridSpec{static_cast<int>(a.shape(0)), 0.5, pixelSize});
    v.voxels = fromArray(a, v.voxels.size(), "volume");
    return v;
}

GaussianMixture
mixtureFromArray(const DoubleArray &a, bool isotropic) {
    if (a.ndim() != 2 || a.shape(1) != static_cast<py::ssize_t>(kParamsPerGaussian)) {
        throw ShapeMismatch("parameters must be an (N, 11) array");
    }
    std::vector<GaussianParams> params(static_cast<std::size_t>(a.shape(0)));
    for (std::size_t i = 0; i < params.size(); ++i) {
        ParamBlock b;
        std::memcpy(b.data(), a.data() + i * kParamsPerGaussian, sizeof(b));
        params[i] = GaussianParams::fromBlock(b);
    }
    return GaussianMixture(std::move(params), isotropic ? GaussianMode::Isotropic : GaussianMode::Anisotropic);
}

DoubleArray
mixtureToArray(const GaussianMixture &m) {
    std::vector<double> flat;
    flat.reserve(m.size() * kParamsPerGaussian);
    for (const auto &p : m.params()) {
        const auto b = p.toBlock();
        flat.insert(flat.end(), b.begin(), b.end());
    }
    return toArray(flat, {static_cast<py::ssize_t>(m.size()), static_cast<py::ssize_t>(kParamsPerGaussian)});
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "emsplat core bindings";

    static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
    static py::exception<InvalidArgument> invalid(m, "InvalidArgument", PyExc_ValueError);
    static py::exception<ShapeMismatch> shape(m, "ShapeMismatch", PyExc_ValueError);
    static py::exception<FormatError> format(m, "FormatError", PyExc_IOError);
    static py::exception<DivergenceError> divergence(m, "DivergenceError", error.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const DivergenceError &e) {
            PyErr_SetString(divergence.ptr(), e.what());
        } catch (const InvalidArgument &e) {
            PyErr_SetString(invalid.ptr(), e.what());
        } catch (const ShapeMismatch &e) {
            PyErr_SetString(shape.ptr(), e.what());
        } catch (const FormatError &e) {
            PyErr_SetString(format.ptr(), e.what());
        } catch (const Error &e) {
            PyErr_SetString(error.ptr(), e.what());
        }
    });

    py::class_<GridSpec>(m, "GridSpec")
        .def(py::init([](int size, double extent, double pixelSize) {
                 GridSpec g{size, extent, pixelSize};
                 g.validate();
                 return g;
             }),
             py::arg("size"), py::arg("extent") = 0.5, py::arg("pixel_size") = 1.0)
        .def_readonly("size", &GridSpec::size)
        .def_readonly("extent", &GridSpec::extent)
        .def_readonly("pixel_size", &GridSpec::pixelSize)
        .def_property_readonly("pixel_width", &GridSpec::pixelWidth)
        .def("__repr__", [](const GridSpec &g) {
            return "GridSpec(size=" + std::to_string(g.size) + ", extent=" + std::to_string(g.extent) +
                   ", pixel_size=" + std::to_string(g.pixelSize) + ")";
        });

    py::class_<CtfParams>(m, "CtfParams")
        .def(py::init<>())
        .def_readwrite("defocus_u", &CtfParams::defocusU)
        .def_readwrite("defocus_v", &CtfParams::defocusV)
        .def_readwrite("astigmatism_angle", &CtfParams::astigmatismAngle)
        .def_readwrite("voltage", &CtfParams::voltage)
        .def_readwrite("spherical_aberration", &CtfParams::sphericalAberration)
        .def_readwrite("amplitude_contrast", &CtfParams::amplitudeContrast)
        .def_readwrite("phase_shift", &CtfParams::phaseShift)
        .def_readwrite("b_factor", &CtfParams::bFactor);

    py::class_<GaussianMixture>(m, "GaussianMixture")
        .def(py::init(&mixtureFromArray), py::arg("params"), py::arg("isotropic") = false,
             "Build from an (N, 11) array of raw parameters: mean(3), raw scale(3), quaternion wxyz(4), raw amplitude.")
        .def_static(
            "init_random",
            [](std::size_t count, std::uint64_t seed, const GridSpec &grid, bool isotropic) {
                InitOptions opt;
                opt.mode = isotropic ? GaussianMode::Isotropic : GaussianMode::Anisotropic;
                return initRandom(count, seed, grid, opt);
            },
            py::arg("count"), py::arg("seed"), py::arg("grid"), py::arg("isotropic") = false)
        .def("to_array", &mixtureToArray)
        .def_property_readonly("isotropic", &GaussianMixture::isotropic)
        .def_property_readonly("total_amplitude", &GaussianMixture::totalAmplitude)
        .def("__len__", &GaussianMixture::size)
        .def("__eq__", [](const GaussianMixture &a, const GaussianMixture &b) { return a == b; });

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batchSize)
        .def_readwrite("learning_rate", &TrainConfig::learningRate)
        .def_readwrite("decay_gamma", &TrainConfig::decayGamma)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("n_gaussians", &TrainConfig::numGaussians)
        .def_readwrite("shuffle", &TrainConfig::shuffle)
        .def_property(
            "isotropic", [](const TrainConfig &c) { return c.mode == GaussianMode::Isotropic; },
            [](TrainConfig &c, bool iso) { c.mode = iso ? GaussianMode::Isotropic : GaussianMode::Anisotropic; });

    py::class_<Dataset>(m, "Dataset")
        .def("__len__", [](const Dataset &d) { return d.records.size(); })
        .def_readonly("grid", &Dataset::grid)
        .def("images",
             [](const Dataset &d) {
                 std::vector<double> flat;
                 for (const auto &r : d.records) {
                     flat.insert(flat.end(), r.image.begin(), r.image.end());
                 }
                 const auto s = static_cast<py::ssize_t>(d.grid.size);
                 return toArray(flat, {static_cast<py::ssize_t>(d.records.size()), s, s});
             })
        .def("quaternions", [](const Dataset &d) {
            std::vector<double> flat;
            for (const auto &r : d.records) {
                flat.insert(flat.end(), r.pose.quaternion.data(), r.pose.quaternion.data() + 4);
            }
            return toArray(flat, {static_cast<py::ssize_t>(d.records.size()), 4});
        });

    m.def("activate", &activate, py::arg("raw"));
    m.def("inverse_activate", &inverseActivate, py::arg("value"));
    m.def("param_count", &paramCount, py::arg("mixture"));

    m.def(
        "make_phantom",
        [](const std::string &kind, std::size_t count, std::uint64_t seed) {
            return makePhantom(parsePhantomKind(kind), count, seed);
        },
        py::arg("kind"), py::arg("count"), py::arg("seed"));

    m.def(
        "render",
        [](const GaussianMixture &mixture, const std::array<double, 4> &quaternion, const GridSpec &grid) {
            const Pose pose = Pose::fromQuaternion(Vec4(quaternion[0], quaternion[1], quaternion[2], quaternion[3]));
            Image img;
            {
                py::gil_scoped_release release;
                img = rasterize(mixture, pose, grid);
            }
            const auto s = static_cast<py::ssize_t>(grid.size);
            return toArray(img.pixels, {s, s});
        },
        py::arg("mixture"), py::arg("quaternion"), py::arg("grid"),
        "Orthographic projection of the mixture at the given pose (quaternion w, x, y, z).");

    m.def(
        "voxelize",
        [](const GaussianMixture &mixture, const GridSpec &grid) {
            VoxelVolume v;
            {
                py::gil_scoped_release release;
                v = voxelize(mixture, grid);
            }
            const auto s = static_cast<py::ssize_t>(grid.size);
            return toArray(v.voxels, {s, s, s});
        },
        py::arg("mixture"), py::arg("grid"));

    m.def(
        "ctf_evaluate",
        [](const CtfParams &ctf, const GridSpec &grid) {
            const auto s = static_cast<py::ssize_t>(grid.size);
            return toArray(ctfEvaluate(ctf, grid), {s, s});
        },
        py::arg("ctf"), py::arg("grid"));

    m.def(
        "apply_ctf",
        [](const DoubleArray &image, const CtfParams &ctf, const GridSpec &grid) {
            const std::size_t n = static_cast<std::size_t>(grid.size) * grid.size;
            const Image out     = applyCtf(Image(grid, fromArray(image, n, "image")), ctf);
            const auto s        = static_cast<py::ssize_t>(grid.size);
            return toArray(out.pixels, {s, s});
        },
        py::arg("image"), py::arg("ctf"), py::arg("grid"));

    m.def(
        "fsc",
        [](const DoubleArray &a, const DoubleArray &b, double pixelSize) {
            const FscCurve c = fsc(volumeFromArray(a, pixelSize), volumeFromArray(b, pixelSize));
            std::vector<double> radius, freq, corr;
            for (const auto &s : c.shells) {
                radius.push_back(s.radius);
                freq.push_back(s.frequency);
                corr.push_back(s.correlation);
            }
            const auto n = static_cast<py::ssize_t>(c.shells.size());
            py::dict out;
            out["shell"]           = toArray(radius, {n});
            out["frequency"]       = toArray(freq, {n});
            out["correlation"]     = toArray(corr, {n});
            out["resolution_0.5"]  = c.resolution05();
            out["resolution_0.143"] = c.resolution0143();
            return out;
        },
        py::arg("a"), py::arg("b"), py::arg("pixel_size") = 1.0);

    m.def(
        "simulate",
        [](const GaussianMixture &truth, std::size_t count, const GridSpec &grid, double snr, std::uint64_t seed,
           std::uint64_t noiseSeed, double translationRange) {
            SimSpec spec;
            spec.truth            = truth;
            spec.numParticles     = count;
            spec.grid             = grid;
            spec.noise.snr        = snr;
            spec.noise.seed       = noiseSeed;
            spec.seed             = seed;
            spec.translationRange = translationRange;
            py::gil_scoped_release release;
            return simulate(spec).dataset;
        },
        py::arg("truth"), py::arg("count"), py::arg("grid"), py::arg("snr") = std::numeric_limits<double>::infinity(),
        py::arg("seed") = 0, py::arg("noise_seed") = 0, py::arg("translation_range") = 0.0);

    m.def(
        "train",
        [](const Dataset &dataset, const TrainConfig &config) {
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train(dataset, config);
            }
            std::vector<double> flat;
            for (const auto &t : r.trace) {
                flat.insert(flat.end(), {double(t.epoch), double(t.step), t.loss, t.learningRate});
            }
            return py::make_tuple(r.mixture, toArray(flat, {static_cast<py::ssize_t>(r.trace.size()), 4}));
        },
        py::arg("dataset"), py::arg("config"),
        "Returns (mixture, trace) where trace rows are (epoch, step, loss, learning_rate).");

    m.def("learning_rate_for_epoch", &learningRateForEpoch, py::arg("config"), py::arg("epoch"));

    m.def(
        "write_volume",
        [](const std::filesystem::path &path, const DoubleArray &v, double pixelSize) {
            io::writeVolume(path, volumeFromArray(v, pixelSize));
        },
        py::arg("path"), py::arg("volume"), py::arg("pixel_size") = 1.0);
    m.def(
        "read_volume",
        [](const std::filesystem::path &path) {
            const VoxelVolume v = io::readVolume(path);
            const auto s        = static_cast<py::ssize_t>(v.size());
            return py::make_tuple(toArray(v.voxels, {s, s, s}), v.grid.pixelSize);
        },
        py::arg("path"));
    m.def("write_checkpoint", &io::writeCheckpoint, py::arg("path"), py::arg("mixture"));
    m.def("read_checkpoint", &io::readCheckpoint, py::arg("path"));
}
