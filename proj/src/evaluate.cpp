// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "emsplat/evaluate.hpp"

#include "emsplat/errors.hpp"
#include "emsplat/optics.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace emsplat {

namespace {

struct VoxelSplat {
    bool visible = false;
    Vec3 mean;
    Mat3 precision;
    double weight = 0.0; // A / ((2 pi)^{3/2} |Sigma|^{1/2})
    int lo[3] = {0, 0, 0};
    int hi[3] = {-1, -1, -1};
};

VoxelSplat
prepareVoxelSplat(const GaussianParams &g, const GridSpec &grid, double cullSigma) {
    VoxelSplat v;
    const Mat3 sigma = buildCovariance(g.quaternion, g.rawScale);
    const double det = sigma.determinant();
    if (!(det > 0.0) || !std::isfinite(det) || !g.mean.allFinite()) {
        return v;
    }
    v.mean      = g.mean;
    v.precision = sigma.inverse();
    v.weight    = g.amplitude() / (std::pow(2.0 * std::numbers::pi, 1.5) * std::sqrt(det));

    const double radius = cullSigma * g.scales().maxCoeff();
    const double pw     = grid.pixelWidth();
    const int c         = grid.center();
    for (int a = 0; a < 3; ++a) {
        const double lo = std::ceil((v.mean[a] - radius) / pw) + c;
        const double hi = std::floor((v.mean[a] + radius) / pw) + c;
        if (hi < 0.0 || lo > grid.size - 1) {
            return v;
        }
        v.lo[a] = static_cast<int>(std::max(lo, 0.0));
        v.hi[a] = static_cast<int>(std::min(hi, grid.size - 1.0));
    }
    v.visible = v.lo[0] <= v.hi[0] && v.lo[1] <= v.hi[1] && v.lo[2] <= v.hi[2];
    return v;
}

} // namespace

VoxelVolume
voxelize(const GaussianMixture &mixture, const GridSpec &grid, double cullSigma) {
    grid.validate();
    std::vector<VoxelSplat> splats(mixture.size());
    for (std::size_t i = 0; i < mixture.size(); ++i) {
        splats[i] = prepareVoxelSplat(mixture[i], grid, cullSigma);
    }

    VoxelVolume volume(grid);
    const int d     = grid.size;
    const int c     = grid.center();
    const double pw = grid.pixelWidth();

    // one z-slab per task; contributions summed in Gaussian order
#pragma omp parallel for schedule(dynamic)
    for (int z = 0; z < d; ++z) {
        const double rz = (z - c) * pw;
        for (const auto &s : splats) {
            if (!s.visible || z < s.lo[2] || z > s.hi[2]) {
                continue;
            }
            const Mat3 &p   = s.precision;
            const double dz = rz - s.mean.z();
            for (int y = s.lo[1]; y <= s.hi[1]; ++y) {
                const double dy = (y - c) * pw - s.mean.y();
                double *row     = &volume.voxels[volume.index(z, y, 0)];
                for (int x = s.lo[0]; x <= s.hi[0]; ++x) {
                    const double dx = (x - c) * pw - s.mean.x();
                    const double m  = p(0, 0) * dx * dx + p(1, 1) * dy * dy + p(2, 2) * dz * dz +
                                     2.0 * (p(0, 1) * dx * dy + p(0, 2) * dx * dz + p(1, 2) * dy * dz);
                    row[x] += s.weight * std::exp(-0.5 * m);
                }
            }
        }
    }
    return volume;
}

std::optional<double>
FscCurve::crossing(double threshold) const {
    double prevRadius = 0.0, prevCorr = 1.0;
    for (const auto &shell : shells) {
        if (shell.correlation < threshold) {
            const double span = prevCorr - shell.correlation;
            const double frac = span > 0.0 ? (prevCorr - threshold) / span : 0.0;
            return prevRadius + frac * (shell.radius - prevRadius);
        }
        prevRadius = shell.radius;
        prevCorr   = shell.correlation;
    }
    return std::nullopt;
}

std::optional<double>
FscCurve::resolution0143() const {
    if (!crossing0143) {
        return std::nullopt;
    }
    return boxSize * pixelSize / *crossing0143;
}

std::optional<double>
FscCurve::resolution05() const {
    if (!crossing05) {
        return std::nullopt;
    }
    return boxSize * pixelSize / *crossing05;
}

double
FscCurve::minCorrelationUpTo(int maxShell) const {
    double m = 1.0;
    for (const auto &s : shells) {
        if (s.radius <= maxShell) {
            m = std::min(m, s.correlation);
        }
    }
    return m;
}

FscCurve
fsc(const VoxelVolume &a, const VoxelVolume &b) {
    requireSameShape(a.grid, b.grid, "fsc");
    const int d        = a.size();
    const int c        = d / 2;
    const int maxShell = d / 2;
    const auto fa      = fftCentered3d(a);
    const auto fb      = fftCentered3d(b);

    std::vector<double> num(maxShell + 1, 0.0), numImag(maxShell + 1, 0.0);
    std::vector<double> na(maxShell + 1, 0.0), nb(maxShell + 1, 0.0);
    for (int z = 0; z < d; ++z) {
        for (int y = 0; y < d; ++y) {
            for (int x = 0; x < d; ++x) {
                const double r = std::sqrt(double((z - c) * (z - c) + (y - c) * (y - c) + (x - c) * (x - c)));
                const int s    = static_cast<int>(std::lround(r));
                if (s < 1 || s > maxShell) {
                    continue;
                }
                const std::size_t i = a.index(z, y, x);
                const Complex prod  = fa[i] * std::conj(fb[i]);
                num[s] += prod.real();
                numImag[s] += prod.imag();
                na[s] += std::norm(fa[i]);
                nb[s] += std::norm(fb[i]);
            }
        }
    }

    FscCurve curve;
    curve.boxSize   = d;
    curve.pixelSize = a.grid.pixelSize;
    for (int s = 1; s <= maxShell; ++s) {
        const double denom = std::sqrt(na[s] * nb[s]);
        double corr        = denom > 0.0 ? num[s] / denom : 0.0;
        if (denom > 0.0 && std::abs(numImag[s]) > 1e-6 * denom) {
            throw Error(ErrorKind::Numerical, "fsc: shell numerator has a non-negligible imaginary part");
        }
        corr = std::clamp(corr, -1.0, 1.0);
        curve.shells.push_back({s, s / (d * a.grid.pixelSize), corr});
    }
    curve.crossing0143 = curve.crossing(0.143);
    curve.crossing05   = curve.crossing(0.5);
    return curve;
}

Dataset
halfDataset(const Dataset &dataset, int parity) {
    Dataset half;
    half.grid = dataset.grid;
    for (std::size_t i = static_cast<std::size_t>(parity & 1); i < dataset.records.size(); i += 2) {
        half.records.push_back(dataset.records[i]);
    }
    return half;
}

GoldStandardResult
goldStandardFsc(const Dataset &dataset, const TrainConfig &config) {
    if (dataset.records.size() < 2) {
        throw InvalidArgument("gold-standard FSC needs at least two records");
    }
    TrainConfig evenConfig = config, oddConfig = config;
    oddConfig.seed         = config.seed + 1;
    GoldStandardResult out;
    out.evenHalf = train(halfDataset(dataset, 0), evenConfig).mixture;
    out.oddHalf  = train(halfDataset(dataset, 1), oddConfig).mixture;
    out.curve    = fsc(voxelize(out.evenHalf, dataset.grid, config.raster.cullSigma),
                       voxelize(out.oddHalf, dataset.grid, config.raster.cullSigma));
    return out;
}

} // namespace emsplat
