// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "emsplat/splat.hpp"

#include "emsplat/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace emsplat {

Pose
Pose::fromQuaternion(const Vec4 &q, const Vec2 &t) {
    Pose p;
    p.rotation    = quaternionToRotation(q);
    p.translation = t;
    p.quaternion  = q;
    return p;
}

Pose
Pose::fromRotation(const Mat3 &w, const Vec2 &t) {
    Pose p;
    p.rotation    = w;
    p.translation = t;
    const Eigen::Quaterniond q(w);
    p.quaternion  = Vec4(q.w(), q.x(), q.y(), q.z());
    return p;
}

void
Pose::validate() const {
    if (!rotation.allFinite() || !translation.allFinite()) {
        throw InvalidArgument("pose contains non-finite values");
    }
    const double orthoErr = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    const double detErr   = std::abs(rotation.determinant() - 1.0);
    if (orthoErr > 1e-9 || detErr > 1e-9) {
        throw InvalidArgument("pose rotation is not in SO(3)");
    }
}

double
SplatGaussian2D::evaluate(const Vec2 &r) const {
    const double det = cov2.determinant();
    const Vec2 d     = r - mean2;
    const double m   = d.dot(cov2.inverse() * d);
    return amplitude / (2.0 * std::numbers::pi * std::sqrt(det)) * std::exp(-0.5 * m);
}

CameraSpaceGaussian
viewTransform(const GaussianParams &g, const Pose &pose) {
    const Mat3 sigma = buildCovariance(g.quaternion, g.rawScale);
    CameraSpaceGaussian cg;
    cg.mean3 = pose.rotation * g.mean + Vec3(pose.translation.x(), pose.translation.y(), 0.0);
    cg.cov3  = pose.rotation * sigma * pose.rotation.transpose();
    return cg;
}

SplatGaussian2D
orthographicProject(const CameraSpaceGaussian &cg, double amplitude) {
    SplatGaussian2D s;
    s.mean2     = cg.mean3.head<2>();
    s.cov2      = cg.cov3.topLeftCorner<2, 2>();
    s.amplitude = amplitude;
    if (!(s.cov2(0, 0) > 0.0) || !(s.cov2.determinant() > 0.0)) {
        throw DegenerateSplat("projected 2D covariance is not positive definite");
    }
    return s;
}

namespace {

enum class Clamp : unsigned char { None, Minor, Both };

/// Everything forward and backward need about one projected Gaussian. Both
/// passes build it through prepareSplat so the footprint is identical.
struct PreparedSplat {
    bool visible = false;
    Vec2 mean2;
    Mat2 conic;       // inverse of the (clamped) 2D covariance
    double norm = 0;  // 1 / (2 pi sqrt(det))
    double amplitude = 0;
    Clamp clamp = Clamp::None;
    double lambdaMin = 0, lambdaMax = 0, floor = 0;
    Vec2 minorAxis, majorAxis;
    int col0 = 0, col1 = -1, row0 = 0, row1 = -1;
};

struct SymEigen2 {
    double lambdaMin, lambdaMax;
    Vec2 minorAxis, majorAxis;
};

SymEigen2
eigen2(const Mat2 &m) {
    const double a = m(0, 0), b = 0.5 * (m(0, 1) + m(1, 0)), c = m(1, 1);
    const double mid  = 0.5 * (a + c);
    const double half = std::hypot(0.5 * (a - c), b);
    SymEigen2 e;
    e.lambdaMax = mid + half;
    e.lambdaMin = mid - half;
    if (b == 0.0) {
        if (a >= c) {
            e.majorAxis = Vec2(1.0, 0.0);
        } else {
            e.majorAxis = Vec2(0.0, 1.0);
        }
    } else {
        // pick the better-conditioned of the two equivalent forms
        Vec2 v1(e.lambdaMax - c, b), v2(b, e.lambdaMax - a);
        e.majorAxis = (v1.squaredNorm() >= v2.squaredNorm() ? v1 : v2).normalized();
    }
    e.minorAxis = Vec2(-e.majorAxis.y(), e.majorAxis.x());
    return e;
}

PreparedSplat
prepareSplat(const GaussianParams &g, const Pose &pose, const GridSpec &grid,
             const RasterSettings &settings) {
    PreparedSplat p;
    const CameraSpaceGaussian cg = viewTransform(g, pose);
    p.mean2     = cg.mean3.head<2>();
    p.amplitude = g.amplitude();

    const Mat2 rawCov = cg.cov3.topLeftCorner<2, 2>();
    const SymEigen2 e = eigen2(rawCov);
    const double pw   = grid.pixelWidth();
    p.floor           = (settings.eigenFloorFraction * pw) * (settings.eigenFloorFraction * pw);
    p.lambdaMin       = e.lambdaMin;
    p.lambdaMax       = e.lambdaMax;
    p.minorAxis       = e.minorAxis;
    p.majorAxis       = e.majorAxis;

    Mat2 cov = rawCov;
    double bigLambda = e.lambdaMax;
    if (e.lambdaMax < p.floor) {
        p.clamp   = Clamp::Both;
        cov       = p.floor * Mat2::Identity();
        bigLambda = p.floor;
    } else if (e.lambdaMin < p.floor) {
        p.clamp = Clamp::Minor;
        cov     = e.lambdaMax * e.majorAxis * e.majorAxis.transpose() +
              p.floor * e.minorAxis * e.minorAxis.transpose();
    }

    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    if (!std::isfinite(det) || !(det > 0.0) || !p.mean2.allFinite() || !std::isfinite(p.amplitude)) {
        return p;
    }
    p.conic << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;
    p.norm = 1.0 / (2.0 * std::numbers::pi * std::sqrt(det));

    const double radius = settings.cullSigma * std::sqrt(bigLambda);
    const int c         = grid.center();
    const double lo_x   = std::ceil((p.mean2.x() - radius) / pw) + c;
    const double hi_x   = std::floor((p.mean2.x() + radius) / pw) + c;
    const double lo_y   = std::ceil((p.mean2.y() - radius) / pw) + c;
    const double hi_y   = std::floor((p.mean2.y() + radius) / pw) + c;
    const double last   = grid.size - 1;
    if (hi_x < 0.0 || hi_y < 0.0 || lo_x > last || lo_y > last) {
        return p;
    }
    p.col0    = static_cast<int>(std::max(lo_x, 0.0));
    p.col1    = static_cast<int>(std::min(hi_x, last));
    p.row0    = static_cast<int>(std::max(lo_y, 0.0));
    p.row1    = static_cast<int>(std::min(hi_y, last));
    p.visible = p.col0 <= p.col1 && p.row0 <= p.row1;
    return p;
}

std::vector<PreparedSplat>
prepareAll(const GaussianMixture &mixture, const Pose &pose, const GridSpec &grid,
           const RasterSettings &settings) {
    std::vector<PreparedSplat> prepared(mixture.size());
    const auto params = mixture.params();
    const long n      = static_cast<long>(params.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        prepared[i] = prepareSplat(params[i], pose, grid, settings);
    }
    return prepared;
}

void
validateSettings(const RasterSettings &s) {
    if (s.tileSize < 1) {
        throw InvalidArgument("tile size must be positive");
    }
    if (!(s.cullSigma > 0.0)) {
        throw InvalidArgument("culling radius must be positive");
    }
}

} // namespace

Image
rasterize(const GaussianMixture &mixture, const Pose &pose, const GridSpec &grid,
          const RasterSettings &settings, RasterStats *stats) {
    grid.validate();
    validateSettings(settings);
    const std::vector<PreparedSplat> prepared = prepareAll(mixture, pose, grid, settings);

    const int d      = grid.size;
    const int ts     = settings.tileSize;
    const int tilesX = (d + ts - 1) / ts;
    const int nTiles = tilesX * tilesX;

    // CSR tile lists, filled in Gaussian index order so every pixel sums its
    // contributors in the same order regardless of tiling or thread count.
    std::vector<std::size_t> offsets(nTiles + 1, 0);
    for (const auto &p : prepared) {
        if (!p.visible) {
            continue;
        }
        for (int ty = p.row0 / ts; ty <= p.row1 / ts; ++ty) {
            for (int tx = p.col0 / ts; tx <= p.col1 / ts; ++tx) {
                ++offsets[ty * tilesX + tx + 1];
            }
        }
    }
    for (int t = 0; t < nTiles; ++t) {
        offsets[t + 1] += offsets[t];
    }
    std::vector<std::uint32_t> entries(offsets.back());
    {
        std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
        for (std::size_t i = 0; i < prepared.size(); ++i) {
            const auto &p = prepared[i];
            if (!p.visible) {
                continue;
            }
            for (int ty = p.row0 / ts; ty <= p.row1 / ts; ++ty) {
                for (int tx = p.col0 / ts; tx <= p.col1 / ts; ++tx) {
                    entries[cursor[ty * tilesX + tx]++] = static_cast<std::uint32_t>(i);
                }
            }
        }
    }

    Image image(grid);
    const double pw = grid.pixelWidth();
    const int c     = grid.center();

#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < nTiles; ++t) {
        const int tileRow0 = (t / tilesX) * ts, tileCol0 = (t % tilesX) * ts;
        const int tileRow1 = std::min(tileRow0 + ts, d) - 1, tileCol1 = std::min(tileCol0 + ts, d) - 1;
        for (std::size_t e = offsets[t]; e < offsets[t + 1]; ++e) {
            const PreparedSplat &p = prepared[entries[e]];
            const int r0 = std::max(p.row0, tileRow0), r1 = std::min(p.row1, tileRow1);
            const int c0 = std::max(p.col0, tileCol0), c1 = std::min(p.col1, tileCol1);
            const double weight = p.amplitude * p.norm;
            const double qa = p.conic(0, 0), qb = p.conic(0, 1), qc = p.conic(1, 1);
            for (int row = r0; row <= r1; ++row) {
                const double dy = (row - c) * pw - p.mean2.y();
                double *out     = &image.pixels[static_cast<std::size_t>(row) * d];
                for (int col = c0; col <= c1; ++col) {
                    const double dx = (col - c) * pw - p.mean2.x();
                    const double m  = qa * dx * dx + 2.0 * qb * dx * dy + qc * dy * dy;
                    out[col] += weight * std::exp(-0.5 * m);
                }
            }
        }
    }

    if (stats != nullptr) {
        stats->clampedSplats = 0;
        stats->visibleSplats = 0;
        for (const auto &p : prepared) {
            stats->clampedSplats += p.clamp != Clamp::None ? 1 : 0;
            stats->visibleSplats += p.visible ? 1 : 0;
        }
        stats->tileEntries = entries.size();
    }
    return image;
}

namespace {

/// d Sigma_clamped -> d Sigma_raw for the eigenvalue floor.
Mat2
unclampGradient(const PreparedSplat &p, const Mat2 &g) {
    switch (p.clamp) {
    case Clamp::None:
        return g;
    case Clamp::Both:
        return Mat2::Zero();
    case Clamp::Minor: {
        const Vec2 &u = p.minorAxis, &v = p.majorAxis;
        const double along = v.dot(g * v);
        const double cross = u.dot(g * v) * (p.lambdaMax - p.floor) / (p.lambdaMax - p.lambdaMin);
        return along * v * v.transpose() + cross * (u * v.transpose() + v * u.transpose());
    }
    }
    return g;
}

} // namespace

std::vector<ParamBlock>
rasterizeBackward(const GaussianMixture &mixture, const Pose &pose, const GridSpec &grid,
                  std::span<const double> dLdPixels, const RasterSettings &settings) {
    grid.validate();
    validateSettings(settings);
    const std::size_t d = static_cast<std::size_t>(grid.size);
    if (dLdPixels.size() != d * d) {
        throw ShapeMismatch("rasterize_backward: pixel gradient has wrong size");
    }
    const std::vector<PreparedSplat> prepared = prepareAll(mixture, pose, grid, settings);
    const auto params = mixture.params();
    std::vector<ParamBlock> grads(params.size());

    const double pw = grid.pixelWidth();
    const int c     = grid.center();
    const Eigen::Matrix<double, 2, 3> proj = pose.rotation.topRows<2>();

    const long n = static_cast<long>(params.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (long i = 0; i < n; ++i) {
        ParamBlock &out = grads[i];
        out.fill(0.0);
        const PreparedSplat &p = prepared[i];
        if (!p.visible) {
            continue;
        }

        // sum_w n e, sum_w g d, sum_w g d d^T over the footprint
        double sumNE = 0.0;
        Vec2 s1      = Vec2::Zero();
        Mat2 s2      = Mat2::Zero();
        const double qa = p.conic(0, 0), qb = p.conic(0, 1), qc = p.conic(1, 1);
        for (int row = p.row0; row <= p.row1; ++row) {
            const double dy = (row - c) * pw - p.mean2.y();
            const double *w = &dLdPixels[static_cast<std::size_t>(row) * d];
            for (int col = p.col0; col <= p.col1; ++col) {
                if (w[col] == 0.0) {
                    continue;
                }
                const double dx = (col - c) * pw - p.mean2.x();
                const double m  = qa * dx * dx + 2.0 * qb * dx * dy + qc * dy * dy;
                const double ne = p.norm * std::exp(-0.5 * m);
                const double wg = w[col] * p.amplitude * ne;
                sumNE += w[col] * ne;
                s1.x() += wg * dx;
                s1.y() += wg * dy;
                s2(0, 0) += wg * dx * dx;
                s2(0, 1) += wg * dx * dy;
                s2(1, 1) += wg * dy * dy;
            }
        }
        s2(1, 0) = s2(0, 1);
        const double s0 = p.amplitude * sumNE;

        const Vec2 gMean2 = p.conic * s1;
        const Mat2 gCov   = 0.5 * p.conic * s2 * p.conic - 0.5 * s0 * p.conic;
        const Mat2 gCovRaw = unclampGradient(p, gCov);

        const Vec3 gMean   = proj.transpose() * gMean2;
        const Mat3 gSigma  = proj.transpose() * gCovRaw * proj;

        const GaussianParams &g = params[i];
        const double qNorm      = g.quaternion.norm();
        const Vec4 qn           = g.quaternion / qNorm;
        const Mat3 rot          = quaternionToRotation(g.quaternion);
        const Vec3 s            = g.scales();
        const Mat3 m            = rot * s.asDiagonal();
        const Mat3 gM           = 2.0 * gSigma * m;

        Vec3 gScale;
        Mat3 gR;
        for (int col = 0; col < 3; ++col) {
            gScale[col] = gM.col(col).dot(rot.col(col));
            gR.col(col) = gM.col(col) * s[col];
        }

        const double w = qn[0], x = qn[1], y = qn[2], z = qn[3];
        Vec4 gq;
        gq[0] = 2.0 * (-z * gR(0, 1) + y * gR(0, 2) + z * gR(1, 0) - x * gR(1, 2) - y * gR(2, 0) +
                       x * gR(2, 1));
        gq[1] = 2.0 * (y * gR(0, 1) + z * gR(0, 2) + y * gR(1, 0) - 2.0 * x * gR(1, 1) -
                       w * gR(1, 2) + z * gR(2, 0) + w * gR(2, 1) - 2.0 * x * gR(2, 2));
        gq[2] = 2.0 * (-2.0 * y * gR(0, 0) + x * gR(0, 1) + w * gR(0, 2) + x * gR(1, 0) +
                       z * gR(1, 2) - w * gR(2, 0) + z * gR(2, 1) - 2.0 * y * gR(2, 2));
        gq[3] = 2.0 * (-2.0 * z * gR(0, 0) - w * gR(0, 1) + x * gR(0, 2) + w * gR(1, 0) -
                       2.0 * z * gR(1, 1) + y * gR(1, 2) + x * gR(2, 0) + y * gR(2, 1));
        const Vec4 gqRaw = (gq - qn * qn.dot(gq)) / qNorm;

        out[0] = gMean.x();
        out[1] = gMean.y();
        out[2] = gMean.z();
        for (int k = 0; k < 3; ++k) {
            out[3 + k] = gScale[k] * activateDerivative(g.rawScale[k]);
        }
        for (int k = 0; k < 4; ++k) {
            out[6 + k] = gqRaw[k];
        }
        out[10] = sumNE * activateDerivative(g.rawAmplitude);
    }
    return grads;
}

} // namespace emsplat
