// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "oracles.hpp"

#include "emsplat/errors.hpp"
#include "emsplat/simulator.hpp"
#include "emsplat/splat.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace emsplat;

namespace {

const GridSpec kGrid{64, 0.5, 1.0};

GaussianParams
gaussian(const Vec3 &mean, const Vec3 &scales, const Vec4 &q, double amplitude) {
    GaussianParams g;
    g.mean         = mean;
    g.rawScale     = Vec3(inverseActivate(scales[0]), inverseActivate(scales[1]), inverseActivate(scales[2]));
    g.quaternion   = q;
    g.rawAmplitude = inverseActivate(amplitude);
    return g;
}

/// Random anisotropic mixture with every scale in [minScale, maxScale] and
/// means within `spread` of the origin.
GaussianMixture
randomMixture(std::size_t n, std::uint64_t seed, double minScale, double maxScale, double spread,
              GaussianMode mode = GaussianMode::Anisotropic) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0), s(minScale, maxScale), a(0.01, 0.2);
    std::normal_distribution<double> nrm(0.0, 1.0);
    std::vector<GaussianParams> ps;
    for (std::size_t i = 0; i < n; ++i) {
        ps.push_back(gaussian(Vec3(u(rng), u(rng), u(rng)) * spread, Vec3(s(rng), s(rng), s(rng)),
                              Vec4(nrm(rng), nrm(rng), nrm(rng), nrm(rng)), a(rng)));
    }
    return GaussianMixture(std::move(ps), mode);
}

double
maxAbsDiff(const std::vector<double> &a, const std::vector<double> &b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

double
weightedSum(const Image &img, const std::vector<double> &w) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        s += w[i] * img.pixels[i];
    }
    return s;
}

} // namespace

TEST(Pose, ValidateAndConstruct) {
    std::mt19937_64 rng(1);
    const Pose p = samplePose(rng);
    EXPECT_NO_THROW(p.validate());
    const Pose back = Pose::fromRotation(p.rotation);
    EXPECT_LT((back.rotation - p.rotation).cwiseAbs().maxCoeff(), 1e-14);

    Pose bad;
    bad.rotation(0, 0) = 1.1;
    EXPECT_THROW(bad.validate(), InvalidArgument);
    Pose reflection;
    reflection.rotation = Vec3(1, 1, -1).asDiagonal();
    EXPECT_THROW(reflection.validate(), InvalidArgument);
}

TEST(ViewTransform, RotationAndTranslation) {
    const double h = std::sqrt(2.0) / 2.0;
    const Pose pose = Pose::fromQuaternion(Vec4(h, 0, 0, h), Vec2(0.05, 0.0));
    const auto g = gaussian(Vec3(0.1, 0, 0), Vec3(0.01, 0.02, 0.03), Vec4(1, 0, 0, 0), 1.0);
    const auto cg = viewTransform(g, pose);
    EXPECT_NEAR(cg.mean3[0], 0.05, 1e-15);
    EXPECT_NEAR(cg.mean3[1], 0.1, 1e-15);
    EXPECT_NEAR(cg.mean3[2], 0.0, 1e-15);
}

TEST(ViewTransform, IdentityPose) {
    const auto g = gaussian(Vec3(0.1, -0.2, 0.05), Vec3(0.01, 0.02, 0.03), Vec4(0.3, 0.4, -0.1, 0.2), 1.0);
    const auto cg = viewTransform(g, Pose{});
    EXPECT_EQ(cg.mean3, g.mean);
    EXPECT_TRUE(cg.cov3.isApprox(buildCovariance(g.quaternion, g.rawScale), 1e-15));
}

TEST(ViewTransform, EigenvaluesPreserved) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const Pose pose = samplePose(rng);
        const auto g    = randomMixture(1, 100 + trial, 0.01, 0.05, 0.2)[0];
        const auto cg   = viewTransform(g, pose);
        Eigen::SelfAdjointEigenSolver<Mat3> a(buildCovariance(g.quaternion, g.rawScale)), b(cg.cov3);
        EXPECT_LT((a.eigenvalues() - b.eigenvalues()).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(OrthographicProject, DiagonalBlock) {
    CameraSpaceGaussian cg{Vec3(0.1, 0.2, 0.3), Vec3(1e-4, 4e-4, 9e-4).asDiagonal()};
    const auto s = orthographicProject(cg, 2.0);
    EXPECT_EQ(s.mean2, Vec2(0.1, 0.2));
    EXPECT_EQ(s.cov2, Mat2(Vec2(1e-4, 4e-4).asDiagonal()));
    cg.cov3(2, 2) = 1.0;
    EXPECT_EQ(orthographicProject(cg, 2.0).cov2, s.cov2);
}

TEST(OrthographicProject, PeakValue) {
    CameraSpaceGaussian cg{Vec3::Zero(), 1e-4 * Mat3::Identity()};
    const auto s = orthographicProject(cg, 1.0);
    EXPECT_NEAR(s.evaluate(Vec2::Zero()), 1591.549430918953, 1e-9);
}

TEST(OrthographicProject, MatchesZQuadrature) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Pose pose = samplePose(rng);
        const auto g    = randomMixture(1, 300 + trial, 0.01, 0.05, 0.1)[0];
        const auto s    = orthographicProject(viewTransform(g, pose), g.amplitude());
        const auto oc   = oracle::toCamera(g, pose);
        ASSERT_GT(std::abs(oc.cov[0][2]) + std::abs(oc.cov[1][2]), 0.0);
        const double peak = s.evaluate(s.mean2);
        double worst      = 0.0;
        std::uniform_real_distribution<double> off(-0.1, 0.1);
        for (int k = 0; k < 50; ++k) {
            const Vec2 r = s.mean2 + Vec2(off(rng), off(rng));
            worst        = std::max(worst, std::abs(s.evaluate(r) - oracle::integrateAlongZ(oc, r[0], r[1])));
        }
        EXPECT_LE(worst, 1e-6 * peak);
    }
}

TEST(OrthographicProject, DegenerateThrows) {
    CameraSpaceGaussian cg{Vec3::Zero(), Mat3::Zero()};
    EXPECT_THROW(orthographicProject(cg), DegenerateSplat);
    cg.cov3 = Vec3(1e-4, -1e-4, 1e-4).asDiagonal();
    EXPECT_THROW(orthographicProject(cg), DegenerateSplat);
}

TEST(Rasterize, OriginOnCenterPixel) {
    for (int d : {64, 65, 32, 7}) {
        const GridSpec grid{d, 0.5, 1.0};
        GaussianMixture m({gaussian(Vec3::Zero(), Vec3(0.05, 0.03, 0.02), Vec4(1, 0, 0, 0), 1.0)},
                          GaussianMode::Anisotropic);
        const Image img = rasterize(m, Pose{}, grid);
        const auto it   = std::max_element(img.pixels.begin(), img.pixels.end());
        const auto idx  = static_cast<int>(it - img.pixels.begin());
        EXPECT_EQ(idx / d, d / 2);
        EXPECT_EQ(idx % d, d / 2);
    }
}

TEST(Rasterize, ZeroMass) {
    auto m = randomMixture(20, 1, 0.02, 0.05, 0.2);
    for (std::size_t i = 0; i < m.size(); ++i) {
        auto b = m[i].toBlock();
        b[10]  = -40.0;
        m.setBlock(i, b);
    }
    const Image img = rasterize(m, Pose{}, kGrid);
    EXPECT_LE(img.maxAbs(), 1e-12);
}

TEST(Rasterize, MatchesDenseOracle) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        const auto m     = randomMixture(64, 500 + trial, kGrid.pixelWidth(), 0.06, 0.3);
        const Pose pose  = samplePose(rng, 0.05);
        const Image fast = rasterize(m, pose, kGrid);
        const auto dense = oracle::denseRender(m, pose, kGrid);
        const double peak = *std::max_element(dense.begin(), dense.end());
        EXPECT_LE(maxAbsDiff(fast.pixels, dense), 1e-4 * peak);
    }
}

TEST(Rasterize, TileSizeAndThreadsDoNotChangeResult) {
    const auto m    = randomMixture(200, 3, 0.01, 0.06, 0.4);
    std::mt19937_64 rng(4);
    const Pose pose = samplePose(rng);
    const Image ref = rasterize(m, pose, kGrid, RasterSettings{16});
    for (int tile : {8, 32, 5}) {
        EXPECT_EQ(rasterize(m, pose, kGrid, RasterSettings{tile}).pixels, ref.pixels) << tile;
    }
#ifdef _OPENMP
    const int before = omp_get_max_threads();
    for (int threads : {1, 3, 4}) {
        omp_set_num_threads(threads);
        EXPECT_EQ(rasterize(m, pose, kGrid).pixels, ref.pixels) << threads;
    }
    omp_set_num_threads(before);
#endif
}

TEST(Rasterize, Linearity) {
    const auto a = randomMixture(30, 5, 0.01, 0.05, 0.3);
    const auto b = randomMixture(40, 6, 0.01, 0.05, 0.3);
    std::vector<GaussianParams> all(a.params().begin(), a.params().end());
    all.insert(all.end(), b.params().begin(), b.params().end());
    const GaussianMixture ab(all, GaussianMode::Anisotropic);
    std::mt19937_64 rng(8);
    const Pose pose  = samplePose(rng);
    const Image iab  = rasterize(ab, pose, kGrid);
    const Image ia   = rasterize(a, pose, kGrid);
    const Image ib   = rasterize(b, pose, kGrid);
    std::vector<double> sum(ia.pixels.size());
    for (std::size_t i = 0; i < sum.size(); ++i) {
        sum[i] = ia.pixels[i] + ib.pixels[i];
    }
    // identical up to floating-point reassociation of the per-pixel sum
    EXPECT_LE(maxAbsDiff(iab.pixels, sum), 1e-13 * iab.maxAbs());
}

TEST(Rasterize, MassConservationAndPoseInvariance) {
    // spread 0.15, scales <= 0.03: every Gaussian is > 6 sigma from the border
    // under any rotation (0.15 * sqrt(3) + 6 * 0.03 < 0.5)
    const auto m     = randomMixture(50, 9, 0.015, 0.03, 0.15);
    const double pw2 = kGrid.pixelWidth() * kGrid.pixelWidth();
    std::mt19937_64 rng(10);
    std::vector<double> masses;
    for (int k = 0; k < 10; ++k) {
        masses.push_back(rasterize(m, samplePose(rng), kGrid).sum() * pw2);
    }
    for (double mass : masses) {
        EXPECT_NEAR(mass, m.totalAmplitude(), 1e-4 * m.totalAmplitude());
        EXPECT_NEAR(mass, masses[0], 1e-6 * masses[0]);
    }
}

TEST(Rasterize, OutsideFieldOfViewContributesNothing) {
    GaussianMixture m({gaussian(Vec3(3.0, 0, 0), Vec3::Constant(0.01), Vec4(1, 0, 0, 0), 1.0)},
                      GaussianMode::Anisotropic);
    RasterStats stats;
    const Image img = rasterize(m, Pose{}, kGrid, {}, &stats);
    EXPECT_EQ(img.maxAbs(), 0.0);
    EXPECT_EQ(stats.visibleSplats, 0u);
}

TEST(Rasterize, EigenFloorClampsNeedleSplats) {
    // a needle along z: the 2D footprint is far below a tenth of a pixel
    GaussianMixture m({gaussian(Vec3::Zero(), Vec3(1e-5, 1e-5, 0.05), Vec4(1, 0, 0, 0), 1.0)},
                      GaussianMode::Anisotropic);
    RasterStats stats;
    const Image img = rasterize(m, Pose{}, kGrid, {}, &stats);
    EXPECT_EQ(stats.clampedSplats, 1u);
    EXPECT_TRUE(img.allFinite());
    const double floorVar = std::pow(0.1 * kGrid.pixelWidth(), 2);
    EXPECT_NEAR(img(32, 32), 1.0 / (2 * std::numbers::pi * floorVar), 1e-6 / floorVar);
}

TEST(RasterizeBackward, ZeroUpstreamGivesZero) {
    const auto m = randomMixture(10, 2, 0.01, 0.05, 0.3);
    std::vector<double> zeros(kGrid.size * kGrid.size, 0.0);
    for (const auto &b : rasterizeBackward(m, Pose{}, kGrid, zeros)) {
        for (double v : b) {
            EXPECT_EQ(v, 0.0);
        }
    }
}

TEST(RasterizeBackward, MatchesFiniteDifferences) {
    std::mt19937_64 rng(31);
    int failures = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto m    = randomMixture(1, 1000 + trial, 0.01, 0.05, 0.2);
        const Pose pose = samplePose(rng, 0.05);
        const auto w    = oracle::randomImage(kGrid.size, 2000 + trial, 1.0 / (kGrid.size * kGrid.size));
        const auto grads = rasterizeBackward(m, pose, kGrid, w);
        const auto fd    = oracle::fdGradient(
            m, 0, [&](const GaussianMixture &mm) { return weightedSum(rasterize(mm, pose, kGrid), w); });
        for (std::size_t k = 0; k < kParamsPerGaussian; ++k) {
            if (!oracle::gradientsAgree(grads[0][k], fd[k])) {
                ++failures;
                ADD_FAILURE() << "trial " << trial << " param " << k << ": " << grads[0][k] << " vs " << fd[k];
            }
        }
    }
    EXPECT_EQ(failures, 0);
}

TEST(RasterizeBackward, ClampedSplatMatchesFiniteDifferences) {
    // one minor axis below the eigenvalue floor, the other above it
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        GaussianMixture m({gaussian(Vec3(0.01, -0.02, 0.0), Vec3(0.03, 0.0005, 0.0005),
                                    Vec4(1.0, 0.05 * trial, 0.02, 0.3), 0.1)},
                          GaussianMode::Anisotropic);
        RasterStats stats;
        const Pose pose = Pose{};
        rasterize(m, pose, kGrid, {}, &stats);
        ASSERT_EQ(stats.clampedSplats, 1u);
        const auto w     = oracle::randomImage(kGrid.size, 50 + trial, 1e-3);
        const auto grads = rasterizeBackward(m, pose, kGrid, w);
        const auto fd    = oracle::fdGradient(
            m, 0, [&](const GaussianMixture &mm) { return weightedSum(rasterize(mm, pose, kGrid), w); }, 1e-7);
        for (std::size_t k = 0; k < kParamsPerGaussian; ++k) {
            EXPECT_TRUE(oracle::gradientsAgree(grads[0][k], fd[k], 1e-3, 1e-7))
                << "param " << k << ": " << grads[0][k] << " vs " << fd[k];
        }
    }
}

TEST(RasterizeBackward, IsotropicSharedScale) {
    const auto m    = randomMixture(3, 77, 0.02, 0.04, 0.2, GaussianMode::Isotropic);
    std::mt19937_64 rng(78);
    const Pose pose = samplePose(rng);
    const auto w    = oracle::randomImage(kGrid.size, 79, 1e-3);
    const auto grads = rasterizeBackward(m, pose, kGrid, w);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto fd = oracle::fdGradient(
            m, i, [&](const GaussianMixture &mm) { return weightedSum(rasterize(mm, pose, kGrid), w); });
        EXPECT_TRUE(oracle::gradientsAgree(grads[i][3] + grads[i][4] + grads[i][5], fd[3]));
    }
}

TEST(RasterizeBackward, MassIsTranslationInvariant) {
    const auto m = randomMixture(1, 5, 0.02, 0.04, 0.05);
    std::vector<double> ones(kGrid.size * kGrid.size, 1.0);
    std::mt19937_64 rng(6);
    for (int k = 0; k < 10; ++k) {
        const Pose pose  = samplePose(rng);
        const auto g     = rasterizeBackward(m, pose, kGrid, ones);
        const double sum = rasterize(m, pose, kGrid).sum();
        // dimensionless: change of total mass per sigma of displacement
        const double sigma = m[0].scales().maxCoeff();
        for (int a = 0; a < 3; ++a) {
            EXPECT_LE(std::abs(g[0][a]) * sigma / sum, 1e-6);
        }
    }
}

TEST(RasterizeBackward, DeterministicAcrossThreadCounts) {
    const auto m    = randomMixture(300, 12, 0.01, 0.05, 0.3);
    std::mt19937_64 rng(13);
    const Pose pose = samplePose(rng);
    const auto w    = oracle::randomImage(kGrid.size, 14);
    const auto ref  = rasterizeBackward(m, pose, kGrid, w);
    EXPECT_EQ(rasterizeBackward(m, pose, kGrid, w, RasterSettings{8}), ref);
#ifdef _OPENMP
    const int before = omp_get_max_threads();
    omp_set_num_threads(3);
    EXPECT_EQ(rasterizeBackward(m, pose, kGrid, w), ref);
    omp_set_num_threads(before);
#endif
}
