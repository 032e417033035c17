// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "emsplat/bench.hpp"
#include "emsplat/config.hpp"
#include "emsplat/errors.hpp"
#include "emsplat/io.hpp"
#include "emsplat/simulator.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <random>

using namespace emsplat;
namespace fs = std::filesystem;

namespace {

class IoTest : public ::testing::Test {
  protected:
    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("emsplat_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    fs::path dir;
};

VoxelVolume
randomVolume(int d, std::uint64_t seed, double apix = 1.0) {
    VoxelVolume v(GridSpec{d, 0.5, apix});
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n;
    for (auto &x : v.voxels) {
        x = n(rng); // float-representable by construction
    }
    return v;
}

std::vector<unsigned char>
slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void
spit(const fs::path &p, const std::vector<unsigned char> &bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::int32_t
headerWord(const std::vector<unsigned char> &b, int word) {
    std::int32_t v;
    std::memcpy(&v, b.data() + 4 * word, 4);
    return v;
}

void
setHeaderWord(std::vector<unsigned char> &b, int word, std::int32_t v) {
    std::memcpy(b.data() + 4 * word, &v, 4);
}

SimSpec
smallSpec(std::size_t count) {
    SimSpec spec;
    spec.truth            = makePhantom(PhantomKind::BlobCluster, 12, 3);
    spec.numParticles     = count;
    spec.grid             = GridSpec{16, 0.5, 2.0};
    spec.seed             = 11;
    spec.translationRange = 1.5;
    spec.noise.snr        = 1.0;
    spec.noise.seed       = 5;
    return spec;
}

} // namespace

TEST_F(IoTest, MrcVolumeRoundTripIsBitwise) {
    const auto v = randomVolume(32, 1);
    io::writeVolume(dir / "v.mrc", v);
    EXPECT_EQ(fs::file_size(dir / "v.mrc"), 1024u + 4u * 32 * 32 * 32);
    const auto back = io::readVolume(dir / "v.mrc");
    ASSERT_EQ(back.size(), 32);
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
        ASSERT_EQ(std::bit_cast<std::uint64_t>(back.voxels[i]), std::bit_cast<std::uint64_t>(v.voxels[i]));
    }
}

TEST_F(IoTest, MrcHeaderLayout) {
    io::writeVolume(dir / "v.mrc", randomVolume(8, 2, 1.34));
    const auto b = slurp(dir / "v.mrc");
    EXPECT_EQ(headerWord(b, 0), 8);
    EXPECT_EQ(headerWord(b, 3), 2);
    EXPECT_EQ(headerWord(b, 22), 1);
    EXPECT_EQ(std::string(reinterpret_cast<const char *>(b.data()) + 208, 4), "MAP ");
    EXPECT_EQ(b[212], 0x44);
}

TEST_F(IoTest, PixelSizeRoundTripsAtFloatPrecision) {
    io::writeVolume(dir / "v.mrc", randomVolume(8, 2, 1.34));
    const auto h = io::readMrc(dir / "v.mrc").header;
    // cell length / mx is what readers recover
    EXPECT_EQ(static_cast<float>(h.pixelSize), static_cast<float>(static_cast<float>(1.34 * 8) / 8.0));
    EXPECT_NEAR(h.pixelSize, 1.34, 1e-6);
    EXPECT_EQ(io::readVolume(dir / "v.mrc").grid.pixelSize, h.pixelSize);
}

TEST_F(IoTest, UnsupportedModeNamesTheMode) {
    io::writeVolume(dir / "v.mrc", randomVolume(8, 3));
    auto b = slurp(dir / "v.mrc");
    setHeaderWord(b, 3, 1);
    spit(dir / "int16.mrc", b);
    try {
        io::readMrc(dir / "int16.mrc");
        FAIL() << "expected FormatError";
    } catch (const FormatError &e) {
        EXPECT_NE(std::string(e.what()).find("mode 1"), std::string::npos) << e.what();
        EXPECT_EQ(e.kind(), ErrorKind::Data);
    }
}

TEST_F(IoTest, TruncatedAndInconsistentFilesRejected) {
    io::writeVolume(dir / "v.mrc", randomVolume(8, 4));
    auto b = slurp(dir / "v.mrc");

    auto shortPayload = b;
    shortPayload.resize(b.size() - 4);
    spit(dir / "short.mrc", shortPayload);
    EXPECT_THROW(io::readMrc(dir / "short.mrc"), FormatError);

    auto shortHeader = b;
    shortHeader.resize(500);
    spit(dir / "hdr.mrc", shortHeader);
    EXPECT_THROW(io::readMrc(dir / "hdr.mrc"), FormatError);

    auto rect = b;
    setHeaderWord(rect, 1, 4);
    setHeaderWord(rect, 2, 16);
    spit(dir / "rect.mrc", rect);
    EXPECT_THROW(io::readMrc(dir / "rect.mrc"), FormatError);

    auto stackLike = b;
    setHeaderWord(stackLike, 1, 8);
    setHeaderWord(stackLike, 2, 4);
    stackLike.resize(1024 + 4 * 8 * 8 * 4);
    spit(dir / "stack.mrc", stackLike);
    EXPECT_NO_THROW(io::readMrc(dir / "stack.mrc"));
    EXPECT_THROW(io::readVolume(dir / "stack.mrc"), FormatError);

    EXPECT_THROW(io::readMrc(dir / "missing.mrc"), FormatError);
}

TEST_F(IoTest, WriteRejectsInconsistentPayload) {
    io::MrcFile f;
    f.header.nx = f.header.ny = f.header.nz = 4;
    f.data.resize(63);
    EXPECT_THROW(io::writeMrc(dir / "bad.mrc", f), FormatError);
}

TEST_F(IoTest, CheckpointRoundTripAndSize) {
    const GridSpec grid{64, 0.5, 1.0};
    for (auto mode : {GaussianMode::Anisotropic, GaussianMode::Isotropic}) {
        const auto m = initRandom(257, 9, grid, InitOptions{mode});
        io::writeCheckpoint(dir / "m.cgs", m);
        EXPECT_EQ(fs::file_size(dir / "m.cgs"), 13u + 88u * 257);
        EXPECT_EQ((fs::file_size(dir / "m.cgs") - 13) / 8, paramCount(m));
        const auto back = io::readCheckpoint(dir / "m.cgs");
        EXPECT_EQ(back.mode(), mode);
        ASSERT_EQ(back.size(), m.size());
        for (std::size_t i = 0; i < m.size(); ++i) {
            const auto a = m[i].toBlock();
            const auto b = back[i].toBlock();
            for (std::size_t k = 0; k < kParamsPerGaussian; ++k) {
                ASSERT_EQ(std::bit_cast<std::uint64_t>(a[k]), std::bit_cast<std::uint64_t>(b[k]));
            }
        }
    }
}

TEST_F(IoTest, CheckpointErrors) {
    io::writeCheckpoint(dir / "m.cgs", initRandom(4, 1, GridSpec{32, 0.5, 1.0}));
    auto b = slurp(dir / "m.cgs");

    auto truncated = b;
    truncated.pop_back();
    spit(dir / "t.cgs", truncated);
    EXPECT_THROW(io::readCheckpoint(dir / "t.cgs"), FormatError);

    auto magic = b;
    magic[0]   = 'X';
    spit(dir / "x.cgs", magic);
    EXPECT_THROW(io::readCheckpoint(dir / "x.cgs"), FormatError);

    auto mode = b;
    mode[12]  = 7;
    spit(dir / "mode.cgs", mode);
    EXPECT_THROW(io::readCheckpoint(dir / "mode.cgs"), FormatError);
}

TEST_F(IoTest, SimulateThenLoadIsIdentical) {
    auto spec = smallSpec(7);
    CtfParams astig;
    astig.defocusU         = 14000.123456789;
    astig.defocusV         = 12000.5;
    astig.astigmatismAngle = 0.3;
    astig.phaseShift       = 0.1;
    astig.bFactor          = 35.0;
    spec.ctf.list          = {astig, CtfParams{}};
    const auto sim         = simulate(spec);
    io::writeStack(dir / "p.mrcs", sim.dataset);
    io::writeMetadata(dir / "p.meta", sim.dataset);

    const auto ds = io::loadDataset(dir / "p.mrcs", dir / "p.meta");
    EXPECT_EQ(ds.grid.size, 16);
    EXPECT_NEAR(ds.grid.pixelSize, 2.0, 1e-6);
    ASSERT_EQ(ds.records.size(), 7u);
    for (std::size_t i = 0; i < 7; ++i) {
        const auto &a = sim.dataset.records[i];
        const auto &b = ds.records[i];
        EXPECT_EQ(a.pose.rotation, b.pose.rotation);
        EXPECT_EQ(a.pose.quaternion, b.pose.quaternion);
        EXPECT_EQ(a.translation, b.translation);
        EXPECT_EQ(a.ctf, b.ctf);
        EXPECT_EQ(a.image, b.image); // simulator output is already float-rounded
    }
}

TEST_F(IoTest, MetadataAcceptsRotationMatrixRows) {
    std::ofstream(dir / "m.meta") << "# matrix form\n"
                                     "0 0 -1 0 1 0 0 0 0 1 0.5 -0.25 15000 15000 0 300 2.7 0.1 0 0\n";
    const auto rows = io::readMetadata(dir / "m.meta");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].pose.rotation(0, 1), -1.0);
    EXPECT_EQ(rows[0].translation, Vec2(0.5, -0.25));
    EXPECT_EQ(rows[0].ctf.sphericalAberration, 2.7);
}

TEST_F(IoTest, MetadataErrors) {
    std::ofstream(dir / "cols.meta") << "0 1 0 0 0 0 0\n";
    EXPECT_THROW(io::readMetadata(dir / "cols.meta"), FormatError);
    std::ofstream(dir / "nan.meta") << "0 1 0 0 0 0 0 15000 15000 0 300 2.7 0.1 0 zz\n";
    EXPECT_THROW(io::readMetadata(dir / "nan.meta"), FormatError);
    std::ofstream(dir / "rot.meta") << "0 1 0 0 0 0 0 0 0 1 0 0 15000 15000 0 300 2.7 0.1 0 0\n";
    EXPECT_THROW(io::readMetadata(dir / "rot.meta"), FormatError);
    std::ofstream(dir / "ctf.meta") << "0 1 0 0 0 0 0 15000 15000 0 0 2.7 0.1 0 0\n";
    EXPECT_THROW(io::readMetadata(dir / "ctf.meta"), FormatError);
}

TEST_F(IoTest, CountMismatchRejected) {
    const auto sim = simulate(smallSpec(6));
    io::writeStack(dir / "p.mrcs", sim.dataset);
    Dataset fewer = sim.dataset;
    fewer.records.pop_back();
    io::writeMetadata(dir / "p.meta", fewer);
    try {
        io::loadDataset(dir / "p.mrcs", dir / "p.meta");
        FAIL() << "expected FormatError";
    } catch (const FormatError &e) {
        EXPECT_NE(std::string(e.what()).find("6 images"), std::string::npos) << e.what();
    }

    io::writeMetadata(dir / "p.meta", sim.dataset);
    std::string text;
    {
        std::ifstream in(dir / "p.meta");
        text.assign(std::istreambuf_iterator<char>(in), {});
    }
    const auto pos = text.find("\n2 ");
    ASSERT_NE(pos, std::string::npos);
    text[pos + 1] = '3';
    std::ofstream(dir / "p.meta") << text;
    EXPECT_THROW(io::loadDataset(dir / "p.mrcs", dir / "p.meta"), FormatError);
}

TEST_F(IoTest, LossTraceRoundTrip) {
    std::vector<LossRecord> trace{{0, 0, 0.1234567890123456789, 1e-3}, {1, 1, 3.5e-7, 1e-4}, {4, 2, 0.0, 1e-7}};
    io::writeLossTrace(dir / "loss.txt", trace);
    std::ifstream in(dir / "loss.txt");
    std::string first;
    std::getline(in, first);
    EXPECT_EQ(first, "0 0 0.12345678901234568 0.001");
    const auto back = io::readLossTrace(dir / "loss.txt");
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back[i].epoch, trace[i].epoch);
        EXPECT_EQ(back[i].step, trace[i].step);
        EXPECT_EQ(back[i].loss, trace[i].loss);
        EXPECT_EQ(back[i].learningRate, trace[i].learningRate);
    }
}

TEST(FscTable, FormatsRowsAndResolutions) {
    FscCurve c;
    c.boxSize   = 8;
    c.pixelSize = 2.0;
    c.shells    = {{1, 1.0 / 16, 0.9}, {2, 2.0 / 16, 0.6}, {3, 3.0 / 16, 0.4}, {4, 4.0 / 16, 0.1}};
    c.crossing05   = c.crossing(0.5);
    c.crossing0143 = c.crossing(0.143);
    const auto text = io::formatFscTable(c);
    EXPECT_NE(text.find("\n1 0.0625 0.90000000000000002\n"), std::string::npos) << text;
    // 0.5 crossed at 2.5 -> 8 * 2 / 2.5 = 6.4 A
    EXPECT_NE(text.find("# resolution@0.5 6.400 A"), std::string::npos) << text;
    EXPECT_NE(text.find("# resolution@0.143 "), std::string::npos);

    FscCurve flat = c;
    for (auto &s : flat.shells) {
        s.correlation = 1.0;
    }
    flat.crossing05   = flat.crossing(0.5);
    flat.crossing0143 = flat.crossing(0.143);
    const auto never  = io::formatFscTable(flat);
    EXPECT_NE(never.find("# resolution@0.143 Nyquist (threshold never crossed"), std::string::npos) << never;
}

TEST(Config, DefaultsRoundTripThroughJson) {
    TrainConfig t;
    t.seed = 42;
    t.mode = GaussianMode::Isotropic;
    TrainConfig back;
    fromJson(toJson(t), back);
    EXPECT_EQ(toJson(back), toJson(t));
    EXPECT_EQ(back.mode, GaussianMode::Isotropic);
    EXPECT_EQ(back.learningRate, 1e-3);

    SimConfig s;
    s.snrDb = -20.0;
    s.ctf.list.push_back(CtfParams{});
    SimConfig sback;
    fromJson(toJson(s), sback);
    EXPECT_EQ(toJson(sback), toJson(s));
    EXPECT_DOUBLE_EQ(sback.effectiveSnr(), 0.01);
}

TEST(Config, UnknownAndMistypedKeysRejected) {
    TrainConfig t;
    EXPECT_THROW(fromJson(nlohmann::json{{"learning_rat", 0.1}}, t), InvalidArgument);
    EXPECT_THROW(fromJson(nlohmann::json{{"epochs", "five"}}, t), InvalidArgument);
    EXPECT_THROW(fromJson(nlohmann::json{{"mode", "cubic"}}, t), InvalidArgument);
    SimConfig s;
    EXPECT_THROW(fromJson(nlohmann::json{{"grid", {{"sise", 64}}}}, s), InvalidArgument);
    EXPECT_THROW(fromJson(nlohmann::json{{"snr", -1.0}}, s), InvalidArgument);
}

TEST(ParamCount, ElevenPerGaussian) {
    const GridSpec grid{32, 0.5, 1.0};
    EXPECT_EQ(paramCount(initRandom(1, 0, grid)), 11u);
    EXPECT_EQ(paramCount(initRandom(30000, 0, grid)), 330000u);
}

TEST(Bench, SmallRunReportsEveryCell) {
    BenchOptions opt;
    opt.gaussianCounts = {64, 256};
    opt.sizes          = {32, 48};
    opt.repeats        = 3;
    opt.threads        = 1;
    const auto report  = runBench(opt);
    EXPECT_EQ(report.threads, 1);
    ASSERT_EQ(report.rows.size(), 4u);
    for (const auto &r : report.rows) {
        EXPECT_GT(r.medianSeconds, 0.0);
        EXPECT_NEAR(r.fps * r.medianSeconds, 1.0, 1e-12);
    }
    EXPECT_EQ(report.rows[2].size, 48);
    EXPECT_EQ(report.rows[3].gaussians, 256u);
    const auto table = formatBenchTable(report);
    EXPECT_NE(table.find("# threads 1"), std::string::npos);
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 6);

    opt.repeats = 0;
    EXPECT_THROW(runBench(opt), InvalidArgument);
}
