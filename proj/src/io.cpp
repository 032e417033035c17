// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "emsplat/io.hpp"

#include "emsplat/errors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace emsplat::io {

namespace {

constexpr std::size_t kMrcHeaderBytes = 1024;

std::ofstream
openOut(const fs::path &path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot open '" + path.string() + "' for writing");
    }
    return out;
}

std::ifstream
openIn(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open '" + path.string() + "'");
    }
    return in;
}

void
put32(unsigned char *dst, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) {
        dst[b] = static_cast<unsigned char>(v >> (8 * b));
    }
}

std::uint32_t
get32(const unsigned char *src) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) {
        v |= static_cast<std::uint32_t>(src[b]) << (8 * b);
    }
    return v;
}

void
putInt(unsigned char *h, int word, std::int32_t v) {
    put32(h + 4 * word, static_cast<std::uint32_t>(v));
}

void
putFloat(unsigned char *h, int word, float v) {
    put32(h + 4 * word, std::bit_cast<std::uint32_t>(v));
}

std::int32_t
getInt(const unsigned char *h, int word) {
    return static_cast<std::int32_t>(get32(h + 4 * word));
}

float
getFloat(const unsigned char *h, int word) {
    return std::bit_cast<float>(get32(h + 4 * word));
}

void
writeU64(std::ostream &out, std::uint64_t v) {
    unsigned char buf[8];
    for (int b = 0; b < 8; ++b) {
        buf[b] = static_cast<unsigned char>(v >> (8 * b));
    }
    out.write(reinterpret_cast<const char *>(buf), 8);
}

std::uint64_t
readU64(std::istream &in) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char *>(buf), 8)) {
        throw FormatError("checkpoint is truncated");
    }
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) {
        v |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
    }
    return v;
}

std::string
fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void
writeMrc(const fs::path &path, const MrcFile &file) {
    const auto &h = file.header;
    const std::size_t count =
        static_cast<std::size_t>(h.nx) * static_cast<std::size_t>(h.ny) * static_cast<std::size_t>(h.nz);
    if (h.nx < 1 || h.ny < 1 || h.nz < 1 || count != file.data.size()) {
        throw FormatError("MRC payload does not match header dimensions");
    }
    if (h.mode != 2) {
        throw FormatError("only MRC mode 2 (float32) is written");
    }

    float dmin = 0.0f, dmax = 0.0f;
    double dsum = 0.0, dsq = 0.0;
    if (!file.data.empty()) {
        dmin = dmax = file.data.front();
    }
    for (float v : file.data) {
        dmin = std::min(dmin, v);
        dmax = std::max(dmax, v);
        dsum += v;
        dsq += static_cast<double>(v) * v;
    }
    const double mean = dsum / static_cast<double>(count);
    const double rms  = std::sqrt(std::max(0.0, dsq / static_cast<double>(count) - mean * mean));

    std::array<unsigned char, kMrcHeaderBytes> hdr{};
    const int mz = h.spaceGroup == 0 ? 1 : h.nz;
    putInt(hdr.data(), 0, h.nx);
    putInt(hdr.data(), 1, h.ny);
    putInt(hdr.data(), 2, h.nz);
    putInt(hdr.data(), 3, 2);
    putInt(hdr.data(), 7, h.nx); // mx
    putInt(hdr.data(), 8, h.ny); // my
    putInt(hdr.data(), 9, mz);   // mz
    putFloat(hdr.data(), 10, static_cast<float>(h.pixelSize * h.nx));
    putFloat(hdr.data(), 11, static_cast<float>(h.pixelSize * h.ny));
    putFloat(hdr.data(), 12, static_cast<float>(h.pixelSize * mz));
    putFloat(hdr.data(), 13, 90.0f);
    putFloat(hdr.data(), 14, 90.0f);
    putFloat(hdr.data(), 15, 90.0f);
    putInt(hdr.data(), 16, 1);
    putInt(hdr.data(), 17, 2);
    putInt(hdr.data(), 18, 3);
    putFloat(hdr.data(), 19, dmin);
    putFloat(hdr.data(), 20, dmax);
    putFloat(hdr.data(), 21, static_cast<float>(mean));
    putInt(hdr.data(), 22, h.spaceGroup);
    putInt(hdr.data(), 23, 0); // nsymbt
    putInt(hdr.data(), 27, 20140); // nversion
    std::memcpy(hdr.data() + 208, "MAP ", 4);
    hdr[212] = 0x44;
    hdr[213] = 0x44;
    putFloat(hdr.data(), 54, static_cast<float>(rms));
    putInt(hdr.data(), 55, 1); // nlabl
    const char label[] = "emsplat";
    std::memcpy(hdr.data() + 224, label, sizeof(label) - 1);

    auto out = openOut(path);
    out.write(reinterpret_cast<const char *>(hdr.data()), hdr.size());
    std::vector<unsigned char> payload(count * 4);
    for (std::size_t i = 0; i < count; ++i) {
        put32(payload.data() + 4 * i, std::bit_cast<std::uint32_t>(file.data[i]));
    }
    out.write(reinterpret_cast<const char *>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!out) {
        throw FormatError("failed writing '" + path.string() + "'");
    }
}

MrcFile
readMrc(const fs::path &path) {
    auto in = openIn(path);
    std::array<unsigned char, kMrcHeaderBytes> hdr{};
    if (!in.read(reinterpret_cast<char *>(hdr.data()), hdr.size())) {
        throw FormatError("'" + path.string() + "' is truncated (header shorter than 1024 bytes)");
    }
    MrcFile file;
    auto &h = file.header;
    h.nx    = getInt(hdr.data(), 0);
    h.ny    = getInt(hdr.data(), 1);
    h.nz    = getInt(hdr.data(), 2);
    h.mode  = getInt(hdr.data(), 3);
    if (h.mode != 2) {
        throw FormatError("unsupported MRC mode " + std::to_string(h.mode) + " in '" + path.string() +
                          "' (only mode 2, float32, is supported)");
    }
    if (h.nx < 1 || h.ny < 1 || h.nz < 1) {
        throw FormatError("MRC header has non-positive dimensions");
    }
    if (h.nx != h.ny) {
        throw FormatError("MRC dimension mismatch: nx = " + std::to_string(h.nx) +
                          ", ny = " + std::to_string(h.ny));
    }
    h.spaceGroup   = getInt(hdr.data(), 22);
    const int mx   = getInt(hdr.data(), 7);
    const float cx = getFloat(hdr.data(), 10);
    h.pixelSize    = mx > 0 && cx > 0.0f ? static_cast<double>(cx) / mx : 1.0;
    const int nsymbt = getInt(hdr.data(), 23);
    if (nsymbt < 0) {
        throw FormatError("MRC header has a negative extended-header size");
    }
    in.seekg(static_cast<std::streamoff>(kMrcHeaderBytes) + nsymbt);

    const std::size_t count =
        static_cast<std::size_t>(h.nx) * static_cast<std::size_t>(h.ny) * static_cast<std::size_t>(h.nz);
    std::vector<unsigned char> payload(count * 4);
    if (!in.read(reinterpret_cast<char *>(payload.data()), static_cast<std::streamsize>(payload.size()))) {
        throw FormatError("'" + path.string() + "' is truncated (payload shorter than header implies)");
    }
    file.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        file.data[i] = std::bit_cast<float>(get32(payload.data() + 4 * i));
    }
    return file;
}

void
writeVolume(const fs::path &path, const VoxelVolume &volume) {
    MrcFile f;
    f.header.nx = f.header.ny = f.header.nz = volume.size();
    f.header.spaceGroup = 1;
    f.header.pixelSize  = volume.grid.pixelSize;
    f.data.assign(volume.voxels.begin(), volume.voxels.end());
    writeMrc(path, f);
}

VoxelVolume
readVolume(const fs::path &path, double extent) {
    const MrcFile f = readMrc(path);
    if (f.header.nz != f.header.nx) {
        throw FormatError("'" + path.string() + "' is not a cubic volume");
    }
    GridSpec grid{f.header.nx, extent, f.header.pixelSize};
    VoxelVolume v(grid);
    v.voxels.assign(f.data.begin(), f.data.end());
    return v;
}

void
writeStack(const fs::path &path, const Dataset &dataset) {
    MrcFile f;
    f.header.nx = f.header.ny = dataset.grid.size;
    f.header.nz         = static_cast<int>(dataset.records.size());
    f.header.spaceGroup = 0;
    f.header.pixelSize  = dataset.grid.pixelSize;
    f.data.reserve(static_cast<std::size_t>(f.header.nx) * f.header.ny * f.header.nz);
    for (const auto &rec : dataset.records) {
        if (rec.image.size() != static_cast<std::size_t>(dataset.grid.size) * dataset.grid.size) {
            throw ShapeMismatch("stack image does not match the dataset grid");
        }
        for (double v : rec.image) {
            f.data.push_back(static_cast<float>(v));
        }
    }
    writeMrc(path, f);
}

void
writeCheckpoint(const fs::path &path, const GaussianMixture &mixture) {
    auto out = openOut(path);
    out.write("CGS1", 4);
    writeU64(out, mixture.size());
    const char mode = static_cast<char>(mixture.mode());
    out.write(&mode, 1);
    for (const auto &p : mixture.params()) {
        for (double v : p.toBlock()) {
            writeU64(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    if (!out) {
        throw FormatError("failed writing checkpoint '" + path.string() + "'");
    }
}

GaussianMixture
readCheckpoint(const fs::path &path) {
    auto in = openIn(path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "CGS1", 4) != 0) {
        throw FormatError("'" + path.string() + "' is not a mixture checkpoint (bad magic)");
    }
    const std::uint64_t count = readU64(in);
    char mode                 = 0;
    if (!in.read(&mode, 1)) {
        throw FormatError("checkpoint is truncated");
    }
    if (mode != 0 && mode != 1) {
        throw FormatError("checkpoint has unknown mode " + std::to_string(int(mode)));
    }
    const auto size = fs::file_size(path);
    if (size != 13 + count * kParamsPerGaussian * 8) {
        throw FormatError("checkpoint size does not match its Gaussian count");
    }
    std::vector<GaussianParams> params(count);
    for (auto &p : params) {
        ParamBlock block;
        for (auto &v : block) {
            v = std::bit_cast<double>(readU64(in));
        }
        p = GaussianParams::fromBlock(block);
    }
    return GaussianMixture(std::move(params), static_cast<GaussianMode>(mode));
}

void
writeMetadata(const fs::path &path, const Dataset &dataset) {
    auto out = openOut(path);
    out << "# index qw qx qy qz tx_px ty_px defocus_u defocus_v astig_angle voltage cs amp_contrast "
           "phase_shift b_factor\n";
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        const auto &r = dataset.records[i];
        const auto &q = r.pose.quaternion;
        const auto &c = r.ctf;
        out << i;
        for (double v : {q[0], q[1], q[2], q[3], r.translation.x(), r.translation.y(), c.defocusU, c.defocusV,
                         c.astigmatismAngle, c.voltage, c.sphericalAberration, c.amplitudeContrast,
                         c.phaseShift, c.bFactor}) {
            out << ' ' << fmt17(v);
        }
        out << '\n';
    }
}

std::vector<MetaRow>
readMetadata(const fs::path &path) {
    auto in = openIn(path);
    std::vector<MetaRow> rows;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        std::istringstream ss(line);
        std::vector<std::string> tok;
        for (std::string t; ss >> t;) {
            tok.push_back(t);
        }
        if (tok.size() != 15 && tok.size() != 20) {
            throw FormatError("metadata line " + std::to_string(lineNo) + ": expected 15 or 20 columns, got " +
                              std::to_string(tok.size()));
        }
        std::vector<double> v;
        try {
            for (std::size_t k = 1; k < tok.size(); ++k) {
                v.push_back(std::stod(tok[k]));
            }
        } catch (const std::exception &) {
            throw FormatError("metadata line " + std::to_string(lineNo) + ": malformed number");
        }
        MetaRow row;
        row.index       = std::stoul(tok[0]);
        std::size_t off = 0;
        if (tok.size() == 15) {
            row.pose = Pose::fromQuaternion(Vec4(v[0], v[1], v[2], v[3]));
            off      = 4;
        } else {
            Mat3 w;
            w << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
            row.pose = Pose::fromRotation(w);
            off      = 9;
        }
        row.translation           = Vec2(v[off], v[off + 1]);
        row.ctf.defocusU          = v[off + 2];
        row.ctf.defocusV          = v[off + 3];
        row.ctf.astigmatismAngle  = v[off + 4];
        row.ctf.voltage           = v[off + 5];
        row.ctf.sphericalAberration = v[off + 6];
        row.ctf.amplitudeContrast = v[off + 7];
        row.ctf.phaseShift        = v[off + 8];
        row.ctf.bFactor           = v[off + 9];
        try {
            row.pose.validate();
            row.ctf.validate();
        } catch (const Error &e) {
            throw FormatError("metadata line " + std::to_string(lineNo) + ": " + e.what());
        }
        rows.push_back(row);
    }
    return rows;
}

Dataset
loadDataset(const fs::path &stackPath, const fs::path &metaPath, double extent) {
    const auto rows = readMetadata(metaPath);
    MrcFile stack   = readMrc(stackPath);
    if (static_cast<std::size_t>(stack.header.nz) != rows.size()) {
        throw FormatError("stack holds " + std::to_string(stack.header.nz) + " images but metadata has " +
                          std::to_string(rows.size()) + " rows");
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].index != i) {
            throw FormatError("metadata rows must be indexed 0..N-1 in order (row " + std::to_string(i) +
                              " has index " + std::to_string(rows[i].index) + ")");
        }
    }
    Dataset ds;
    ds.grid = GridSpec{stack.header.nx, extent, stack.header.pixelSize};
    const std::size_t npix = static_cast<std::size_t>(stack.header.nx) * stack.header.ny;
    ds.records.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto &rec       = ds.records[i];
        rec.pose        = rows[i].pose;
        rec.translation = rows[i].translation;
        rec.ctf         = rows[i].ctf;
        rec.image.assign(stack.data.begin() + static_cast<long>(i * npix),
                         stack.data.begin() + static_cast<long>((i + 1) * npix));
    }
    return ds;
}

void
writeLossTrace(const fs::path &path, const std::vector<LossRecord> &trace) {
    auto out = openOut(path);
    for (const auto &r : trace) {
        out << r.epoch << ' ' << r.step << ' ' << fmt17(r.loss) << ' ' << fmt17(r.learningRate) << '\n';
    }
}

std::vector<LossRecord>
readLossTrace(const fs::path &path) {
    auto in = openIn(path);
    std::vector<LossRecord> trace;
    LossRecord r;
    while (in >> r.epoch >> r.step >> r.loss >> r.learningRate) {
        trace.push_back(r);
    }
    return trace;
}

std::string
formatFscTable(const FscCurve &curve) {
    std::ostringstream out;
    out << "# shell_index spatial_freq_per_A correlation\n";
    for (const auto &s : curve.shells) {
        out << s.radius << ' ' << fmt17(s.frequency) << ' ' << fmt17(s.correlation) << '\n';
    }
    auto line = [&](const char *name, const std::optional<double> &res) {
        out << "# resolution@" << name << ' ';
        if (res) {
            out << std::fixed << std::setprecision(3) << *res << " A\n";
            out.unsetf(std::ios::fixed);
        } else {
            double lo = 1.0;
            for (const auto &s : curve.shells) {
                lo = std::min(lo, s.correlation);
            }
            char buf[64];
            std::snprintf(buf, sizeof buf, "Nyquist (threshold never crossed; min FSC=%.4f)\n", lo);
            out << buf;
        }
    };
    line("0.5", curve.resolution05());
    line("0.143", curve.resolution0143());
    return out.str();
}

void
writeFscTable(const fs::path &path, const FscCurve &curve) {
    auto out = openOut(path);
    out << formatFscTable(curve);
}

} // namespace emsplat::io
