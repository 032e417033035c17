// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "emsplat/image.hpp"

#include "emsplat/errors.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace emsplat {

Image::Image(const GridSpec &g, std::vector<double> data) : grid(g), pixels(std::move(data)) {
    if (pixels.size() != static_cast<std::size_t>(g.size) * g.size) {
        throw ShapeMismatch("image payload has " + std::to_string(pixels.size()) +
                            " samples, expected " + std::to_string(g.size * g.size));
    }
}

double
Image::sum() const {
    return std::accumulate(pixels.begin(), pixels.end(), 0.0);
}

double
Image::maxAbs() const {
    double m = 0.0;
    for (double v : pixels) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

bool
Image::allFinite() const {
    for (double v : pixels) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

double
VoxelVolume::sum() const {
    return std::accumulate(voxels.begin(), voxels.end(), 0.0);
}

void
requireSameShape(const GridSpec &a, const GridSpec &b, const char *what) {
    if (a.size != b.size) {
        throw ShapeMismatch(std::string(what) + ": grid size mismatch (" + std::to_string(a.size) +
                            " vs " + std::to_string(b.size) + ")");
    }
}

} // namespace emsplat
