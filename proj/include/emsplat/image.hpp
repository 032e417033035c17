// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "emsplat/gmm.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace emsplat {

/// D x D real image, row-major. Row index is y, column index is x.
struct Image {
    GridSpec grid;
    std::vector<double> pixels;

    Image() = default;
    explicit Image(const GridSpec &g)
        : grid(g), pixels(static_cast<std::size_t>(g.size) * g.size, 0.0) {}
    Image(const GridSpec &g, std::vector<double> data);

    int size() const { return grid.size; }
    double &operator()(int row, int col) { return pixels[static_cast<std::size_t>(row) * grid.size + col]; }
    double operator()(int row, int col) const {
        return pixels[static_cast<std::size_t>(row) * grid.size + col];
    }

    double sum() const;
    double maxAbs() const;
    bool allFinite() const;
};

/// D x D x D real volume, index order (z, y, x) with x fastest.
struct VoxelVolume {
    GridSpec grid;
    std::vector<double> voxels;

    VoxelVolume() = default;
    explicit VoxelVolume(const GridSpec &g)
        : grid(g), voxels(static_cast<std::size_t>(g.size) * g.size * g.size, 0.0) {}

    int size() const { return grid.size; }
    std::size_t index(int z, int y, int x) const {
        return (static_cast<std::size_t>(z) * grid.size + y) * grid.size + x;
    }
    double &operator()(int z, int y, int x) { return voxels[index(z, y, x)]; }
    double operator()(int z, int y, int x) const { return voxels[index(z, y, x)]; }

    double sum() const;
};

/// Throws ShapeMismatch unless both grids have the same size.
void requireSameShape(const GridSpec &a, const GridSpec &b, const char *what);

} // namespace emsplat
