#pragma once

#include "condiff/model.hpp"
#include "condiff/point.hpp"

namespace condiff {

// Cell-centered grid on the box with a ghost layer encoding u = 0 on the
// boundary (per-axis mirror u_ghost = -u_inner, so every face value on the
// boundary is exactly zero).
struct Grid {
    int dim = 1;
    int cells_per_axis = 4; // J
    std::array<double, 2> h = {0.0, 0.0};
    std::array<double, 2> length = {1.0, 1.0};

    long total() const {
        return dim == 1 ? cells_per_axis : static_cast<long>(cells_per_axis) * cells_per_axis;
    }
    double cell_volume() const { return dim == 1 ? h[0] : h[0] * h[1]; }
    long index(int i, int j = 0) const { return i + static_cast<long>(cells_per_axis) * j; }
    Point center(long idx) const {
        int J = cells_per_axis;
        int i = static_cast<int>(idx % J);
        int j = static_cast<int>(idx / J);
        return {(i + 0.5) * h[0], dim == 2 ? (j + 0.5) * h[1] : 0.0};
    }
};

Grid make_grid(const Box& box, int cells_per_axis);

// Field with per-axis mirrored ghost access.
struct GhostView {
    const Grid& grid;
    const std::vector<double>& u;
    // value at logical cell (i, j); indices may be -1 or J (ghost layer)
    double at(int i, int j = 0) const {
        int J = grid.cells_per_axis;
        double s = 1.0;
        if (i < 0) {
            i = -1 - i;
            s = -s;
        } else if (i >= J) {
            i = 2 * J - 1 - i;
            s = -s;
        }
        if (j < 0) {
            j = -1 - j;
            s = -s;
        } else if (j >= J) {
            j = 2 * J - 1 - j;
            s = -s;
        }
        return s * u[grid.index(i, j)];
    }
};

} // namespace condiff
