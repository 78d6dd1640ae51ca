#include "condiff/grid.hpp"
#include "condiff/errors.hpp"

namespace condiff {

Grid make_grid(const Box& box, int cells_per_axis) {
    if (cells_per_axis < 4) throw domain_error("grid: need at least 4 cells per axis");
    Grid g;
    g.dim = box.dim;
    g.cells_per_axis = cells_per_axis;
    g.length = box.length;
    g.h[0] = box.length[0] / cells_per_axis;
    g.h[1] = box.dim == 2 ? box.length[1] / cells_per_axis : 0.0;
    return g;
}

} // namespace condiff
