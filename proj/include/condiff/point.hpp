#pragma once

#include <array>
#include <functional>

namespace condiff {

// Spatial points/vectors in d <= 2 dimensions.  The second component is
// ignored (kept at zero) for d == 1 so that coefficient callables have a
// single signature across dimensions.
using Point = std::array<double, 2>;
using Vec = std::array<double, 2>;
using Mat = std::array<std::array<double, 2>, 2>;  // [i][j]

using ScalarField = std::function<double(const Point&, double)>;  // (x, r)
using VectorField = std::function<Vec(const Point&, double)>;
using MatrixField = std::function<Mat(const Point&, double)>;

inline Vec zero_vec() { return {0.0, 0.0}; }
inline Mat zero_mat() { return {{{0.0, 0.0}, {0.0, 0.0}}}; }

} // namespace condiff
