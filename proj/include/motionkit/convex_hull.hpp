#pragma once

#include "motionkit/types.hpp"

#include <array>
#include <span>
#include <vector>

namespace motionkit {

struct ConvexHull {
    std::vector<int> vertices;               // sorted indices into the input
    std::vector<std::array<int, 3>> faces;   // outward counter-clockwise triangles (3D only)
    int dimension = 3;                       // 0 point, 1 segment, 2 polygon, 3 solid

    bool degenerate() const { return dimension < 3; }
};

/// Incremental (quickhull-style) 3D convex hull.
///
/// Points closer than `tolerance` to a face plane count as inside. Ties in the
/// choice of extreme or farthest points resolve to the lowest input index, so
/// the result is a deterministic function of the input order. Collinear or
/// coplanar inputs return the hull in the reduced dimension, flagged through
/// `dimension`. Throws ValidationError on empty input.
ConvexHull convex_hull_3d(std::span<const Vec3> points, double tolerance = 1e-9);

}  // namespace motionkit
