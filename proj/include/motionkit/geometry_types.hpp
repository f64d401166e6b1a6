#pragma once

#include "motionkit/types.hpp"

#include <array>
#include <vector>

namespace motionkit {

using PointCloud = std::vector<Vec3>;

struct Capsule {
    Vec3 p0 = Vec3::Zero();
    Vec3 p1 = Vec3::Zero();
    double radius = 0.0;
};

/// Triangle mesh with one outward unit normal per triangle.
class TriangleMesh {
public:
    TriangleMesh() = default;

    /// Normals are derived from the winding (counter-clockwise seen from outside).
    TriangleMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles);

    /// Explicit normals; each must be unit length within 1e-9.
    TriangleMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles,
                 std::vector<Vec3> normals);

    const std::vector<Vec3>& vertices() const { return vertices_; }
    const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
    const std::vector<Vec3>& normals() const { return normals_; }
    bool empty() const { return triangles_.empty(); }

    std::array<Vec3, 3> corners(int tri) const {
        const auto& t = triangles_[static_cast<size_t>(tri)];
        return {vertices_[static_cast<size_t>(t[0])], vertices_[static_cast<size_t>(t[1])],
                vertices_[static_cast<size_t>(t[2])]};
    }

    void append(const TriangleMesh& other);

private:
    void validate_indices() const;

    std::vector<Vec3> vertices_;
    std::vector<std::array<int, 3>> triangles_;
    std::vector<Vec3> normals_;
};

/// Square ground patch in the z = height plane, normals +z.
TriangleMesh make_ground_plane(double half_extent, double height = 0.0);

/// Axis-aligned box with outward normals.
TriangleMesh make_box(const Vec3& lo, const Vec3& hi);

}  // namespace motionkit
