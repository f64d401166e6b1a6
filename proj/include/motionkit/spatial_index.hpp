#pragma once

#include "motionkit/geometry_types.hpp"

#include <cstdint>
#include <vector>

namespace motionkit {

struct Neighbor {
    int index = -1;
    double sq_distance = 0.0;
};

/// Exact nearest-neighbour index over a fixed point set.
///
/// Queries return the same squared distance as exhaustive search, and on ties
/// the lowest point index. Below `kBruteForceThreshold` points the tree is not
/// built and queries scan linearly.
class KdTree {
public:
    static constexpr size_t kBruteForceThreshold = 24;

    KdTree() = default;
    explicit KdTree(std::vector<Vec3> points);

    Neighbor nearest(const Vec3& query) const;
    size_t size() const { return points_.size(); }
    const std::vector<Vec3>& points() const { return points_; }

private:
    struct Node {
        int begin = 0;  // range into order_
        int end = 0;
        int left = -1;
        int right = -1;
        int axis = -1;  // -1 for leaves
        double split = 0.0;
    };

    int build(int begin, int end, int depth);
    void search(int node, const Vec3& q, Neighbor& best) const;

    std::vector<Vec3> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

struct ClosestTriangle {
    int triangle = -1;
    Vec3 point = Vec3::Zero();
    double sq_distance = 0.0;
};

/// Closest point on triangle (a, b, c) to p (Voronoi-region walk).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// AABB hierarchy over a triangle mesh for exact closest-triangle queries.
/// Ties resolve to the lowest triangle index, matching exhaustive search.
class TriangleBvh {
public:
    TriangleBvh() = default;
    explicit TriangleBvh(const TriangleMesh& mesh);

    ClosestTriangle closest(const Vec3& p) const;
    /// True if the open segment (a, b) crosses any triangle. The end caps of
    /// relative length `trim` are ignored so points resting on a surface stay unblocked.
    bool segment_blocked(const Vec3& a, const Vec3& b, double trim = 1e-6) const;
    const TriangleMesh& mesh() const { return mesh_; }

private:
    struct Node {
        Vec3 lo, hi;
        int left = -1;
        int right = -1;
        int begin = 0;
        int end = 0;
    };
    int build(int begin, int end);
    void search(int node, const Vec3& p, ClosestTriangle& best) const;
    bool blocked(int node, const Vec3& a, const Vec3& d, const Vec3& inv_d, double t0, double t1) const;

    TriangleMesh mesh_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

/// Moller-Trumbore: parameter t of the hit of o + t d with triangle (a, b, c), or a negative value.
double ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c);

/// Exhaustive closest-triangle search (lowest index on ties).
ClosestTriangle closest_triangle_exhaustive(const TriangleMesh& mesh, const Vec3& p);

}  // namespace motionkit
