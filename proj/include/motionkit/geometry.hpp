#pragma once

#include "motionkit/convex_hull.hpp"
#include "motionkit/geometry_types.hpp"
#include "motionkit/spatial_index.hpp"

#include <span>
#include <vector>

namespace motionkit {

/// Two-sided mean of squared nearest-neighbour distances, in m^2.
/// Throws ValidationError if either cloud is empty.
double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b, Exec exec = Exec::parallel);

/// Same, reusing prebuilt indices over `a` and `b`.
double chamfer_distance(const KdTree& a, const KdTree& b, Exec exec = Exec::parallel);

inline constexpr double kDefaultHprGamma = 2.0;

/// Katz spherical-flipping visibility: indices of points visible from `viewpoint`.
/// Throws ValidationError on an empty cloud or a point coincident with the viewpoint.
std::vector<int> hidden_point_removal(std::span<const Vec3> cloud, const Vec3& viewpoint,
                                      double gamma = kDefaultHprGamma);

/// Hidden point removal, then drop points whose line of sight crosses the scene.
std::vector<int> visible_points(std::span<const Vec3> cloud, const Vec3& viewpoint, const TriangleBvh& scene,
                                double gamma = kDefaultHprGamma);

/// Per-point depth below the closest scene triangle, >= 0.
std::vector<double> penetration_depths(std::span<const Vec3> points, const TriangleMesh& scene,
                                       Exec exec = Exec::parallel);
std::vector<double> penetration_depths(std::span<const Vec3> points, const TriangleBvh& scene,
                                       Exec exec = Exec::parallel);

/// Closest points between segments [p0,p1] and [q0,q1].
struct SegmentClosest {
    double s = 0.0;  // parameter on the first segment
    double t = 0.0;  // parameter on the second segment
    double distance = 0.0;
};
SegmentClosest segment_segment_closest(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1);

/// max(0, ra + rb - segment distance).
double capsule_overlap(const Capsule& a, const Capsule& b);

struct Similarity {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    double residual = 0.0;  // sum of squared alignment errors

    Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
};

/// Least-squares similarity mapping x onto y (Umeyama), det(R) = +1.
/// Throws ValidationError for K < 3, mismatched sizes or coincident x.
Similarity procrustes_align(std::span<const Vec3> x, std::span<const Vec3> y);

}  // namespace motionkit
