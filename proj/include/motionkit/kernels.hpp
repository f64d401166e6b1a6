#pragma once

// Data-parallel inner loops. Each kernel has a serial reference version and an
// OpenMP version with identical per-index arithmetic, so the two agree bit for
// bit; tests compare them and bench/ times them against each other.

#include "motionkit/body_model.hpp"
#include "motionkit/spatial_index.hpp"

#include <span>
#include <vector>

namespace motionkit::kernels {

namespace serial {

void skin(const SkinnedBody& body, const std::array<JointTransform, kJointCount>& transforms,
          std::span<const Vec3> rest_vertices, std::span<Vec3> out);

/// Squared distance from each query to its nearest point in `index`.
void nearest_sq_distances(const KdTree& index, std::span<const Vec3> queries, std::span<double> out);

/// max(0, -(p - c) . n) against the closest triangle of `bvh`.
void penetration_depths(const TriangleBvh& bvh, std::span<const Vec3> points, std::span<double> out);

}  // namespace serial

namespace omp {

void skin(const SkinnedBody& body, const std::array<JointTransform, kJointCount>& transforms,
          std::span<const Vec3> rest_vertices, std::span<Vec3> out);
void nearest_sq_distances(const KdTree& index, std::span<const Vec3> queries, std::span<double> out);
void penetration_depths(const TriangleBvh& bvh, std::span<const Vec3> points, std::span<double> out);

}  // namespace omp

/// Depth of one point below the surface of its closest triangle.
double penetration_depth(const TriangleBvh& bvh, const Vec3& p);

/// Number of threads OpenMP kernels will use; set_threads(0) restores the default.
int max_threads();
void set_threads(int n);

}  // namespace motionkit::kernels
