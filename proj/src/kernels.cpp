#include "motionkit/kernels.hpp"

#include <omp.h>

#include <algorithm>

namespace motionkit::kernels {
namespace {

inline Vec3 skin_one(const SkinnedBody& body, const std::array<JointTransform, kJointCount>& tf,
                     const Vec3& rest, int v) {
    Vec3 acc = Vec3::Zero();
    for (const auto& sw : body.weights_of(v)) {
        const auto& t = tf[static_cast<size_t>(sw.joint)];
        acc += sw.weight * (t.rotation * rest + t.offset);
    }
    return acc;
}

}  // namespace

double penetration_depth(const TriangleBvh& bvh, const Vec3& p) {
    const ClosestTriangle c = bvh.closest(p);
    if (c.triangle < 0) return 0.0;
    const double signed_dist = (p - c.point).dot(bvh.mesh().normals()[static_cast<size_t>(c.triangle)]);
    return std::max(0.0, -signed_dist);
}

namespace serial {

void skin(const SkinnedBody& body, const std::array<JointTransform, kJointCount>& transforms,
          std::span<const Vec3> rest_vertices, std::span<Vec3> out) {
    for (size_t v = 0; v < rest_vertices.size(); ++v) {
        out[v] = skin_one(body, transforms, rest_vertices[v], static_cast<int>(v));
    }
}

void nearest_sq_distances(const KdTree& index, std::span<const Vec3> queries, std::span<double> out) {
    for (size_t i = 0; i < queries.size(); ++i) out[i] = index.nearest(queries[i]).sq_distance;
}

void penetration_depths(const TriangleBvh& bvh, std::span<const Vec3> points, std::span<double> out) {
    for (size_t i = 0; i < points.size(); ++i) out[i] = penetration_depth(bvh, points[i]);
}

}  // namespace serial

namespace omp {

void skin(const SkinnedBody& body, const std::array<JointTransform, kJointCount>& transforms,
          std::span<const Vec3> rest_vertices, std::span<Vec3> out) {
    const auto n = static_cast<std::ptrdiff_t>(rest_vertices.size());
#pragma omp parallel for schedule(static) if (n > 2048)
    for (std::ptrdiff_t v = 0; v < n; ++v) {
        out[static_cast<size_t>(v)] = skin_one(body, transforms, rest_vertices[static_cast<size_t>(v)], static_cast<int>(v));
    }
}

void nearest_sq_distances(const KdTree& index, std::span<const Vec3> queries, std::span<double> out) {
    const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(static) if (n > 512)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[static_cast<size_t>(i)] = index.nearest(queries[static_cast<size_t>(i)]).sq_distance;
    }
}

void penetration_depths(const TriangleBvh& bvh, std::span<const Vec3> points, std::span<double> out) {
    const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(static) if (n > 512)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[static_cast<size_t>(i)] = penetration_depth(bvh, points[static_cast<size_t>(i)]);
    }
}

}  // namespace omp

int max_threads() { return omp_get_max_threads(); }

void set_threads(int n) {
    if (n > 0) {
        omp_set_num_threads(n);
    } else {
        omp_set_num_threads(omp_get_num_procs());
    }
}

}  // namespace motionkit::kernels
