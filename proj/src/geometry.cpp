#include "motionkit/geometry.hpp"

#include "motionkit/kernels.hpp"

#include <Eigen/SVD>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace motionkit {

// ---- TriangleMesh -------------------------------------------------------------------

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
    validate_indices();
    normals_.reserve(triangles_.size());
    for (int t = 0; t < static_cast<int>(triangles_.size()); ++t) {
        const auto [a, b, c] = corners(t);
        const Vec3 n = (b - a).cross(c - a);
        if (!(n.norm() > 0.0)) throw ValidationError(fmt::format("triangle {} is degenerate", t));
        normals_.push_back(n.normalized());
    }
}

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles,
                           std::vector<Vec3> normals)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)), normals_(std::move(normals)) {
    validate_indices();
    if (normals_.size() != triangles_.size()) throw ValidationError("one normal per triangle is required");
    for (const auto& n : normals_) {
        if (!n.allFinite() || std::abs(n.norm() - 1.0) > 1e-9) throw ValidationError("triangle normal is not unit length");
    }
}

void TriangleMesh::validate_indices() const {
    for (const auto& v : vertices_) {
        if (!v.allFinite()) throw ValidationError("mesh vertex is not finite");
    }
    const int nv = static_cast<int>(vertices_.size());
    for (const auto& t : triangles_) {
        for (int i : t) {
            if (i < 0 || i >= nv) throw ValidationError(fmt::format("triangle index {} out of range [0,{})", i, nv));
        }
    }
}

void TriangleMesh::append(const TriangleMesh& other) {
    const int base = static_cast<int>(vertices_.size());
    vertices_.insert(vertices_.end(), other.vertices_.begin(), other.vertices_.end());
    for (const auto& t : other.triangles_) triangles_.push_back({t[0] + base, t[1] + base, t[2] + base});
    normals_.insert(normals_.end(), other.normals_.begin(), other.normals_.end());
}

TriangleMesh make_ground_plane(double half_extent, double height) {
    const double h = half_extent;
    return TriangleMesh({Vec3(-h, -h, height), Vec3(h, -h, height), Vec3(h, h, height), Vec3(-h, h, height)},
                        {{0, 1, 2}, {0, 2, 3}});
}

TriangleMesh make_box(const Vec3& lo, const Vec3& hi) {
    std::vector<Vec3> v;
    for (int i = 0; i < 8; ++i) {
        v.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
    }
    // Quads listed counter-clockwise as seen from outside.
    const int quads[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};
    std::vector<std::array<int, 3>> tris;
    for (const auto& q : quads) {
        tris.push_back({q[0], q[1], q[2]});
        tris.push_back({q[0], q[2], q[3]});
    }
    return TriangleMesh(std::move(v), std::move(tris));
}

// ---- Chamfer --------------------------------------------------------------------------

namespace {
double mean_nearest(const KdTree& target, std::span<const Vec3> queries, Exec exec) {
    std::vector<double> d(queries.size());
    if (exec == Exec::parallel) {
        kernels::omp::nearest_sq_distances(target, queries, d);
    } else {
        kernels::serial::nearest_sq_distances(target, queries, d);
    }
    double sum = 0.0;
    for (double x : d) sum += x;
    return sum / static_cast<double>(d.size());
}
}  // namespace

double chamfer_distance(const KdTree& a, const KdTree& b, Exec exec) {
    if (a.size() == 0 || b.size() == 0) throw ValidationError("chamfer distance of an empty cloud");
    return mean_nearest(b, a.points(), exec) + mean_nearest(a, b.points(), exec);
}

double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b, Exec exec) {
    if (a.empty() || b.empty()) throw ValidationError("chamfer distance of an empty cloud");
    const KdTree ta(std::vector<Vec3>(a.begin(), a.end()));
    const KdTree tb(std::vector<Vec3>(b.begin(), b.end()));
    return chamfer_distance(ta, tb, exec);
}

// ---- Hidden point removal -----------------------------------------------------------------

std::vector<int> hidden_point_removal(std::span<const Vec3> cloud, const Vec3& viewpoint, double gamma) {
    if (cloud.empty()) throw ValidationError("hidden point removal on an empty cloud");
    std::vector<Vec3> flipped(cloud.size() + 1);
    double max_norm = 0.0;
    for (size_t i = 0; i < cloud.size(); ++i) {
        if (!cloud[i].allFinite()) throw ValidationError(fmt::format("point {} is not finite", i));
        const Vec3 p = cloud[i] - viewpoint;
        const double n = p.norm();
        if (!(n > 1e-12)) throw ValidationError(fmt::format("point {} coincides with the viewpoint", i));
        flipped[i] = p;
        max_norm = std::max(max_norm, n);
    }
    const double radius = std::pow(10.0, gamma) * max_norm;
    for (size_t i = 0; i < cloud.size(); ++i) {
        const double n = flipped[i].norm();
        flipped[i] = flipped[i] * (1.0 + 2.0 * (radius - n) / n);
        // Finite but huge input overflows here.
        if (!flipped[i].allFinite()) throw NumericalError("spherical flip overflowed");
    }
    flipped.back() = Vec3::Zero();

    const ConvexHull hull = convex_hull_3d(flipped);
    std::vector<int> visible;
    visible.reserve(hull.vertices.size());
    const int origin = static_cast<int>(cloud.size());
    for (int v : hull.vertices) {
        if (v != origin) visible.push_back(v);
    }
    return visible;
}

std::vector<int> visible_points(std::span<const Vec3> cloud, const Vec3& viewpoint, const TriangleBvh& scene,
                                double gamma) {
    std::vector<int> vis = hidden_point_removal(cloud, viewpoint, gamma);
    if (scene.mesh().empty()) return vis;
    std::erase_if(vis, [&](int i) { return scene.segment_blocked(viewpoint, cloud[static_cast<size_t>(i)]); });
    return vis;
}

// ---- Penetration ------------------------------------------------------------------------

std::vector<double> penetration_depths(std::span<const Vec3> points, const TriangleBvh& scene, Exec exec) {
    std::vector<double> out(points.size(), 0.0);
    if (scene.mesh().empty()) return out;
    if (exec == Exec::parallel) {
        kernels::omp::penetration_depths(scene, points, out);
    } else {
        kernels::serial::penetration_depths(scene, points, out);
    }
    return out;
}

std::vector<double> penetration_depths(std::span<const Vec3> points, const TriangleMesh& scene, Exec exec) {
    if (scene.empty()) throw ValidationError("penetration test against an empty mesh");
    return penetration_depths(points, TriangleBvh(scene), exec);
}

// ---- Capsules ------------------------------------------------------------------------------

SegmentClosest segment_segment_closest(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1) {
    const Vec3 d1 = p1 - p0;
    const Vec3 d2 = q1 - q0;
    const Vec3 r = p0 - q0;
    const double a = d1.squaredNorm();
    const double e = d2.squaredNorm();
    const double f = d2.dot(r);
    constexpr double eps = 1e-300;
    double s = 0.0;
    double t = 0.0;
    if (a <= eps && e <= eps) {
        s = t = 0.0;
    } else if (a <= eps) {
        t = std::clamp(f / e, 0.0, 1.0);
    } else {
        const double c = d1.dot(r);
        if (e <= eps) {
            s = std::clamp(-c / a, 0.0, 1.0);
        } else {
            const double b = d1.dot(d2);
            const double denom = a * e - b * b;
            s = denom > 0.0 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
            t = (b * s + f) / e;
            if (t < 0.0) {
                t = 0.0;
                s = std::clamp(-c / a, 0.0, 1.0);
            } else if (t > 1.0) {
                t = 1.0;
                s = std::clamp((b - c) / a, 0.0, 1.0);
            }
        }
    }
    const Vec3 cp = p0 + s * d1;
    const Vec3 cq = q0 + t * d2;
    return {s, t, (cp - cq).norm()};
}

double capsule_overlap(const Capsule& a, const Capsule& b) {
    const double d = segment_segment_closest(a.p0, a.p1, b.p0, b.p1).distance;
    return std::max(0.0, a.radius + b.radius - d);
}

// ---- Procrustes ------------------------------------------------------------------------------

Similarity procrustes_align(std::span<const Vec3> x, std::span<const Vec3> y) {
    if (x.size() != y.size()) throw ValidationError("procrustes inputs differ in size");
    if (x.size() < 3) throw ValidationError("procrustes needs at least 3 points");
    const double k = static_cast<double>(x.size());
    Vec3 mx = Vec3::Zero();
    Vec3 my = Vec3::Zero();
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= k;
    my /= k;
    Mat3 cov = Mat3::Zero();
    double var_x = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const Vec3 dx = x[i] - mx;
        cov += (y[i] - my) * dx.transpose();
        var_x += dx.squaredNorm();
    }
    if (!(var_x > 1e-24)) throw ValidationError("procrustes source points are all coincident");
    cov /= k;
    var_x /= k;

    const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 s = Mat3::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;

    Similarity out;
    out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
    out.scale = (svd.singularValues().asDiagonal() * s).trace() / var_x;
    out.translation = my - out.scale * (out.rotation * mx);
    double res = 0.0;
    for (size_t i = 0; i < x.size(); ++i) res += (out.apply(x[i]) - y[i]).squaredNorm();
    out.residual = res;
    return out;
}

}  // namespace motionkit
