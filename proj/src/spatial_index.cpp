#include "motionkit/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace motionkit {

// ---- KdTree ---------------------------------------------------------------------

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (points_.size() > kBruteForceThreshold) {
        nodes_.reserve(2 * points_.size() / 8 + 1);
        build(0, static_cast<int>(points_.size()), 0);
    }
}

int KdTree::build(int begin, int end, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end, -1, -1, -1, 0.0});
    if (end - begin <= 8) return id;

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (int i = begin; i < end; ++i) {
        lo = lo.cwiseMin(points_[static_cast<size_t>(order_[static_cast<size_t>(i)])]);
        hi = hi.cwiseMax(points_[static_cast<size_t>(order_[static_cast<size_t>(i)])]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    (void)depth;
    const int mid = begin + (end - begin) / 2;
    auto key = [&](int idx) { return points_[static_cast<size_t>(idx)][axis]; };
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return key(a) < key(b) || (key(a) == key(b) && a < b); });
    const double split = key(order_[static_cast<size_t>(mid)]);
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid, end, depth + 1);
    auto& n = nodes_[static_cast<size_t>(id)];
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
}

void KdTree::search(int node, const Vec3& q, Neighbor& best) const {
    const Node& n = nodes_[static_cast<size_t>(node)];
    if (n.axis < 0) {
        for (int i = n.begin; i < n.end; ++i) {
            const int idx = order_[static_cast<size_t>(i)];
            const double d = (q - points_[static_cast<size_t>(idx)]).squaredNorm();
            if (best.index < 0 || d < best.sq_distance || (d == best.sq_distance && idx < best.index)) best = {idx, d};
        }
        return;
    }
    const double diff = q[n.axis] - n.split;
    const int near = diff < 0.0 ? n.left : n.right;
    const int far = diff < 0.0 ? n.right : n.left;
    search(near, q, best);
    if (diff * diff <= best.sq_distance * (1.0 + 1e-12)) search(far, q, best);
}

Neighbor KdTree::nearest(const Vec3& query) const {
    Neighbor best{-1, std::numeric_limits<double>::infinity()};
    if (points_.empty()) return best;
    if (nodes_.empty()) {
        for (size_t i = 0; i < points_.size(); ++i) {
            const double d = (query - points_[i]).squaredNorm();
            if (best.index < 0 || d < best.sq_distance) best = {static_cast<int>(i), d};
        }
        return best;
    }
    search(0, query, best);
    return best;
}

// ---- triangles --------------------------------------------------------------------

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
    }
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

ClosestTriangle closest_triangle_exhaustive(const TriangleMesh& mesh, const Vec3& p) {
    ClosestTriangle best{-1, Vec3::Zero(), std::numeric_limits<double>::infinity()};
    for (int t = 0; t < static_cast<int>(mesh.triangles().size()); ++t) {
        const auto [a, b, c] = mesh.corners(t);
        const Vec3 q = closest_point_on_triangle(p, a, b, c);
        const double d = (p - q).squaredNorm();
        if (best.triangle < 0 || d < best.sq_distance) best = {t, q, d};
    }
    return best;
}

TriangleBvh::TriangleBvh(const TriangleMesh& mesh) : mesh_(mesh) {
    order_.resize(mesh_.triangles().size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!order_.empty()) build(0, static_cast<int>(order_.size()));
}

int TriangleBvh::build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    Node node;
    node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    for (int i = begin; i < end; ++i) {
        for (const auto& v : mesh_.corners(order_[static_cast<size_t>(i)])) {
            node.lo = node.lo.cwiseMin(v);
            node.hi = node.hi.cwiseMax(v);
        }
    }
    node.begin = begin;
    node.end = end;
    nodes_.push_back(node);
    if (end - begin <= 4) return id;

    int axis = 0;
    (node.hi - node.lo).maxCoeff(&axis);
    auto centroid = [&](int t) {
        const auto [a, b, c] = mesh_.corners(t);
        return (a[axis] + b[axis] + c[axis]) / 3.0;
    };
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int x, int y) {
        const double cx = centroid(x);
        const double cy = centroid(y);
        return cx < cy || (cx == cy && x < y);
    });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[static_cast<size_t>(id)].left = left;
    nodes_[static_cast<size_t>(id)].right = right;
    return id;
}

namespace {
double box_sq_distance(const Vec3& p, const Vec3& lo, const Vec3& hi) {
    const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
    return d.squaredNorm();
}
}  // namespace

void TriangleBvh::search(int node, const Vec3& p, ClosestTriangle& best) const {
    const Node& n = nodes_[static_cast<size_t>(node)];
    if (n.left < 0) {
        for (int i = n.begin; i < n.end; ++i) {
            const int t = order_[static_cast<size_t>(i)];
            const auto [a, b, c] = mesh_.corners(t);
            const Vec3 q = closest_point_on_triangle(p, a, b, c);
            const double d = (p - q).squaredNorm();
            if (best.triangle < 0 || d < best.sq_distance || (d == best.sq_distance && t < best.triangle)) best = {t, q, d};
        }
        return;
    }
    const Node& l = nodes_[static_cast<size_t>(n.left)];
    const Node& r = nodes_[static_cast<size_t>(n.right)];
    const double dl = box_sq_distance(p, l.lo, l.hi);
    const double dr = box_sq_distance(p, r.lo, r.hi);
    const bool left_first = dl <= dr;
    const int first = left_first ? n.left : n.right;
    const int second = left_first ? n.right : n.left;
    const double d_first = left_first ? dl : dr;
    const double d_second = left_first ? dr : dl;
    // Slack keeps rounding in the box distance from pruning an exact tie.
    const double bound = best.sq_distance * (1.0 + 1e-12);
    if (d_first <= bound) search(first, p, best);
    if (d_second <= best.sq_distance * (1.0 + 1e-12)) search(second, p, best);
}

ClosestTriangle TriangleBvh::closest(const Vec3& p) const {
    ClosestTriangle best{-1, Vec3::Zero(), std::numeric_limits<double>::infinity()};
    if (!nodes_.empty()) search(0, p, best);
    return best;
}

double ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 e1 = b - a;
    const Vec3 e2 = c - a;
    const Vec3 p = d.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-14 * e1.norm() * e2.norm() * d.norm()) return -1.0;  // parallel
    const double inv = 1.0 / det;
    const Vec3 s = o - a;
    const double u = s.dot(p) * inv;
    if (u < 0.0 || u > 1.0) return -1.0;
    const Vec3 q = s.cross(e1);
    const double v = d.dot(q) * inv;
    if (v < 0.0 || u + v > 1.0) return -1.0;
    return e2.dot(q) * inv;
}

namespace {
// Slab test of the segment parameter range [t0, t1] against a box.
bool segment_hits_box(const Vec3& a, const Vec3& inv_d, double t0, double t1, const Vec3& lo, const Vec3& hi) {
    for (int k = 0; k < 3; ++k) {
        double ta = (lo[k] - a[k]) * inv_d[k];
        double tb = (hi[k] - a[k]) * inv_d[k];
        if (ta > tb) std::swap(ta, tb);
        if (std::isnan(ta) || std::isnan(tb)) continue;  // zero direction on this axis, inside the slab
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    return true;
}
}  // namespace

bool TriangleBvh::blocked(int node, const Vec3& a, const Vec3& d, const Vec3& inv_d, double t0, double t1) const {
    const Node& n = nodes_[static_cast<size_t>(node)];
    if (!segment_hits_box(a, inv_d, t0, t1, n.lo, n.hi)) return false;
    if (n.left < 0) {
        for (int i = n.begin; i < n.end; ++i) {
            const auto [p, q, r] = mesh_.corners(order_[static_cast<size_t>(i)]);
            const double t = ray_triangle(a, d, p, q, r);
            if (t > t0 && t < t1) return true;
        }
        return false;
    }
    return blocked(n.left, a, d, inv_d, t0, t1) || blocked(n.right, a, d, inv_d, t0, t1);
}

bool TriangleBvh::segment_blocked(const Vec3& a, const Vec3& b, double trim) const {
    if (nodes_.empty()) return false;
    const Vec3 d = b - a;
    const Vec3 inv_d = d.cwiseInverse();
    return blocked(0, a, d, inv_d, trim, 1.0 - trim);
}

}  // namespace motionkit
