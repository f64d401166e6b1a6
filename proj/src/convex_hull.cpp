#include "motionkit/convex_hull.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace motionkit {
namespace {

struct Face {
    std::array<int, 3> v{};
    Vec3 normal = Vec3::Zero();  // unit
    double offset = 0.0;         // normal . x = offset on the plane
    std::vector<int> outside;
    bool alive = true;
};

std::uint64_t edge_key(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

class HullBuilder {
public:
    HullBuilder(std::span<const Vec3> pts, double tol) : p_(pts), tol_(tol) {}

    ConvexHull run();

private:
    double distance(const Face& f, int i) const { return f.normal.dot(p_[static_cast<size_t>(i)]) - f.offset; }
    int add_face(int a, int b, int c);
    void kill_face(int id);
    ConvexHull reduced(int dimension, const std::vector<int>& support) const;

    std::span<const Vec3> p_;
    double tol_;
    std::vector<Face> faces_;
    std::unordered_map<std::uint64_t, int> edges_;  // directed edge -> face
};

int HullBuilder::add_face(int a, int b, int c) {
    Face f;
    f.v = {a, b, c};
    const Vec3& pa = p_[static_cast<size_t>(a)];
    const Vec3 n = (p_[static_cast<size_t>(b)] - pa).cross(p_[static_cast<size_t>(c)] - pa);
    f.normal = n.normalized();
    f.offset = f.normal.dot(pa);
    const int id = static_cast<int>(faces_.size());
    faces_.push_back(std::move(f));
    edges_[edge_key(a, b)] = id;
    edges_[edge_key(b, c)] = id;
    edges_[edge_key(c, a)] = id;
    return id;
}

void HullBuilder::kill_face(int id) {
    Face& f = faces_[static_cast<size_t>(id)];
    f.alive = false;
    for (int k = 0; k < 3; ++k) {
        const auto it = edges_.find(edge_key(f.v[static_cast<size_t>(k)], f.v[static_cast<size_t>((k + 1) % 3)]));
        if (it != edges_.end() && it->second == id) edges_.erase(it);
    }
}

ConvexHull HullBuilder::reduced(int dimension, const std::vector<int>& support) const {
    ConvexHull h;
    h.dimension = dimension;
    const int n = static_cast<int>(p_.size());
    if (dimension == 0) {
        h.vertices = {support[0]};
        return h;
    }
    const Vec3 o = p_[static_cast<size_t>(support[0])];
    const Vec3 e1 = (p_[static_cast<size_t>(support[1])] - o).normalized();
    if (dimension == 1) {
        int lo = support[0];
        int hi = support[0];
        double dlo = 0.0;
        double dhi = 0.0;
        for (int i = 0; i < n; ++i) {
            const double d = e1.dot(p_[static_cast<size_t>(i)] - o);
            if (d < dlo) { dlo = d; lo = i; }
            if (d > dhi) { dhi = d; hi = i; }
        }
        h.vertices = {std::min(lo, hi), std::max(lo, hi)};
        return h;
    }
    // Planar: Andrew's monotone chain in an in-plane basis.
    const Vec3 nrm = e1.cross(p_[static_cast<size_t>(support[2])] - o).normalized();
    const Vec3 e2 = nrm.cross(e1);
    std::vector<int> idx(static_cast<size_t>(n));
    std::vector<Eigen::Vector2d> uv(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        idx[static_cast<size_t>(i)] = i;
        const Vec3 d = p_[static_cast<size_t>(i)] - o;
        uv[static_cast<size_t>(i)] = {e1.dot(d), e2.dot(d)};
    }
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        const auto& A = uv[static_cast<size_t>(a)];
        const auto& B = uv[static_cast<size_t>(b)];
        if (A.x() != B.x()) return A.x() < B.x();
        if (A.y() != B.y()) return A.y() < B.y();
        return a < b;
    });
    auto cross = [&](int o_, int a, int b) {
        const auto& O = uv[static_cast<size_t>(o_)];
        const Eigen::Vector2d da = uv[static_cast<size_t>(a)] - O;
        const Eigen::Vector2d db = uv[static_cast<size_t>(b)] - O;
        return da.x() * db.y() - da.y() * db.x();
    };
    std::vector<int> chain;
    for (int pass = 0; pass < 2; ++pass) {
        const size_t base = chain.size();
        for (int i : idx) {
            while (chain.size() >= base + 2 && cross(chain[chain.size() - 2], chain.back(), i) <= tol_ * tol_) {
                chain.pop_back();
            }
            chain.push_back(i);
        }
        chain.pop_back();
        std::reverse(idx.begin(), idx.end());
    }
    std::sort(chain.begin(), chain.end());
    chain.erase(std::unique(chain.begin(), chain.end()), chain.end());
    h.vertices = chain;
    return h;
}

ConvexHull HullBuilder::run() {
    const int n = static_cast<int>(p_.size());

    // Initial simplex, lowest index wins every tie.
    int i0 = 0;
    for (int i = 1; i < n; ++i) {
        if (p_[static_cast<size_t>(i)].x() < p_[static_cast<size_t>(i0)].x()) i0 = i;
    }
    int i1 = i0;
    double best = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = (p_[static_cast<size_t>(i)] - p_[static_cast<size_t>(i0)]).norm();
        if (d > best) { best = d; i1 = i; }
    }
    if (best <= tol_) return reduced(0, {i0});

    const Vec3 dir = (p_[static_cast<size_t>(i1)] - p_[static_cast<size_t>(i0)]).normalized();
    int i2 = i0;
    best = 0.0;
    for (int i = 0; i < n; ++i) {
        const Vec3 d = p_[static_cast<size_t>(i)] - p_[static_cast<size_t>(i0)];
        const double dist = (d - d.dot(dir) * dir).norm();
        if (dist > best) { best = dist; i2 = i; }
    }
    if (best <= tol_) return reduced(1, {i0, i1});

    const Vec3 nrm = (p_[static_cast<size_t>(i1)] - p_[static_cast<size_t>(i0)])
                         .cross(p_[static_cast<size_t>(i2)] - p_[static_cast<size_t>(i0)])
                         .normalized();
    int i3 = i0;
    best = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dist = std::abs(nrm.dot(p_[static_cast<size_t>(i)] - p_[static_cast<size_t>(i0)]));
        if (dist > best) { best = dist; i3 = i; }
    }
    if (best <= tol_) return reduced(2, {i0, i1, i2});

    if (nrm.dot(p_[static_cast<size_t>(i3)] - p_[static_cast<size_t>(i0)]) > 0.0) std::swap(i1, i2);
    add_face(i0, i1, i2);
    add_face(i0, i3, i1);
    add_face(i1, i3, i2);
    add_face(i2, i3, i0);

    for (int i = 0; i < n; ++i) {
        if (i == i0 || i == i1 || i == i2 || i == i3) continue;
        for (auto& f : faces_) {
            if (distance(f, i) > tol_) {
                f.outside.push_back(i);
                break;
            }
        }
    }

    std::vector<int> visible;
    std::vector<std::pair<int, int>> horizon;
    std::vector<int> stack;
    std::vector<char> is_visible;
    size_t scan = 0;
    while (true) {
        // Lowest live face that still has outside points.
        while (scan < faces_.size() && (!faces_[scan].alive || faces_[scan].outside.empty())) ++scan;
        if (scan == faces_.size()) break;
        const int start = static_cast<int>(scan);

        int eye = -1;
        double far = -1.0;
        for (int i : faces_[static_cast<size_t>(start)].outside) {
            const double d = distance(faces_[static_cast<size_t>(start)], i);
            if (d > far || (d == far && i < eye)) { far = d; eye = i; }
        }

        visible.clear();
        horizon.clear();
        is_visible.assign(faces_.size(), 0);
        stack.assign(1, start);
        is_visible[static_cast<size_t>(start)] = 1;
        while (!stack.empty()) {
            const int fid = stack.back();
            stack.pop_back();
            visible.push_back(fid);
            const auto v = faces_[static_cast<size_t>(fid)].v;
            for (int k = 0; k < 3; ++k) {
                const int a = v[static_cast<size_t>(k)];
                const int b = v[static_cast<size_t>((k + 1) % 3)];
                const auto it = edges_.find(edge_key(b, a));
                if (it == edges_.end()) continue;
                const int nb = it->second;
                if (is_visible[static_cast<size_t>(nb)]) continue;
                if (distance(faces_[static_cast<size_t>(nb)], eye) > tol_) {
                    is_visible[static_cast<size_t>(nb)] = 1;
                    stack.push_back(nb);
                }
            }
        }
        for (int fid : visible) {
            const auto v = faces_[static_cast<size_t>(fid)].v;
            for (int k = 0; k < 3; ++k) {
                const int a = v[static_cast<size_t>(k)];
                const int b = v[static_cast<size_t>((k + 1) % 3)];
                const auto it = edges_.find(edge_key(b, a));
                if (it == edges_.end() || !is_visible[static_cast<size_t>(it->second)]) horizon.emplace_back(a, b);
            }
        }

        std::vector<int> orphans;
        for (int fid : visible) {
            auto& out = faces_[static_cast<size_t>(fid)].outside;
            orphans.insert(orphans.end(), out.begin(), out.end());
            out.clear();
            out.shrink_to_fit();
            kill_face(fid);
        }
        std::sort(orphans.begin(), orphans.end());

        const int first_new = static_cast<int>(faces_.size());
        for (const auto& [a, b] : horizon) add_face(a, b, eye);
        const int end_new = static_cast<int>(faces_.size());
        for (int i : orphans) {
            if (i == eye) continue;
            for (int fid = first_new; fid < end_new; ++fid) {
                if (distance(faces_[static_cast<size_t>(fid)], i) > tol_) {
                    faces_[static_cast<size_t>(fid)].outside.push_back(i);
                    break;
                }
            }
        }
        scan = std::min(scan, static_cast<size_t>(first_new));
    }

    ConvexHull h;
    h.dimension = 3;
    std::vector<char> used(static_cast<size_t>(n), 0);
    for (const auto& f : faces_) {
        if (!f.alive) continue;
        h.faces.push_back(f.v);
        for (int v : f.v) used[static_cast<size_t>(v)] = 1;
    }
    for (int i = 0; i < n; ++i) {
        if (used[static_cast<size_t>(i)]) h.vertices.push_back(i);
    }
    return h;
}

}  // namespace

ConvexHull convex_hull_3d(std::span<const Vec3> points, double tolerance) {
    if (points.empty()) throw ValidationError("convex hull of an empty point set");
    double scale = 0.0;
    for (const auto& p : points) {
        if (!p.allFinite()) throw ValidationError("convex hull input is not finite");
        scale = std::max(scale, p.cwiseAbs().maxCoeff());
    }
    // Plane tests lose ~1e-13 relative precision on large coordinates.
    const double tol = std::max(tolerance, 1e-13 * scale);
    return HullBuilder(points, tol).run();
}

}  // namespace motionkit
