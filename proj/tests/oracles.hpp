#pragma once

// Independent reference implementations used as test oracles. None of these
// call into the library code they check, except for plain data types.

#include "motionkit/body_model.hpp"
#include "motionkit/fusion.hpp"
#include "motionkit/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using motionkit::Vec3;
using motionkit::Mat3;

// ---- rotations and kinematics --------------------------------------------------------------

inline Mat3 axis_angle(const Vec3& r) {
    const double a = r.norm();
    if (a == 0.0) return Mat3::Identity();
    return Eigen::AngleAxisd(a, r / a).toRotationMatrix();
}

inline Eigen::Matrix4d homogeneous(const Mat3& r, const Vec3& t) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = r;
    m.topRightCorner<3, 1>() = t;
    return m;
}

// Forward kinematics as a product of 4x4 local transforms along the chain.
inline std::vector<Vec3> matrix_chain_fk(const std::array<int, motionkit::kJointCount>& parent,
                                         const motionkit::JointArray& rest, const motionkit::PoseFrame& f) {
    std::vector<Eigen::Matrix4d> g(motionkit::kJointCount);
    std::vector<Vec3> out(motionkit::kJointCount);
    for (int j = 0; j < motionkit::kJointCount; ++j) {
        const auto ju = static_cast<size_t>(j);
        if (parent[ju] < 0) {
            g[ju] = homogeneous(axis_angle(f.pose[ju]), f.translation);
        } else {
            const auto p = static_cast<size_t>(parent[ju]);
            g[ju] = g[p] * homogeneous(axis_angle(f.pose[ju]), rest[ju] - rest[p]);
        }
        out[ju] = g[ju].topRightCorner<3, 1>();
    }
    return out;
}

// Direct linear blend skinning of template vertex v (zero shape): each joint
// moves its rest frame rigidly to the world frame built by matrix_chain_fk.
inline Vec3 lbs_vertex(const motionkit::SkinnedBody& body, const motionkit::PoseFrame& f, int v) {
    const auto& parent = body.parent();
    const auto& rest = body.rest_joints();
    std::vector<Eigen::Matrix4d> g(motionkit::kJointCount);
    for (int j = 0; j < motionkit::kJointCount; ++j) {
        const auto ju = static_cast<size_t>(j);
        if (parent[ju] < 0) {
            g[ju] = homogeneous(axis_angle(f.pose[ju]), f.translation);
        } else {
            const auto p = static_cast<size_t>(parent[ju]);
            g[ju] = g[p] * homogeneous(axis_angle(f.pose[ju]), rest[ju] - rest[p]);
        }
    }
    const Vec3 x = body.template_vertices()[static_cast<size_t>(v)];
    Eigen::Vector4d acc = Eigen::Vector4d::Zero();
    for (int j = 0; j < motionkit::kJointCount; ++j) {
        const double w = body.skin_weights()(v, j);
        acc += w * (g[static_cast<size_t>(j)] * homogeneous(Mat3::Identity(), -rest[static_cast<size_t>(j)]) *
                    x.homogeneous());
    }
    return acc.head<3>();
}

// A random 24-joint tree with topological parent order, one vertex per
// joint weighted fully to it and one vertex shared half/half with its parent.
inline motionkit::SkinnedBody random_tree_body(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    std::array<int, motionkit::kJointCount> parent{};
    parent[0] = -1;
    motionkit::JointArray rest;
    rest[0] = Vec3(u(rng), u(rng), u(rng));
    for (int j = 1; j < motionkit::kJointCount; ++j) {
        std::uniform_int_distribution<int> pick(0, j - 1);
        parent[static_cast<size_t>(j)] = pick(rng);
        Vec3 off(u(rng), u(rng), u(rng));
        if (off.norm() < 0.05) off.x() += 0.1;
        rest[static_cast<size_t>(j)] = rest[static_cast<size_t>(parent[static_cast<size_t>(j)])] + off;
    }
    std::vector<Vec3> verts;
    const int v_count = 2 * motionkit::kJointCount - 1;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(v_count, motionkit::kJointCount);
    for (int j = 0; j < motionkit::kJointCount; ++j) {
        verts.push_back(rest[static_cast<size_t>(j)] + Vec3(u(rng), u(rng), u(rng)) * 0.1);
        w(static_cast<Eigen::Index>(verts.size() - 1), j) = 1.0;
        if (j > 0) {
            verts.push_back(rest[static_cast<size_t>(j)] + Vec3(u(rng), u(rng), u(rng)) * 0.1);
            w(static_cast<Eigen::Index>(verts.size() - 1), j) = 0.5;
            w(static_cast<Eigen::Index>(verts.size() - 1), parent[static_cast<size_t>(j)]) = 0.5;
        }
    }
    motionkit::SkinnedBody::BoneShapeDirs dirs{};
    motionkit::SkinnedBody::BoneRadii radii;
    radii.fill(0.05);
    return motionkit::SkinnedBody(parent, rest, std::move(verts), std::move(w), dirs, radii);
}

inline Vec3 random_axis_angle(std::mt19937_64& rng, double max_angle) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, max_angle);
    Vec3 axis(n(rng), n(rng), n(rng));
    axis.normalize();
    return u(rng) * axis;
}

inline motionkit::PoseFrame random_pose(std::mt19937_64& rng, double max_angle = 1.5, double max_trans = 2.0) {
    std::uniform_real_distribution<double> u(-max_trans, max_trans);
    motionkit::PoseFrame f;
    f.translation = Vec3(u(rng), u(rng), u(rng));
    for (auto& r : f.pose) r = random_axis_angle(rng, max_angle);
    return f;
}

// ---- geometry ---------------------------------------------------------------------------------

inline double nearest_sq(const Vec3& p, const std::vector<Vec3>& set) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : set) best = std::min(best, (p - q).squaredNorm());
    return best;
}

inline double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    double sa = 0.0;
    for (const auto& p : a) sa += nearest_sq(p, b);
    double sb = 0.0;
    for (const auto& q : b) sb += nearest_sq(q, a);
    return sa / static_cast<double>(a.size()) + sb / static_cast<double>(b.size());
}

// Segment distance by nested golden-section minimisation over both segment
// parameters (the squared distance is jointly convex).
inline double segment_distance_search(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1) {
    auto inner = [&](double s) {
        const Vec3 p = p0 + s * (p1 - p0);
        // Distance to segment q is convex in t: golden section on [0, 1].
        double lo = 0.0;
        double hi = 1.0;
        const double g = (std::sqrt(5.0) - 1.0) / 2.0;
        for (int it = 0; it < 200; ++it) {
            const double a = hi - g * (hi - lo);
            const double b = lo + g * (hi - lo);
            if ((p - (q0 + a * (q1 - q0))).squaredNorm() < (p - (q0 + b * (q1 - q0))).squaredNorm()) {
                hi = b;
            } else {
                lo = a;
            }
        }
        double best = std::min((p - q0).squaredNorm(), (p - q1).squaredNorm());
        best = std::min(best, (p - (q0 + 0.5 * (lo + hi) * (q1 - q0))).squaredNorm());
        return best;
    };
    // The outer minimum of a convex function of s as well.
    double lo = 0.0;
    double hi = 1.0;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200; ++it) {
        const double a = hi - g * (hi - lo);
        const double b = lo + g * (hi - lo);
        if (inner(a) < inner(b)) {
            hi = b;
        } else {
            lo = a;
        }
    }
    const double best = std::min({inner(0.0), inner(1.0), inner(0.5 * (lo + hi))});
    return std::sqrt(best);
}

inline double capsule_overlap(const motionkit::Capsule& a, const motionkit::Capsule& b) {
    return std::max(0.0, a.radius + b.radius - segment_distance_search(a.p0, a.p1, b.p0, b.p1));
}

// Penetration depth against the closest triangle found by scanning every
// triangle with an independent closest-point routine (barycentric projection
// plus edge clamping).
inline Vec3 closest_on_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 d = b - a;
    const double t = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
    return a + t * d;
}

inline Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 n = (b - a).cross(c - a);
    const Vec3 proj = p - (p - a).dot(n) / n.squaredNorm() * n;
    // Barycentric coordinates of the projection.
    Eigen::Matrix<double, 3, 2> m;
    m.col(0) = b - a;
    m.col(1) = c - a;
    const Eigen::Vector2d uv = m.colPivHouseholderQr().solve(proj - a);
    if (uv.x() >= 0.0 && uv.y() >= 0.0 && uv.x() + uv.y() <= 1.0) return proj;
    Vec3 best = closest_on_segment(p, a, b);
    for (const Vec3& q : {closest_on_segment(p, b, c), closest_on_segment(p, c, a)}) {
        if ((p - q).squaredNorm() < (p - best).squaredNorm()) best = q;
    }
    return best;
}

inline double penetration(const Vec3& p, const motionkit::TriangleMesh& mesh) {
    double best = std::numeric_limits<double>::infinity();
    double depth = 0.0;
    for (size_t t = 0; t < mesh.triangles().size(); ++t) {
        const auto [a, b, c] = mesh.corners(static_cast<int>(t));
        const Vec3 q = closest_on_triangle(p, a, b, c);
        const double d = (p - q).squaredNorm();
        if (d < best) {
            best = d;
            depth = std::max(0.0, -(p - q).dot(mesh.normals()[t]));
        }
    }
    return depth;
}

// Visibility of a point on a convex surface with outward normal n: the first
// hit of the ray from the viewpoint is the point itself iff it faces the viewer.
inline bool faces_viewer(const Vec3& p, const Vec3& n, const Vec3& view) { return n.dot(view - p) > 0.0; }

// ---- metrics ------------------------------------------------------------------------------------

inline double mean_dist_mm(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]).norm();
    return 1000.0 * s / static_cast<double>(a.size());
}

// Per-frame similarity alignment through Eigen's Umeyama.
inline std::vector<Vec3> umeyama_aligned(const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
    Eigen::Matrix3Xd src(3, static_cast<Eigen::Index>(x.size()));
    Eigen::Matrix3Xd dst(3, static_cast<Eigen::Index>(y.size()));
    for (size_t i = 0; i < x.size(); ++i) {
        src.col(static_cast<Eigen::Index>(i)) = x[i];
        dst.col(static_cast<Eigen::Index>(i)) = y[i];
    }
    const Eigen::Matrix4d t = Eigen::umeyama(src, dst, true);
    std::vector<Vec3> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = (t * x[i].homogeneous()).head<3>();
    return out;
}

// Every metric straight from its formula, on joints from the matrix chain
// and vertices from the direct blend (zero shape only).
struct DirectMetrics {
    double mpjpe = 0, pa_mpjpe = 0, pve = 0, pck = 0, accel = 0, gmpjpe = 0, t_error = 0;
};

inline DirectMetrics direct_evaluate(const motionkit::MotionSequence& pred, const motionkit::MotionSequence& gt,
                                     const motionkit::SkinnedBody& body, double pck_mm = 300.0) {
    const size_t n = gt.frames.size();
    const int k = motionkit::kJointCount;
    std::vector<std::vector<Vec3>> lp(n), lg(n);
    DirectMetrics m;
    double pck_hits = 0.0;
    double pve_sum = 0.0;
    double pve_count = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const auto jp = matrix_chain_fk(body.parent(), body.rest_joints(), pred.frames[i]);
        const auto jg = matrix_chain_fk(body.parent(), body.rest_joints(), gt.frames[i]);
        const auto pa = umeyama_aligned(jp, jg);
        for (int j = 0; j < k; ++j) {
            const auto ju = static_cast<size_t>(j);
            lp[i].push_back(jp[ju] - jp[0]);
            lg[i].push_back(jg[ju] - jg[0]);
            const double e = 1000.0 * (lp[i][ju] - lg[i][ju]).norm();
            m.mpjpe += e;
            pck_hits += e <= pck_mm ? 1.0 : 0.0;
            m.gmpjpe += 1000.0 * (jp[ju] - jg[ju]).norm();
            m.pa_mpjpe += 1000.0 * (pa[ju] - jg[ju]).norm();
        }
        m.t_error += 1000.0 * (pred.frames[i].translation - gt.frames[i].translation).norm();
        for (int v = 0; v < body.vertex_count(); ++v) {
            const Vec3 a = lbs_vertex(body, pred.frames[i], v) - jp[0];
            const Vec3 b = lbs_vertex(body, gt.frames[i], v) - jg[0];
            pve_sum += 1000.0 * (a - b).norm();
            pve_count += 1.0;
        }
    }
    const double nk = static_cast<double>(n) * k;
    m.mpjpe /= nk;
    m.gmpjpe /= nk;
    m.pa_mpjpe /= nk;
    m.pck = pck_hits / nk;
    m.t_error /= static_cast<double>(n);
    m.pve = pve_sum / pve_count;
    if (n >= 3) {
        const double r2 = gt.frame_rate * gt.frame_rate;
        double acc = 0.0;
        double cnt = 0.0;
        for (size_t i = 1; i + 1 < n; ++i) {
            for (size_t j = 0; j < static_cast<size_t>(k); ++j) {
                const Vec3 ap = lp[i + 1][j] - 2.0 * lp[i][j] + lp[i - 1][j];
                const Vec3 ag = lg[i + 1][j] - 2.0 * lg[i][j] + lg[i - 1][j];
                acc += 1000.0 * r2 * (ap - ag).norm();
                cnt += 1.0;
            }
        }
        m.accel = acc / cnt;
    }
    return m;
}

// ---- fusion ---------------------------------------------------------------------------------

// Worst relative disagreement between central differences and dual-number
// derivatives of sum(mmca_forward) with respect to every f3d entry. Entries
// whose derivative is tiny are measured against 1% of the largest one.
inline double mmca_gradient_check(const motionkit::fusion::MMCAWeights& w, const Eigen::MatrixXd& f3d,
                                  const Eigen::MatrixXd& f2d, double h = 1e-5) {
    using AD = Eigen::AutoDiffScalar<Eigen::VectorXd>;
    namespace fu = motionkit::fusion;
    const auto n = f3d.rows();
    const auto d = f3d.cols();
    const Eigen::Index vars = n * d;
    fu::Mat<AD> x(n, d);
    fu::Mat<AD> y(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            x(i, j) = AD(f3d(i, j), vars, i * d + j);
            y(i, j) = AD(f2d(i, j), Eigen::VectorXd::Zero(vars));
        }
    }
    const fu::Mat<AD> out = fu::mmca_forward<AD>(x, y, w);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(vars);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (out(i).derivatives().size() == vars) grad += out(i).derivatives();
    }
    const double scale = grad.cwiseAbs().maxCoeff();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            Eigen::MatrixXd a = f3d;
            Eigen::MatrixXd b = f3d;
            a(i, j) += h;
            b(i, j) -= h;
            const double fd = (fu::mmca_forward<double>(a, f2d, w).sum() - fu::mmca_forward<double>(b, f2d, w).sum()) / (2 * h);
            const double g = grad(i * d + j);
            worst = std::max(worst, std::abs(fd - g) / std::max(std::abs(g), 1e-2 * scale));
        }
    }
    return worst;
}

}  // namespace oracle
