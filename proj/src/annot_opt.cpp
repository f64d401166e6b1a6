#include "motionkit/annot_opt.hpp"

#include "motionkit/rotation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <exception>

namespace motionkit {

CalibrationMatrix::CalibrationMatrix(const Mat3& r_wi) : r_wi_(r_wi) {
    if (!r_wi.allFinite()) throw ValidationError("calibration matrix is not finite");
    if ((r_wi.transpose() * r_wi - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
        throw ValidationError("calibration matrix is not orthonormal");
    }
    if (std::abs(r_wi.determinant() - 1.0) > 1e-9) throw ValidationError("calibration matrix is a reflection");
}

void LossWeights::validate() const {
    const std::pair<const char*, double> all[] = {
        {"lambda_contact", lambda_contact}, {"lambda_smooth", lambda_smooth}, {"lambda_geo", lambda_geo},
        {"w_scene", w_scene},               {"w_self", w_self},               {"w_trans", w_trans},
        {"w_poses", w_poses},               {"w_joints", w_joints}};
    for (const auto& [name, v] : all) {
        if (!std::isfinite(v) || v < 0.0) throw ValidationError(fmt::format("weight {} must be finite and >= 0", name));
    }
}

void OptimConfig::validate() const {
    weights.validate();
    if (max_iters < 1) throw ValidationError("max_iters must be at least 1");
    if (!(fd_step_rot > 0.0) || !std::isfinite(fd_step_rot)) throw ValidationError("fd_step_rot must be positive");
    if (!(fd_step_trans > 0.0) || !std::isfinite(fd_step_trans)) throw ValidationError("fd_step_trans must be positive");
    if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ValidationError("step_size must be positive");
    if (!std::isfinite(hpr_gamma)) throw ValidationError("hpr_gamma must be finite");
    if (!(contact_margin >= 0.0) || !std::isfinite(contact_margin)) throw ValidationError("contact_margin must be >= 0");
    if (!(min_rel_decrease >= 0.0)) throw ValidationError("min_rel_decrease must be >= 0");
}

double combine_losses(double contact, double smooth, double geo, const LossWeights& w) {
    return w.lambda_contact * contact + w.lambda_smooth * smooth + w.lambda_geo * geo;
}

MotionSequence initialize_from_sensors(std::span<const JointArray> imu_poses, const CalibrationMatrix& r_wi,
                                       std::span<const Vec3> hip_centers, const BodyShape& shape, double frame_rate) {
    if (imu_poses.size() != hip_centers.size()) {
        throw ValidationError(fmt::format("{} IMU poses but {} hip centers", imu_poses.size(), hip_centers.size()));
    }
    MotionSequence m;
    m.shape = shape;
    m.frame_rate = frame_rate;
    m.frames.resize(imu_poses.size());
    for (size_t i = 0; i < imu_poses.size(); ++i) {
        PoseFrame& f = m.frames[i];
        f.pose = imu_poses[i];
        f.pose[0] = log_rotation(r_wi.rotation() * rodrigues(imu_poses[i][0]));
        f.translation = hip_centers[i];
    }
    m.validate();
    return m;
}

// ---- problem ------------------------------------------------------------------------------

FitProblem::FitProblem(const SkinnedBody& body, const BodyShape& shape, const TriangleMesh& scene,
                       std::vector<PointCloud> clouds, const Vec3& lidar_origin, double hpr_gamma)
    : body_(&body),
      rest_(body.shaped(shape)),
      scene_(scene),
      lidar_origin_(lidar_origin),
      hpr_gamma_(hpr_gamma),
      self_pairs_(non_adjacent_bone_pairs(body)) {
    if (!lidar_origin.allFinite()) throw ValidationError("lidar origin is not finite");
    clouds_.reserve(clouds.size());
    for (auto& c : clouds) {
        for (const auto& p : c) {
            if (!p.allFinite()) throw ValidationError("point cloud has non-finite coordinates");
        }
        clouds_.emplace_back(std::move(c));
    }
}

namespace {

// Runs body(i) for i in [0, n), in parallel when asked. Exceptions are
// captured per index and the lowest-index one is rethrown afterwards.
template <class F>
void for_frames(size_t n, Exec exec, F&& body) {
    std::vector<std::exception_ptr> errors(n);
    const auto count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::parallel && n > 1)
    for (long i = 0; i < count; ++i) {
        try {
            body(static_cast<size_t>(i));
        } catch (...) {
            errors[static_cast<size_t>(i)] = std::current_exception();
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

double self_overlap_sq(const FitProblem& problem, const JointArray& joints) {
    const auto caps = capsule_proxies(problem.body(), joints);
    double sum = 0.0;
    for (const auto& [a, b] : problem.self_pairs()) {
        const double o = capsule_overlap(caps[static_cast<size_t>(a)], caps[static_cast<size_t>(b)]);
        sum += o * o;
    }
    return sum;
}

struct FrameGeo {
    double chamfer = 0.0;
    bool used = false;
};

// Chamfer between the frame's cloud and the skinned vertices the LiDAR can see
// (not self-occluded and not behind scene geometry).
FrameGeo frame_geo(const FitProblem& problem, size_t frame, const std::vector<Vec3>& verts) {
    FrameGeo out;
    const KdTree& cloud = problem.clouds()[frame];
    if (cloud.size() == 0) return out;
    std::vector<int> vis;
    try {
        vis = visible_points(verts, problem.lidar_origin(), problem.scene(), problem.hpr_gamma());
    } catch (const ValidationError&) {
        return out;
    }
    if (vis.empty()) return out;
    std::vector<Vec3> pts;
    pts.reserve(vis.size());
    for (int v : vis) pts.push_back(verts[static_cast<size_t>(v)]);
    out.chamfer = chamfer_distance(cloud, KdTree(std::move(pts)), Exec::serial);
    out.used = true;
    return out;
}

void check_clouds(const MotionSequence& motion, const FitProblem& problem) {
    if (problem.clouds().size() != motion.size()) {
        throw ValidationError(
            fmt::format("{} point clouds for {} frames", problem.clouds().size(), motion.size()));
    }
}

struct FrameTerms {
    double scene = 0.0;
    double self = 0.0;
    FrameGeo geo;
};

std::vector<FrameTerms> evaluate_frames(const MotionSequence& motion, const FitProblem& problem, bool contact,
                                        bool geo, Exec exec) {
    std::vector<FrameTerms> out(motion.size());
    if (!contact && !geo) return out;
    if (geo) check_clouds(motion, problem);
    for_frames(motion.size(), exec, [&](size_t i) {
        const PosedSkeleton sk = pose_skeleton(problem.body(), motion.frames[i], problem.rest());
        std::vector<Vec3> verts;
        skin_vertices(problem.body(), sk, problem.rest(), verts, Exec::serial);
        FrameTerms& t = out[i];
        if (contact) {
            if (problem.has_scene()) {
                for (double d : penetration_depths(verts, problem.scene(), Exec::serial)) t.scene += d * d;
            }
            t.self = self_overlap_sq(problem, sk.joints);
        }
        if (geo) t.geo = frame_geo(problem, i, verts);
    });
    return out;
}

double contact_from(const std::vector<FrameTerms>& terms, const LossWeights& w, LossBreakdown* parts) {
    double scene = 0.0;
    double self = 0.0;
    for (const auto& t : terms) {
        scene += t.scene;
        self += t.self;
    }
    const double n = static_cast<double>(terms.size());
    const double cs = w.w_scene * scene / n;
    const double cf = w.w_self * self / n;
    if (parts) {
        parts->contact_scene = cs;
        parts->contact_self = cf;
    }
    return cs + cf;
}

double geo_from(const std::vector<FrameTerms>& terms, LossBreakdown* parts) {
    double sum = 0.0;
    int used = 0;
    for (const auto& t : terms) {
        if (!t.geo.used) continue;
        sum += t.geo.chamfer;
        ++used;
    }
    if (parts) parts->geo_frames_skipped = static_cast<int>(terms.size()) - used;
    return used > 0 ? sum / used : 0.0;
}

}  // namespace

double loss_contact(const MotionSequence& motion, const FitProblem& problem, const LossWeights& w, Exec exec,
                    LossBreakdown* parts) {
    motion.validate();
    return contact_from(evaluate_frames(motion, problem, true, false, exec), w, parts);
}

double loss_geo(const MotionSequence& motion, const FitProblem& problem, Exec exec, LossBreakdown* parts) {
    motion.validate();
    return geo_from(evaluate_frames(motion, problem, false, true, exec), parts);
}

MotionSequence recenter_on_clouds(const MotionSequence& motion, const FitProblem& problem, int rounds, Exec exec) {
    motion.validate();
    check_clouds(motion, problem);
    if (rounds < 0) throw ValidationError("recenter rounds must be >= 0");
    MotionSequence out = motion;
    for_frames(out.size(), exec, [&](size_t i) {
        const auto& cloud = problem.clouds()[i].points();
        if (cloud.empty()) return;
        Vec3 target = Vec3::Zero();
        for (const auto& p : cloud) target += p;
        target /= static_cast<double>(cloud.size());
        PoseFrame& f = out.frames[i];
        for (int r = 0; r < rounds; ++r) {
            std::vector<Vec3> verts;
            skin_vertices(problem.body(), pose_skeleton(problem.body(), f, problem.rest()), problem.rest(), verts,
                          Exec::serial);
            const auto vis = visible_points(verts, problem.lidar_origin(), problem.scene(), problem.hpr_gamma());
            if (vis.empty()) return;
            Vec3 c = Vec3::Zero();
            for (int v : vis) c += verts[static_cast<size_t>(v)];
            f.translation += target - c / static_cast<double>(vis.size());
        }
    });
    out.validate();
    return out;
}

double loss_smooth(const MotionSequence& motion, const FitProblem& problem, const LossWeights& w,
                   LossBreakdown* parts) {
    motion.validate();
    const size_t n = motion.size();
    std::vector<JointArray> joints(n);
    for (size_t i = 0; i < n; ++i) joints[i] = pose_skeleton(problem.body(), motion.frames[i], problem.rest()).joints;

    double trans = 0.0;
    double poses = 0.0;
    double accel = 0.0;
    for (size_t i = 1; i + 1 < n; ++i) {
        const auto& f = motion.frames;
        trans += (f[i + 1].translation - 2.0 * f[i].translation + f[i - 1].translation).squaredNorm();
        for (size_t j = 0; j < kJointCount; ++j) {
            accel += (joints[i + 1][j] - 2.0 * joints[i][j] + joints[i - 1][j]).squaredNorm();
        }
    }
    for (size_t i = 0; i + 1 < n; ++i) {
        for (size_t j = 1; j < kJointCount; ++j) {
            const double a = geodesic_angle(rodrigues(motion.frames[i].pose[j]), rodrigues(motion.frames[i + 1].pose[j]));
            poses += a * a;
        }
    }
    const double st = n >= 3 ? w.w_trans * trans / static_cast<double>(n - 2) : 0.0;
    const double sj = n >= 3 ? w.w_joints * accel / static_cast<double>(n - 2) : 0.0;
    const double sp = n >= 2 ? w.w_poses * poses / static_cast<double>(n - 1) : 0.0;
    if (parts) {
        parts->smooth_trans = st;
        parts->smooth_poses = sp;
        parts->smooth_joints = sj;
        parts->smooth_partial = n < 3;
    }
    return st + sp + sj;
}

LossBreakdown total_loss(const MotionSequence& motion, const FitProblem& problem, const LossWeights& w, Exec exec) {
    motion.validate();
    w.validate();
    LossBreakdown b;
    const bool contact = w.lambda_contact > 0.0;
    const bool geo = w.lambda_geo > 0.0;
    const auto terms = evaluate_frames(motion, problem, contact, geo, exec);
    if (contact) b.contact = contact_from(terms, w, &b);
    if (geo) b.geo = geo_from(terms, &b);
    if (w.lambda_smooth > 0.0) b.smooth = loss_smooth(motion, problem, w, &b);
    b.total = combine_losses(b.contact, b.smooth, b.geo, w);
    return b;
}

double loss_contact(const MotionSequence& motion, const SkinnedBody& body, const TriangleMesh& scene,
                    const LossWeights& w) {
    const FitProblem problem(body, motion.shape, scene, {}, Vec3::Zero());
    return loss_contact(motion, problem, w);
}

double loss_smooth(const MotionSequence& motion, const SkinnedBody& body, const LossWeights& w) {
    const FitProblem problem(body, motion.shape, TriangleMesh(), {}, Vec3::Zero());
    return loss_smooth(motion, problem, w);
}

double loss_geo(const MotionSequence& motion, const SkinnedBody& body, std::vector<PointCloud> clouds,
                const Vec3& lidar_origin, double gamma) {
    const FitProblem problem(body, motion.shape, TriangleMesh(), std::move(clouds), lidar_origin, gamma);
    return loss_geo(motion, problem);
}

// ---- finite-difference gradient ------------------------------------------------------------------

namespace {

// Per-frame model of the loss with its active sets frozen: each vertex carries
// a quadratic pull a * |x - m|^2 toward its chamfer partners and optionally a
// contact plane; capsules and smoothness are evaluated exactly.
struct FrameModel {
    std::vector<double> pull;       // a per vertex (0 when the vertex has no partner)
    std::vector<Vec3> anchor;       // m per vertex
    std::vector<int> plane_of;      // index into planes, -1 when not a contact candidate
    std::vector<std::pair<Vec3, Vec3>> planes;  // point, outward normal
    bool geo_used = false;
};

struct Scales {
    double geo = 0.0;
    double scene = 0.0;
    double self = 0.0;
    double trans = 0.0;
    double poses = 0.0;
    double joints = 0.0;
};

class LocalObjective {
public:
    LocalObjective(const MotionSequence& motion, const FitProblem& problem, const Scales& scales,
                   const std::vector<JointArray>& joints, const std::vector<std::array<Mat3, kJointCount>>& local_rot,
                   const std::vector<FrameModel>& models, const std::vector<std::vector<std::pair<int, int>>>& pairs_by_joint)
        : motion_(motion),
          problem_(problem),
          s_(scales),
          joints_(joints),
          local_rot_(local_rot),
          models_(models),
          pairs_by_joint_(pairs_by_joint) {}

    // Terms of the loss that depend on variable `var` of frame `f`, evaluated at `pose`.
    double operator()(size_t f, int var, const PoseFrame& pose) const;

private:
    const MotionSequence& motion_;
    const FitProblem& problem_;
    Scales s_;
    const std::vector<JointArray>& joints_;
    const std::vector<std::array<Mat3, kJointCount>>& local_rot_;
    const std::vector<FrameModel>& models_;
    const std::vector<std::vector<std::pair<int, int>>>& pairs_by_joint_;
};

double LocalObjective::operator()(size_t f, int var, const PoseFrame& pose) const {
    const SkinnedBody& body = problem_.body();
    const ShapedRest& rest = problem_.rest();
    const PosedSkeleton sk = pose_skeleton(body, pose, rest);
    const int joint = var < 3 ? 0 : (var - 3) / 3;
    const FrameModel& m = models_[f];
    double e = 0.0;

    if (s_.geo > 0.0 || s_.scene > 0.0) {
        const auto skin_one = [&](int v) {
            Vec3 x = Vec3::Zero();
            const Vec3& r = rest.vertices[static_cast<size_t>(v)];
            for (const auto& w : body.weights_of(v)) {
                const auto& t = sk.transforms[static_cast<size_t>(w.joint)];
                x += w.weight * (t.rotation * r + t.offset);
            }
            return x;
        };
        double geo = 0.0;
        double scene = 0.0;
        const auto visit = [&](int v) {
            const auto vu = static_cast<size_t>(v);
            const double a = m.pull[vu];
            const int p = m.plane_of[vu];
            if (a == 0.0 && p < 0) return;
            const Vec3 x = skin_one(v);
            if (a != 0.0) geo += a * (x - m.anchor[vu]).squaredNorm();
            if (p >= 0) {
                const auto& [pt, n] = m.planes[static_cast<size_t>(p)];
                const double d = std::max(0.0, -(x - pt).dot(n));
                scene += d * d;
            }
        };
        if (joint == 0) {
            for (int v = 0; v < body.vertex_count(); ++v) visit(v);
        } else {
            for (int v : body.vertices_moved_by(joint)) visit(v);
        }
        e += s_.geo * geo + s_.scene * scene;
    }

    if (s_.self > 0.0 && joint > 0) {
        const auto caps = capsule_proxies(body, sk.joints);
        double self = 0.0;
        for (const auto& [a, b] : pairs_by_joint_[static_cast<size_t>(joint)]) {
            const double o = capsule_overlap(caps[static_cast<size_t>(a)], caps[static_cast<size_t>(b)]);
            self += o * o;
        }
        e += s_.self * self;
    }

    const size_t n = motion_.size();
    const auto& fr = motion_.frames;
    const auto trans_at = [&](size_t i) -> const Vec3& { return i == f ? pose.translation : fr[i].translation; };
    const auto joints_at = [&](size_t i) -> const JointArray& { return i == f ? sk.joints : joints_[i]; };
    if (n >= 3) {
        const size_t lo = f > 1 ? f - 1 : 1;
        const size_t hi = std::min(f + 1, n - 2);
        for (size_t c = lo; c <= hi; ++c) {
            if (s_.trans > 0.0 && var < 3) {
                e += s_.trans * (trans_at(c + 1) - 2.0 * trans_at(c) + trans_at(c - 1)).squaredNorm();
            }
            if (s_.joints > 0.0) {
                const auto& a = joints_at(c + 1);
                const auto& b = joints_at(c);
                const auto& d = joints_at(c - 1);
                double acc = 0.0;
                for (size_t j = 0; j < kJointCount; ++j) acc += (a[j] - 2.0 * b[j] + d[j]).squaredNorm();
                e += s_.joints * acc;
            }
        }
    }
    if (s_.poses > 0.0 && joint > 0 && var >= 3) {
        const auto ju = static_cast<size_t>(joint);
        const Mat3 r = rodrigues(pose.pose[ju]);
        if (f > 0) {
            const double a = geodesic_angle(local_rot_[f - 1][ju], r);
            e += s_.poses * a * a;
        }
        if (f + 1 < n) {
            const double a = geodesic_angle(r, local_rot_[f + 1][ju]);
            e += s_.poses * a * a;
        }
    }
    return e;
}

FrameModel build_model(const FitProblem& problem, size_t f, const PoseFrame& pose, bool geo, bool contact,
                       double margin) {
    const SkinnedBody& body = problem.body();
    const PosedSkeleton sk = pose_skeleton(body, pose, problem.rest());
    std::vector<Vec3> verts;
    skin_vertices(body, sk, problem.rest(), verts, Exec::serial);
    const size_t nv = verts.size();

    FrameModel m;
    m.pull.assign(nv, 0.0);
    m.anchor.assign(nv, Vec3::Zero());
    m.plane_of.assign(nv, -1);

    if (contact && problem.has_scene()) {
        const TriangleMesh& mesh = problem.scene().mesh();
        for (size_t v = 0; v < nv; ++v) {
            const ClosestTriangle c = problem.scene().closest(verts[v]);
            const Vec3& n = mesh.normals()[static_cast<size_t>(c.triangle)];
            const double depth = -(verts[v] - c.point).dot(n);
            if (depth > 0.0 || std::sqrt(c.sq_distance) < margin) {
                m.plane_of[v] = static_cast<int>(m.planes.size());
                m.planes.emplace_back(c.point, n);
            }
        }
    }

    if (geo) {
        const KdTree& cloud = problem.clouds()[f];
        if (cloud.size() == 0) return m;
        std::vector<int> vis;
        try {
            vis = visible_points(verts, problem.lidar_origin(), problem.scene(), problem.hpr_gamma());
        } catch (const ValidationError&) {
            return m;
        }
        if (vis.empty()) return m;
        std::vector<Vec3> vis_pts;
        vis_pts.reserve(vis.size());
        for (int v : vis) vis_pts.push_back(verts[static_cast<size_t>(v)]);
        const KdTree vis_tree(vis_pts);

        // Accumulate weighted sums, then convert to (a, m).
        std::vector<Vec3> wsum(nv, Vec3::Zero());
        const double wc = 1.0 / static_cast<double>(cloud.size());
        for (const Vec3& c : cloud.points()) {
            const auto v = static_cast<size_t>(vis[static_cast<size_t>(vis_tree.nearest(c).index)]);
            m.pull[v] += wc;
            wsum[v] += wc * c;
        }
        const double wv = 1.0 / static_cast<double>(vis.size());
        for (int vi : vis) {
            const auto v = static_cast<size_t>(vi);
            const Vec3& q = cloud.points()[static_cast<size_t>(cloud.nearest(verts[v]).index)];
            m.pull[v] += wv;
            wsum[v] += wv * q;
        }
        for (size_t v = 0; v < nv; ++v) {
            if (m.pull[v] > 0.0) m.anchor[v] = wsum[v] / m.pull[v];
        }
        m.geo_used = true;
    }
    return m;
}

// Non-adjacent bone pairs whose relative placement changes when `joint` rotates:
// exactly one bone lies below the joint.
std::vector<std::vector<std::pair<int, int>>> pairs_by_joint(const FitProblem& problem) {
    const SkinnedBody& body = problem.body();
    std::vector<std::vector<std::pair<int, int>>> out(kJointCount);
    for (int j = 1; j < kJointCount; ++j) {
        std::array<bool, kJointCount> below{};
        for (int c : body.subtree(j)) {
            if (c != j) below[static_cast<size_t>(c)] = true;
        }
        for (const auto& [a, b] : problem.self_pairs()) {
            // Bone index k has child joint k + 1.
            const bool ma = below[static_cast<size_t>(a + 1)];
            const bool mb = below[static_cast<size_t>(b + 1)];
            if (ma != mb) out[static_cast<size_t>(j)].emplace_back(a, b);
        }
    }
    return out;
}

}  // namespace

Gradient fd_gradient(const MotionSequence& motion, const FitProblem& problem, const OptimConfig& config, Exec exec) {
    motion.validate();
    config.validate();
    const size_t n = motion.size();
    const LossWeights& w = config.weights;
    const bool geo = w.lambda_geo > 0.0;
    const bool contact = w.lambda_contact > 0.0;
    if (geo) check_clouds(motion, problem);

    std::vector<JointArray> joints(n);
    std::vector<std::array<Mat3, kJointCount>> local_rot(n);
    std::vector<FrameModel> models(n);
    for_frames(n, exec, [&](size_t i) {
        joints[i] = pose_skeleton(problem.body(), motion.frames[i], problem.rest()).joints;
        for (size_t j = 0; j < kJointCount; ++j) local_rot[i][j] = rodrigues(motion.frames[i].pose[j]);
        models[i] = build_model(problem, i, motion.frames[i], geo, contact, config.contact_margin);
    });

    Scales s;
    const double nf = static_cast<double>(n);
    int geo_frames = 0;
    for (const auto& m : models) geo_frames += m.geo_used ? 1 : 0;
    if (geo && geo_frames > 0) s.geo = w.lambda_geo / geo_frames;
    if (contact) {
        s.scene = w.lambda_contact * w.w_scene / nf;
        s.self = w.lambda_contact * w.w_self / nf;
    }
    if (w.lambda_smooth > 0.0) {
        if (n >= 3) {
            s.trans = w.lambda_smooth * w.w_trans / (nf - 2.0);
            s.joints = w.lambda_smooth * w.w_joints / (nf - 2.0);
        }
        if (n >= 2) s.poses = w.lambda_smooth * w.w_poses / (nf - 1.0);
    }

    const auto pairs = pairs_by_joint(problem);
    const LocalObjective objective(motion, problem, s, joints, local_rot, models, pairs);

    Gradient g;
    g.values.assign(n * kVarsPerFrame, 0.0);
    g.curvature.assign(n * kVarsPerFrame, 0.0);
    for_frames(n, exec, [&](size_t f) {
        PoseFrame p = motion.frames[f];
        for (int var = 0; var < kVarsPerFrame; ++var) {
            const double h = var < 3 ? config.fd_step_trans : config.fd_step_rot;
            double& x = var < 3 ? p.translation[var] : p.pose[static_cast<size_t>((var - 3) / 3)][(var - 3) % 3];
            const double x0 = x;
            x = x0 + h;
            const double ep = objective(f, var, p);
            x = x0 - h;
            const double em = objective(f, var, p);
            x = x0;
            const size_t k = f * kVarsPerFrame + static_cast<size_t>(var);
            g.values[k] = (ep - em) / (2.0 * h);
            if (config.precondition) {
                const double e0 = objective(f, var, p);
                g.curvature[k] = (ep - 2.0 * e0 + em) / (h * h);
            }
        }
    });
    return g;
}

// ---- descent -------------------------------------------------------------------------------------

namespace {

MotionSequence apply_step(const MotionSequence& m, const std::vector<double>& dir, double alpha) {
    MotionSequence out = m;
    for (size_t f = 0; f < out.size(); ++f) {
        PoseFrame& p = out.frames[f];
        const double* d = dir.data() + f * kVarsPerFrame;
        for (int c = 0; c < 3; ++c) p.translation[c] -= alpha * d[c];
        for (size_t j = 0; j < kJointCount; ++j) {
            for (int c = 0; c < 3; ++c) p.pose[j][c] -= alpha * d[3 + 3 * j + static_cast<size_t>(c)];
        }
    }
    return out;
}

// Gradient scaled by the inverse diagonal curvature. Curvature is floored per
// variable slot (same coordinate across frames), since negative or tiny
// curvature would otherwise produce huge steps; each component is then capped.
std::vector<double> descent_direction(const Gradient& g, bool precondition) {
    if (!precondition) return g.values;
    constexpr double kFloorFraction = 0.1;
    constexpr double kMaxTrans = 0.1;  // m
    constexpr double kMaxRot = 0.1;    // rad
    std::array<double, kVarsPerFrame> sum{};
    std::array<int, kVarsPerFrame> count{};
    for (size_t k = 0; k < g.values.size(); ++k) {
        if (g.curvature[k] > 0.0) {
            sum[k % kVarsPerFrame] += g.curvature[k];
            ++count[k % kVarsPerFrame];
        }
    }
    std::array<double, kVarsPerFrame> floor{};
    for (size_t v = 0; v < floor.size(); ++v) {
        floor[v] = std::max(1e-12, count[v] > 0 ? kFloorFraction * sum[v] / count[v] : 1.0);
    }
    std::vector<double> d(g.values.size());
    for (size_t k = 0; k < d.size(); ++k) {
        const size_t v = k % kVarsPerFrame;
        const double cap = v < 3 ? kMaxTrans : kMaxRot;
        d[k] = std::clamp(g.values[k] / std::max(g.curvature[k], floor[v]), -cap, cap);
    }
    return d;
}

}  // namespace

OptimResult optimize(const MotionSequence& initial, const FitProblem& problem, const OptimConfig& config, Exec exec) {
    initial.validate();
    config.validate();
    OptimResult res;
    res.motion = initial;
    LossBreakdown current = total_loss(initial, problem, config.weights, exec);
    if (!std::isfinite(current.total)) throw NumericalError("initial loss is not finite");
    res.history.push_back({0, current, 0.0});

    double alpha = config.step_size;
    for (int it = 1; it <= config.max_iters; ++it) {
        const Gradient g = fd_gradient(res.motion, problem, config, exec);
        const auto dir = descent_direction(g, config.precondition);
        bool any = false;
        for (double d : dir) {
            if (!std::isfinite(d)) throw NumericalError("gradient is not finite");
            any = any || d != 0.0;
        }
        if (!any) {
            res.stalled = true;
            break;
        }

        double step = std::min(config.step_size, 2.0 * alpha);
        bool accepted = false;
        for (int halving = 0; halving <= 8; ++halving, step *= 0.5) {
            MotionSequence trial = apply_step(res.motion, dir, step);
            const LossBreakdown tl = total_loss(trial, problem, config.weights, exec);
            if (std::isfinite(tl.total) && tl.total < current.total) {
                const double gain = (current.total - tl.total) / std::max(current.total, 1e-300);
                res.motion = std::move(trial);
                current = tl;
                alpha = step;
                res.history.push_back({it, current, step});
                res.iterations = it;
                accepted = true;
                if (gain < config.min_rel_decrease) return res;
                break;
            }
        }
        if (!accepted) {
            res.stalled = true;
            break;
        }
    }
    return res;
}

}  // namespace motionkit
