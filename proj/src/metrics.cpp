#include "motionkit/metrics.hpp"

#include "motionkit/geometry.hpp"

#include <fmt/format.h>

namespace motionkit {

namespace {
constexpr double kMm = 1000.0;

std::vector<Vec3> root_aligned(const JointArray& j) {
    std::vector<Vec3> out(j.begin(), j.end());
    for (auto& p : out) p -= j[0];
    return out;
}
}  // namespace

double accel_error(std::span<const std::vector<Vec3>> pred, std::span<const std::vector<Vec3>> gt, double frame_rate) {
    if (pred.size() != gt.size()) throw ValidationError("accel inputs differ in frame count");
    if (pred.size() < 3) throw ValidationError("acceleration error needs at least 3 frames");
    if (!(frame_rate > 0.0)) throw ValidationError("frame rate must be positive");
    const double r2 = frame_rate * frame_rate;
    double sum = 0.0;
    size_t count = 0;
    for (size_t i = 1; i + 1 < pred.size(); ++i) {
        const size_t k = pred[i].size();
        if (gt[i].size() != k || pred[i - 1].size() != k || pred[i + 1].size() != k || gt[i - 1].size() != k ||
            gt[i + 1].size() != k) {
            throw ValidationError("accel inputs differ in joint count");
        }
        for (size_t j = 0; j < k; ++j) {
            const Vec3 ap = (pred[i + 1][j] - 2.0 * pred[i][j] + pred[i - 1][j]) * r2;
            const Vec3 ag = (gt[i + 1][j] - 2.0 * gt[i][j] + gt[i - 1][j]) * r2;
            sum += (ap - ag).norm();
            ++count;
        }
    }
    return count > 0 ? kMm * sum / static_cast<double>(count) : 0.0;
}

EvalReport evaluate(const MotionSequence& pred, const MotionSequence& gt, const SkinnedBody& body,
                    double pck_threshold_mm) {
    pred.validate();
    gt.validate();
    if (pred.size() != gt.size()) {
        throw ValidationError(fmt::format("prediction has {} frames, ground truth {}", pred.size(), gt.size()));
    }
    if (pred.frame_rate != gt.frame_rate) throw ValidationError("prediction and ground truth frame rates differ");

    const size_t n = gt.size();
    const ShapedRest rest_p = body.shaped(pred.shape);
    const ShapedRest rest_g = body.shaped(gt.shape);
    std::vector<std::vector<Vec3>> jp(n);
    std::vector<std::vector<Vec3>> jg(n);
    std::vector<double> frame_mpjpe(n), frame_pa(n), frame_pve(n), frame_g(n), frame_t(n);
    std::vector<size_t> frame_pck(n);

    const auto count = static_cast<long>(n);
#pragma omp parallel for schedule(static)
    for (long li = 0; li < count; ++li) {
        const auto i = static_cast<size_t>(li);
        const PosedSkeleton sp = pose_skeleton(body, pred.frames[i], rest_p);
        const PosedSkeleton sg = pose_skeleton(body, gt.frames[i], rest_g);
        jp[i] = root_aligned(sp.joints);
        jg[i] = root_aligned(sg.joints);

        double local = 0.0;
        double global = 0.0;
        size_t ok = 0;
        for (size_t j = 0; j < kJointCount; ++j) {
            const double e = (jp[i][j] - jg[i][j]).norm();
            local += e;
            if (kMm * e <= pck_threshold_mm) ++ok;
            global += (sp.joints[j] - sg.joints[j]).norm();
        }
        frame_mpjpe[i] = local;
        frame_g[i] = global;
        frame_pck[i] = ok;
        frame_t[i] = (sp.joints[0] - sg.joints[0]).norm();

        const Similarity s = procrustes_align(std::span<const Vec3>(sp.joints.data(), kJointCount),
                                              std::span<const Vec3>(sg.joints.data(), kJointCount));
        double pa = 0.0;
        for (size_t j = 0; j < kJointCount; ++j) pa += (s.apply(sp.joints[j]) - sg.joints[j]).norm();
        frame_pa[i] = pa;

        std::vector<Vec3> vp;
        std::vector<Vec3> vg;
        skin_vertices(body, sp, rest_p, vp, Exec::serial);
        skin_vertices(body, sg, rest_g, vg, Exec::serial);
        double pve = 0.0;
        for (size_t v = 0; v < vp.size(); ++v) pve += ((vp[v] - sp.joints[0]) - (vg[v] - sg.joints[0])).norm();
        frame_pve[i] = pve / static_cast<double>(vp.size());
    }

    EvalReport r;
    r.frame_count = n;
    size_t pck = 0;
    for (size_t i = 0; i < n; ++i) {
        r.mpjpe += frame_mpjpe[i];
        r.pa_mpjpe += frame_pa[i];
        r.gmpjpe += frame_g[i];
        r.t_error += frame_t[i];
        r.pve += frame_pve[i];
        pck += frame_pck[i];
    }
    const double nj = static_cast<double>(n * kJointCount);
    r.mpjpe *= kMm / nj;
    r.pa_mpjpe *= kMm / nj;
    r.gmpjpe *= kMm / nj;
    r.t_error *= kMm / static_cast<double>(n);
    r.pve *= kMm / static_cast<double>(n);
    r.pck03 = static_cast<double>(pck) / nj;
    r.accel = n >= 3 ? accel_error(jp, jg, gt.frame_rate) : 0.0;
    return r;
}

double mean_penetration_mm(const MotionSequence& motion, const SkinnedBody& body, const TriangleMesh& scene) {
    motion.validate();
    const TriangleBvh bvh(scene);
    const ShapedRest rest = body.shaped(motion.shape);
    double sum = 0.0;
    size_t count = 0;
    std::vector<Vec3> verts;
    for (const auto& f : motion.frames) {
        skin_vertices(body, pose_skeleton(body, f, rest), rest, verts);
        for (double d : penetration_depths(verts, bvh)) sum += d;
        count += verts.size();
    }
    return count > 0 ? kMm * sum / static_cast<double>(count) : 0.0;
}

}  // namespace motionkit
