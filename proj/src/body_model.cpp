#include "motionkit/body_model.hpp"

#include "motionkit/kernels.hpp"
#include "motionkit/rotation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace motionkit {

const std::array<const char*, kJointCount> kJointNames = {
    "pelvis",     "left_hip",       "right_hip",      "spine1",     "left_knee",   "right_knee",
    "spine2",     "left_ankle",     "right_ankle",    "spine3",     "left_foot",   "right_foot",
    "neck",       "left_collar",    "right_collar",   "head",       "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",    "left_wrist",     "right_wrist", "left_hand",  "right_hand"};

const std::array<int, kJointCount> kSmplParents = {-1, 0,  0,  0,  1,  2,  3,  4,  5,  6,  7,  8,
                                                   9,  9,  9,  12, 13, 14, 16, 17, 18, 19, 20, 21};

void BodyShape::validate() const {
    for (double b : beta) {
        if (!std::isfinite(b)) throw ValidationError("shape coefficient is not finite");
    }
}

void PoseFrame::validate() const {
    if (!is_finite(translation)) throw ValidationError("translation is not finite");
    for (const auto& r : pose) {
        if (!is_finite(r)) throw ValidationError("pose rotation is not finite");
    }
}

void MotionSequence::validate() const {
    if (frames.empty()) throw ValidationError("motion has no frames");
    if (!(frame_rate > 0.0) || !std::isfinite(frame_rate)) throw ValidationError("frame_rate must be positive");
    shape.validate();
    for (const auto& f : frames) f.validate();
}

SkinnedBody::SkinnedBody(std::array<int, kJointCount> parent, JointArray rest_joints,
                         std::vector<Vec3> template_vertices, Eigen::MatrixXd skin_weights,
                         BoneShapeDirs shape_dirs, BoneRadii capsule_radius)
    : parent_(parent),
      rest_joints_(rest_joints),
      template_vertices_(std::move(template_vertices)),
      skin_weights_(std::move(skin_weights)),
      shape_dirs_(shape_dirs),
      capsule_radius_(capsule_radius) {
    if (parent_[0] != -1) throw StructuralError("joint 0 must be the root (parent -1)");
    for (int j = 1; j < kJointCount; ++j) {
        const int p = parent_[static_cast<size_t>(j)];
        if (p < 0 || p >= kJointCount) {
            throw StructuralError(fmt::format("joint {} has invalid parent index {}", j, p));
        }
        // Topological order rules out cycles.
        if (p >= j) throw StructuralError(fmt::format("joint {} has parent {} that does not precede it", j, p));
        const double len = (rest_joints_[static_cast<size_t>(j)] - rest_joints_[static_cast<size_t>(p)]).norm();
        if (!(len > 0.0)) throw StructuralError(fmt::format("bone {}->{} has zero rest length", p, j));
        if (!(capsule_radius_[static_cast<size_t>(j)] > 0.0)) {
            throw ValidationError(fmt::format("bone {} capsule radius must be positive", j));
        }
    }
    for (const auto& rj : rest_joints_) {
        if (!is_finite(rj)) throw ValidationError("rest joint is not finite");
    }

    const auto v_count = static_cast<Eigen::Index>(template_vertices_.size());
    if (skin_weights_.rows() != v_count || skin_weights_.cols() != kJointCount) {
        throw ValidationError(fmt::format("skin weights must be {}x{}, got {}x{}", v_count, kJointCount,
                                          skin_weights_.rows(), skin_weights_.cols()));
    }
    sparse_offsets_.reserve(template_vertices_.size() + 1);
    sparse_offsets_.push_back(0);
    for (Eigen::Index v = 0; v < v_count; ++v) {
        if (!is_finite(template_vertices_[static_cast<size_t>(v)])) throw ValidationError("template vertex is not finite");
        double sum = 0.0;
        for (int j = 0; j < kJointCount; ++j) {
            const double w = skin_weights_(v, j);
            if (!(w >= 0.0) || !std::isfinite(w)) {
                throw ValidationError(fmt::format("vertex {} has invalid weight on joint {}", v, j));
            }
            sum += w;
            if (w > 0.0) sparse_weights_.push_back({j, w});
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw ValidationError(fmt::format("vertex {} weights sum to {}, not 1", v, sum));
        }
        sparse_offsets_.push_back(sparse_weights_.size());
    }

    subtrees_.assign(kJointCount, {});
    for (int j = kJointCount - 1; j >= 0; --j) {
        auto& st = subtrees_[static_cast<size_t>(j)];
        st.insert(st.begin(), j);
        if (j > 0) {
            auto& ps = subtrees_[static_cast<size_t>(parent_[static_cast<size_t>(j)])];
            ps.insert(ps.end(), st.begin(), st.end());
        }
    }
    for (auto& st : subtrees_) std::sort(st.begin(), st.end());

    moved_vertices_.assign(kJointCount, {});
    for (int j = 0; j < kJointCount; ++j) {
        std::array<bool, kJointCount> in_subtree{};
        for (int s : subtrees_[static_cast<size_t>(j)]) in_subtree[static_cast<size_t>(s)] = true;
        for (int v = 0; v < vertex_count(); ++v) {
            for (const auto& sw : weights_of(v)) {
                if (in_subtree[static_cast<size_t>(sw.joint)]) {
                    moved_vertices_[static_cast<size_t>(j)].push_back(v);
                    break;
                }
            }
        }
    }
}

std::vector<std::pair<int, int>> SkinnedBody::bones() const {
    std::vector<std::pair<int, int>> out;
    out.reserve(kBoneCount);
    for (int j = 1; j < kJointCount; ++j) out.emplace_back(parent_[static_cast<size_t>(j)], j);
    return out;
}

std::array<double, kJointCount> SkinnedBody::bone_scales(const BodyShape& shape) const {
    std::array<double, kJointCount> scales{};
    scales[0] = 1.0;
    for (int j = 1; j < kJointCount; ++j) {
        double s = 1.0;
        for (int k = 0; k < kShapeDims; ++k) s += shape_dirs_[static_cast<size_t>(j)][static_cast<size_t>(k)] * shape.beta[static_cast<size_t>(k)];
        if (!(s > 0.0)) throw ValidationError(fmt::format("shape gives non-positive length scale for bone {}", j));
        scales[static_cast<size_t>(j)] = s;
    }
    return scales;
}

ShapedRest SkinnedBody::shaped(const BodyShape& shape) const {
    shape.validate();
    const auto scales = bone_scales(shape);
    ShapedRest rest;
    rest.joints[0] = rest_joints_[0];
    for (int j = 1; j < kJointCount; ++j) {
        const auto p = static_cast<size_t>(parent_[static_cast<size_t>(j)]);
        const auto ju = static_cast<size_t>(j);
        rest.joints[ju] = rest.joints[p] + scales[ju] * (rest_joints_[ju] - rest_joints_[p]);
    }
    // Vertices follow the weighted displacement of their skinning joints.
    rest.vertices.resize(template_vertices_.size());
    for (int v = 0; v < vertex_count(); ++v) {
        Vec3 d = Vec3::Zero();
        for (const auto& sw : weights_of(v)) {
            const auto j = static_cast<size_t>(sw.joint);
            d += sw.weight * (rest.joints[j] - rest_joints_[j]);
        }
        rest.vertices[static_cast<size_t>(v)] = template_vertices_[static_cast<size_t>(v)] + d;
    }
    return rest;
}

PosedSkeleton pose_skeleton(const SkinnedBody& body, const PoseFrame& frame, const ShapedRest& rest) {
    PosedSkeleton sk;
    const auto& parent = body.parent();
    sk.global_rotations[0] = rodrigues(frame.pose[0]);
    sk.joints[0] = frame.translation;
    for (int j = 1; j < kJointCount; ++j) {
        const auto ju = static_cast<size_t>(j);
        const auto p = static_cast<size_t>(parent[ju]);
        sk.global_rotations[ju] = sk.global_rotations[p] * rodrigues(frame.pose[ju]);
        sk.joints[ju] = sk.joints[p] + sk.global_rotations[p] * (rest.joints[ju] - rest.joints[p]);
    }
    for (size_t j = 0; j < kJointCount; ++j) {
        sk.transforms[j].rotation = sk.global_rotations[j];
        sk.transforms[j].offset = sk.joints[j] - sk.global_rotations[j] * rest.joints[j];
    }
    return sk;
}

JointArray forward_kinematics(const SkinnedBody& body, const PoseFrame& frame, const BodyShape& shape) {
    frame.validate();
    return pose_skeleton(body, frame, body.shaped(shape)).joints;
}

void skin_vertices(const SkinnedBody& body, const PosedSkeleton& skeleton, const ShapedRest& rest,
                   std::vector<Vec3>& out, Exec exec) {
    out.resize(rest.vertices.size());
    if (exec == Exec::parallel) {
        kernels::omp::skin(body, skeleton.transforms, rest.vertices, out);
    } else {
        kernels::serial::skin(body, skeleton.transforms, rest.vertices, out);
    }
}

std::vector<Vec3> skin_vertices(const SkinnedBody& body, const PoseFrame& frame, const BodyShape& shape, Exec exec) {
    frame.validate();
    const ShapedRest rest = body.shaped(shape);
    std::vector<Vec3> out;
    skin_vertices(body, pose_skeleton(body, frame, rest), rest, out, exec);
    return out;
}

std::vector<Capsule> capsule_proxies(const SkinnedBody& body, const JointArray& posed_joints) {
    std::vector<Capsule> caps;
    caps.reserve(kBoneCount);
    for (const auto& [p, c] : body.bones()) {
        caps.push_back({posed_joints[static_cast<size_t>(p)], posed_joints[static_cast<size_t>(c)],
                        body.capsule_radius()[static_cast<size_t>(c)]});
    }
    return caps;
}

std::vector<Capsule> capsule_proxies(const SkinnedBody& body, const PoseFrame& frame, const BodyShape& shape) {
    return capsule_proxies(body, forward_kinematics(body, frame, shape));
}

std::vector<std::pair<int, int>> non_adjacent_bone_pairs(const SkinnedBody& body) {
    const auto bones = body.bones();
    std::vector<std::pair<int, int>> pairs;
    for (size_t a = 0; a < bones.size(); ++a) {
        for (size_t b = a + 1; b < bones.size(); ++b) {
            const auto [pa, ca] = bones[a];
            const auto [pb, cb] = bones[b];
            if (pa == pb || pa == cb || ca == pb || ca == cb) continue;
            pairs.emplace_back(static_cast<int>(a), static_cast<int>(b));
        }
    }
    return pairs;
}

}  // namespace motionkit
