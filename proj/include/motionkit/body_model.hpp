#pragma once

#include "motionkit/geometry_types.hpp"
#include "motionkit/types.hpp"

#include <Eigen/Dense>

#include <array>
#include <span>
#include <string>
#include <vector>

namespace motionkit {

inline constexpr int kJointCount = 24;
inline constexpr int kShapeDims = 10;
inline constexpr int kBoneCount = kJointCount - 1;

using JointArray = std::array<Vec3, kJointCount>;

/// Joint names in the fixed 24-joint SMPL order.
extern const std::array<const char*, kJointCount> kJointNames;

/// Parent table of the SMPL kinematic tree (root parent is -1).
extern const std::array<int, kJointCount> kSmplParents;

struct BodyShape {
    std::array<double, kShapeDims> beta{};

    void validate() const;
};

struct PoseFrame {
    Vec3 translation = Vec3::Zero();
    JointArray pose = zero_pose();  // axis-angle, index 0 is the pelvis

    static JointArray zero_pose() {
        JointArray p;
        p.fill(Vec3::Zero());
        return p;
    }
    void validate() const;
};

struct MotionSequence {
    std::vector<PoseFrame> frames;
    BodyShape shape;
    double frame_rate = 20.0;

    size_t size() const { return frames.size(); }
    void validate() const;
};

struct SkinWeight {
    int joint = 0;
    double weight = 0.0;
};

/// One posed joint transform: x -> rotation * x + offset, applied to shaped rest space.
struct JointTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 offset = Vec3::Zero();
};

/// Rest geometry after applying a BodyShape; cached because shape is fixed
/// while poses change.
struct ShapedRest {
    JointArray joints;
    std::vector<Vec3> vertices;
};

/// Posed kinematic state of one frame.
struct PosedSkeleton {
    JointArray joints;                               // world positions
    std::array<Mat3, kJointCount> global_rotations;  // root-to-joint composed rotations
    std::array<JointTransform, kJointCount> transforms;
};

/// Parametric body: kinematic tree, rest template, skinning weights, per-bone
/// length blend directions and capsule radii for self-contact proxies.
///
/// Per-bone arrays are indexed by the bone's child joint; entry 0 is unused.
/// Joints are stored in topological order (parent index < child index).
class SkinnedBody {
public:
    using BoneShapeDirs = std::array<std::array<double, kShapeDims>, kJointCount>;
    using BoneRadii = std::array<double, kJointCount>;

    /// Throws StructuralError on a malformed tree, ValidationError on bad weights.
    SkinnedBody(std::array<int, kJointCount> parent, JointArray rest_joints,
                std::vector<Vec3> template_vertices, Eigen::MatrixXd skin_weights,
                BoneShapeDirs shape_dirs, BoneRadii capsule_radius);

    const std::array<int, kJointCount>& parent() const { return parent_; }
    const JointArray& rest_joints() const { return rest_joints_; }
    const std::vector<Vec3>& template_vertices() const { return template_vertices_; }
    const Eigen::MatrixXd& skin_weights() const { return skin_weights_; }
    const BoneShapeDirs& shape_dirs() const { return shape_dirs_; }
    const BoneRadii& capsule_radius() const { return capsule_radius_; }
    int vertex_count() const { return static_cast<int>(template_vertices_.size()); }

    /// Non-zero weights of one vertex.
    std::span<const SkinWeight> weights_of(int vertex) const {
        const auto b = sparse_offsets_[static_cast<size_t>(vertex)];
        const auto e = sparse_offsets_[static_cast<size_t>(vertex) + 1];
        return {sparse_weights_.data() + b, e - b};
    }

    /// Joints in the subtree rooted at `joint`, including it.
    const std::vector<int>& subtree(int joint) const { return subtrees_[static_cast<size_t>(joint)]; }

    /// Vertices whose skinning depends on any joint in subtree(joint).
    const std::vector<int>& vertices_moved_by(int joint) const {
        return moved_vertices_[static_cast<size_t>(joint)];
    }

    /// Bones as (parent, child) pairs in child order.
    std::vector<std::pair<int, int>> bones() const;

    /// Length scale per bone, linear in beta. Throws ValidationError if any scale is not positive.
    std::array<double, kJointCount> bone_scales(const BodyShape& shape) const;

    ShapedRest shaped(const BodyShape& shape) const;

private:
    std::array<int, kJointCount> parent_;
    JointArray rest_joints_;
    std::vector<Vec3> template_vertices_;
    Eigen::MatrixXd skin_weights_;
    BoneShapeDirs shape_dirs_;
    BoneRadii capsule_radius_;

    std::vector<SkinWeight> sparse_weights_;
    std::vector<size_t> sparse_offsets_;
    std::vector<std::vector<int>> subtrees_;
    std::vector<std::vector<int>> moved_vertices_;
};

// ---- kinematics -------------------------------------------------------------

PosedSkeleton pose_skeleton(const SkinnedBody& body, const PoseFrame& frame, const ShapedRest& rest);

/// 24 world joint positions; joint 0 equals frame.translation.
JointArray forward_kinematics(const SkinnedBody& body, const PoseFrame& frame, const BodyShape& shape);

/// Linear blend skinning of the shaped template.
std::vector<Vec3> skin_vertices(const SkinnedBody& body, const PoseFrame& frame, const BodyShape& shape,
                                Exec exec = Exec::parallel);

/// Skinning with a precomputed skeleton; writes into `out` (resized to V).
void skin_vertices(const SkinnedBody& body, const PosedSkeleton& skeleton, const ShapedRest& rest,
                   std::vector<Vec3>& out, Exec exec = Exec::parallel);

/// One capsule per bone spanning the posed parent and child joints.
std::vector<Capsule> capsule_proxies(const SkinnedBody& body, const PoseFrame& frame, const BodyShape& shape);
std::vector<Capsule> capsule_proxies(const SkinnedBody& body, const JointArray& posed_joints);

/// Bone pairs that share no joint; the self-contact term only looks at these.
std::vector<std::pair<int, int>> non_adjacent_bone_pairs(const SkinnedBody& body);

// ---- procedural template ------------------------------------------------------

struct TemplateOptions {
    int sides = 8;  // vertices around each limb ring
    int rings = 4;  // rings along each bone (plus two cap tips)
};

/// Capsule-tessellated 24-joint body in a z-up frame (x left, y forward),
/// pelvis at the origin, T-pose with arms horizontal.
SkinnedBody make_standard_body(const TemplateOptions& options = {});

}  // namespace motionkit
