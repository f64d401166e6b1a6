#include "motionkit/body_model.hpp"

#include <algorithm>
#include <cmath>

namespace motionkit {
namespace {

// Rest joint positions in meters: z up, x toward the body's left, y forward.
const JointArray kRestJoints = {
    Vec3(0.0, 0.0, 0.0),        // pelvis
    Vec3(0.07, 0.0, -0.08),     // left_hip
    Vec3(-0.07, 0.0, -0.08),    // right_hip
    Vec3(0.0, -0.01, 0.11),     // spine1
    Vec3(0.10, 0.0, -0.46),     // left_knee
    Vec3(-0.10, 0.0, -0.46),    // right_knee
    Vec3(0.0, 0.0, 0.24),       // spine2
    Vec3(0.09, -0.02, -0.86),   // left_ankle
    Vec3(-0.09, -0.02, -0.86),  // right_ankle
    Vec3(0.0, 0.01, 0.30),      // spine3
    Vec3(0.11, 0.10, -0.91),    // left_foot
    Vec3(-0.11, 0.10, -0.91),   // right_foot
    Vec3(0.0, 0.0, 0.51),       // neck
    Vec3(0.07, 0.0, 0.42),      // left_collar
    Vec3(-0.07, 0.0, 0.42),     // right_collar
    Vec3(0.0, 0.03, 0.62),      // head
    Vec3(0.17, 0.0, 0.45),      // left_shoulder
    Vec3(-0.17, 0.0, 0.45),     // right_shoulder
    Vec3(0.43, 0.0, 0.44),      // left_elbow
    Vec3(-0.43, 0.0, 0.44),     // right_elbow
    Vec3(0.68, 0.0, 0.45),      // left_wrist
    Vec3(-0.68, 0.0, 0.45),     // right_wrist
    Vec3(0.76, 0.0, 0.45),      // left_hand
    Vec3(-0.76, 0.0, 0.45),     // right_hand
};

// Per bone (by child joint): surface radius of the template mesh and the
// thinner self-contact proxy radius.
constexpr std::array<double, kJointCount> kMeshRadius = {
    0.0,  0.09, 0.09, 0.13, 0.075, 0.075, 0.13, 0.055, 0.055, 0.14, 0.045, 0.045,
    0.06, 0.06, 0.06, 0.10, 0.06,  0.06,  0.05, 0.05,  0.04,  0.04, 0.035, 0.035};
constexpr std::array<double, kJointCount> kProxyRadius = {
    0.0,  0.045, 0.045, 0.025, 0.05, 0.05, 0.025, 0.04, 0.04, 0.025, 0.03, 0.03,
    0.025, 0.025, 0.025, 0.05, 0.04, 0.04, 0.04, 0.04, 0.035, 0.035, 0.03, 0.03};  // spine chain kept thin: its bones sit one joint apart

SkinnedBody::BoneShapeDirs standard_shape_dirs() {
    SkinnedBody::BoneShapeDirs d{};
    auto set = [&d](std::initializer_list<int> bones, int k, double v) {
        for (int b : bones) d[static_cast<size_t>(b)][static_cast<size_t>(k)] = v;
    };
    for (int j = 1; j < kJointCount; ++j) d[static_cast<size_t>(j)][0] = 0.10;  // overall stature
    set({4, 5, 7, 8}, 1, 0.15);                                                // leg length
    set({18, 19, 20, 21}, 2, 0.15);                                            // arm length
    set({3, 6, 9, 12}, 3, 0.15);                                               // torso length
    set({13, 14, 16, 17}, 4, 0.10);                                            // shoulder width
    set({15}, 5, 0.10);                                                        // head size
    set({10, 11, 22, 23}, 6, 0.10);                                            // hands and feet
    set({1, 2}, 7, 0.10);                                                      // hip width
    set({1, 4, 7, 10, 13, 16, 18, 20, 22}, 8, 0.05);                           // left side
    set({4, 5}, 9, 0.05);                                                      // thighs
    return d;
}

Vec3 any_perpendicular(const Vec3& axis) {
    Vec3 ref = Vec3::UnitX();
    if (std::abs(axis.x()) > std::abs(axis.y()) && std::abs(axis.x()) > std::abs(axis.z())) ref = Vec3::UnitY();
    if (std::abs(axis.z()) < std::abs(axis.x()) && std::abs(axis.z()) < std::abs(axis.y())) ref = Vec3::UnitZ();
    return axis.cross(ref).normalized();
}

}  // namespace

SkinnedBody make_standard_body(const TemplateOptions& options) {
    const int sides = std::max(3, options.sides);
    const int rings = std::max(1, options.rings);

    std::vector<Vec3> vertices;
    std::vector<std::array<double, kJointCount>> weights;

    for (int c = 1; c < kJointCount; ++c) {
        const int p = kSmplParents[static_cast<size_t>(c)];
        const Vec3 a = kRestJoints[static_cast<size_t>(p)];
        const Vec3 b = kRestJoints[static_cast<size_t>(c)];
        const double len = (b - a).norm();
        const Vec3 axis = (b - a) / len;
        const Vec3 u = any_perpendicular(axis);
        const Vec3 w = axis.cross(u);
        const double r = kMeshRadius[static_cast<size_t>(c)];
        const int grand = kSmplParents[static_cast<size_t>(p)];

        // Bone vertices follow the bone's start joint; near either end they
        // blend with the neighbouring bone's transform.
        auto weight_at = [&](double s) {
            std::array<double, kJointCount> row{};
            double to_prev = (grand >= 0) ? 0.5 * std::clamp((0.3 - s) / 0.3, 0.0, 1.0) : 0.0;
            double to_next = 0.5 * std::clamp((s - 0.7) / 0.3, 0.0, 1.0);
            row[static_cast<size_t>(p)] = 1.0 - to_prev - to_next;
            if (to_prev > 0.0) row[static_cast<size_t>(grand)] += to_prev;
            if (to_next > 0.0) row[static_cast<size_t>(c)] += to_next;
            return row;
        };

        for (int k = 0; k < rings; ++k) {
            const double s = (k + 0.5) / rings;
            const Vec3 center = a + s * (b - a);
            for (int q = 0; q < sides; ++q) {
                const double phi = 2.0 * M_PI * q / sides;
                vertices.push_back(center + r * (std::cos(phi) * u + std::sin(phi) * w));
                weights.push_back(weight_at(s));
            }
        }
        vertices.push_back(a - r * axis);
        weights.push_back(weight_at(0.0));
        vertices.push_back(b + r * axis);
        weights.push_back(weight_at(1.0));
    }

    Eigen::MatrixXd w(static_cast<Eigen::Index>(vertices.size()), kJointCount);
    for (size_t v = 0; v < weights.size(); ++v) {
        for (int j = 0; j < kJointCount; ++j) w(static_cast<Eigen::Index>(v), j) = weights[v][static_cast<size_t>(j)];
    }
    return SkinnedBody(kSmplParents, kRestJoints, std::move(vertices), std::move(w), standard_shape_dirs(),
                       kProxyRadius);
}

}  // namespace motionkit
