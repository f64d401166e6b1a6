#include "motionkit/synth.hpp"

#include "motionkit/geometry.hpp"
#include "motionkit/rotation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <functional>
#include <cmath>
#include <numbers>
#include <random>

namespace motionkit {

namespace {

constexpr double kGravity = 9.81;
constexpr size_t kTopPoints = 20;  // points averaged for the LiDAR height signal
constexpr double kGroundClearance = 1e-3;  // m between the lowest vertex and the floor
constexpr double kArmDrop = 1.1;           // rad below the horizontal T-pose
constexpr double kWalkSpeed = 0.4;         // m/s
constexpr double kStepFreq = 0.8;          // Hz
constexpr double kSwingFreq = 0.5;         // Hz

// Independent, reproducible sub-seeds per stream and index.
std::uint64_t mix(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    std::uint64_t z = seed ^ (stream * 0x9E3779B97F4A7C15ull) ^ (index * 0xD1B54A32D192ED03ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

enum Stream : std::uint64_t { kLidarNoise = 1, kImuNoise = 2, kPerturb = 3 };

Vec3 rot_x(double a) { return Vec3(a, 0.0, 0.0); }
Vec3 compose(const Mat3& a, const Mat3& b) { return log_rotation(a * b); }

// Articulation of the profile at time t with the pelvis at height 0.
PoseFrame articulate(const SynthSpec& spec, double t) {
    PoseFrame f;
    const double wstep = 2.0 * std::numbers::pi * kStepFreq;
    const double wswing = 2.0 * std::numbers::pi * kSwingFreq;
    const bool walk = spec.profile == MotionProfile::walk_cycle || spec.profile == MotionProfile::composite;
    const bool swing = spec.profile == MotionProfile::arm_swing || spec.profile == MotionProfile::composite;

    double swing_l = 0.0;
    double elbow = 0.3;
    if (walk) {
        f.pose[0] = Vec3(0.0, 0.0, -std::numbers::pi / 2.0);  // face +x, the walking direction
        f.translation.x() = kWalkSpeed * (t - 0.5 * spec.duration);
        const double s = std::sin(wstep * t);
        f.pose[1] = rot_x(0.35 * s);
        f.pose[2] = rot_x(-0.35 * s);
        f.pose[4] = rot_x(-0.5 * 0.5 * (1.0 - s));
        f.pose[5] = rot_x(-0.5 * 0.5 * (1.0 + s));
        swing_l = -0.3 * s;  // arms counter the legs
    }
    if (swing) {
        swing_l += 0.5 * std::sin(wswing * t);
        elbow += 0.25 * (1.0 - std::cos(wswing * t));
    }
    if (spec.profile == MotionProfile::composite) f.pose[3] = Vec3(0.0, 0.0, 0.1 * std::sin(wstep * t));

    const Mat3 drop_l = rodrigues(Vec3(0.0, kArmDrop, 0.0));
    const Mat3 drop_r = rodrigues(Vec3(0.0, -kArmDrop, 0.0));
    f.pose[16] = compose(rodrigues(rot_x(swing_l)), drop_l);
    f.pose[17] = compose(rodrigues(rot_x(-swing_l)), drop_r);
    f.pose[18] = Vec3(0.0, 0.0, elbow);
    f.pose[19] = Vec3(0.0, 0.0, -elbow);
    return f;
}

double jump_lift(const SynthSpec& spec, double t) {
    if (!(spec.jump_height > 0.0)) return 0.0;
    const double dt = t - spec.jump_time;
    return std::max(0.0, spec.jump_height - 0.5 * kGravity * dt * dt);
}

struct Pinhole {
    Vec3 center, right, down, forward;
    const EventCamera* cam;

    Pinhole(const Vec3& c, const Vec3& target, const EventCamera& camera) : center(c), cam(&camera) {
        forward = (target - c).normalized();
        right = forward.cross(Vec3::UnitZ()).normalized();
        down = forward.cross(right);
    }

    // Pixel of a world point, or false when behind the camera.
    bool project(const Vec3& p, int& x, int& y) const {
        const Vec3 d = p - center;
        const double z = d.dot(forward);
        if (z < 0.05) return false;
        x = static_cast<int>(std::floor(cam->focal * d.dot(right) / z + cam->cx));
        y = static_cast<int>(std::floor(cam->focal * d.dot(down) / z + cam->cy));
        return true;
    }
};

std::vector<unsigned char> silhouette(const Pinhole& cam, const std::vector<Vec3>& verts) {
    const int w = cam.cam->width;
    const int h = cam.cam->height;
    std::vector<unsigned char> mask(static_cast<size_t>(w) * static_cast<size_t>(h), 0);
    for (const Vec3& v : verts) {
        int px = 0;
        int py = 0;
        if (!cam.project(v, px, py)) continue;
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int x = px + dx;
                const int y = py + dy;
                if (x >= 0 && x < w && y >= 0 && y < h) mask[static_cast<size_t>(y) * static_cast<size_t>(w) + static_cast<size_t>(x)] = 1;
            }
        }
    }
    return mask;
}

}  // namespace

std::string to_string(MotionProfile p) {
    switch (p) {
        case MotionProfile::static_pose: return "static";
        case MotionProfile::walk_cycle: return "walk-cycle";
        case MotionProfile::arm_swing: return "arm-swing";
        case MotionProfile::composite: return "composite";
    }
    return "composite";
}

MotionProfile parse_motion_profile(const std::string& s) {
    if (s == "static") return MotionProfile::static_pose;
    if (s == "walk-cycle") return MotionProfile::walk_cycle;
    if (s == "arm-swing") return MotionProfile::arm_swing;
    if (s == "composite") return MotionProfile::composite;
    throw ValidationError(fmt::format("motion_profile: unknown profile '{}'", s));
}

void SynthSpec::validate() const {
    auto positive = [](const char* name, double v) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(fmt::format("{}: must be positive", name));
    };
    auto non_negative = [](const char* name, double v) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(fmt::format("{}: must be finite and >= 0", name));
    };
    positive("duration", duration);
    positive("frame_rate", frame_rate);
    positive("imu_rate", imu_rate);
    non_negative("jump_height", jump_height);
    non_negative("lidar_noise_sigma", lidar_noise_sigma);
    non_negative("imu_height_noise", imu_height_noise);
    if (!(jump_time >= 0.0 && jump_time < duration)) throw ValidationError("jump_time: must lie within the duration");
    if (!std::isfinite(imu_yaw_drift)) throw ValidationError("imu_yaw_drift: must be finite");
    if (!std::isfinite(imu_frame_yaw)) throw ValidationError("imu_frame_yaw: must be finite");
    if (!std::isfinite(imu_time_offset)) throw ValidationError("imu_time_offset: must be finite");
    if (!lidar_origin.allFinite()) throw ValidationError("lidar_origin: must be finite");
    if (frame_count() < 3) throw ValidationError("duration: fewer than 3 frames at this frame_rate");
    positive("camera.focal", camera.focal);
    positive("camera.sample_rate", camera.sample_rate);
    positive("camera.contrast_step", camera.contrast_step);
    if (camera.width < 1 || camera.height < 1) throw ValidationError("camera.width: image size must be positive");
    for (const auto& b : boxes) {
        if (!b.lo.allFinite() || !b.hi.allFinite() || !(b.lo.array() < b.hi.array()).all()) {
            throw ValidationError("boxes: each box needs lo < hi on every axis");
        }
    }
    shape.validate();
}

size_t SynthSpec::frame_count() const {
    return static_cast<size_t>(std::llround(duration * frame_rate));
}

namespace {
// Pelvis height that puts the lowest vertex kGroundClearance above the floor.
double standing_height(const SynthSpec& spec, const SkinnedBody& body, const ShapedRest& rest, double t) {
    const PoseFrame f = articulate(spec, t);
    const PosedSkeleton sk = pose_skeleton(body, f, rest);
    std::vector<Vec3> verts;
    skin_vertices(body, sk, rest, verts, Exec::serial);
    double lowest = verts.front().z();
    for (const auto& v : verts) lowest = std::min(lowest, v.z());
    return f.translation.z() + kGroundClearance - lowest;
}
}  // namespace

PoseFrame synth_pose_at(const SynthSpec& spec, const SkinnedBody& body, const ShapedRest& rest, double t) {
    PoseFrame f = articulate(spec, t);
    const double stand = standing_height(spec, body, rest, t);
    const double lift = jump_lift(spec, t);
    // While airborne the parabola rides on the take-off baseline, so the apex
    // lands exactly on jump_time whatever the limbs do; never below standing.
    f.translation.z() = lift > 0.0 ? std::max(stand, standing_height(spec, body, rest, spec.jump_time) + lift) : stand;
    return f;
}

TriangleMesh make_synth_scene(const SynthSpec& spec) {
    TriangleMesh scene = make_ground_plane(10.0, 0.0);
    for (const auto& b : spec.boxes) scene.append(make_box(b.lo, b.hi));
    return scene;
}

SynthBundle generate(const SynthSpec& spec, const SkinnedBody& body) {
    spec.validate();
    const ShapedRest rest = body.shaped(spec.shape);
    const size_t n = spec.frame_count();
    SynthBundle out;
    out.scene = make_synth_scene(spec);
    out.r_wi = CalibrationMatrix(rotation_about_z(spec.imu_frame_yaw));

    out.gt_motion.shape = spec.shape;
    out.gt_motion.frame_rate = spec.frame_rate;
    out.gt_motion.frames.resize(n);
    out.lidar_clouds.resize(n);
    out.hip_centers.resize(n);
    std::vector<double> heights(n);
    std::vector<double> worst_depth(n, 0.0);
    std::vector<double> worst_overlap(n, 0.0);
    const TriangleBvh scene_bvh(out.scene);
    const auto pairs = non_adjacent_bone_pairs(body);

    const auto count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic)
    for (long li = 0; li < count; ++li) {
        const auto i = static_cast<size_t>(li);
        const double t = static_cast<double>(i) / spec.frame_rate;
        const PoseFrame f = synth_pose_at(spec, body, rest, t);
        out.gt_motion.frames[i] = f;
        const PosedSkeleton sk = pose_skeleton(body, f, rest);
        std::vector<Vec3> verts;
        skin_vertices(body, sk, rest, verts, Exec::serial);

        for (double d : penetration_depths(verts, scene_bvh, Exec::serial)) worst_depth[i] = std::max(worst_depth[i], d);
        const auto caps = capsule_proxies(body, sk.joints);
        for (const auto& [a, b] : pairs) {
            worst_overlap[i] = std::max(worst_overlap[i], capsule_overlap(caps[static_cast<size_t>(a)], caps[static_cast<size_t>(b)]));
        }

        std::mt19937_64 rng(mix(spec.seed, kLidarNoise, i));
        std::normal_distribution<double> noise(0.0, 1.0);
        PointCloud cloud;
        Vec3 centroid = Vec3::Zero();
        for (int v : visible_points(verts, spec.lidar_origin, scene_bvh, kDefaultHprGamma)) {
            Vec3 p = verts[static_cast<size_t>(v)];
            if (spec.lidar_noise_sigma > 0.0) {
                for (int c = 0; c < 3; ++c) p[c] += spec.lidar_noise_sigma * noise(rng);
            }
            cloud.push_back(p);
            centroid += p;
        }
        if (cloud.empty()) throw ValidationError(fmt::format("frame {}: the body is fully hidden from the LiDAR", i));
        centroid /= static_cast<double>(cloud.size());
        // Cloud top (mean of the highest points, i.e. the head) as the height
        // signal: the centroid wanders as limbs enter and leave view.
        std::vector<double> zs;
        zs.reserve(cloud.size());
        for (const auto& p : cloud) zs.push_back(p.z());
        const size_t k = std::min<size_t>(kTopPoints, zs.size());
        std::partial_sort(zs.begin(), zs.begin() + static_cast<std::ptrdiff_t>(k), zs.end(), std::greater<>());
        double top = 0.0;
        for (size_t j = 0; j < k; ++j) top += zs[j];
        heights[i] = top / static_cast<double>(k);
        out.lidar_clouds[i] = std::move(cloud);
        out.hip_centers[i] = centroid;
    }
    for (size_t i = 0; i < n; ++i) {
        if (worst_depth[i] > 0.0) {
            throw ValidationError(fmt::format("ground truth penetrates the scene by {:.4f} m at frame {}", worst_depth[i], i));
        }
        if (worst_overlap[i] > 0.0) {
            throw ValidationError(fmt::format("ground truth self-overlap {:.4f} m at frame {}", worst_overlap[i], i));
        }
        out.lidar_height.timestamps.push_back(static_cast<double>(i) / spec.frame_rate);
        out.lidar_height.values.push_back(heights[i]);
    }

    // IMU: orientation in the IMU frame with accumulated yaw drift; clock shifted.
    const auto imu_count = static_cast<size_t>(std::floor(spec.duration * spec.imu_rate + 1e-9)) + 1;
    out.imu_timestamps.resize(imu_count);
    out.imu_poses.resize(imu_count);
    out.imu_height.timestamps.resize(imu_count);
    out.imu_height.values.resize(imu_count);
    const Mat3 r_iw = out.r_wi.rotation().transpose();
    const auto icount = static_cast<long>(imu_count);
#pragma omp parallel for schedule(static)
    for (long lk = 0; lk < icount; ++lk) {
        const auto k = static_cast<size_t>(lk);
        const double t = static_cast<double>(k) / spec.imu_rate;
        PoseFrame f = synth_pose_at(spec, body, rest, t);
        f.pose[0] = log_rotation(r_iw * rotation_about_z(spec.imu_yaw_drift * t) * rodrigues(f.pose[0]));
        std::mt19937_64 rng(mix(spec.seed, kImuNoise, k));
        std::normal_distribution<double> noise(0.0, spec.imu_height_noise);
        const double h = f.translation.z() + (spec.imu_height_noise > 0.0 ? noise(rng) : 0.0);
        const double stamp = t - spec.imu_time_offset;
        f.translation = Vec3::Zero();
        out.imu_timestamps[k] = stamp;
        out.imu_poses[k] = f;
        out.imu_height.timestamps[k] = stamp;
        out.imu_height.values[k] = h;
    }

    // Events: per-pixel occupancy changes of the projected silhouette.
    const Pinhole cam(spec.lidar_origin, Vec3(0.0, 0.0, 1.0), spec.camera);
    const auto ticks = static_cast<size_t>(std::floor(spec.duration * spec.camera.sample_rate + 1e-9)) + 1;
    std::vector<std::vector<unsigned char>> masks(ticks);
    const auto tcount = static_cast<long>(ticks);
#pragma omp parallel for schedule(static)
    for (long lk = 0; lk < tcount; ++lk) {
        const double t = static_cast<double>(lk) / spec.camera.sample_rate;
        const PoseFrame f = synth_pose_at(spec, body, rest, t);
        std::vector<Vec3> verts;
        skin_vertices(body, pose_skeleton(body, f, rest), rest, verts, Exec::serial);
        masks[static_cast<size_t>(lk)] = silhouette(cam, verts);
    }
    const int w = spec.camera.width;
    for (size_t k = 1; k < ticks; ++k) {
        const double t = static_cast<double>(k) / spec.camera.sample_rate;
        for (size_t p = 0; p < masks[k].size(); ++p) {
            const double change = static_cast<double>(masks[k][p]) - static_cast<double>(masks[k - 1][p]);
            if (std::abs(change) < spec.camera.contrast_step) continue;
            out.events.push_back({t, static_cast<int>(p % static_cast<size_t>(w)), static_cast<int>(p / static_cast<size_t>(w)),
                                  change > 0.0 ? 1 : -1});
        }
    }
    return out;
}

SynthSpec benchmark_spec() {
    SynthSpec s;
    s.boxes.push_back({Vec3(-3.0, 1.0, 0.0), Vec3(3.0, 1.6, 0.76)});
    return s;
}

MotionSequence perturb_motion(const MotionSequence& motion, double trans_sigma, double pose_sigma, std::uint64_t seed) {
    if (!(trans_sigma >= 0.0) || !(pose_sigma >= 0.0)) throw ValidationError("perturbation sigmas must be >= 0");
    MotionSequence out = motion;
    std::mt19937_64 rng(mix(seed, kPerturb, 0));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (auto& f : out.frames) {
        for (int c = 0; c < 3; ++c) f.translation[c] += trans_sigma * noise(rng);
        for (auto& r : f.pose) {
            for (int c = 0; c < 3; ++c) r[c] += pose_sigma * noise(rng);
        }
    }
    return out;
}

}  // namespace motionkit
