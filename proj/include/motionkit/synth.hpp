#pragma once

#include "motionkit/annot_opt.hpp"
#include "motionkit/body_model.hpp"
#include "motionkit/geometry_types.hpp"
#include "motionkit/sensor_sync.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace motionkit {

enum class MotionProfile { static_pose, walk_cycle, arm_swing, composite };

std::string to_string(MotionProfile p);
MotionProfile parse_motion_profile(const std::string& s);

struct EventCamera {
    double focal = 200.0;  // px
    double cx = 80.0;
    double cy = 60.0;
    int width = 160;
    int height = 120;
    double contrast_step = 0.5;  // occupancy change that fires an event
    double sample_rate = 200.0;  // Hz, internal silhouette sampling
};

struct SceneBox {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();
};

/// Parameters of one synthetic capture. Times in seconds, lengths in metres.
struct SynthSpec {
    double duration = 10.0;
    double frame_rate = 20.0;
    double jump_time = 1.0;    // apex time; jump_height 0 disables the jump
    double jump_height = 0.4;  // apex above standing height
    MotionProfile profile = MotionProfile::composite;
    Vec3 lidar_origin = Vec3(1.0, 6.0, 1.5);
    double lidar_noise_sigma = 0.005;
    double imu_rate = 60.0;
    double imu_yaw_drift = 0.0;       // rad/s, accumulates on the IMU root orientation
    double imu_frame_yaw = 0.3;       // rad, yaw of the IMU frame in the world (R_WI = Rz)
    double imu_time_offset = 0.0;     // s, IMU clock reads world time minus this
    double imu_height_noise = 0.002;  // m
    EventCamera camera;
    std::vector<SceneBox> boxes;
    BodyShape shape;
    std::uint64_t seed = 0;

    /// Throws ValidationError naming the offending field.
    void validate() const;
    size_t frame_count() const;
};

struct SynthBundle {
    MotionSequence gt_motion;
    std::vector<PointCloud> lidar_clouds;  // one per frame
    std::vector<double> imu_timestamps;    // IMU clock
    std::vector<PoseFrame> imu_poses;      // IMU frame orientations; translation unused
    SampledSeries imu_height;              // IMU clock
    SampledSeries lidar_height;            // world clock, mean height of the highest cloud points
    std::vector<Vec3> hip_centers;         // cloud centroids per frame
    EventStream events;
    TriangleMesh scene;
    CalibrationMatrix r_wi;
};

/// Ground-truth pose of the profile at world time t (standing on z = 0).
PoseFrame synth_pose_at(const SynthSpec& spec, const SkinnedBody& body, const ShapedRest& rest, double t);

/// Throws ValidationError on a bad spec or if the ground truth touches the scene.
SynthBundle generate(const SynthSpec& spec, const SkinnedBody& body);

TriangleMesh make_synth_scene(const SynthSpec& spec);

/// The optimization benchmark: default spec plus a table-height box between
/// the LiDAR and the subject that hides the lower legs from the sensor.
SynthSpec benchmark_spec();

/// i.i.d. Gaussian noise on translations and axis-angle coordinates.
MotionSequence perturb_motion(const MotionSequence& motion, double trans_sigma, double pose_sigma, std::uint64_t seed);

}  // namespace motionkit
