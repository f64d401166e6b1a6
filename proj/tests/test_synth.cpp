#include "doctest.h"
#include "oracles.hpp"

#include "motionkit/annot_opt.hpp"
#include "motionkit/metrics.hpp"
#include "motionkit/rotation.hpp"
#include "motionkit/sensor_sync.hpp"
#include "motionkit/spatial_index.hpp"
#include "motionkit/synth.hpp"

using namespace motionkit;

namespace {

const SkinnedBody& body() {
    static const SkinnedBody b = make_standard_body();
    return b;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("spec validation names the field") {
    auto expect_field = [](SynthSpec s, const std::string& field) {
        try {
            s.validate();
            FAIL("expected a validation error for " << field);
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find(field) != std::string::npos);
        }
    };
    SynthSpec s;
    s.frame_rate = 0.0;
    expect_field(s, "frame_rate");
    s = SynthSpec{};
    s.jump_time = 20.0;
    expect_field(s, "jump_time");
    s = SynthSpec{};
    s.lidar_noise_sigma = -1.0;
    expect_field(s, "lidar_noise_sigma");
    s = SynthSpec{};
    s.boxes.push_back({Vec3(0, 0, 0), Vec3(1, -1, 1)});
    expect_field(s, "boxes");
    CHECK(SynthSpec{}.frame_count() == 200);
}

TEST_CASE("static noiseless capture: points on the surface, no events") {
    SynthSpec s;
    s.duration = 1.0;
    s.jump_time = 0.5;
    s.jump_height = 0.0;
    s.profile = MotionProfile::static_pose;
    s.lidar_noise_sigma = 0.0;
    const auto b = generate(s, body());
    REQUIRE(b.lidar_clouds.size() == 20);
    CHECK(b.events.empty());
    for (size_t i = 0; i < b.lidar_clouds.size(); i += 7) {
        const KdTree verts(skin_vertices(body(), b.gt_motion.frames[i], BodyShape{}));
        REQUIRE_FALSE(b.lidar_clouds[i].empty());
        for (const auto& p : b.lidar_clouds[i]) CHECK(verts.nearest(p).sq_distance < 1e-18);
    }
}

TEST_CASE("jump apex shows up in the LiDAR height series") {
    SynthSpec s;
    s.duration = 4.0;
    s.jump_time = 2.0;
    s.jump_height = 0.4;
    const auto b = generate(s, body());
    const auto peaks = detect_jump_peaks(b.lidar_height);
    REQUIRE(peaks.size() == 1);
    // Height noise moves the sampled maximum: the parabola only drops g/2 * dt^2
    // near the apex, so a few sigma of noise spans roughly +-40 ms.
    CHECK(std::abs(peaks[0] - 2.0) <= 0.05);
    const auto imu_peaks = detect_jump_peaks(b.imu_height);
    REQUIRE(imu_peaks.size() == 1);
    CHECK(std::abs(imu_peaks[0] - 2.0) <= 0.05);

    // Pelvis apex: the standing height at that instant plus the jump height.
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& f : b.gt_motion.frames) hi = std::max(hi, f.translation.z());
    const auto& apex = b.gt_motion.frames[static_cast<size_t>(2.0 * s.frame_rate)];
    CHECK(apex.translation.z() == hi);
    auto grounded = s;
    grounded.jump_height = 0.0;
    const double stand = synth_pose_at(grounded, body(), body().shaped(s.shape), 2.0).translation.z();
    CHECK(hi - stand == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("streams cover the same span and the ground truth is contact free") {
    SynthSpec s;
    s.duration = 2.0;
    s.boxes.push_back({Vec3(-3, 1.0, 0), Vec3(3, 1.6, 0.76)});
    const auto b = generate(s, body());
    const double end = (s.frame_count() - 1) / s.frame_rate;
    CHECK(b.lidar_height.timestamps.front() == 0.0);
    CHECK(b.lidar_height.timestamps.back() == doctest::Approx(end));
    CHECK(b.imu_timestamps.front() == 0.0);
    CHECK(b.imu_timestamps.back() >= end);
    CHECK(b.imu_timestamps.back() <= s.duration + 1e-12);
    CHECK(b.imu_height.size() == b.imu_timestamps.size());
    CHECK(b.events.back().t <= s.duration);
    CHECK(b.hip_centers.size() == b.lidar_clouds.size());
    CHECK(loss_contact(b.gt_motion, body(), b.scene, LossWeights{}) == 0.0);
    CHECK(mean_penetration_mm(b.gt_motion, body(), b.scene) == 0.0);
}

TEST_CASE("IMU stream: calibration rotation, time offset and drift") {
    SynthSpec s;
    s.duration = 10.0;
    s.imu_yaw_drift = 0.01;
    s.imu_time_offset = 0.0;
    const auto b = generate(s, body());
    const Mat3 r_wi = b.r_wi.rotation();
    CHECK((r_wi - rotation_about_z(s.imu_frame_yaw)).norm() < 1e-12);

    // Root orientation error after calibration grows with the accumulated drift.
    auto root_error = [&](double t) {
        const auto imu = interpolate_pose(b.imu_timestamps, b.imu_poses, t);
        const auto k = static_cast<size_t>(std::lround(t * s.frame_rate));
        return geodesic_angle(r_wi * rodrigues(imu.pose[0]), rodrigues(b.gt_motion.frames[k].pose[0]));
    };
    CHECK(root_error(0.0) < 1e-9);
    const double t_end = (s.frame_count() - 1) / s.frame_rate;
    CHECK(root_error(t_end) == doctest::Approx(0.01 * t_end).epsilon(0.05));
    CHECK(root_error(5.0) == doctest::Approx(0.05).epsilon(0.05));

    // Body joints stay parent-relative and untouched.
    const auto imu = interpolate_pose(b.imu_timestamps, b.imu_poses, 3.0);
    CHECK((imu.pose[18] - b.gt_motion.frames[60].pose[18]).norm() < 1e-9);
}

TEST_CASE("noiseless IMU initialization reproduces the ground truth orientation") {
    SynthSpec s;
    s.duration = 2.0;
    const auto b = generate(s, body());
    std::vector<JointArray> imu;
    for (size_t i = 0; i < b.gt_motion.size(); ++i) {
        imu.push_back(interpolate_pose(b.imu_timestamps, b.imu_poses, static_cast<double>(i) / s.frame_rate).pose);
    }
    std::vector<Vec3> hips;
    for (const auto& f : b.gt_motion.frames) hips.push_back(f.translation);
    const auto m = initialize_from_sensors(imu, b.r_wi, hips, BodyShape{}, s.frame_rate);
    for (size_t i = 0; i < m.size(); i += 5) {
        const auto a = forward_kinematics(body(), m.frames[i], BodyShape{});
        const auto g = forward_kinematics(body(), b.gt_motion.frames[i], BodyShape{});
        for (size_t j = 0; j < kJointCount; ++j) CHECK((a[j] - g[j]).norm() < 1e-9);
    }
}

TEST_CASE("event stream sanity") {
    SynthSpec s;
    s.duration = 4.0;  // two full swing periods
    s.jump_height = 0.0;
    s.profile = MotionProfile::arm_swing;
    const auto b = generate(s, body());
    REQUIRE_FALSE(b.events.empty());
    long sum = 0;
    for (const auto& e : b.events) {
        sum += e.polarity;
        CHECK(e.x >= 0);
        CHECK(e.x < s.camera.width);
        CHECK(e.y >= 0);
        CHECK(e.y < s.camera.height);
        CHECK((e.polarity == 1 || e.polarity == -1));
    }
    CHECK(std::abs(static_cast<double>(sum)) <= 0.05 * static_cast<double>(b.events.size()));
    for (size_t i = 1; i < b.events.size(); ++i) CHECK(b.events[i - 1].t <= b.events[i].t);
}

TEST_CASE("generation is deterministic per seed") {
    SynthSpec s;
    s.duration = 1.0;
    s.jump_time = 0.5;
    s.seed = 5;
    const auto a = generate(s, body());
    const auto b = generate(s, body());
    CHECK(a.lidar_clouds == b.lidar_clouds);
    CHECK(a.events == b.events);
    CHECK(a.imu_height.values == b.imu_height.values);
    s.seed = 6;
    CHECK(generate(s, body()).lidar_clouds != a.lidar_clouds);
}

TEST_CASE("perturbation") {
    SynthSpec s;
    s.duration = 5.0;
    const auto gt = generate(s, body()).gt_motion;
    REQUIRE(gt.size() == 100);
    const auto same = perturb_motion(gt, 0.0, 0.0, 1);
    for (size_t i = 0; i < gt.size(); ++i) {
        CHECK(same.frames[i].translation == gt.frames[i].translation);
        CHECK(same.frames[i].pose == gt.frames[i].pose);
    }
    const auto a = perturb_motion(gt, 0.1, 0.05, 7);
    const auto b = perturb_motion(gt, 0.1, 0.05, 7);
    for (size_t i = 0; i < gt.size(); ++i) {
        CHECK(a.frames[i].translation == b.frames[i].translation);
        CHECK(a.frames[i].pose == b.frames[i].pose);
    }
    CHECK(a.shape.beta == gt.shape.beta);
    const double t_err = evaluate(a, gt, body()).t_error;
    CHECK(t_err >= 100.0);
    CHECK(t_err <= 250.0);
    CHECK_THROWS_AS(perturb_motion(gt, -1.0, 0.0, 1), ValidationError);
}

TEST_CASE("benchmark scene hides the lower legs") {
    const auto spec = benchmark_spec();
    REQUIRE(spec.boxes.size() == 1);
    CHECK_NOTHROW(spec.validate());
    auto s = spec;
    s.duration = 0.5;
    s.jump_time = 0.25;
    s.lidar_noise_sigma = 0.0;
    const auto b = generate(s, body());
    const Vec3 lo = spec.boxes[0].lo;
    const Vec3 hi = spec.boxes[0].hi;
    // Independent slab test: the open segment from the sensor to a returned point
    // never passes through the table interior.
    auto crosses_box = [&](const Vec3& a, const Vec3& p) {
        double t0 = 1e-9;
        double t1 = 1.0 - 1e-9;
        const Vec3 d = p - a;
        for (int k = 0; k < 3; ++k) {
            if (std::abs(d[k]) < 1e-15) {
                if (a[k] <= lo[k] || a[k] >= hi[k]) return false;
                continue;
            }
            double ta = (lo[k] - a[k]) / d[k];
            double tb = (hi[k] - a[k]) / d[k];
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
        }
        return t0 < t1 - 1e-9;
    };
    size_t total = 0;
    size_t low = 0;
    for (const auto& c : b.lidar_clouds) {
        for (const auto& p : c) {
            CHECK_FALSE(crosses_box(s.lidar_origin, p));
            low += p.z() < 0.4;
            ++total;
        }
    }
    REQUIRE(total > 0);
    CHECK(low == 0);  // the shins and feet sit in the table's shadow
}

}  // TEST_SUITE
