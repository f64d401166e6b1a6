#include "doctest.h"
#include "oracles.hpp"

#include "motionkit/annot_opt.hpp"
#include "motionkit/rotation.hpp"
#include "motionkit/synth.hpp"

#include <numbers>

using namespace motionkit;

namespace {

const SkinnedBody& body() {
    static const SkinnedBody b = make_standard_body();
    return b;
}

SynthSpec short_spec(MotionProfile profile, double duration = 1.0) {
    SynthSpec s;
    s.duration = duration;
    s.jump_time = 0.5 * duration;
    s.profile = profile;
    return s;
}

MotionSequence static_motion(int n, const PoseFrame& f) {
    MotionSequence m;
    m.frames.assign(static_cast<size_t>(n), f);
    return m;
}

// Applies x -> r x + t to every frame.
MotionSequence transformed(const MotionSequence& m, const Mat3& r, const Vec3& t) {
    MotionSequence out = m;
    for (auto& f : out.frames) {
        f.pose[0] = log_rotation(r * rodrigues(f.pose[0]));
        f.translation = r * f.translation + t;
    }
    return out;
}

TriangleMesh transformed(const TriangleMesh& mesh, const Mat3& r, const Vec3& t) {
    std::vector<Vec3> v;
    for (const auto& p : mesh.vertices()) v.push_back(r * p + t);
    return TriangleMesh(v, mesh.triangles());
}

}  // namespace

TEST_SUITE("annot_opt") {

TEST_CASE("calibration matrix validation") {
    CHECK_NOTHROW(CalibrationMatrix(rotation_about_z(0.4)));
    CHECK_THROWS_AS(CalibrationMatrix(2.0 * Mat3::Identity()), ValidationError);
    CHECK_THROWS_AS(CalibrationMatrix(Eigen::Vector3d(1, 1, -1).asDiagonal().toDenseMatrix()), ValidationError);
}

TEST_CASE("config validation") {
    OptimConfig c;
    CHECK_NOTHROW(c.validate());
    c.weights.lambda_geo = -1.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = OptimConfig{};
    c.max_iters = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = OptimConfig{};
    c.weights.w_self = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("combine_losses") {
    LossWeights w;
    CHECK(combine_losses(0.3, 9.9, 0.5, w) == doctest::Approx(0.3 + 9.9 + 0.5).epsilon(1e-15));
    w.lambda_contact = w.lambda_smooth = w.lambda_geo = 0.0;
    CHECK(combine_losses(0.3, 9.9, 0.5, w) == 0.0);
    w.lambda_contact = 2.0;
    w.lambda_geo = 1.0;
    CHECK(combine_losses(0.3, 9.9, 0.5, w) == doctest::Approx(1.1).epsilon(1e-15));
}

TEST_CASE("initialization from sensors") {
    std::mt19937_64 rng(1);
    std::vector<JointArray> imu;
    std::vector<Vec3> hips;
    for (int i = 0; i < 5; ++i) {
        imu.push_back(oracle::random_pose(rng).pose);
        hips.push_back(oracle::random_pose(rng).translation);
    }
    const auto m = initialize_from_sensors(imu, CalibrationMatrix{}, hips, BodyShape{}, 20.0);
    REQUIRE(m.size() == 5);
    for (size_t i = 0; i < 5; ++i) {
        CHECK(m.frames[i].translation == hips[i]);
        for (size_t j = 0; j < kJointCount; ++j) CHECK((m.frames[i].pose[j] - imu[i][j]).norm() < 1e-12);
    }

    const Mat3 rz = rotation_about_z(std::numbers::pi / 2);
    const auto r = initialize_from_sensors(imu, CalibrationMatrix(rz), hips, BodyShape{}, 20.0);
    for (size_t i = 0; i < 5; ++i) {
        CHECK((rodrigues(r.frames[i].pose[0]) - rz * rodrigues(imu[i][0])).norm() < 1e-12);
        for (size_t j = 1; j < kJointCount; ++j) CHECK(r.frames[i].pose[j] == imu[i][j]);
        PoseFrame at_origin = m.frames[i];
        at_origin.translation.setZero();
        PoseFrame rot = r.frames[i];
        rot.translation.setZero();
        const auto ja = forward_kinematics(body(), at_origin, BodyShape{});
        const auto jb = forward_kinematics(body(), rot, BodyShape{});
        for (size_t j = 0; j < kJointCount; ++j) CHECK((rz * ja[j] - jb[j]).norm() < 1e-12);
    }
    hips.pop_back();
    CHECK_THROWS_AS(initialize_from_sensors(imu, CalibrationMatrix{}, hips, BodyShape{}, 20.0), ValidationError);
}

TEST_CASE("scene contact against a plane") {
    PoseFrame f;
    const auto v0 = skin_vertices(body(), f, BodyShape{});
    double min_z = std::numeric_limits<double>::infinity();
    for (const auto& v : v0) min_z = std::min(min_z, v.z());
    LossWeights w;
    w.w_self = 0.0;
    const auto ground = make_ground_plane(10.0);

    f.translation.z() = -min_z + 0.01;
    CHECK(loss_contact(static_motion(3, f), body(), ground, w) == 0.0);

    f.translation.z() = -min_z - 0.03;
    double expect = 0.0;
    for (const auto& v : skin_vertices(body(), f, BodyShape{})) {
        if (v.z() < 0.0) expect += v.z() * v.z();
    }
    REQUIRE(expect > 0.0);
    w.w_scene = 2.5;
    CHECK(loss_contact(static_motion(4, f), body(), ground, w) == doctest::Approx(2.5 * expect).epsilon(1e-12));
}

TEST_CASE("self contact equals the summed capsule overlaps") {
    const FitProblem problem(body(), BodyShape{}, TriangleMesh{}, {}, Vec3(0, 5, 1));
    PoseFrame rest;
    LossWeights w;
    w.w_scene = 0.0;
    CHECK(loss_contact(static_motion(2, rest), problem, w) == 0.0);

    // Fold both arms across the chest.
    PoseFrame f;
    f.pose[16] = Vec3(0, 0, -1.4);
    f.pose[17] = Vec3(0, 0, 1.4);
    f.pose[18] = Vec3(0, 0, -1.5);
    f.pose[19] = Vec3(0, 0, 1.5);
    const auto caps = capsule_proxies(body(), f, BodyShape{});
    double expect = 0.0;
    for (const auto& [a, b] : non_adjacent_bone_pairs(body())) {
        const double o = oracle::capsule_overlap(caps[static_cast<size_t>(a)], caps[static_cast<size_t>(b)]);
        expect += o * o;
    }
    REQUIRE(expect > 0.0);
    w.w_self = 3.0;
    CHECK(loss_contact(static_motion(3, f), problem, w) == doctest::Approx(3.0 * expect).epsilon(1e-6));
}

TEST_CASE("smoothness terms") {
    const FitProblem problem(body(), BodyShape{}, TriangleMesh{}, {}, Vec3(0, 5, 1));
    SUBCASE("constant pose with affine translation") {
        MotionSequence m;
        PoseFrame f;
        f.pose[5] = Vec3(0.2, 0.1, -0.3);
        for (int i = 0; i < 8; ++i) {
            f.translation = Vec3(0.25 * i, -0.5 * i, 1.0);
            m.frames.push_back(f);
        }
        CHECK(loss_smooth(m, problem, LossWeights{}) < 1e-24);
    }
    SUBCASE("pelvis acceleration") {
        LossWeights w;
        w.w_poses = w.w_joints = 0.0;
        w.w_trans = 1.5;
        MotionSequence m = static_motion(3, PoseFrame{});
        m.frames[2].translation.z() = 1.0;
        LossBreakdown parts;
        CHECK(loss_smooth(m, problem, w, &parts) == doctest::Approx(1.5));
        CHECK_FALSE(parts.smooth_partial);
    }
    SUBCASE("constant angular velocity") {
        LossWeights w;
        w.w_trans = w.w_joints = 0.0;
        MotionSequence m;
        const int n = 7;
        for (int i = 0; i < n; ++i) {
            PoseFrame f;
            f.pose[4] = Vec3(0.1 * i, 0, 0);
            m.frames.push_back(f);
        }
        // (n - 1) windows of 0.01 each, averaged over the windows.
        CHECK(loss_smooth(m, problem, w) == doctest::Approx(0.01).epsilon(1e-9));
    }
    SUBCASE("two frames: acceleration undefined and flagged") {
        MotionSequence m = static_motion(2, PoseFrame{});
        m.frames[1].translation.x() = 1.0;
        LossBreakdown parts;
        CHECK(loss_smooth(m, problem, LossWeights{}, &parts) == 0.0);
        CHECK(parts.smooth_partial);
    }
}

TEST_CASE("geometry term") {
    PoseFrame f;
    f.translation = Vec3(0, 0, 1.0);
    f.pose[16] = Vec3(0.3, 0.0, -0.2);
    const Vec3 origin(0.5, 5.0, 1.2);
    const auto verts = skin_vertices(body(), f, BodyShape{});
    const auto vis = hidden_point_removal(verts, origin);
    std::vector<Vec3> exact;
    for (int i : vis) exact.push_back(verts[static_cast<size_t>(i)]);
    const auto m = static_motion(2, f);

    CHECK(loss_geo(m, body(), {exact, exact}, origin) == 0.0);

    std::vector<Vec3> moved;
    for (const auto& p : exact) moved.push_back(p + Vec3(0.1, 0, 0));
    const double g = loss_geo(m, body(), {moved, moved}, origin);
    CHECK(g <= 2 * 0.01 + 1e-12);
    CHECK(g == doctest::Approx(oracle::chamfer(moved, exact)).epsilon(1e-12));

    // A frame without returns is skipped and counted.
    const FitProblem problem(body(), BodyShape{}, TriangleMesh{}, {moved, {}}, origin);
    LossBreakdown parts;
    CHECK(loss_geo(m, problem, Exec::parallel, &parts) == doctest::Approx(g));
    CHECK(parts.geo_frames_skipped == 1);

    CHECK_THROWS_AS(loss_geo(m, body(), {moved}, origin), ValidationError);
}

TEST_CASE("breakdown consistency and ablated families") {
    const auto bundle = generate(short_spec(MotionProfile::composite), body());
    const auto init = perturb_motion(bundle.gt_motion, 0.05, 0.05, 3);
    const FitProblem problem(body(), BodyShape{}, bundle.scene, bundle.lidar_clouds, SynthSpec{}.lidar_origin);
    LossWeights w;
    w.lambda_contact = 0.7;
    w.lambda_smooth = 0.2;
    w.lambda_geo = 3.0;
    const auto b = total_loss(init, problem, w);
    CHECK(b.total == doctest::Approx(combine_losses(b.contact, b.smooth, b.geo, w)).epsilon(1e-12));
    CHECK(b.contact == doctest::Approx(b.contact_scene + b.contact_self).epsilon(1e-12));
    CHECK(b.smooth == doctest::Approx(b.smooth_trans + b.smooth_poses + b.smooth_joints).epsilon(1e-12));
    CHECK(b.geo > 0.0);

    w.lambda_geo = 0.0;
    const auto nog = total_loss(init, problem, w);
    CHECK(nog.geo == 0.0);
    CHECK(nog.contact == b.contact);

    CHECK(total_loss(init, problem, w, Exec::serial).total == total_loss(init, problem, w, Exec::parallel).total);
}

TEST_CASE("every loss term is invariant under a common rigid motion") {
    const auto bundle = generate(short_spec(MotionProfile::composite), body());
    const auto init = perturb_motion(bundle.gt_motion, 0.05, 0.05, 4);
    const Vec3 origin = SynthSpec{}.lidar_origin;
    const Mat3 r = rodrigues(Vec3(0.3, -0.5, 1.1));
    const Vec3 t(2.0, -1.0, 0.5);
    std::vector<PointCloud> clouds;
    for (const auto& c : bundle.lidar_clouds) {
        PointCloud moved;
        for (const auto& p : c) moved.push_back(r * p + t);
        clouds.push_back(moved);
    }
    const FitProblem a(body(), BodyShape{}, bundle.scene, bundle.lidar_clouds, origin);
    const FitProblem b(body(), BodyShape{}, transformed(bundle.scene, r, t), clouds, r * origin + t);
    const LossWeights w;
    const auto la = total_loss(init, a, w);
    const auto lb = total_loss(transformed(init, r, t), b, w);
    CHECK(lb.contact_scene == doctest::Approx(la.contact_scene).epsilon(1e-6));
    CHECK(lb.contact_self == doctest::Approx(la.contact_self).epsilon(1e-6));
    CHECK(lb.smooth == doctest::Approx(la.smooth).epsilon(1e-6));
    CHECK(lb.geo == doctest::Approx(la.geo).epsilon(1e-6));
}

TEST_CASE("finite-difference gradient is stable under step halving") {
    const auto bundle = generate(short_spec(MotionProfile::walk_cycle, 0.5), body());
    const auto init = perturb_motion(bundle.gt_motion, 0.05, 0.03, 5);
    // Smooth configuration: no visibility or contact-set switching inside the stencil.
    const FitProblem problem(body(), BodyShape{}, TriangleMesh{}, {}, Vec3(0, 5, 1));
    OptimConfig c;
    c.weights.lambda_geo = 0.0;
    c.weights.lambda_contact = 0.0;
    const auto g1 = fd_gradient(init, problem, c);
    c.fd_step_rot *= 0.5;
    c.fd_step_trans *= 0.5;
    const auto g2 = fd_gradient(init, problem, c);
    REQUIRE(g1.values.size() == init.size() * kVarsPerFrame);
    const Eigen::Map<const Eigen::VectorXd> a(g1.values.data(), static_cast<Eigen::Index>(g1.values.size()));
    const Eigen::Map<const Eigen::VectorXd> b(g2.values.data(), static_cast<Eigen::Index>(g2.values.size()));
    const double angle = std::acos(std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0));
    CHECK(angle * 180.0 / std::numbers::pi < 1.0);
}

TEST_CASE("optimizer at the ground truth stays put") {
    auto spec = short_spec(MotionProfile::static_pose);
    spec.jump_height = 0.0;
    spec.lidar_noise_sigma = 0.0;
    const auto bundle = generate(spec, body());
    const FitProblem problem(body(), BodyShape{}, bundle.scene, bundle.lidar_clouds, spec.lidar_origin);
    OptimConfig c;
    c.max_iters = 5;
    const auto res = optimize(bundle.gt_motion, problem, c);
    REQUIRE(res.history.size() >= 1);
    for (size_t i = 1; i < res.history.size(); ++i) CHECK(res.history[i].loss.total <= res.history[i - 1].loss.total);
    for (size_t i = 0; i < res.motion.size(); ++i) {
        CHECK((res.motion.frames[i].translation - bundle.gt_motion.frames[i].translation).norm() < c.fd_step_trans);
    }
}

TEST_CASE("optimizer descends, is deterministic and thread-independent") {
    const auto bundle = generate(short_spec(MotionProfile::composite), body());
    const auto init = perturb_motion(bundle.gt_motion, 0.05, 0.02, 6);
    const FitProblem problem(body(), BodyShape{}, bundle.scene, bundle.lidar_clouds, SynthSpec{}.lidar_origin);
    OptimConfig c;
    c.max_iters = 4;
    const auto a = optimize(init, problem, c, Exec::parallel);
    const auto b = optimize(init, problem, c, Exec::serial);
    REQUIRE(a.history.size() >= 2);
    CHECK(a.history.back().loss.total < a.history.front().loss.total);
    for (size_t i = 1; i < a.history.size(); ++i) {
        CHECK(a.history[i].loss.total <= a.history[i - 1].loss.total);
        CHECK(a.history[i].step > 0.0);
    }
    REQUIRE(a.motion.size() == b.motion.size());
    for (size_t i = 0; i < a.motion.size(); ++i) {
        CHECK(a.motion.frames[i].translation == b.motion.frames[i].translation);
        CHECK(a.motion.frames[i].pose == b.motion.frames[i].pose);
    }
    // Shape is held fixed.
    CHECK(a.motion.shape.beta == init.shape.beta);
}

TEST_CASE("recentering on the clouds") {
    auto spec = short_spec(MotionProfile::static_pose);
    spec.lidar_noise_sigma = 0.0;
    auto b = generate(spec, body());
    b.lidar_clouds[3].clear();
    const FitProblem problem(body(), BodyShape{}, b.scene, b.lidar_clouds, spec.lidar_origin);

    // Noiseless clouds are exactly the visible vertices, so the truth is a fixed point.
    const auto still = recenter_on_clouds(b.gt_motion, problem);
    for (size_t i = 0; i < still.size(); ++i) {
        CHECK((still.frames[i].translation - b.gt_motion.frames[i].translation).norm() < 1e-12);
    }

    // The raw cloud centroid leans several centimetres toward the sensor; recentering
    // removes that. Height can keep a small offset: a body sunk into the ground loses
    // its soles to occlusion, which lifts the visible centroid to match.
    auto start = b.gt_motion;
    for (size_t i = 0; i < start.size(); ++i) {
        if (b.lidar_clouds[i].empty()) continue;
        Vec3 c = Vec3::Zero();
        for (const auto& p : b.lidar_clouds[i]) c += p;
        start.frames[i].translation = c / static_cast<double>(b.lidar_clouds[i].size());
    }
    const auto fixed = recenter_on_clouds(start, problem);
    for (size_t i = 0; i < fixed.size(); ++i) {
        const Vec3 e0 = start.frames[i].translation - b.gt_motion.frames[i].translation;
        const Vec3 e1 = fixed.frames[i].translation - b.gt_motion.frames[i].translation;
        const double before = e0.head<2>().norm();
        const double after = e1.head<2>().norm();
        if (b.lidar_clouds[i].empty()) {
            CHECK(fixed.frames[i].translation == start.frames[i].translation);
            continue;
        }
        CHECK(before > 0.02);
        CHECK(after < 0.1 * before);
        CHECK(e1.norm() < e0.norm());
        CHECK(std::abs(e1.z()) < 0.03);
        CHECK(fixed.frames[i].pose == start.frames[i].pose);
    }
    CHECK(recenter_on_clouds(start, problem, 0).frames[0].translation == start.frames[0].translation);
    CHECK_THROWS_AS(recenter_on_clouds(start, problem, -1), ValidationError);
}

TEST_CASE("non-finite starting loss is a numerical error") {
    const FitProblem problem(body(), BodyShape{}, make_ground_plane(5.0), {}, Vec3(0, 5, 1));
    PoseFrame f;
    f.translation = Vec3(0, 0, -1e300);
    OptimConfig c;
    c.weights.lambda_geo = 0.0;
    CHECK_THROWS_AS(optimize(static_motion(3, f), problem, c), NumericalError);
}

}  // TEST_SUITE
