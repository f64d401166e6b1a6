#pragma once

#include "motionkit/body_model.hpp"
#include "motionkit/geometry.hpp"
#include "motionkit/spatial_index.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace motionkit {

/// IMU frame to world frame rotation; orthonormal with det +1 within 1e-9.
class CalibrationMatrix {
public:
    CalibrationMatrix() = default;
    explicit CalibrationMatrix(const Mat3& r_wi);

    const Mat3& rotation() const { return r_wi_; }

private:
    Mat3 r_wi_ = Mat3::Identity();
};

/// Outer coefficients (lambda_*) weight the three loss families; inner
/// weights (w_*) weight the terms inside each family.
struct LossWeights {
    double lambda_contact = 1.0;
    double lambda_smooth = 1.0;
    double lambda_geo = 1.0;
    double w_scene = 1.0;
    double w_self = 1.0;
    double w_trans = 1.0;
    double w_poses = 1.0;
    double w_joints = 1.0;

    void validate() const;
};

struct OptimConfig {
    LossWeights weights;
    int max_iters = 100;
    double fd_step_rot = 1e-4;    // rad
    double fd_step_trans = 1e-4;  // m
    double step_size = 1.0;       // initial line-search step
    bool precondition = true;     // scale the gradient by finite-difference curvature
    double hpr_gamma = kDefaultHprGamma;
    double contact_margin = 0.05;  // m; vertices this close to the scene enter the contact linearization
    double min_rel_decrease = 1e-7;  // stop once an accepted step gains less than this fraction
    std::uint64_t seed = 0;

    void validate() const;
};

/// Loss components. Family values include their inner weights; `total`
/// applies the lambdas. Families with a zero lambda are not evaluated and read 0.
struct LossBreakdown {
    double contact = 0.0;
    double smooth = 0.0;
    double geo = 0.0;
    double total = 0.0;

    double contact_scene = 0.0;
    double contact_self = 0.0;
    double smooth_trans = 0.0;
    double smooth_poses = 0.0;
    double smooth_joints = 0.0;

    bool smooth_partial = false;  // fewer than 3 frames: acceleration terms undefined
    int geo_frames_skipped = 0;   // frames without a cloud or visible vertices
};

/// total = lambda_c * contact + lambda_s * smooth + lambda_g * geo.
double combine_losses(double contact, double smooth, double geo, const LossWeights& w);

// ---- initialization -------------------------------------------------------------------

/// Root orientation becomes R_WI composed with the IMU root orientation; body
/// joints are copied (they are parent-relative); translation is the LiDAR hip center.
MotionSequence initialize_from_sensors(std::span<const JointArray> imu_poses, const CalibrationMatrix& r_wi,
                                       std::span<const Vec3> hip_centers, const BodyShape& shape, double frame_rate);

// ---- problem ----------------------------------------------------------------------------

/// Everything a motion is fitted against, with the acceleration structures built once.
class FitProblem {
public:
    /// `clouds` may be empty (no geometry term) or hold one cloud per frame.
    FitProblem(const SkinnedBody& body, const BodyShape& shape, const TriangleMesh& scene,
               std::vector<PointCloud> clouds, const Vec3& lidar_origin, double hpr_gamma = kDefaultHprGamma);

    const SkinnedBody& body() const { return *body_; }
    const ShapedRest& rest() const { return rest_; }
    const TriangleBvh& scene() const { return scene_; }
    bool has_scene() const { return !scene_.mesh().empty(); }
    const std::vector<KdTree>& clouds() const { return clouds_; }
    const Vec3& lidar_origin() const { return lidar_origin_; }
    double hpr_gamma() const { return hpr_gamma_; }
    const std::vector<std::pair<int, int>>& self_pairs() const { return self_pairs_; }

private:
    const SkinnedBody* body_;
    ShapedRest rest_;
    TriangleBvh scene_;
    std::vector<KdTree> clouds_;
    Vec3 lidar_origin_;
    double hpr_gamma_;
    std::vector<std::pair<int, int>> self_pairs_;
};

/// Shifts each frame so the centroid of its LiDAR-visible vertices lands on the
/// cloud centroid. The raw cloud centroid leans toward the sensor and away from
/// occluded limbs, so it is a biased pelvis estimate. Empty clouds are left alone.
MotionSequence recenter_on_clouds(const MotionSequence& motion, const FitProblem& problem, int rounds = 3,
                                  Exec exec = Exec::parallel);

/// Scene term: mean over frames of the summed squared vertex depths.
/// Self term: mean over frames of the summed squared overlaps of non-adjacent capsules.
/// Returns w_scene * scene + w_self * self.
double loss_contact(const MotionSequence& motion, const FitProblem& problem, const LossWeights& w,
                    Exec exec = Exec::parallel, LossBreakdown* parts = nullptr);

/// Pelvis acceleration, non-root angular velocity and joint acceleration
/// terms, each averaged over the number of its finite-difference windows.
double loss_smooth(const MotionSequence& motion, const FitProblem& problem, const LossWeights& w,
                   LossBreakdown* parts = nullptr);

/// Mean over frames of chamfer(cloud, vertices visible from the LiDAR).
double loss_geo(const MotionSequence& motion, const FitProblem& problem, Exec exec = Exec::parallel,
                LossBreakdown* parts = nullptr);

LossBreakdown total_loss(const MotionSequence& motion, const FitProblem& problem, const LossWeights& w,
                         Exec exec = Exec::parallel);

// Convenience overloads that build a FitProblem for a single call.
double loss_contact(const MotionSequence& motion, const SkinnedBody& body, const TriangleMesh& scene,
                    const LossWeights& w);
double loss_smooth(const MotionSequence& motion, const SkinnedBody& body, const LossWeights& w);
double loss_geo(const MotionSequence& motion, const SkinnedBody& body, std::vector<PointCloud> clouds,
                const Vec3& lidar_origin, double gamma = kDefaultHprGamma);

// ---- optimization -------------------------------------------------------------------------

struct IterationLog {
    int iter = 0;
    LossBreakdown loss;
    double step = 0.0;  // accepted line-search step (0 for the initial entry)
};

struct OptimResult {
    MotionSequence motion;
    std::vector<IterationLog> history;  // entry 0 is the initial loss
    bool stalled = false;
    int iterations = 0;
};

/// Central finite-difference gradient of the total loss with respect to every
/// frame translation and axis-angle coordinate, plus the matching diagonal
/// curvature estimates. Visibility, nearest-neighbour and contact-candidate
/// sets are fixed at `motion` for the duration of the call.
struct Gradient {
    std::vector<double> values;     // 75 per frame: translation xyz, then 24 x axis-angle
    std::vector<double> curvature;  // same layout
};
Gradient fd_gradient(const MotionSequence& motion, const FitProblem& problem, const OptimConfig& config,
                     Exec exec = Exec::parallel);

inline constexpr int kVarsPerFrame = 3 + 3 * kJointCount;

/// Descent over translations and axis-angle poses with backtracking (up to 8
/// halvings). Shape is held fixed. Throws NumericalError if the initial loss is
/// not finite; a step that cannot lower the loss ends the run with `stalled` set.
OptimResult optimize(const MotionSequence& initial, const FitProblem& problem, const OptimConfig& config,
                     Exec exec = Exec::parallel);

}  // namespace motionkit
